// Copyright 2026 The conlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "conlab/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace conlab {
namespace {

bool generable(TokenId id) { return id != kPad && id != kBos; }

double length_normalize(double sum_loglik, std::size_t m, double beta) {
  return sum_loglik / std::pow(static_cast<double>(m), beta);
}

// Last row of the decoder output for `prefix`.
std::vector<double> next_token_logprobs(const Seq2SeqModel& model, const EncoderOutput& enc,
                                        const TokenSequence& prefix) {
  const ad::Tensor logp = model.decode_logprobs(enc, prefix);
  const std::size_t v = logp.cols();
  auto row = logp.values().subspan((logp.rows() - 1) * v, v);
  return std::vector<double>(row.begin(), row.end());
}

void check_config(const Seq2SeqModel& model, const DecodeConfig& cfg) {
  cfg.validate();
  if (cfg.max_len > model.config().max_sum_len) {
    throw DecodeError("decode.max_len " + std::to_string(cfg.max_len) +
                      " exceeds model max_sum_len " + std::to_string(model.config().max_sum_len));
  }
}

BeamHypothesis extend(const BeamHypothesis& h, TokenId tok, double loglik, double beta) {
  BeamHypothesis c;
  c.tokens.ids.reserve(h.tokens.size() + 1);
  c.tokens = h.tokens;
  c.tokens.ids.push_back(tok);
  c.sum_loglik = h.sum_loglik + loglik;
  c.finished = tok == kEos;
  c.score = length_normalize(c.sum_loglik, c.generated(), beta);
  return c;
}

void enumerate(const Seq2SeqModel& model, const EncoderOutput& enc, const DecodeConfig& cfg,
               const BeamHypothesis& prefix, std::vector<BeamHypothesis>& out) {
  const std::vector<double> row = next_token_logprobs(model, enc, prefix.tokens);
  out.push_back(extend(prefix, kEos, row[kEos], cfg.length_penalty_beta));
  if (prefix.generated() + 1 >= cfg.max_len) return;
  for (TokenId tok = 0; tok < row.size(); ++tok) {
    if (!generable(tok) || tok == kEos) continue;
    enumerate(model, enc, cfg, extend(prefix, tok, row[tok], cfg.length_penalty_beta), out);
  }
}

}  // namespace

std::vector<std::string> DecodeConfig::validate() const {
  if (beam_size == 0) throw DecodeError("decode.beam_size: must be positive");
  if (!(length_penalty_beta > 0.0) || !std::isfinite(length_penalty_beta)) {
    throw DecodeError("decode.length_penalty_beta: must be a positive real");
  }
  if (max_len == 0) throw DecodeError("decode.max_len: must be positive");
  std::vector<std::string> warnings;
  if (length_penalty_beta >= 1.0) {
    warnings.push_back("decode.length_penalty_beta = " + std::to_string(length_penalty_beta) +
                       " >= 1.0 favours long outputs; summarization settings stay below 1.0");
  }
  return warnings;
}

double score_sequence(std::span<const double> per_token_logliks, double beta) {
  if (per_token_logliks.empty()) throw DecodeError("score_sequence: empty log-likelihood list");
  if (!(beta > 0.0)) throw DecodeError("score_sequence: beta must be positive");
  const double total = std::accumulate(per_token_logliks.begin(), per_token_logliks.end(), 0.0);
  return length_normalize(total, per_token_logliks.size(), beta);
}

bool ranks_before(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens.ids < b.tokens.ids;
}

std::vector<BeamHypothesis> beam_search(const Seq2SeqModel& model, const EncoderOutput& enc,
                                        const DecodeConfig& cfg) {
  check_config(model, cfg);
  ad::NoGradScope no_grad;
  const double beta = cfg.length_penalty_beta;

  std::vector<BeamHypothesis> live(1);
  live[0].tokens.ids = {kBos};
  std::vector<BeamHypothesis> finished;

  for (std::size_t step = 1; step <= cfg.max_len && !live.empty(); ++step) {
    // The beam shrinks by one slot for every finished hypothesis.
    const std::size_t budget = cfg.beam_size - std::min(cfg.beam_size, finished.size());
    if (budget == 0) break;
    const bool force_eos = step == cfg.max_len;
    std::vector<BeamHypothesis> candidates;
    for (const BeamHypothesis& h : live) {
      const std::vector<double> row = next_token_logprobs(model, enc, h.tokens);
      if (force_eos) {
        candidates.push_back(extend(h, kEos, row[kEos], beta));
        continue;
      }
      for (TokenId tok = 0; tok < row.size(); ++tok) {
        if (generable(tok)) candidates.push_back(extend(h, tok, row[tok], beta));
      }
    }
    const std::size_t keep = std::min(budget, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), ranks_before);
    live.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      if (candidates[i].finished) {
        finished.push_back(std::move(candidates[i]));
      } else {
        live.push_back(std::move(candidates[i]));
      }
    }
  }
  std::sort(finished.begin(), finished.end(), ranks_before);
  return finished;
}

std::vector<BeamHypothesis> exhaustive_search(const Seq2SeqModel& model, const EncoderOutput& enc,
                                              const DecodeConfig& cfg) {
  check_config(model, cfg);
  const double space =
      std::pow(static_cast<double>(model.config().vocab_size), static_cast<double>(cfg.max_len));
  if (space > 1e6) {
    throw DecodeError("exhaustive_search: search space vocab_size^max_len = " +
                      std::to_string(space) + " exceeds 1e6");
  }
  ad::NoGradScope no_grad;
  BeamHypothesis root;
  root.tokens.ids = {kBos};
  std::vector<BeamHypothesis> out;
  enumerate(model, enc, cfg, root, out);
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

TokenSequence generate_silver(const Seq2SeqModel& model, const TokenSequence& source,
                              const DecodeConfig& cfg) {
  ad::NoGradScope no_grad;
  const EncoderOutput enc = model.encode(source);
  std::vector<BeamHypothesis> ranked = beam_search(model, enc, cfg);
  return std::move(ranked.front().tokens);
}

}  // namespace conlab
