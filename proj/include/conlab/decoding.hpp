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

// Length-normalized beam search. A hypothesis with m generated tokens
// (EOS included, BOS excluded) and summed log-likelihood L scores L / m^beta,
// and that score is what prunes the beam at every step.

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "conlab/data.hpp"
#include "conlab/model.hpp"

namespace conlab {

class DecodeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DecodeConfig {
  std::size_t beam_size = 4;
  double length_penalty_beta = 0.6;
  std::size_t max_len = 8;  // generated tokens, EOS included

  // Throws DecodeError for invalid values; returns advisory warnings
  // (beta >= 1 lengthens outputs, which summarization avoids).
  std::vector<std::string> validate() const;
};

struct BeamHypothesis {
  TokenSequence tokens;  // BOS-prefixed
  double sum_loglik = 0.0;
  bool finished = false;
  double score = 0.0;

  std::size_t generated() const { return tokens.size() - 1; }
};

// sum(per_token_logliks) / m^beta with m = list length.
double score_sequence(std::span<const double> per_token_logliks, double beta);

// Score descending, then lexicographically smaller token ids first.
bool ranks_before(const BeamHypothesis& a, const BeamHypothesis& b);

// Returns finished hypotheses sorted by ranks_before. Hypotheses that reach
// max_len - 1 generated tokens are completed with a forced EOS. PAD and BOS
// are never generated.
std::vector<BeamHypothesis> beam_search(const Seq2SeqModel& model, const EncoderOutput& enc,
                                        const DecodeConfig& cfg);

// Enumerates every EOS-terminated sequence of at most max_len generated
// tokens. Guarded to vocab_size^max_len <= 1e6.
std::vector<BeamHypothesis> exhaustive_search(const Seq2SeqModel& model, const EncoderOutput& enc,
                                              const DecodeConfig& cfg);

// Inference-mode encode + beam search; the top-ranked tokens.
TokenSequence generate_silver(const Seq2SeqModel& model, const TokenSequence& source,
                              const DecodeConfig& cfg);

}  // namespace conlab
