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

#include "conlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

namespace conlab {
namespace {

// Stream keys for Rng::derive.
constexpr std::uint64_t kDropoutKey = 0x44524f50;
constexpr std::uint64_t kShuffleKey = 0x53485546;
constexpr std::uint64_t kValKey = 0x56414c53;
constexpr std::uint64_t kSsKey = 0x53534d50;

constexpr std::uint64_t kPassEncoder = 0;
constexpr std::uint64_t kPassGold = 1;
constexpr std::uint64_t kPassSilver = 2;

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

DropoutMasks masks_for(const TrainingConfig& cfg, const Seq2SeqModel& model, std::size_t step,
                       std::size_t pair, std::uint64_t pass) {
  return DropoutMasks(model.config().dropout_rate,
                      Rng::derive(cfg.seed, {kDropoutKey, step, pair, pass}));
}

void check_batch(std::span<const ExamplePair> batch) {
  if (batch.empty()) throw std::invalid_argument("train step: empty batch");
}

// Decoder input and targets of a BOS...EOS summary.
TokenSequence decoder_input_of(const TokenSequence& summary) {
  return TokenSequence{{summary.ids.begin(), summary.ids.end() - 1}};
}
TokenSequence targets_of(const TokenSequence& summary) {
  return TokenSequence{{summary.ids.begin() + 1, summary.ids.end()}};
}

struct PairTerms {
  ad::Tensor nll;  // [1]
  ad::Tensor con;  // [1]
  double l_nll = 0.0;
  double l_con = 0.0;
  double pos = 0.0;
  double neg = 0.0;
  bool has_neg = false;
  bool silver_equals_gold = false;
};

// Batch means of both terms, combined, then backward and one update.
LossBreakdown finish_step(TrainState& state, const TrainingConfig& cfg, ad::Tape& tape,
                          const std::vector<PairTerms>& terms, double lambda_nll) {
  std::vector<ad::Tensor> nlls, cons;
  nlls.reserve(terms.size());
  cons.reserve(terms.size());
  LossBreakdown out;
  out.pairs = terms.size();
  out.has_negatives = true;
  std::size_t active = 0;
  for (const PairTerms& t : terms) {
    nlls.push_back(t.nll);
    cons.push_back(t.con);
    out.pos_score += t.pos;
    out.neg_score += t.neg;
    out.has_negatives = out.has_negatives && t.has_neg;
    if (t.silver_equals_gold) ++out.silver_equals_gold;
    if (t.l_con > 0.0) ++active;
  }
  ad::Tensor l_nll, l_con, total;
  {
    ad::TapeScope scope(tape);
    l_nll = ad::mean(ad::concat(nlls, 0));
    l_con = ad::mean(ad::concat(cons, 0));
    total = combined_loss(l_nll, l_con, lambda_nll);
  }
  out.l_nll = l_nll.item();
  out.l_con = l_con.item();
  out.total = total.item();
  if (!std::isfinite(out.total)) {
    throw ad::NonFiniteError("non-finite loss at step " + std::to_string(state.step));
  }
  if (total.producer() == &tape) tape.backward(total);
  optimizer_update(state, cfg);

  const double n = static_cast<double>(terms.size());
  out.pos_score /= n;
  out.neg_score /= n;
  out.hinge_rate = static_cast<double>(active) / n;
  out.hinge_active = active > 0;
  if (!out.has_negatives) out.neg_score = 0.0;
  return out;
}

void check_finite_grads(const ParameterMap& params) {
  for (const auto& [name, p] : params) {
    if (!p.requires_grad() || !p.has_grad()) continue;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw ad::NonFiniteError("non-finite gradient for " + name);
    }
  }
}

}  // namespace

const char* mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kConsum: return "consum";
    case TrainMode::kNllOnly: return "nll_only";
    case TrainMode::kConOnly: return "con_only";
    case TrainMode::kSsSum: return "ss_sum";
    case TrainMode::kSsToken: return "ss_token";
  }
  return "?";
}

std::optional<TrainMode> parse_mode(std::string_view name) {
  for (TrainMode m : {TrainMode::kConsum, TrainMode::kNllOnly, TrainMode::kConOnly,
                      TrainMode::kSsSum, TrainMode::kSsToken}) {
    if (name == mode_name(m)) return m;
  }
  return std::nullopt;
}

void TrainingConfig::validate() const {
  auto fail = [](const char* field, const std::string& msg) {
    throw ConfigError(std::string("training.") + field, msg);
  };
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(gamma) || gamma < 0.0) fail("gamma", "must be a real >= 0");
  if (!finite(beta) || !(beta > 0.0)) fail("beta", "must be a real > 0");
  if (!finite(lambda_nll) || lambda_nll < 0.0) fail("lambda_nll", "must be a real >= 0");
  if (!finite(learning_rate) || !(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (!finite(weight_decay) || weight_decay < 0.0) fail("weight_decay", "must be >= 0");
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (max_doc_len == 0) fail("max_doc_len", "must be positive");
  if (max_sum_len < 2) fail("max_sum_len", "must be at least 2 (BOS and EOS)");
  if (!finite(ss_prob) || ss_prob < 0.0 || ss_prob > 1.0) fail("ss_prob", "must be in [0, 1]");
  if (val_samples == 0) fail("val_samples", "must be positive");
  if (!finite(val_frequency) || !(val_frequency > 0.0) || val_frequency > 1.0) {
    fail("val_frequency", "must be in (0, 1]");
  }
  if (patience == 0) fail("patience", "must be positive");
  if (!finite(warmup_fraction) || warmup_fraction < 0.0 || !(warmup_fraction < 1.0)) {
    fail("warmup_fraction", "must be in [0, 1)");
  }
  if (beam_size == 0) fail("beam_size", "must be positive");
  if (max_epochs == 0) fail("max_epochs", "must be positive");
}

DecodeConfig TrainingConfig::decode_config() const {
  DecodeConfig d;
  d.beam_size = beam_size;
  d.length_penalty_beta = beta;
  d.max_len = max_sum_len - 1;
  return d;
}

TrainState::TrainState(Seq2SeqModel m, const TrainingConfig& cfg)
    : model(std::move(m)),
      best_rouge2(-std::numeric_limits<double>::infinity()),
      rng(Rng::derive(cfg.seed, {kSsKey})) {
  model.set_encoder_trainable(!cfg.freeze_encoder);
  for (const auto& [name, p] : model.parameters()) {
    optimizer.m.emplace(name, ad::Tensor::zeros(p.shape()));
    optimizer.v.emplace(name, ad::Tensor::zeros(p.shape()));
  }
}

double lr_factor(std::size_t step, std::size_t total_steps, double warmup_fraction) {
  const auto warmup =
      static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) return static_cast<double>(step) / static_cast<double>(warmup);
  const std::size_t span = total_steps > warmup ? total_steps - warmup : 1;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
  return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void optimizer_update(TrainState& state, const TrainingConfig& cfg) {
  ParameterMap& params = state.model.parameters();
  check_finite_grads(params);
  const double lr =
      cfg.learning_rate * lr_factor(state.step, state.total_steps, cfg.warmup_fraction);
  const double t = static_cast<double>(state.optimizer.updates + 1);
  const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
  const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
  for (auto& [name, p] : params) {
    if (!p.requires_grad()) continue;
    std::span<double> w = p.mutable_values();
    std::span<double> m = state.optimizer.m.at(name).mutable_values();
    std::span<double> v = state.optimizer.v.at(name).mutable_values();
    std::span<const double> g = p.grad();
    const bool has_g = p.has_grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has_g ? g[i] : 0.0;
      w[i] -= lr * cfg.weight_decay * w[i];
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * gi;
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
    p.zero_grad();
  }
  ++state.optimizer.updates;
  ++state.step;
}

LossBreakdown train_step_consum(TrainState& state, std::span<const ExamplePair> batch,
                                const TrainingConfig& cfg, ConTerm con) {
  check_batch(batch);
  const DecodeConfig decode = cfg.decode_config();
  const Seq2SeqModel& model = state.model;
  const double lambda = con == ConTerm::kForcedZero ? 1.0 : cfg.lambda_nll;
  ad::Tape tape;
  std::vector<PairTerms> terms;
  terms.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ExamplePair& pair = batch[i];
    PairTerms t;
    // Silver first, with current parameters and no recording.
    TokenSequence silver;
    if (con == ConTerm::kActive) silver = generate_silver(model, pair.document, decode);

    ad::TapeScope scope(tape);
    DropoutMasks enc_masks = masks_for(cfg, model, state.step, i, kPassEncoder);
    const EncoderOutput enc = model.encode(pair.document, &enc_masks);

    DropoutMasks gold_masks = masks_for(cfg, model, state.step, i, kPassGold);
    const ad::Tensor gold_ll = model.sequence_loglik_tensor(enc, pair.summary, &gold_masks);
    const ad::Tensor nll = nll_loss(gold_ll);
    const ad::Tensor pos = sequence_score(gold_ll, cfg.beta);
    t.l_nll = nll.item();
    t.pos = pos.item();

    ad::Tensor l_con = ad::Tensor::scalar(0.0);
    if (con == ConTerm::kActive) {
      t.has_neg = true;
      if (silver == pair.summary) {
        // Identical summaries: the hinge is defined as 0 and skipped.
        t.silver_equals_gold = true;
        t.neg = t.pos;
      } else {
        DropoutMasks silver_masks = masks_for(cfg, model, state.step, i, kPassSilver);
        const ad::Tensor silver_ll = model.sequence_loglik_tensor(enc, silver, &silver_masks);
        const ad::Tensor neg = sequence_score(silver_ll, cfg.beta);
        t.neg = neg.item();
        l_con = contrastive_loss(pos, neg, cfg.gamma);
      }
    }
    t.l_con = l_con.item();
    t.nll = nll;
    t.con = l_con;
    terms.push_back(std::move(t));
  }
  return finish_step(state, cfg, tape, terms, lambda);
}

LossBreakdown train_step_nll(TrainState& state, std::span<const ExamplePair> batch,
                             const TrainingConfig& cfg) {
  return train_step_consum(state, batch, cfg, ConTerm::kForcedZero);
}

SsPlan draw_ss_plan(SsLevel level, std::size_t input_len, double prob, Rng& rng) {
  SsPlan plan;
  plan.replace.assign(input_len, false);
  if (input_len <= 1) return plan;
  if (level == SsLevel::kSummary) {
    const bool r = rng.bernoulli(prob);
    plan.draws = 1;
    plan.replaced_draws = r ? 1 : 0;
    std::fill(plan.replace.begin() + 1, plan.replace.end(), r);
    return plan;
  }
  for (std::size_t i = 1; i < input_len; ++i) {
    const bool r = rng.bernoulli(prob);
    plan.replace[i] = r;
    ++plan.draws;
    if (r) ++plan.replaced_draws;
  }
  return plan;
}

TokenSequence apply_ss_plan(const TokenSequence& gold_input, const TokenSequence& silver,
                            const SsPlan& plan) {
  TokenSequence out = gold_input;
  for (std::size_t i = 1; i < out.size() && i < plan.replace.size(); ++i) {
    if (plan.replace[i] && i < silver.size()) out.ids[i] = silver[i];
  }
  return out;
}

LossBreakdown train_step_ss(TrainState& state, std::span<const ExamplePair> batch,
                            const TrainingConfig& cfg, SsLevel level) {
  check_batch(batch);
  const DecodeConfig decode = cfg.decode_config();
  const Seq2SeqModel& model = state.model;
  ad::Tape tape;
  std::vector<PairTerms> terms;
  terms.reserve(batch.size());
  std::size_t draws = 0, replaced = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ExamplePair& pair = batch[i];
    TokenSequence input = decoder_input_of(pair.summary);
    const TokenSequence targets = targets_of(pair.summary);
    const SsPlan plan = draw_ss_plan(level, input.size(), cfg.ss_prob, state.rng);
    draws += plan.draws;
    replaced += plan.replaced_draws;
    if (plan.replaced_draws > 0) {
      input = apply_ss_plan(input, generate_silver(model, pair.document, decode), plan);
    }

    ad::TapeScope scope(tape);
    DropoutMasks enc_masks = masks_for(cfg, model, state.step, i, kPassEncoder);
    const EncoderOutput enc = model.encode(pair.document, &enc_masks);
    DropoutMasks gold_masks = masks_for(cfg, model, state.step, i, kPassGold);
    const ad::Tensor ll = model.target_logliks(enc, input, targets, &gold_masks);
    const ad::Tensor nll = nll_loss(ll);
    PairTerms t;
    t.l_nll = nll.item();
    t.pos = sequence_score(ll, cfg.beta).item();
    t.nll = nll;
    t.con = ad::Tensor::scalar(0.0);
    terms.push_back(std::move(t));
  }
  LossBreakdown out = finish_step(state, cfg, tape, terms, 1.0);
  out.ss_draws = draws;
  out.ss_replaced = replaced;
  return out;
}

LossBreakdown train_step(TrainState& state, std::span<const ExamplePair> batch,
                         const TrainingConfig& cfg) {
  switch (cfg.mode) {
    case TrainMode::kConsum:
    case TrainMode::kConOnly:
      return train_step_consum(state, batch, cfg, ConTerm::kActive);
    case TrainMode::kNllOnly:
      return train_step_nll(state, batch, cfg);
    case TrainMode::kSsSum:
      return train_step_ss(state, batch, cfg, SsLevel::kSummary);
    case TrainMode::kSsToken:
      return train_step_ss(state, batch, cfg, SsLevel::kToken);
  }
  throw std::logic_error("train_step: unknown mode");
}

StopDecision record_validation(TrainState& state, double rouge2, const TrainingConfig& cfg) {
  if (rouge2 > state.best_rouge2) {
    state.best_rouge2 = rouge2;
    state.validations_since_improvement = 0;
    state.best_params = state.model.snapshot();
    return StopDecision::kContinue;
  }
  ++state.validations_since_improvement;
  if (state.validations_since_improvement >= cfg.patience) {
    if (state.best_params) state.model.restore(*state.best_params);
    return StopDecision::kStop;
  }
  return StopDecision::kContinue;
}

CorpusResult evaluate_corpus(const Seq2SeqModel& model, const Vocab& vocab,
                             std::span<const ExamplePair> pairs, const DecodeConfig& decode) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: empty corpus");
  ad::NoGradScope no_grad;
  CorpusResult out;
  out.examples.reserve(pairs.size());
  std::vector<rouge::RougeScores> scores;
  double beam_total = 0.0;
  for (const ExamplePair& pair : pairs) {
    const EncoderOutput enc = model.encode(pair.document);
    std::vector<BeamHypothesis> ranked = beam_search(model, enc, decode);
    ExampleResult r;
    r.beam_score = ranked.front().score;
    r.output = std::move(ranked.front().tokens);
    r.rouge = rouge::score_texts(vocab.decode(r.output), vocab.decode(pair.summary));
    beam_total += r.beam_score;
    scores.push_back(r.rouge);
    out.examples.push_back(std::move(r));
  }
  out.corpus = rouge::mean_scores(scores);
  out.mean_beam_score = beam_total / static_cast<double>(pairs.size());
  return out;
}

StopDecision validate_and_maybe_stop(TrainState& state, const Vocab& vocab,
                                     std::span<const ExamplePair> val_set,
                                     const TrainingConfig& cfg, rouge::RougeScores* last) {
  if (val_set.empty()) throw std::invalid_argument("validation: empty validation set");
  if (state.val_subsample.empty()) {
    const std::size_t k = std::min(cfg.val_samples, val_set.size());
    Rng rng(Rng::derive(cfg.seed, {kValKey}));
    std::vector<std::size_t> perm = rng.permutation(val_set.size());
    perm.resize(k);
    std::sort(perm.begin(), perm.end());
    state.val_subsample = std::move(perm);
  }
  std::vector<ExamplePair> subset;
  subset.reserve(state.val_subsample.size());
  for (std::size_t idx : state.val_subsample) subset.push_back(val_set[idx]);
  const CorpusResult res = evaluate_corpus(state.model, vocab, subset, cfg.decode_config());
  if (last) *last = res.corpus;
  return record_validation(state, res.corpus.r2.f1, cfg);
}

HingeStats evaluate_hinge(const Seq2SeqModel& model, std::span<const ExamplePair> pairs,
                          const TrainingConfig& cfg) {
  ad::NoGradScope no_grad;
  const DecodeConfig decode = cfg.decode_config();
  HingeStats s;
  for (const ExamplePair& pair : pairs) {
    const EncoderOutput enc = model.encode(pair.document);
    const TokenSequence silver = beam_search(model, enc, decode).front().tokens;
    const double pos = score_sequence(model.sequence_loglik(enc, pair.summary), cfg.beta);
    const double neg = silver == pair.summary
                           ? pos
                           : score_sequence(model.sequence_loglik(enc, silver), cfg.beta);
    ++s.pairs;
    if (silver == pair.summary) {
      ++s.silver_equals_gold;
      ++s.satisfied;
    } else if (pos >= neg + cfg.gamma) {
      ++s.satisfied;
    }
    s.mean_pos += pos;
    s.mean_neg += neg;
  }
  if (s.pairs > 0) {
    s.mean_pos /= static_cast<double>(s.pairs);
    s.mean_neg /= static_cast<double>(s.pairs);
  }
  return s;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_metrics_row(const MetricsRow& row) {
  std::string out = std::to_string(row.step) + "," + row.split;
  for (const std::optional<double>& v :
       {row.l_nll, row.l_con, row.loss, row.hinge_rate, row.pos_score, row.neg_score,
        row.rouge1_f, row.rouge2_f, row.rougeL_f}) {
    out += ",";
    if (v) out += format_real(*v);
  }
  out += "," + format_real(row.lr);
  return out;
}

std::size_t steps_per_epoch(std::size_t train_size, std::size_t batch_size) {
  return (train_size + batch_size - 1) / batch_size;
}

TrainResult run_training(Seq2SeqModel model, const Vocab& vocab,
                         std::span<const ExamplePair> train, std::span<const ExamplePair> val,
                         const TrainingConfig& cfg,
                         const std::function<void(const MetricsRow&)>& on_row) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("training: empty training set");
  TrainResult result{TrainState(std::move(model), cfg), {}, false, 0};
  TrainState& state = result.state;
  const std::size_t per_epoch = steps_per_epoch(train.size(), cfg.batch_size);
  std::size_t total = per_epoch * cfg.max_epochs;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);
  state.total_steps = total;
  const auto val_every = static_cast<std::size_t>(
      std::max(1.0, std::ceil(cfg.val_frequency * static_cast<double>(per_epoch))));

  auto emit = [&](MetricsRow row) {
    if (on_row) on_row(row);
    result.metrics.push_back(std::move(row));
  };

  std::vector<ExamplePair> batch;
  batch.reserve(cfg.batch_size);
  for (std::size_t epoch = 0; epoch < cfg.max_epochs && state.step < total; ++epoch) {
    Rng shuffle(Rng::derive(cfg.seed, {kShuffleKey, epoch}));
    const std::vector<std::size_t> order = shuffle.permutation(train.size());
    for (std::size_t b = 0; b < per_epoch && state.step < total; ++b) {
      batch.clear();
      const std::size_t end = std::min(train.size(), (b + 1) * cfg.batch_size);
      for (std::size_t k = b * cfg.batch_size; k < end; ++k) batch.push_back(train[order[k]]);
      const double lr = cfg.learning_rate * lr_factor(state.step, total, cfg.warmup_fraction);
      const LossBreakdown lb = train_step(state, batch, cfg);

      MetricsRow row;
      row.step = state.step;
      row.split = "train";
      row.l_nll = lb.l_nll;
      row.l_con = lb.l_con;
      row.loss = lb.total;
      row.pos_score = lb.pos_score;
      if (lb.has_negatives) {
        row.hinge_rate = lb.hinge_rate;
        row.neg_score = lb.neg_score;
      }
      row.lr = lr;
      emit(std::move(row));

      if (!val.empty() && state.step % val_every == 0) {
        rouge::RougeScores scores;
        const StopDecision d = validate_and_maybe_stop(state, vocab, val, cfg, &scores);
        ++result.validations;
        MetricsRow vrow;
        vrow.step = state.step;
        vrow.split = "val";
        vrow.rouge1_f = scores.r1.f1;
        vrow.rouge2_f = scores.r2.f1;
        vrow.rougeL_f = scores.rl.f1;
        vrow.lr = lr;
        emit(std::move(vrow));
        if (d == StopDecision::kStop) {
          result.early_stopped = true;
          return result;
        }
      }
    }
  }
  if (state.best_params) state.model.restore(*state.best_params);
  return result;
}

}  // namespace conlab
