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

// Training loop for the contrastive objective and its baselines: one encoder
// pass per document, gold and silver summaries scored against that shared
// encoder output, AdamW updates under a cosine schedule with linear warmup,
// and Rouge-2 early stopping on a fixed validation subsample.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "conlab/data.hpp"
#include "conlab/decoding.hpp"
#include "conlab/losses.hpp"
#include "conlab/model.hpp"
#include "conlab/rng.hpp"
#include "conlab/rouge.hpp"

namespace conlab {

// Raised for invalid configuration values; field() is the dotted key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class TrainMode { kConsum, kNllOnly, kConOnly, kSsSum, kSsToken };

const char* mode_name(TrainMode mode);
std::optional<TrainMode> parse_mode(std::string_view name);

struct TrainingConfig {
  double gamma = 0.0;
  double beta = 0.6;
  double lambda_nll = 1.0;
  double learning_rate = 3e-4;
  double weight_decay = 1e-8;
  std::size_t batch_size = 8;
  std::size_t max_doc_len = 32;
  std::size_t max_sum_len = 8;  // BOS and EOS included
  bool freeze_encoder = true;
  TrainMode mode = TrainMode::kConsum;
  double ss_prob = 0.5;
  std::size_t val_samples = 1000;
  double val_frequency = 0.01;
  std::size_t patience = 4;
  double warmup_fraction = 0.05;
  std::uint64_t seed = 0;
  std::size_t beam_size = 4;
  std::size_t max_epochs = 10;
  std::size_t max_steps = 0;  // 0 = no cap beyond max_epochs

  // Throws ConfigError naming "training.<field>".
  void validate() const;
  // Silver generation and evaluation share beta and beam size.
  DecodeConfig decode_config() const;
};

struct AdamState {
  ParameterMap m;
  ParameterMap v;
  std::size_t updates = 0;
};

struct TrainState {
  TrainState(Seq2SeqModel model, const TrainingConfig& cfg);

  Seq2SeqModel model;
  std::size_t step = 0;         // optimizer updates applied
  std::size_t total_steps = 1;  // schedule horizon
  AdamState optimizer;
  double best_rouge2;
  std::size_t validations_since_improvement = 0;
  std::optional<ParameterMap> best_params;
  Rng rng;  // scheduled-sampling draws
  std::vector<std::size_t> val_subsample;
};

// Linear warmup from 0 over ceil(warmup_fraction * total_steps) steps, then
// 0.5 * (1 + cos(pi * progress)) over the remaining steps.
double lr_factor(std::size_t step, std::size_t total_steps, double warmup_fraction);

// AdamW (beta1 0.9, beta2 0.999, eps 1e-8) with decoupled weight decay on
// every parameter that requires a gradient; the current gradients are
// consumed and zeroed. Throws ad::NonFiniteError on a non-finite gradient
// before touching any parameter.
void optimizer_update(TrainState& state, const TrainingConfig& cfg);

enum class ConTerm { kActive, kForcedZero };

// One optimizer step of the combined objective over `batch`. With
// ConTerm::kForcedZero the contrastive term is the constant 0 and no silver
// summary is generated.
LossBreakdown train_step_consum(TrainState& state, std::span<const ExamplePair> batch,
                                const TrainingConfig& cfg, ConTerm con = ConTerm::kActive);
// Plain teacher-forced NLL; identical to train_step_consum with lambda_nll 1
// and the contrastive term forced to zero.
LossBreakdown train_step_nll(TrainState& state, std::span<const ExamplePair> batch,
                             const TrainingConfig& cfg);

enum class SsLevel { kSummary, kToken };

struct SsPlan {
  std::vector<bool> replace;  // per decoder-input position; position 0 (BOS) never
  std::size_t draws = 0;
  std::size_t replaced_draws = 0;
};

// kSummary draws once per pair and applies the outcome to every position;
// kToken draws once per position after BOS.
SsPlan draw_ss_plan(SsLevel level, std::size_t input_len, double prob, Rng& rng);
// Position i takes silver[i] where planned and silver is long enough.
TokenSequence apply_ss_plan(const TokenSequence& gold_input, const TokenSequence& silver,
                            const SsPlan& plan);

// NLL against the gold targets with a partially silver decoder input.
LossBreakdown train_step_ss(TrainState& state, std::span<const ExamplePair> batch,
                            const TrainingConfig& cfg, SsLevel level);

// Dispatches on cfg.mode.
LossBreakdown train_step(TrainState& state, std::span<const ExamplePair> batch,
                         const TrainingConfig& cfg);

enum class StopDecision { kContinue, kStop };

// Feeds one validation Rouge-2 value into the early-stopping state. A strict
// improvement resets the counter and snapshots the parameters; reaching
// cfg.patience non-improvements restores the best snapshot and stops.
StopDecision record_validation(TrainState& state, double rouge2, const TrainingConfig& cfg);

struct ExampleResult {
  rouge::RougeScores rouge;
  double beam_score = 0.0;
  TokenSequence output;
};

struct CorpusResult {
  std::vector<ExampleResult> examples;
  rouge::RougeScores corpus;
  double mean_beam_score = 0.0;
};

// Beam-decodes every document (inference mode) and scores it against the
// gold summary as text.
CorpusResult evaluate_corpus(const Seq2SeqModel& model, const Vocab& vocab,
                             std::span<const ExamplePair> pairs, const DecodeConfig& decode);

// Decodes the run's fixed validation subsample, then record_validation on its
// mean Rouge-2 F1. `last` receives the corpus scores when non-null.
StopDecision validate_and_maybe_stop(TrainState& state, const Vocab& vocab,
                                     std::span<const ExamplePair> val_set,
                                     const TrainingConfig& cfg,
                                     rouge::RougeScores* last = nullptr);

struct HingeStats {
  std::size_t pairs = 0;
  std::size_t satisfied = 0;        // pos >= neg + gamma, or silver == gold
  std::size_t silver_equals_gold = 0;
  double mean_pos = 0.0;
  double mean_neg = 0.0;
  double rate() const { return pairs ? static_cast<double>(satisfied) / pairs : 0.0; }
};

// Inference-mode check of the margin condition over `pairs`.
HingeStats evaluate_hinge(const Seq2SeqModel& model, std::span<const ExamplePair> pairs,
                          const TrainingConfig& cfg);

struct MetricsRow {
  std::size_t step = 0;
  std::string split;  // "train", "val" or "test"
  std::optional<double> l_nll, l_con, loss, hinge_rate, pos_score, neg_score;
  std::optional<double> rouge1_f, rouge2_f, rougeL_f;
  double lr = 0.0;
};

inline constexpr std::string_view kMetricsHeader =
    "step,split,l_nll,l_con,loss,hinge_rate,pos_score,neg_score,rouge1_f,rouge2_f,rougeL_f,lr";
std::string format_metrics_row(const MetricsRow& row);
// 17 significant digits ("%.17g"), enough to round-trip any double.
std::string format_real(double v);

struct TrainResult {
  TrainState state;
  std::vector<MetricsRow> metrics;
  bool early_stopped = false;
  std::size_t validations = 0;
};

// Runs cfg.mode for up to max_epochs (and max_steps when set), validating
// every ceil(val_frequency * steps_per_epoch) steps. When validation ran,
// the best validated parameters are restored before returning.
TrainResult run_training(Seq2SeqModel model, const Vocab& vocab,
                         std::span<const ExamplePair> train, std::span<const ExamplePair> val,
                         const TrainingConfig& cfg,
                         const std::function<void(const MetricsRow&)>& on_row = {});

std::size_t steps_per_epoch(std::size_t train_size, std::size_t batch_size);

}  // namespace conlab
