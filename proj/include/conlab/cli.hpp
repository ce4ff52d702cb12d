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

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "conlab/config.hpp"
#include "conlab/rouge.hpp"
#include "conlab/training.hpp"

namespace conlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

// Files written into a run directory.
inline constexpr const char* kRunConfigFile = "run_config.json";
inline constexpr const char* kVocabFile = "vocab.txt";
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kMetricsFile = "metrics.csv";

struct Corpus {
  Vocab vocab;
  std::vector<ExamplePair> train, val, test;
  std::vector<TextPair> test_text;
};

// Builds the configured corpus and fills config.model.vocab_size when it is
// still 0. Throws ConfigError when a fixed vocab_size disagrees with the data.
Corpus load_corpus(RunConfig& config);

// Creates `dir`, or empties it when `overwrite` is set. Throws
// std::runtime_error when it exists with content and overwrite is off.
void prepare_output_dir(const std::filesystem::path& dir, bool overwrite);

struct RunSummary {
  rouge::RougeScores test;
  double mean_beam_score = 0.0;
  std::size_t steps = 0;
  bool early_stopped = false;
};

// One complete training run into config.out_dir: frozen config, vocabulary,
// metrics CSV, checkpoint and optimizer state, then a test-set evaluation
// appended to the metrics as a "test" row.
RunSummary train_run(RunConfig config, bool overwrite, std::ostream* log);

struct SweepRow {
  double gamma = 0.0;
  rouge::RougeScores scores;
};
inline const std::vector<double> kDefaultGammas{0.0, 0.5, 1.0, 1.5, 2.0};

std::vector<SweepRow> sweep_margin(const RunConfig& base, const std::vector<double>& gammas,
                                   const std::filesystem::path& out_dir, bool overwrite,
                                   bool parallel, std::ostream* log);

struct AblationRow {
  std::string variant;
  TrainMode mode = TrainMode::kConsum;
  double gamma = 0.0;
  double lambda_nll = 1.0;
  rouge::RougeScores scores;
};

// Four runs in order: full objective, NLL only, contrastive only at
// gamma 1.5, contrastive only at gamma 0.0.
std::vector<AblationRow> ablate(const RunConfig& base, const std::filesystem::path& out_dir,
                                bool overwrite, bool parallel, std::ostream* log);

// Entry point behind the `conlab` executable. Verbs: train, eval, decode,
// sweep-margin, ablate.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace conlab
