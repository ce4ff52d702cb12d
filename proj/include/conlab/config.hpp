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

// Run configuration: one JSON document with "model", "training", "decode"
// and "data" sections plus a run seed. Unknown keys are rejected so typos
// surface as errors naming the offending field.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "conlab/data.hpp"
#include "conlab/decoding.hpp"
#include "conlab/model.hpp"
#include "conlab/training.hpp"
#include "json.hpp"

namespace conlab {

enum class DataSource { kSynthetic, kJsonl };

struct DataConfig {
  DataSource source = DataSource::kSynthetic;
  SyntheticSpec synthetic;
  std::filesystem::path train_path, val_path, test_path;
  std::size_t max_vocab = 20000;  // JSONL corpora only
  std::size_t max_doc_len = 32;
  std::size_t max_sum_len = 8;  // BOS and EOS included
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainingConfig training;
  DecodeConfig decode;
  DataConfig data;
  std::filesystem::path init_checkpoint;  // empty = fresh initialization
  std::filesystem::path out_dir;

  // Copies the shared values (seed, lengths, beta, beam size) into the
  // per-module configs and validates everything. Throws ConfigError.
  void resolve();
};

// Throws ConfigError naming the field for type errors, unknown keys and
// out-of-range values. Relative paths are taken relative to `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Fully resolved form; parse_run_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& config);

}  // namespace conlab
