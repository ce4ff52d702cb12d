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

// Binary checkpoint framing, all integers little-endian:
//
//   "CSUM" | version u32 | count u32 |
//   count x ( name_len u16 | name (UTF-8) | rank u8 | dims u64 x rank |
//             values f64 x prod(dims), row-major )
//
// Entries are written in name order. The optimizer state file uses the same
// framing.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "conlab/model.hpp"

namespace conlab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_tensors(const std::filesystem::path& path, const ParameterMap& tensors);
ParameterMap load_tensors(const std::filesystem::path& path);

// Optimizer state lives next to the checkpoint as "<checkpoint>.optim".
std::filesystem::path optimizer_state_path(const std::filesystem::path& checkpoint);

}  // namespace conlab
