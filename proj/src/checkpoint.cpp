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

#include "conlab/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <limits>
#include <vector>

namespace conlab {
namespace {

constexpr std::array<char, 4> kMagic{'C', 'S', 'U', 'M'};

template <typename T>
void put_le(std::vector<char>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xff));
    u = static_cast<U>(u >> 8);
  }
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError(path_ + ": truncated checkpoint");
  }
  std::vector<char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_tensors(const std::filesystem::path& path, const ParameterMap& tensors) {
  std::vector<char> out(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw CheckpointError("parameter name too long: " + name);
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write " + path.string());
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw CheckpointError("write failed for " + path.string());
}

ParameterMap load_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());
  const std::string magic = r.get_string(4);
  if (magic != std::string(kMagic.begin(), kMagic.end())) {
    throw CheckpointError(path.string() + ": bad magic (not a CSUM checkpoint)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported format version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>();
  ParameterMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.get_string(r.get<std::uint16_t>());
    const auto rank = r.get<std::uint8_t>();
    ad::Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>());
      n *= d;
    }
    std::vector<double> values(n);
    for (double& v : values) v = std::bit_cast<double>(r.get<std::uint64_t>());
    try {
      out.emplace(name, ad::Tensor(std::move(shape), std::move(values)));
    } catch (const std::exception& e) {
      throw CheckpointError(path.string() + ": entry '" + name + "': " + e.what());
    }
  }
  if (!r.done()) throw CheckpointError(path.string() + ": trailing bytes after last entry");
  return out;
}

std::filesystem::path optimizer_state_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p += ".optim";
  return p;
}

}  // namespace conlab
