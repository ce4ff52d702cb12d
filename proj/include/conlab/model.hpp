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

// Tiny pre-norm Transformer encoder-decoder. The decoder returns
// log-probabilities of the next token for every prefix position, which is
// the per-token log-likelihood used by the NLL loss and the beam score.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "conlab/autodiff.hpp"
#include "conlab/data.hpp"
#include "conlab/rng.hpp"

namespace conlab {

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_enc_layers = 2;
  std::size_t n_dec_layers = 2;
  std::size_t d_ff = 128;
  std::size_t max_doc_len = 32;
  std::size_t max_sum_len = 8;
  double dropout_rate = 0.1;

  // Throws ModelError naming the offending field.
  void validate() const;
  std::size_t position_rows() const { return std::max(max_doc_len, max_sum_len); }
};

// Seeded source of 0/1 dropout masks. Masks are drawn in the order the model
// visits its dropout sites, so a given seed replays a forward pass exactly.
class DropoutMasks {
 public:
  DropoutMasks(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {}
  double rate() const { return rate_; }
  double keep_scale() const { return 1.0 / (1.0 - rate_); }
  ad::Tensor next(const ad::Shape& shape);

 private:
  double rate_;
  Rng rng_;
};

struct EncoderOutput {
  ad::Tensor states;  // [source_len, d_model]
  std::size_t source_len = 0;
};

using ParameterMap = std::map<std::string, ad::Tensor>;

class Seq2SeqModel {
 public:
  // Weights uniform in [-1/sqrt(d_in), 1/sqrt(d_in)], layer-norm gains 1,
  // biases 0.
  Seq2SeqModel(const ModelConfig& config, std::uint64_t init_seed);

  // Copies own their parameter storage.
  Seq2SeqModel(const Seq2SeqModel& other);
  Seq2SeqModel& operator=(const Seq2SeqModel& other);
  Seq2SeqModel(Seq2SeqModel&&) noexcept = default;
  Seq2SeqModel& operator=(Seq2SeqModel&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  ParameterMap& parameters() { return params_; }
  const ParameterMap& parameters() const { return params_; }
  ad::Tensor& parameter(const std::string& name);
  const ad::Tensor& parameter(const std::string& name) const;
  static bool is_encoder_parameter(const std::string& name);

  // Turns gradient tracking on or off for the encoder-side parameters.
  void set_encoder_trainable(bool trainable);

  // Deep copy of parameter values (no gradients).
  ParameterMap snapshot() const;
  void restore(const ParameterMap& values);

  // Without masks the pass runs in inference mode (no dropout).
  EncoderOutput encode(const TokenSequence& source, DropoutMasks* masks = nullptr) const;

  // [prefix.size(), vocab_size]; row t is log p(. | source, prefix[0..t]).
  ad::Tensor decode_logprobs(const EncoderOutput& enc, const TokenSequence& prefix,
                             DropoutMasks* masks = nullptr) const;

  // Log-likelihood of each position of `targets` under the given decoder
  // input, as a [n, 1] tensor (differentiable when a tape is active).
  ad::Tensor target_logliks(const EncoderOutput& enc, const TokenSequence& decoder_input,
                            const TokenSequence& targets, DropoutMasks* masks = nullptr) const;

  // Teacher-forced scoring of a BOS-prefixed, EOS-terminated target:
  // element i is f(target[i+1] | source, target[0..i]).
  ad::Tensor sequence_loglik_tensor(const EncoderOutput& enc, const TokenSequence& target,
                                    DropoutMasks* masks = nullptr) const;
  std::vector<double> sequence_loglik(const EncoderOutput& enc, const TokenSequence& target) const;

 private:
  ad::Tensor embed(const std::string& table, const TokenSequence& tokens,
                   DropoutMasks* masks) const;
  ad::Tensor linear(const ad::Tensor& x, const std::string& prefix) const;
  ad::Tensor layer_norm(const ad::Tensor& x, const std::string& prefix) const;
  ad::Tensor attention(const ad::Tensor& query_in, const ad::Tensor& kv_in,
                       const std::string& prefix, bool causal, DropoutMasks* masks) const;
  ad::Tensor feed_forward(const ad::Tensor& x, const std::string& prefix,
                          DropoutMasks* masks) const;
  ad::Tensor dropout(const ad::Tensor& x, DropoutMasks* masks) const;

  void add_linear(const std::string& prefix, std::size_t d_in, std::size_t d_out, Rng& rng);
  void add_layer_norm(const std::string& prefix, std::size_t dim);
  void add_attention(const std::string& prefix, Rng& rng);

  ModelConfig config_;
  ParameterMap params_;
  ad::Tensor positions_;  // sinusoidal table, [position_rows, d_model]
};

}  // namespace conlab
