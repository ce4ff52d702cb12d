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

#include "conlab/model.hpp"

#include <cmath>
#include <numbers>

namespace conlab {

using ad::Tensor;

namespace {

// Masked attention logits get this offset; exp() of it underflows to exactly
// zero so masked keys contribute nothing and outputs stay finite.
constexpr double kMaskedLogit = -1e9;

std::string layer_prefix(const char* side, std::size_t i) {
  return std::string(side) + ".layers." + std::to_string(i) + ".";
}

Tensor sinusoid_table(std::size_t rows, std::size_t d) {
  std::vector<double> v(rows * d);
  for (std::size_t pos = 0; pos < rows; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      v[pos * d + i] = std::sin(static_cast<double>(pos) * freq);
      v[pos * d + i + 1] = std::cos(static_cast<double>(pos) * freq);
    }
  }
  return Tensor({rows, d}, std::move(v));
}

Tensor causal_bias(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) v[i * n + j] = kMaskedLogit;
  }
  return Tensor({n, n}, std::move(v));
}

std::vector<std::size_t> as_rows(const TokenSequence& seq) {
  return std::vector<std::size_t>(seq.ids.begin(), seq.ids.end());
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ModelError("model." + field + ": " + why);
  };
  if (vocab_size <= kNumReserved) fail("vocab_size", "must exceed the 4 reserved tokens");
  if (d_model == 0 || d_model % 2 != 0) fail("d_model", "must be a positive even count");
  if (n_heads == 0 || d_model % n_heads != 0) fail("n_heads", "must divide d_model");
  if (n_enc_layers == 0) fail("n_enc_layers", "must be positive");
  if (n_dec_layers == 0) fail("n_dec_layers", "must be positive");
  if (d_ff == 0) fail("d_ff", "must be positive");
  if (max_doc_len == 0) fail("max_doc_len", "must be positive");
  if (max_sum_len < 2) fail("max_sum_len", "must be at least 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate", "must lie in [0, 1)");
}

Tensor DropoutMasks::next(const ad::Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (double& m : v) m = rng_.uniform() < rate_ ? 0.0 : 1.0;
  return Tensor(shape, std::move(v));
}

// ---------------------------------------------------------------------------
// Construction

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  Rng rng(init_seed);
  const std::size_t d = config_.d_model;
  auto embedding = [&](const std::string& name) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> v(config_.vocab_size * d);
    for (double& x : v) x = rng.uniform(-bound, bound);
    params_.emplace(name, Tensor({config_.vocab_size, d}, std::move(v), true));
  };

  embedding("encoder.embed_tokens.weight");
  for (std::size_t i = 0; i < config_.n_enc_layers; ++i) {
    const std::string p = layer_prefix("encoder", i);
    add_layer_norm(p + "self_attn_norm", d);
    add_attention(p + "self_attn", rng);
    add_layer_norm(p + "ffn_norm", d);
    add_linear(p + "ffn.fc1", d, config_.d_ff, rng);
    add_linear(p + "ffn.fc2", config_.d_ff, d, rng);
  }
  add_layer_norm("encoder.final_norm", d);

  embedding("decoder.embed_tokens.weight");
  for (std::size_t i = 0; i < config_.n_dec_layers; ++i) {
    const std::string p = layer_prefix("decoder", i);
    add_layer_norm(p + "self_attn_norm", d);
    add_attention(p + "self_attn", rng);
    add_layer_norm(p + "cross_attn_norm", d);
    add_attention(p + "cross_attn", rng);
    add_layer_norm(p + "ffn_norm", d);
    add_linear(p + "ffn.fc1", d, config_.d_ff, rng);
    add_linear(p + "ffn.fc2", config_.d_ff, d, rng);
  }
  add_layer_norm("decoder.final_norm", d);
  add_linear("lm_head", d, config_.vocab_size, rng);

  positions_ = sinusoid_table(config_.position_rows(), d);
}

Seq2SeqModel::Seq2SeqModel(const Seq2SeqModel& other)
    : config_(other.config_), positions_(other.positions_) {
  for (const auto& [name, t] : other.params_) {
    Tensor copy = t.detach();
    copy.set_requires_grad(t.requires_grad());
    params_.emplace(name, std::move(copy));
  }
}

Seq2SeqModel& Seq2SeqModel::operator=(const Seq2SeqModel& other) {
  if (this != &other) *this = Seq2SeqModel(other);
  return *this;
}

void Seq2SeqModel::add_linear(const std::string& prefix, std::size_t d_in, std::size_t d_out,
                              Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  std::vector<double> w(d_in * d_out);
  for (double& x : w) x = rng.uniform(-bound, bound);
  params_.emplace(prefix + ".weight", Tensor({d_in, d_out}, std::move(w), true));
  params_.emplace(prefix + ".bias", Tensor::zeros({d_out}, true));
}

void Seq2SeqModel::add_layer_norm(const std::string& prefix, std::size_t dim) {
  params_.emplace(prefix + ".weight", Tensor(ad::Shape{dim}, std::vector<double>(dim, 1.0), true));
  params_.emplace(prefix + ".bias", Tensor::zeros({dim}, true));
}

void Seq2SeqModel::add_attention(const std::string& prefix, Rng& rng) {
  const std::size_t d = config_.d_model;
  for (const char* proj : {".q_proj", ".k_proj", ".v_proj", ".o_proj"}) {
    add_linear(prefix + proj, d, d, rng);
  }
}

Tensor& Seq2SeqModel::parameter(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ModelError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& Seq2SeqModel::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ModelError("unknown parameter '" + name + "'");
  return it->second;
}

bool Seq2SeqModel::is_encoder_parameter(const std::string& name) {
  return name.rfind("encoder.", 0) == 0;
}

void Seq2SeqModel::set_encoder_trainable(bool trainable) {
  for (auto& [name, t] : params_) {
    if (is_encoder_parameter(name)) t.set_requires_grad(trainable);
  }
}

ParameterMap Seq2SeqModel::snapshot() const {
  ParameterMap out;
  for (const auto& [name, t] : params_) out.emplace(name, t.detach());
  return out;
}

void Seq2SeqModel::restore(const ParameterMap& values) {
  for (auto& [name, t] : params_) {
    auto it = values.find(name);
    if (it == values.end()) throw ModelError("restore: missing parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw ModelError("restore: shape mismatch for '" + name + "': " +
                       ad::shape_str(it->second.shape()) + " vs " + ad::shape_str(t.shape()));
    }
    auto src = it->second.values();
    std::copy(src.begin(), src.end(), t.mutable_values().begin());
  }
}

// ---------------------------------------------------------------------------
// Building blocks

Tensor Seq2SeqModel::dropout(const Tensor& x, DropoutMasks* masks) const {
  if (masks == nullptr || masks->rate() == 0.0) return x;
  return ad::dropout_mask_apply(x, masks->next(x.shape()), masks->keep_scale());
}

Tensor Seq2SeqModel::linear(const Tensor& x, const std::string& prefix) const {
  return ad::add(ad::matmul(x, parameter(prefix + ".weight")), parameter(prefix + ".bias"));
}

Tensor Seq2SeqModel::layer_norm(const Tensor& x, const std::string& prefix) const {
  return ad::layer_norm_rows(x, parameter(prefix + ".weight"), parameter(prefix + ".bias"));
}

Tensor Seq2SeqModel::embed(const std::string& table, const TokenSequence& tokens,
                           DropoutMasks* masks) const {
  const std::vector<std::size_t> rows = as_rows(tokens);
  Tensor x = ad::embedding_lookup(parameter(table), rows);
  x = ad::scale(x, std::sqrt(static_cast<double>(config_.d_model)));
  x = ad::add(x, ad::slice(positions_, 0, 0, tokens.size()));
  return dropout(x, masks);
}

Tensor Seq2SeqModel::attention(const Tensor& query_in, const Tensor& kv_in,
                               const std::string& prefix, bool causal,
                               DropoutMasks* masks) const {
  const std::size_t d = config_.d_model, heads = config_.n_heads, dh = d / heads;
  const Tensor q = linear(query_in, prefix + ".q_proj");
  const Tensor k = linear(kv_in, prefix + ".k_proj");
  const Tensor v = linear(kv_in, prefix + ".v_proj");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor mask;
  if (causal) mask = causal_bias(query_in.rows());
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = ad::slice(q, 1, h * dh, (h + 1) * dh);
    const Tensor kh = ad::slice(k, 1, h * dh, (h + 1) * dh);
    const Tensor vh = ad::slice(v, 1, h * dh, (h + 1) * dh);
    Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    if (causal) scores = ad::add(scores, mask);
    Tensor probs = dropout(ad::softmax_rows(scores), masks);
    outs.push_back(ad::matmul(probs, vh));
  }
  const Tensor merged = heads == 1 ? outs.front() : ad::concat(outs, 1);
  return linear(merged, prefix + ".o_proj");
}

Tensor Seq2SeqModel::feed_forward(const Tensor& x, const std::string& prefix,
                                  DropoutMasks* masks) const {
  Tensor h = ad::relu(linear(x, prefix + ".fc1"));
  return dropout(linear(h, prefix + ".fc2"), masks);
}

// ---------------------------------------------------------------------------
// Passes

EncoderOutput Seq2SeqModel::encode(const TokenSequence& source, DropoutMasks* masks) const {
  if (source.empty()) throw ModelError("encode: empty source");
  if (source.size() > config_.max_doc_len) {
    throw ModelError("encode: source length " + std::to_string(source.size()) +
                     " exceeds max_doc_len " + std::to_string(config_.max_doc_len));
  }
  for (TokenId id : source.ids) {
    if (id >= config_.vocab_size) {
      throw ModelError("encode: token id " + std::to_string(id) + " out of vocabulary (size " +
                       std::to_string(config_.vocab_size) + ")");
    }
  }
  Tensor x = embed("encoder.embed_tokens.weight", source, masks);
  for (std::size_t i = 0; i < config_.n_enc_layers; ++i) {
    const std::string p = layer_prefix("encoder", i);
    const Tensor n1 = layer_norm(x, p + "self_attn_norm");
    x = ad::add(x, dropout(attention(n1, n1, p + "self_attn", false, masks), masks));
    x = ad::add(x, feed_forward(layer_norm(x, p + "ffn_norm"), p + "ffn", masks));
  }
  return EncoderOutput{layer_norm(x, "encoder.final_norm"), source.size()};
}

Tensor Seq2SeqModel::decode_logprobs(const EncoderOutput& enc, const TokenSequence& prefix,
                                     DropoutMasks* masks) const {
  if (!prefix.starts_with_bos()) throw ModelError("decode: prefix must begin with BOS");
  if (prefix.size() > config_.max_sum_len) {
    throw ModelError("decode: prefix length " + std::to_string(prefix.size()) +
                     " exceeds max_sum_len " + std::to_string(config_.max_sum_len));
  }
  for (TokenId id : prefix.ids) {
    if (id >= config_.vocab_size) {
      throw ModelError("decode: token id " + std::to_string(id) + " out of vocabulary");
    }
  }
  Tensor y = embed("decoder.embed_tokens.weight", prefix, masks);
  for (std::size_t i = 0; i < config_.n_dec_layers; ++i) {
    const std::string p = layer_prefix("decoder", i);
    const Tensor n1 = layer_norm(y, p + "self_attn_norm");
    y = ad::add(y, dropout(attention(n1, n1, p + "self_attn", true, masks), masks));
    const Tensor n2 = layer_norm(y, p + "cross_attn_norm");
    y = ad::add(y, dropout(attention(n2, enc.states, p + "cross_attn", false, masks), masks));
    y = ad::add(y, feed_forward(layer_norm(y, p + "ffn_norm"), p + "ffn", masks));
  }
  const Tensor logits = linear(layer_norm(y, "decoder.final_norm"), "lm_head");
  return ad::log_softmax_rows(logits);
}

Tensor Seq2SeqModel::target_logliks(const EncoderOutput& enc, const TokenSequence& decoder_input,
                                    const TokenSequence& targets, DropoutMasks* masks) const {
  if (decoder_input.size() != targets.size() || targets.empty()) {
    throw ModelError("target_logliks: decoder input and targets must have equal, non-zero length");
  }
  const std::size_t n = targets.size(), vocab = config_.vocab_size;
  for (TokenId id : targets.ids) {
    if (id >= vocab) throw ModelError("target_logliks: target id out of vocabulary");
  }
  const Tensor logp = decode_logprobs(enc, decoder_input, masks);
  // Row-wise gather as mask-and-reduce; each row sum has exactly one non-zero
  // term so the picked value is reproduced exactly.
  std::vector<double> onehot(n * vocab, 0.0);
  for (std::size_t t = 0; t < n; ++t) onehot[t * vocab + targets[t]] = 1.0;
  const Tensor picked = ad::mul(logp, Tensor({n, vocab}, std::move(onehot)));
  return ad::matmul(picked, Tensor::filled({vocab, 1}, 1.0));
}

Tensor Seq2SeqModel::sequence_loglik_tensor(const EncoderOutput& enc, const TokenSequence& target,
                                            DropoutMasks* masks) const {
  if (!target.starts_with_bos() || !target.ends_with_eos() || target.size() < 2) {
    throw ModelError("sequence_loglik: target must be BOS-prefixed and EOS-terminated");
  }
  TokenSequence input{{target.ids.begin(), target.ids.end() - 1}};
  TokenSequence gold{{target.ids.begin() + 1, target.ids.end()}};
  return target_logliks(enc, input, gold, masks);
}

std::vector<double> Seq2SeqModel::sequence_loglik(const EncoderOutput& enc,
                                                  const TokenSequence& target) const {
  ad::NoGradScope no_grad;
  const Tensor ll = sequence_loglik_tensor(enc, target);
  return std::vector<double>(ll.values().begin(), ll.values().end());
}

}  // namespace conlab
