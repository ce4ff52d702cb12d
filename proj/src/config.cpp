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

#include "conlab/config.hpp"

#include <fstream>
#include <limits>
#include <set>

namespace conlab {
namespace {

using nlohmann::json;

// Typed, key-tracking view of one JSON object.
class Section {
 public:
  Section(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw ConfigError(name(""), "expected an object");
  }

  std::string name(const std::string& key) const {
    if (prefix_.empty()) return key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  void get(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number()) throw ConfigError(name(key), "expected a number");
    out = v.get<double>();
  }

  void get(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(name(key), "expected a non-negative integer");
    }
    out = v.get<std::size_t>();
  }

  void get_u64(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(name(key), "expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }

  void get(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_boolean()) throw ConfigError(name(key), "expected true or false");
    out = v.get<bool>();
  }

  void get(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_string()) throw ConfigError(name(key), "expected a string");
    out = v.get<std::string>();
  }

  void get_path(const std::string& key, std::filesystem::path& out,
                const std::filesystem::path& base) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    std::filesystem::path p(s);
    out = p.is_relative() && !base.empty() ? base / p : p;
  }

  const json* child(const std::string& key) {
    if (!has(key)) return nullptr;
    return &obj_.at(key);
  }

  void reject_unknown() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(name(key), "unknown key");
    }
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

// ModelError / DecodeError messages start with "section.field: ".
[[noreturn]] void rethrow_as_config_error(const std::exception& e) {
  const std::string msg = e.what();
  const auto colon = msg.find(": ");
  if (colon == std::string::npos) throw ConfigError("config", msg);
  throw ConfigError(msg.substr(0, colon), msg.substr(colon + 2));
}

std::string path_string(const std::filesystem::path& p) { return p.generic_string(); }

}  // namespace

void RunConfig::resolve() {
  model.max_doc_len = data.max_doc_len;
  model.max_sum_len = data.max_sum_len;
  training.max_doc_len = data.max_doc_len;
  training.max_sum_len = data.max_sum_len;
  training.seed = seed;
  training.beta = decode.length_penalty_beta;
  training.beam_size = decode.beam_size;
  decode.max_len = data.max_sum_len - (data.max_sum_len > 0 ? 1 : 0);
  // The "- NLL" ablation rows train on the contrastive term alone.
  if (training.mode == TrainMode::kConOnly) training.lambda_nll = 0.0;

  if (data.max_doc_len == 0) throw ConfigError("data.max_doc_len", "must be positive");
  if (data.max_sum_len < 2) throw ConfigError("data.max_sum_len", "must be at least 2 (BOS and EOS)");
  try {
    ModelConfig probe = model;
    if (probe.vocab_size == 0) probe.vocab_size = kNumReserved + 1;  // resolved from data later
    probe.validate();
    decode.validate();
  } catch (const ModelError& e) {
    rethrow_as_config_error(e);
  } catch (const DecodeError& e) {
    rethrow_as_config_error(e);
  }
  training.validate();

  if (data.source == DataSource::kSynthetic) {
    const SyntheticSpec& s = data.synthetic;
    if (s.n_train == 0) throw ConfigError("data.synthetic.n_train", "must be positive");
    if (s.n_val == 0) throw ConfigError("data.synthetic.n_val", "must be positive");
    if (s.n_test == 0) throw ConfigError("data.synthetic.n_test", "must be positive");
    if (s.doc_len_min == 0 || s.doc_len_min > s.doc_len_max) {
      throw ConfigError("data.synthetic.doc_len_min", "must be positive and <= doc_len_max");
    }
    if (s.salient_count == 0 || s.salient_count > s.doc_len_min) {
      throw ConfigError("data.synthetic.salient_count", "must be in [1, doc_len_min]");
    }
    if (s.lexicon_size == 0) throw ConfigError("data.synthetic.lexicon_size", "must be positive");
    if (s.doc_len_max + s.salient_count > data.max_doc_len) {
      throw ConfigError("data.max_doc_len",
                        "shorter than the longest synthetic document (doc_len_max + salient_count)");
    }
    if (s.salient_count + 2 > data.max_sum_len) {
      throw ConfigError("data.max_sum_len", "shorter than a synthetic summary (salient_count + 2)");
    }
  } else {
    if (data.train_path.empty()) throw ConfigError("data.train", "required for jsonl data");
    if (data.test_path.empty()) throw ConfigError("data.test", "required for jsonl data");
    if (data.max_vocab <= kNumReserved) throw ConfigError("data.max_vocab", "must exceed 4");
  }
}

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  RunConfig c;
  Section root(doc, "");
  root.get_u64("seed", c.seed);
  root.get_path("init_checkpoint", c.init_checkpoint, base_dir);
  root.get_path("out", c.out_dir, base_dir);

  if (const json* m = root.child("model")) {
    Section s(*m, "model");
    s.get("vocab_size", c.model.vocab_size);
    s.get("d_model", c.model.d_model);
    s.get("n_heads", c.model.n_heads);
    s.get("n_enc_layers", c.model.n_enc_layers);
    s.get("n_dec_layers", c.model.n_dec_layers);
    s.get("d_ff", c.model.d_ff);
    s.get("dropout_rate", c.model.dropout_rate);
    s.reject_unknown();
  }
  if (const json* t = root.child("training")) {
    Section s(*t, "training");
    std::string mode = mode_name(c.training.mode);
    s.get("mode", mode);
    const auto parsed = parse_mode(mode);
    if (!parsed) {
      throw ConfigError("training.mode",
                        "'" + mode + "' is not one of consum, nll_only, con_only, ss_sum, ss_token");
    }
    c.training.mode = *parsed;
    s.get("gamma", c.training.gamma);
    s.get("lambda_nll", c.training.lambda_nll);
    s.get("learning_rate", c.training.learning_rate);
    s.get("weight_decay", c.training.weight_decay);
    s.get("batch_size", c.training.batch_size);
    s.get("freeze_encoder", c.training.freeze_encoder);
    s.get("ss_prob", c.training.ss_prob);
    s.get("val_samples", c.training.val_samples);
    s.get("val_frequency", c.training.val_frequency);
    s.get("patience", c.training.patience);
    s.get("warmup_fraction", c.training.warmup_fraction);
    s.get("max_epochs", c.training.max_epochs);
    s.get("max_steps", c.training.max_steps);
    s.reject_unknown();
  }
  if (const json* d = root.child("decode")) {
    Section s(*d, "decode");
    s.get("beam_size", c.decode.beam_size);
    s.get("length_penalty_beta", c.decode.length_penalty_beta);
    s.reject_unknown();
  }
  if (const json* d = root.child("data")) {
    Section s(*d, "data");
    std::string source = "synthetic";
    s.get("source", source);
    if (source == "synthetic") {
      c.data.source = DataSource::kSynthetic;
    } else if (source == "jsonl") {
      c.data.source = DataSource::kJsonl;
    } else {
      throw ConfigError("data.source", "'" + source + "' is not one of synthetic, jsonl");
    }
    s.get("max_doc_len", c.data.max_doc_len);
    s.get("max_sum_len", c.data.max_sum_len);
    s.get("max_vocab", c.data.max_vocab);
    s.get_path("train", c.data.train_path, base_dir);
    s.get_path("val", c.data.val_path, base_dir);
    s.get_path("test", c.data.test_path, base_dir);
    if (const json* syn = s.child("synthetic")) {
      Section y(*syn, "data.synthetic");
      SyntheticSpec& sp = c.data.synthetic;
      y.get_u64("seed", sp.seed);
      y.get("n_train", sp.n_train);
      y.get("n_val", sp.n_val);
      y.get("n_test", sp.n_test);
      y.get("doc_len_min", sp.doc_len_min);
      y.get("doc_len_max", sp.doc_len_max);
      y.get("salient_count", sp.salient_count);
      y.get("lexicon_size", sp.lexicon_size);
      y.reject_unknown();
    }
    s.reject_unknown();
  }
  root.reject_unknown();
  c.resolve();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(is, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", path.string() + ": " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

nlohmann::json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  if (!c.init_checkpoint.empty()) j["init_checkpoint"] = path_string(c.init_checkpoint);
  if (!c.out_dir.empty()) j["out"] = path_string(c.out_dir);
  j["model"] = {
      {"vocab_size", c.model.vocab_size},     {"d_model", c.model.d_model},
      {"n_heads", c.model.n_heads},           {"n_enc_layers", c.model.n_enc_layers},
      {"n_dec_layers", c.model.n_dec_layers}, {"d_ff", c.model.d_ff},
      {"dropout_rate", c.model.dropout_rate},
  };
  const TrainingConfig& t = c.training;
  j["training"] = {
      {"mode", mode_name(t.mode)},
      {"gamma", t.gamma},
      {"lambda_nll", t.lambda_nll},
      {"learning_rate", t.learning_rate},
      {"weight_decay", t.weight_decay},
      {"batch_size", t.batch_size},
      {"freeze_encoder", t.freeze_encoder},
      {"ss_prob", t.ss_prob},
      {"val_samples", t.val_samples},
      {"val_frequency", t.val_frequency},
      {"patience", t.patience},
      {"warmup_fraction", t.warmup_fraction},
      {"max_epochs", t.max_epochs},
      {"max_steps", t.max_steps},
  };
  j["decode"] = {
      {"beam_size", c.decode.beam_size},
      {"length_penalty_beta", c.decode.length_penalty_beta},
  };
  json data = {
      {"source", c.data.source == DataSource::kSynthetic ? "synthetic" : "jsonl"},
      {"max_doc_len", c.data.max_doc_len},
      {"max_sum_len", c.data.max_sum_len},
  };
  if (c.data.source == DataSource::kSynthetic) {
    const SyntheticSpec& s = c.data.synthetic;
    data["synthetic"] = {
        {"seed", s.seed},
        {"n_train", s.n_train},
        {"n_val", s.n_val},
        {"n_test", s.n_test},
        {"doc_len_min", s.doc_len_min},
        {"doc_len_max", s.doc_len_max},
        {"salient_count", s.salient_count},
        {"lexicon_size", s.lexicon_size},
    };
  } else {
    data["max_vocab"] = c.data.max_vocab;
    data["train"] = path_string(c.data.train_path);
    if (!c.data.val_path.empty()) data["val"] = path_string(c.data.val_path);
    data["test"] = path_string(c.data.test_path);
  }
  j["data"] = std::move(data);
  return j;
}

}  // namespace conlab
