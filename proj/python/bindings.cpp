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

// Python bindings for the conlab core.

#include <iostream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "conlab/checkpoint.hpp"
#include "conlab/cli.hpp"
#include "conlab/config.hpp"
#include "conlab/decoding.hpp"
#include "conlab/losses.hpp"
#include "conlab/rouge.hpp"
#include "conlab/training.hpp"

namespace py = pybind11;
using namespace conlab;

namespace {

TokenSequence as_seq(const std::vector<TokenId>& ids) { return TokenSequence{ids}; }

py::dict prf_dict(const rouge::Prf& p) {
  py::dict d;
  d["precision"] = p.precision;
  d["recall"] = p.recall;
  d["f1"] = p.f1;
  return d;
}

py::dict scores_dict(const rouge::RougeScores& s) {
  py::dict d;
  d["rouge1"] = prf_dict(s.r1);
  d["rouge2"] = prf_dict(s.r2);
  d["rougeL"] = prf_dict(s.rl);
  return d;
}

std::vector<std::pair<std::string, std::string>> text_pairs(const std::vector<TextPair>& v) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const TextPair& t : v) out.emplace_back(t.document, t.summary);
  return out;
}

std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> id_pairs(
    const std::vector<ExamplePair>& v) {
  std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> out;
  for (const ExamplePair& p : v) out.emplace_back(p.document.ids, p.summary.ids);
  return out;
}

DecodeConfig decode_cfg(std::size_t beam_size, double beta, std::size_t max_len) {
  DecodeConfig c;
  c.beam_size = beam_size;
  c.length_penalty_beta = beta;
  c.max_len = max_len;
  c.validate();
  return c;
}

py::list hypotheses(const std::vector<BeamHypothesis>& hs) {
  py::list out;
  for (const BeamHypothesis& h : hs) {
    py::dict d;
    d["tokens"] = h.tokens.ids;
    d["score"] = h.score;
    d["sum_loglik"] = h.sum_loglik;
    out.append(d);
  }
  return out;
}

RunConfig config_from(const py::object& config) {
  if (py::isinstance<py::dict>(config)) {
    const std::string text = py::module_::import("json").attr("dumps")(config).cast<std::string>();
    return parse_run_config(nlohmann::json::parse(text));
  }
  return load_run_config(config.cast<std::filesystem::path>());
}

}  // namespace

PYBIND11_MODULE(_conlab, m) {
  m.doc() = "Contrastive sequence-level training for seq2seq summarization (C++ core)";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);

  m.attr("PAD") = kPad;
  m.attr("BOS") = kBos;
  m.attr("EOS") = kEos;
  m.attr("UNK") = kUnk;

  py::class_<Vocab>(m, "Vocab")
      .def(py::init<>())
      .def(py::init<std::vector<std::string>>())
      .def_static("load", &Vocab::load)
      .def("save", &Vocab::save)
      .def("__len__", &Vocab::size)
      .def("lookup", &Vocab::lookup)
      .def_property_readonly("tokens", &Vocab::tokens)
      .def("encode_document", [](const Vocab& v, const std::string& t) { return v.encode_document(t).ids; })
      .def("encode_summary", [](const Vocab& v, const std::string& t) { return v.encode_summary(t).ids; })
      .def("decode", [](const Vocab& v, const std::vector<TokenId>& ids) { return v.decode(as_seq(ids)); });

  m.def("build_vocab", &build_vocab, py::arg("texts"), py::arg("max_size"));

  py::class_<SyntheticCorpus>(m, "SyntheticCorpus")
      .def_readonly("vocab", &SyntheticCorpus::vocab)
      .def_property_readonly("train_text", [](const SyntheticCorpus& c) { return text_pairs(c.train_text); })
      .def_property_readonly("val_text", [](const SyntheticCorpus& c) { return text_pairs(c.val_text); })
      .def_property_readonly("test_text", [](const SyntheticCorpus& c) { return text_pairs(c.test_text); })
      .def_property_readonly("train", [](const SyntheticCorpus& c) { return id_pairs(c.train); })
      .def_property_readonly("val", [](const SyntheticCorpus& c) { return id_pairs(c.val); })
      .def_property_readonly("test", [](const SyntheticCorpus& c) { return id_pairs(c.test); });

  m.def(
      "synth_corpus",
      [](std::uint64_t seed, std::size_t n_train, std::size_t n_val, std::size_t n_test,
         std::size_t doc_len_min, std::size_t doc_len_max, std::size_t salient_count,
         std::size_t lexicon_size) {
        return synth_corpus(SyntheticSpec{seed, n_train, n_val, n_test, doc_len_min, doc_len_max,
                                          salient_count, lexicon_size});
      },
      py::arg("seed") = 0, py::arg("n_train") = 2000, py::arg("n_val") = 200,
      py::arg("n_test") = 200, py::arg("doc_len_min") = 12, py::arg("doc_len_max") = 20,
      py::arg("salient_count") = 3, py::arg("lexicon_size") = 200);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("d_model", &ModelConfig::d_model)
      .def_readwrite("n_heads", &ModelConfig::n_heads)
      .def_readwrite("n_enc_layers", &ModelConfig::n_enc_layers)
      .def_readwrite("n_dec_layers", &ModelConfig::n_dec_layers)
      .def_readwrite("d_ff", &ModelConfig::d_ff)
      .def_readwrite("max_doc_len", &ModelConfig::max_doc_len)
      .def_readwrite("max_sum_len", &ModelConfig::max_sum_len)
      .def_readwrite("dropout_rate", &ModelConfig::dropout_rate)
      .def("validate", &ModelConfig::validate);

  py::class_<Seq2SeqModel>(m, "Model")
      .def(py::init<const ModelConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_property_readonly("config", &Seq2SeqModel::config)
      .def("parameter_names",
           [](const Seq2SeqModel& model) {
             std::vector<std::string> names;
             for (const auto& [name, t] : model.parameters()) names.push_back(name);
             return names;
           })
      .def("parameter_count",
           [](const Seq2SeqModel& model) {
             std::size_t n = 0;
             for (const auto& [name, t] : model.parameters()) n += t.size();
             return n;
           })
      .def(
          "sequence_loglik",
          [](const Seq2SeqModel& model, const std::vector<TokenId>& source,
             const std::vector<TokenId>& target) {
            return model.sequence_loglik(model.encode(as_seq(source)), as_seq(target));
          },
          py::arg("source"), py::arg("target"))
      .def(
          "beam_search",
          [](const Seq2SeqModel& model, const std::vector<TokenId>& source, std::size_t beam_size,
             double beta, std::size_t max_len) {
            return hypotheses(beam_search(model, model.encode(as_seq(source)),
                                          decode_cfg(beam_size, beta, max_len)));
          },
          py::arg("source"), py::arg("beam_size") = 4, py::arg("beta") = 0.6, py::arg("max_len") = 8)
      .def(
          "exhaustive_search",
          [](const Seq2SeqModel& model, const std::vector<TokenId>& source, double beta,
             std::size_t max_len) {
            return hypotheses(exhaustive_search(model, model.encode(as_seq(source)),
                                                decode_cfg(1, beta, max_len)));
          },
          py::arg("source"), py::arg("beta") = 0.6, py::arg("max_len") = 8)
      .def(
          "save",
          [](const Seq2SeqModel& model, const std::filesystem::path& path) {
            save_tensors(path, model.parameters());
          },
          py::arg("path"))
      .def(
          "load",
          [](Seq2SeqModel& model, const std::filesystem::path& path) { model.restore(load_tensors(path)); },
          py::arg("path"));

  m.def("score_sequence", [](const std::vector<double>& ll, double beta) { return score_sequence(ll, beta); },
        py::arg("per_token_logliks"), py::arg("beta"));
  m.def("nll_loss", [](const std::vector<double>& ll) { return nll_loss(ll); }, py::arg("per_token_logliks"));
  m.def("contrastive_loss", py::overload_cast<double, double, double>(&contrastive_loss),
        py::arg("pos_score"), py::arg("neg_score"), py::arg("gamma"));
  m.def("combined_loss", py::overload_cast<double, double, double>(&combined_loss), py::arg("l_nll"),
        py::arg("l_con"), py::arg("lambda_nll"));
  m.def("lr_factor", &lr_factor, py::arg("step"), py::arg("total_steps"), py::arg("warmup_fraction"));

  m.def("tokenize", &rouge::tokenize);
  m.def("lcs_length", &rouge::lcs_length);
  m.def(
      "rouge",
      [](const std::string& candidate, const std::string& reference) {
        return scores_dict(rouge::score_texts(candidate, reference));
      },
      py::arg("candidate"), py::arg("reference"));
  m.def(
      "corpus_rouge",
      [](const std::vector<std::pair<std::string, std::string>>& pairs) {
        return scores_dict(rouge::corpus_rouge(pairs));
      },
      py::arg("pairs"));

  m.def(
      "resolve_config",
      [](const py::object& config) {
        const std::string text = to_json(config_from(config)).dump();
        return py::module_::import("json").attr("loads")(text);
      },
      py::arg("config"), "Parse, validate and fill defaults; returns the resolved config as a dict.");
  m.def(
      "train",
      [](const py::object& config, const std::filesystem::path& out, bool overwrite, bool verbose) {
        RunConfig cfg = config_from(config);
        cfg.out_dir = out;
        RunSummary s;
        {
          py::gil_scoped_release release;
          s = train_run(cfg, overwrite, verbose ? &std::cerr : nullptr);
        }
        py::dict d = scores_dict(s.test);
        d["steps"] = s.steps;
        d["early_stopped"] = s.early_stopped;
        d["mean_beam_score"] = s.mean_beam_score;
        return d;
      },
      py::arg("config"), py::arg("out"), py::arg("overwrite") = false, py::arg("verbose") = false,
      "Train one run (config path or dict) into `out`; returns test-set Rouge.");
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> argv{"conlab"};
        argv.insert(argv.end(), args.begin(), args.end());
        py::gil_scoped_release release;
        return run_cli(argv);
      },
      py::arg("args"), "Run a command-line invocation, e.g. ['eval', '--checkpoint', path].");
}
