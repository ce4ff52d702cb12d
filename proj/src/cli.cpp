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

#include "conlab/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "conlab/checkpoint.hpp"
#include "json.hpp"

namespace conlab {
namespace fs = std::filesystem;
namespace {

constexpr std::uint64_t kInitKey = 0x494e4954;
constexpr const char* kEvalFile = "eval.csv";
constexpr const char* kEvalSummaryFile = "eval_summary.json";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

fs::path absolute_or_empty(const fs::path& p) { return p.empty() ? p : fs::absolute(p); }

std::string percent(double f1) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%7.2f", 100.0 * f1);
  return buf;
}

void print_rouge_table(std::ostream& os, const std::vector<std::string>& labels,
                       const std::vector<rouge::RougeScores>& rows) {
  std::size_t width = 5;
  for (const std::string& l : labels) width = std::max(width, l.size());
  os << std::left << std::setw(static_cast<int>(width)) << "Model" << "    R-1     R-2     R-L\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << std::left << std::setw(static_cast<int>(width)) << labels[i] << percent(rows[i].r1.f1)
       << " " << percent(rows[i].r2.f1) << " " << percent(rows[i].rl.f1) << "\n";
  }
}

nlohmann::json prf_json(const rouge::Prf& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

Seq2SeqModel load_model(const RunConfig& cfg, const fs::path& checkpoint) {
  Seq2SeqModel model(cfg.model, 0);
  ParameterMap params = load_tensors(checkpoint);
  try {
    model.restore(params);
  } catch (const ModelError& e) {
    throw CheckpointError(checkpoint.string() + ": does not match the run configuration (" +
                          e.what() + ")");
  }
  return model;
}

ParameterMap optimizer_tensors(const TrainState& state) {
  ParameterMap out;
  for (const auto& [name, t] : state.optimizer.m) out.emplace(name + ".m", t.detach());
  for (const auto& [name, t] : state.optimizer.v) out.emplace(name + ".v", t.detach());
  out.emplace("optimizer.step",
              ad::Tensor(ad::Shape{1}, {static_cast<double>(state.optimizer.updates)}));
  return out;
}

// Runs `jobs` in order, or all at once on their own threads.
void run_jobs(std::vector<std::function<void()>>& jobs, bool parallel) {
  if (!parallel) {
    for (auto& job : jobs) job();
    return;
  }
  std::vector<std::exception_ptr> errors(jobs.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        jobs[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Serializes log lines from parallel runs.
class PrefixedLog {
 public:
  PrefixedLog(std::ostream* sink, std::mutex* mu, std::string prefix)
      : sink_(sink), mu_(mu), prefix_(std::move(prefix)) {}
  std::ostream* stream() { return sink_ ? &buf_ : nullptr; }
  void flush() {
    if (!sink_) return;
    std::lock_guard<std::mutex> lock(*mu_);
    std::istringstream lines(buf_.str());
    for (std::string line; std::getline(lines, line);) *sink_ << prefix_ << line << "\n";
    sink_->flush();
    buf_.str("");
  }

 private:
  std::ostream* sink_;
  std::mutex* mu_;
  std::string prefix_;
  std::ostringstream buf_;
};

std::string gamma_label(double g) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << g;
  return os.str();
}

}  // namespace

Corpus load_corpus(RunConfig& config) {
  Corpus c;
  if (config.data.source == DataSource::kSynthetic) {
    SyntheticCorpus s = synth_corpus(config.data.synthetic);
    c.vocab = std::move(s.vocab);
    c.train = std::move(s.train);
    c.val = std::move(s.val);
    c.test = std::move(s.test);
    c.test_text = std::move(s.test_text);
  } else {
    const LengthLimits limits{config.data.max_doc_len, config.data.max_sum_len};
    const std::vector<TextPair> train = load_jsonl_texts(config.data.train_path);
    std::vector<std::string> texts;
    texts.reserve(2 * train.size());
    for (const TextPair& t : train) {
      texts.push_back(t.document);
      texts.push_back(t.summary);
    }
    c.vocab = build_vocab(texts, config.data.max_vocab);
    for (const TextPair& t : train) c.train.push_back(tokenize_pair(c.vocab, t, limits));
    if (!config.data.val_path.empty()) {
      for (const TextPair& t : load_jsonl_texts(config.data.val_path)) {
        c.val.push_back(tokenize_pair(c.vocab, t, limits));
      }
    }
    c.test_text = load_jsonl_texts(config.data.test_path);
    for (const TextPair& t : c.test_text) c.test.push_back(tokenize_pair(c.vocab, t, limits));
  }
  if (config.model.vocab_size == 0) {
    config.model.vocab_size = c.vocab.size();
  } else if (config.model.vocab_size != c.vocab.size()) {
    throw ConfigError("model.vocab_size", "is " + std::to_string(config.model.vocab_size) +
                                              " but the data vocabulary has " +
                                              std::to_string(c.vocab.size()) + " tokens");
  }
  return c;
}

void prepare_output_dir(const fs::path& dir, bool overwrite) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!overwrite) {
        throw std::runtime_error("output directory " + dir.string() +
                                 " is not empty; pass --overwrite to replace it");
      }
      for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(dir);
}

RunSummary train_run(RunConfig config, bool overwrite, std::ostream* log) {
  if (config.out_dir.empty()) throw ConfigError("out", "no output directory given (--out)");
  config.out_dir = fs::absolute(config.out_dir);
  config.init_checkpoint = absolute_or_empty(config.init_checkpoint);
  config.data.train_path = absolute_or_empty(config.data.train_path);
  config.data.val_path = absolute_or_empty(config.data.val_path);
  config.data.test_path = absolute_or_empty(config.data.test_path);
  config.resolve();
  Corpus corpus = load_corpus(config);

  prepare_output_dir(config.out_dir, overwrite);
  write_text(config.out_dir / kRunConfigFile, to_json(config).dump(2) + "\n");
  corpus.vocab.save(config.out_dir / kVocabFile);

  Seq2SeqModel model(config.model, Rng::derive(config.seed, {kInitKey}));
  if (!config.init_checkpoint.empty()) {
    model = load_model(config, config.init_checkpoint);
  }

  const TrainingConfig& tc = config.training;
  std::ofstream metrics(config.out_dir / kMetricsFile, std::ios::binary | std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write metrics file");
  metrics << kMetricsHeader << "\n";
  const std::size_t per_epoch = steps_per_epoch(corpus.train.size(), tc.batch_size);
  std::size_t total = per_epoch * tc.max_epochs;
  if (tc.max_steps > 0) total = std::min(total, tc.max_steps);
  const std::size_t log_every = std::max<std::size_t>(1, total / 20);
  if (log) {
    *log << "training " << mode_name(tc.mode) << " for up to " << total << " steps ("
         << corpus.train.size() << " pairs, " << per_epoch << " steps per epoch)\n";
  }

  auto on_row = [&](const MetricsRow& row) {
    metrics << format_metrics_row(row) << "\n";
    if (!log) return;
    if (row.split == "val") {
      *log << "  step " << row.step << " val rouge-2 " << format_real(*row.rouge2_f) << "\n";
    } else if (row.step % log_every == 0) {
      *log << "  step " << row.step << " loss " << format_real(*row.loss) << "\n";
    }
  };
  TrainResult result =
      run_training(std::move(model), corpus.vocab, corpus.train, corpus.val, tc, on_row);

  const CorpusResult test = evaluate_corpus(result.state.model, corpus.vocab, corpus.test,
                                            tc.decode_config());
  MetricsRow row;
  row.step = result.state.step;
  row.split = "test";
  row.rouge1_f = test.corpus.r1.f1;
  row.rouge2_f = test.corpus.r2.f1;
  row.rougeL_f = test.corpus.rl.f1;
  row.lr = tc.learning_rate * lr_factor(result.state.step, total, tc.warmup_fraction);
  metrics << format_metrics_row(row) << "\n";
  metrics.close();
  if (!metrics) throw std::runtime_error("write failed for metrics file");

  const fs::path ckpt = config.out_dir / kCheckpointFile;
  save_tensors(ckpt, result.state.model.parameters());
  save_tensors(optimizer_state_path(ckpt), optimizer_tensors(result.state));

  RunSummary summary{test.corpus, test.mean_beam_score, result.state.step, result.early_stopped};
  if (log) {
    *log << "finished after " << summary.steps << " steps"
         << (summary.early_stopped ? " (early stop)" : "") << "; test rouge-1/2/L f1 "
         << format_real(test.corpus.r1.f1) << " " << format_real(test.corpus.r2.f1) << " "
         << format_real(test.corpus.rl.f1) << "\n";
  }
  return summary;
}

std::vector<SweepRow> sweep_margin(const RunConfig& base, const std::vector<double>& gammas,
                                   const fs::path& out_dir, bool overwrite, bool parallel,
                                   std::ostream* log) {
  if (gammas.empty()) throw ConfigError("gammas", "empty margin list");
  for (double g : gammas) {
    if (!(g >= 0.0)) throw ConfigError("gammas", "margins must be >= 0");
  }
  prepare_output_dir(out_dir, overwrite);
  std::vector<SweepRow> rows(gammas.size());
  std::mutex mu;
  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    jobs.emplace_back([&, i] {
      RunConfig cfg = base;
      cfg.training.gamma = gammas[i];
      cfg.out_dir = out_dir / ("gamma_" + gamma_label(gammas[i]));
      PrefixedLog plog(log, &mu, "[gamma " + gamma_label(gammas[i]) + "] ");
      const RunSummary s = train_run(cfg, true, parallel ? plog.stream() : log);
      plog.flush();
      rows[i] = SweepRow{gammas[i], s.test};
    });
  }
  run_jobs(jobs, parallel);

  std::string csv = "gamma,rouge1_f,rouge2_f,rougeL_f\n";
  for (const SweepRow& r : rows) {
    csv += format_real(r.gamma) + "," + format_real(r.scores.r1.f1) + "," +
           format_real(r.scores.r2.f1) + "," + format_real(r.scores.rl.f1) + "\n";
  }
  write_text(out_dir / "sweep.csv", csv);
  return rows;
}

std::vector<AblationRow> ablate(const RunConfig& base, const fs::path& out_dir, bool overwrite,
                                bool parallel, std::ostream* log) {
  std::vector<AblationRow> rows{
      {"full", TrainMode::kConsum, base.training.gamma, base.training.lambda_nll, {}},
      {"no_con", TrainMode::kNllOnly, base.training.gamma, 1.0, {}},
      {"no_nll_gamma1.5", TrainMode::kConOnly, 1.5, 0.0, {}},
      {"no_nll_gamma0.0", TrainMode::kConOnly, 0.0, 0.0, {}},
  };
  prepare_output_dir(out_dir, overwrite);
  std::mutex mu;
  std::vector<std::function<void()>> jobs;
  for (AblationRow& row : rows) {
    jobs.emplace_back([&] {
      RunConfig cfg = base;
      cfg.training.mode = row.mode;
      cfg.training.gamma = row.gamma;
      if (row.mode == TrainMode::kConsum) cfg.training.lambda_nll = row.lambda_nll;
      cfg.out_dir = out_dir / row.variant;
      PrefixedLog plog(log, &mu, "[" + row.variant + "] ");
      const RunSummary s = train_run(cfg, true, parallel ? plog.stream() : log);
      plog.flush();
      row.scores = s.test;
    });
  }
  run_jobs(jobs, parallel);

  std::string csv = "variant,mode,gamma,lambda_nll,rouge1_f,rouge2_f,rougeL_f\n";
  for (const AblationRow& r : rows) {
    csv += r.variant + "," + mode_name(r.mode) + "," + format_real(r.gamma) + "," +
           format_real(r.lambda_nll) + "," + format_real(r.scores.r1.f1) + "," +
           format_real(r.scores.r2.f1) + "," + format_real(r.scores.rl.f1) + "\n";
  }
  write_text(out_dir / "ablation.csv", csv);
  return rows;
}

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool overwrite = false;
  bool quiet = false;
};

RunConfig config_from(const CommonOptions& o) {
  if (o.config.empty()) throw ConfigError("config", "--config is required");
  RunConfig cfg = load_run_config(o.config);
  if (o.seed_set) cfg.seed = o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  cfg.resolve();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&o](const std::uint64_t& s) { o.seed = s; o.seed_set = true; }, "Run seed");
  cmd->add_flag("--overwrite", o.overwrite, "Replace existing outputs");
  cmd->add_flag("--quiet", o.quiet, "Suppress progress output");
}

// Checkpoint directory layout: run_config.json and vocab.txt beside the file.
struct LoadedRun {
  RunConfig config;
  Vocab vocab;
  Seq2SeqModel model;
};

LoadedRun load_run(const fs::path& checkpoint, const std::string& config_override) {
  const fs::path dir = checkpoint.parent_path().empty() ? fs::path(".") : checkpoint.parent_path();
  RunConfig cfg = load_run_config(config_override.empty() ? dir / kRunConfigFile
                                                          : fs::path(config_override));
  Vocab vocab = Vocab::load(dir / kVocabFile);
  if (cfg.model.vocab_size == 0) cfg.model.vocab_size = vocab.size();
  Seq2SeqModel model = load_model(cfg, checkpoint);
  return LoadedRun{std::move(cfg), std::move(vocab), std::move(model)};
}

std::vector<std::string> read_documents(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<std::string> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": not valid JSON");
    }
    if (!rec.is_object() || !rec.contains("document") || !rec["document"].is_string()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": missing string field \"document\"");
    }
    docs.push_back(rec["document"].get<std::string>());
  }
  return docs;
}

int cmd_train(const CommonOptions& o) {
  RunConfig cfg = config_from(o);
  train_run(cfg, o.overwrite, o.quiet ? nullptr : &std::cerr);
  return kExitOk;
}

struct EvalOptions {
  std::string checkpoint, input, out, config;
  std::optional<double> beta;
  std::optional<std::size_t> beam;
  bool overwrite = false;
};

int cmd_eval(const EvalOptions& o) {
  LoadedRun run = load_run(o.checkpoint, o.config);
  DecodeConfig decode = run.config.decode;
  if (o.beta) decode.length_penalty_beta = *o.beta;
  if (o.beam) decode.beam_size = *o.beam;
  try {
    for (const std::string& w : decode.validate()) std::cerr << "warning: " << w << "\n";
  } catch (const DecodeError& e) {
    throw ConfigError(o.beta ? "--beta" : "--beam", e.what());
  }

  std::vector<ExamplePair> pairs;
  const LengthLimits limits{run.config.data.max_doc_len, run.config.data.max_sum_len};
  if (!o.input.empty()) {
    for (const TextPair& t : load_jsonl_texts(o.input)) {
      pairs.push_back(tokenize_pair(run.vocab, t, limits));
    }
  } else if (run.config.data.source == DataSource::kSynthetic) {
    pairs = synth_corpus(run.config.data.synthetic).test;
  } else {
    for (const TextPair& t : load_jsonl_texts(run.config.data.test_path)) {
      pairs.push_back(tokenize_pair(run.vocab, t, limits));
    }
  }

  const fs::path out_dir = o.out.empty() ? fs::path(o.checkpoint).parent_path() : fs::path(o.out);
  const fs::path csv_path = (out_dir.empty() ? fs::path(".") : out_dir) / kEvalFile;
  const fs::path summary_path = csv_path.parent_path() / kEvalSummaryFile;
  if (!o.overwrite && (fs::exists(csv_path) || fs::exists(summary_path))) {
    throw std::runtime_error(csv_path.string() + " exists; pass --overwrite to replace it");
  }
  if (!csv_path.parent_path().empty()) fs::create_directories(csv_path.parent_path());

  const CorpusResult res = evaluate_corpus(run.model, run.vocab, pairs, decode);
  std::string csv = "example_id,rouge1_f,rouge2_f,rougeL_f,beam_score\n";
  for (std::size_t i = 0; i < res.examples.size(); ++i) {
    const ExampleResult& e = res.examples[i];
    csv += std::to_string(i) + "," + format_real(e.rouge.r1.f1) + "," +
           format_real(e.rouge.r2.f1) + "," + format_real(e.rouge.rl.f1) + "," +
           format_real(e.beam_score) + "\n";
  }
  write_text(csv_path, csv);
  const nlohmann::json summary = {
      {"examples", res.examples.size()},
      {"rouge1", prf_json(res.corpus.r1)},
      {"rouge2", prf_json(res.corpus.r2)},
      {"rougeL", prf_json(res.corpus.rl)},
      {"mean_beam_score", res.mean_beam_score},
      {"beam_size", decode.beam_size},
      {"length_penalty_beta", decode.length_penalty_beta},
  };
  write_text(summary_path, summary.dump(2) + "\n");

  print_rouge_table(std::cout, {mode_name(run.config.training.mode)}, {res.corpus});
  std::cout << "mean beam score " << format_real(res.mean_beam_score) << " over "
            << res.examples.size() << " examples\n";
  return kExitOk;
}

struct DecodeOptions {
  std::string checkpoint, input, out, config;
  std::optional<double> beta;
  std::optional<std::size_t> beam;
  bool overwrite = false;
};

int cmd_decode(const DecodeOptions& o) {
  LoadedRun run = load_run(o.checkpoint, o.config);
  DecodeConfig decode = run.config.decode;
  if (o.beta) decode.length_penalty_beta = *o.beta;
  if (o.beam) decode.beam_size = *o.beam;
  try {
    for (const std::string& w : decode.validate()) std::cerr << "warning: " << w << "\n";
  } catch (const DecodeError& e) {
    throw ConfigError(o.beta ? "--beta" : "--beam", e.what());
  }
  std::ostringstream out;
  for (const std::string& doc : read_documents(o.input)) {
    TokenSequence src = run.vocab.encode_document(doc);
    if (src.size() > run.config.data.max_doc_len) src.ids.resize(run.config.data.max_doc_len);
    if (src.empty()) throw DataError("decode: empty document in " + o.input);
    out << run.vocab.decode(generate_silver(run.model, src, decode)) << "\n";
  }
  if (o.out.empty()) {
    std::cout << out.str();
  } else {
    if (fs::exists(o.out) && !o.overwrite) {
      throw std::runtime_error(o.out + " exists; pass --overwrite to replace it");
    }
    write_text(o.out, out.str());
  }
  return kExitOk;
}

std::vector<double> parse_gammas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" ", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("gammas", "'" + item + "' is not a number");
    }
  }
  return out;
}

int cmd_sweep(const CommonOptions& o, const std::string& gammas_text, bool parallel) {
  RunConfig cfg = config_from(o);
  if (cfg.out_dir.empty()) throw ConfigError("out", "no output directory given (--out)");
  const std::vector<double> gammas = gammas_text.empty() ? kDefaultGammas : parse_gammas(gammas_text);
  const std::vector<SweepRow> rows = sweep_margin(cfg, gammas, cfg.out_dir, o.overwrite, parallel,
                                                  o.quiet ? nullptr : &std::cerr);
  std::vector<std::string> labels;
  std::vector<rouge::RougeScores> scores;
  for (const SweepRow& r : rows) {
    labels.push_back("gamma=" + gamma_label(r.gamma));
    scores.push_back(r.scores);
  }
  print_rouge_table(std::cout, labels, scores);
  return kExitOk;
}

int cmd_ablate(const CommonOptions& o, bool parallel) {
  RunConfig cfg = config_from(o);
  if (cfg.out_dir.empty()) throw ConfigError("out", "no output directory given (--out)");
  const std::vector<AblationRow> rows =
      ablate(cfg, cfg.out_dir, o.overwrite, parallel, o.quiet ? nullptr : &std::cerr);
  std::vector<std::string> labels;
  std::vector<rouge::RougeScores> scores;
  for (const AblationRow& r : rows) {
    labels.push_back(r.variant);
    scores.push_back(r.scores);
  }
  print_rouge_table(std::cout, labels, scores);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Contrastive sequence training for summarization", "conlab"};
  app.require_subcommand(1);

  CommonOptions train_o, sweep_o, ablate_o;
  CLI::App* train = app.add_subcommand("train", "Train one model from a run configuration");
  add_common(train, train_o);

  EvalOptions eval_o;
  CLI::App* eval = app.add_subcommand("eval", "Decode and score a corpus with a checkpoint");
  eval->add_option("--checkpoint", eval_o.checkpoint, "Checkpoint file")->required();
  eval->add_option("--input", eval_o.input, "JSONL corpus (default: the run's test split)");
  eval->add_option("--out", eval_o.out, "Directory for eval.csv (default: checkpoint directory)");
  eval->add_option("--config", eval_o.config, "Run configuration (default: beside checkpoint)");
  eval->add_option("--beta", eval_o.beta, "Length penalty exponent");
  eval->add_option("--beam", eval_o.beam, "Beam size");
  eval->add_flag("--overwrite", eval_o.overwrite, "Replace existing outputs");

  DecodeOptions dec_o;
  CLI::App* decode = app.add_subcommand("decode", "Write one generated summary per input line");
  decode->add_option("--checkpoint", dec_o.checkpoint, "Checkpoint file")->required();
  decode->add_option("--input", dec_o.input, "JSONL file with a \"document\" field")->required();
  decode->add_option("--out", dec_o.out, "Output text file (default: stdout)");
  decode->add_option("--config", dec_o.config, "Run configuration (default: beside checkpoint)");
  decode->add_option("--beta", dec_o.beta, "Length penalty exponent");
  decode->add_option("--beam", dec_o.beam, "Beam size");
  decode->add_flag("--overwrite", dec_o.overwrite, "Replace an existing output file");

  std::string gammas;
  bool sweep_parallel = false, ablate_parallel = false;
  CLI::App* sweep = app.add_subcommand("sweep-margin", "Train and evaluate once per margin");
  add_common(sweep, sweep_o);
  sweep->add_option("--gammas", gammas, "Comma-separated margins (default 0,0.5,1,1.5,2)");
  sweep->add_flag("--parallel", sweep_parallel, "Run the margins concurrently");

  CLI::App* abl = app.add_subcommand("ablate", "Full objective and its three ablations");
  add_common(abl, ablate_o);
  abl->add_flag("--parallel", ablate_parallel, "Run the variants concurrently");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_o);
    if (*eval) return cmd_eval(eval_o);
    if (*decode) return cmd_decode(dec_o);
    if (*sweep) return cmd_sweep(sweep_o, gammas, sweep_parallel);
    if (*abl) return cmd_ablate(ablate_o, ablate_parallel);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

int run_cli(int argc, const char* const* argv) {
  return run_cli(std::vector<std::string>(argv, argv + argc));
}

}  // namespace conlab
