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

#include "conlab/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "conlab/rng.hpp"
#include "json.hpp"

namespace conlab {
namespace {

const std::vector<std::string>& reserved_names() {
  static const std::vector<std::string> names{"<pad>", "<s>", "</s>", "<unk>"};
  return names;
}

}  // namespace

Vocab::Vocab() : Vocab(reserved_names()) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kNumReserved ||
      !std::equal(reserved_names().begin(), reserved_names().end(), tokens_.begin())) {
    throw DataError("vocab: the first four tokens must be <pad> <s> </s> <unk>");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const std::string& w = tokens_[i];
    if (w.empty() || w.find_first_of(" \t\r\n") != std::string::npos) {
      throw DataError("vocab: invalid token at id " + std::to_string(i));
    }
    if (!index_.emplace(w, static_cast<TokenId>(i)).second) {
      throw DataError("vocab: duplicate token '" + w + "'");
    }
  }
}

TokenId Vocab::lookup(std::string_view word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view word) const { return index_.find(word) != index_.end(); }

const std::string& Vocab::word_of(TokenId id) const {
  if (id >= tokens_.size()) throw DataError("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

TokenSequence Vocab::encode_document(std::string_view text) const {
  TokenSequence seq;
  for (const std::string& w : split_words(text)) seq.ids.push_back(lookup(w));
  return seq;
}

TokenSequence Vocab::encode_summary(std::string_view text) const {
  TokenSequence seq;
  seq.ids.push_back(kBos);
  for (const std::string& w : split_words(text)) seq.ids.push_back(lookup(w));
  seq.ids.push_back(kEos);
  return seq;
}

std::string Vocab::decode(const TokenSequence& seq) const {
  std::string out;
  for (TokenId id : seq.ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out += ' ';
    out += word_of(id);
  }
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("vocab: cannot write " + path.string());
  for (const std::string& w : tokens_) os << w << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("vocab: cannot read " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t max_size) {
  if (corpus.empty()) throw DataError("build_vocab: empty corpus");
  if (max_size < kNumReserved) throw DataError("build_vocab: max_size must be at least 4");
  std::map<std::string, std::size_t> counts;
  for (const std::string& text : corpus) {
    for (std::string& w : split_words(text)) ++counts[std::move(w)];
  }
  for (const std::string& r : reserved_names()) counts.erase(r);
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is alphabetical already; stable sort keeps that order among ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = reserved_names();
  for (const auto& [word, n] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(word);
  }
  return Vocab(std::move(tokens));
}

ExamplePair tokenize_pair(const Vocab& vocab, const TextPair& text, const LengthLimits& limits) {
  if (limits.max_doc_len == 0 || limits.max_sum_len < 3) {
    throw DataError("length limits: max_doc_len must be >= 1 and max_sum_len >= 3");
  }
  ExamplePair pair;
  pair.document = vocab.encode_document(text.document);
  if (pair.document.size() > limits.max_doc_len) pair.document.ids.resize(limits.max_doc_len);
  const std::vector<std::string> words = split_words(text.summary);
  const std::size_t keep = std::min(words.size(), limits.max_sum_len - 2);
  pair.summary.ids.push_back(kBos);
  for (std::size_t i = 0; i < keep; ++i) pair.summary.ids.push_back(vocab.lookup(words[i]));
  pair.summary.ids.push_back(kEos);
  if (pair.document.empty()) throw DataError("empty document");
  if (keep == 0) throw DataError("empty summary");
  return pair;
}

std::vector<TextPair> load_jsonl_texts(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_jsonl: cannot open " + path.string());
  std::vector<TextPair> out;
  std::string line;
  std::size_t line_no = 0, bad = 0, first_bad = 0;
  std::string first_reason;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string reason;
    try {
      const nlohmann::json rec = nlohmann::json::parse(line);
      if (!rec.is_object()) {
        reason = "record is not an object";
      } else if (!rec.contains("document") || !rec["document"].is_string()) {
        reason = "missing string field \"document\"";
      } else if (!rec.contains("summary") || !rec["summary"].is_string()) {
        reason = "missing string field \"summary\"";
      } else {
        out.push_back({rec["document"].get<std::string>(), rec["summary"].get<std::string>()});
      }
    } catch (const nlohmann::json::parse_error&) {
      reason = "invalid JSON";
    }
    if (!reason.empty()) {
      if (bad++ == 0) {
        first_bad = line_no;
        first_reason = reason;
      }
    }
  }
  if (bad > 0) {
    throw DataError(path.string() + ": " + std::to_string(bad) + " malformed line(s); first at line " +
                    std::to_string(first_bad) + " (" + first_reason + ")");
  }
  return out;
}

std::vector<ExamplePair> load_jsonl(const std::filesystem::path& path, const Vocab& vocab,
                                    const LengthLimits& limits) {
  std::vector<ExamplePair> out;
  const std::vector<TextPair> texts = load_jsonl_texts(path);
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    try {
      out.push_back(tokenize_pair(vocab, texts[i], limits));
    } catch (const DataError& e) {
      throw DataError(path.string() + ": record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::string lexicon_word(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "w%03zu", index);
  return buf;
}

Vocab synthetic_vocab(std::size_t lexicon_size) {
  std::vector<std::string> tokens = reserved_names();
  tokens.emplace_back(kSalientMarker);
  for (std::size_t i = 0; i < lexicon_size; ++i) tokens.push_back(lexicon_word(i));
  return Vocab(std::move(tokens));
}

namespace {

std::vector<TextPair> synth_split(const SyntheticSpec& spec, std::uint64_t split_key,
                                  std::size_t count) {
  Rng rng(Rng::derive(spec.seed, {0x5359'4e54ULL, split_key}));
  std::vector<TextPair> out;
  out.reserve(count);
  const std::size_t span = spec.doc_len_max - spec.doc_len_min + 1;
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t len = spec.doc_len_min + static_cast<std::size_t>(rng.below(span));
    std::vector<std::size_t> words(len);
    for (auto& w : words) w = static_cast<std::size_t>(rng.below(spec.lexicon_size));
    std::vector<std::size_t> positions = rng.permutation(len);
    positions.resize(spec.salient_count);
    std::sort(positions.begin(), positions.end());
    std::vector<bool> salient(len, false);
    for (std::size_t p : positions) salient[p] = true;

    TextPair pair;
    for (std::size_t i = 0; i < len; ++i) {
      if (!pair.document.empty()) pair.document += ' ';
      const std::string w = lexicon_word(words[i]);
      if (salient[i]) {
        pair.document += kSalientMarker;
        pair.document += ' ';
        if (!pair.summary.empty()) pair.summary += ' ';
        pair.summary += w;
      }
      pair.document += w;
    }
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace

SyntheticCorpus synth_corpus(const SyntheticSpec& spec) {
  if (spec.salient_count == 0 || spec.doc_len_min == 0 || spec.doc_len_min > spec.doc_len_max ||
      spec.salient_count > spec.doc_len_min || spec.lexicon_size == 0 ||
      spec.n_train == 0 || spec.n_val == 0 || spec.n_test == 0) {
    throw DataError(
        "synth_corpus: inconsistent sizes (need 1 <= salient_count <= doc_len_min <= "
        "doc_len_max, non-empty lexicon and splits)");
  }
  SyntheticCorpus c;
  c.vocab = synthetic_vocab(spec.lexicon_size);
  c.train_text = synth_split(spec, 1, spec.n_train);
  c.val_text = synth_split(spec, 2, spec.n_val);
  c.test_text = synth_split(spec, 3, spec.n_test);
  const LengthLimits unlimited{spec.doc_len_max + spec.salient_count, spec.salient_count + 2};
  auto tokenize = [&](const std::vector<TextPair>& texts) {
    std::vector<ExamplePair> out;
    out.reserve(texts.size());
    for (const TextPair& t : texts) out.push_back(tokenize_pair(c.vocab, t, unlimited));
    return out;
  };
  c.train = tokenize(c.train_text);
  c.val = tokenize(c.val_text);
  c.test = tokenize(c.test_text);
  return c;
}

}  // namespace conlab
