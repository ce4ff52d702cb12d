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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace conlab {

using TokenId = std::uint32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumReserved = 4;

// Vocabulary-indexed token list. Decoder-side sequences start with BOS and,
// once complete, end with EOS; documents carry neither sentinel.
struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  TokenId operator[](std::size_t i) const { return ids[i]; }
  bool starts_with_bos() const { return !ids.empty() && ids.front() == kBos; }
  bool ends_with_eos() const { return !ids.empty() && ids.back() == kEos; }
  auto operator<=>(const TokenSequence&) const = default;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Vocab {
 public:
  Vocab();  // reserved tokens only
  explicit Vocab(std::vector<std::string> tokens);  // tokens[0..3] must be the reserved names

  std::size_t size() const { return tokens_.size(); }
  TokenId lookup(std::string_view word) const;  // kUnk when absent
  bool contains(std::string_view word) const;
  const std::string& word_of(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenSequence encode_document(std::string_view text) const;
  // BOS + words + EOS.
  TokenSequence encode_summary(std::string_view text) const;
  // Joins content words with single spaces; sentinels and PAD are dropped.
  std::string decode(const TokenSequence& seq) const;

  // One token per line; line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> index_;
};

std::vector<std::string> split_words(std::string_view text);

// Most frequent words up to max_size - 4, ties broken alphabetically, with
// the reserved tokens prepended.
Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t max_size);

struct ExamplePair {
  TokenSequence document;
  TokenSequence summary;
  bool operator==(const ExamplePair&) const = default;
};

struct TextPair {
  std::string document;
  std::string summary;
};

struct LengthLimits {
  std::size_t max_doc_len = 0;
  std::size_t max_sum_len = 0;  // counts BOS and EOS
};

// Truncates (never splits) to the limits. Throws DataError when either side
// is empty after truncation.
ExamplePair tokenize_pair(const Vocab& vocab, const TextPair& text, const LengthLimits& limits);

// JSON Lines with string fields "document" and "summary". Malformed lines
// raise DataError with the count and first offending line number.
std::vector<TextPair> load_jsonl_texts(const std::filesystem::path& path);
std::vector<ExamplePair> load_jsonl(const std::filesystem::path& path, const Vocab& vocab,
                                    const LengthLimits& limits);

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::size_t n_train = 2000;
  std::size_t n_val = 200;
  std::size_t n_test = 200;
  std::size_t doc_len_min = 12;  // lexicon words per document, markers excluded
  std::size_t doc_len_max = 20;
  std::size_t salient_count = 3;
  std::size_t lexicon_size = 200;
};

inline constexpr std::string_view kSalientMarker = "<m>";

struct SyntheticCorpus {
  Vocab vocab;
  std::vector<TextPair> train_text, val_text, test_text;
  std::vector<ExamplePair> train, val, test;
};

// Lexicon words w000.. plus the salient marker, after the reserved tokens.
Vocab synthetic_vocab(std::size_t lexicon_size);
std::string lexicon_word(std::size_t index);

// Each document is a seeded random word sequence in which salient_count
// words are tagged by a preceding marker token; the gold summary is the
// tagged words in document order. Pure function of `spec`.
SyntheticCorpus synth_corpus(const SyntheticSpec& spec);

}  // namespace conlab
