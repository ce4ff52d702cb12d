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

#include <cmath>

#include "conlab/decoding.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace conlab;

namespace {

Seq2SeqModel eos_model(std::size_t vocab, double eos_bias) {
  Seq2SeqModel m(testutil::tiny_config(vocab), 2);
  for (double& v : m.parameter("lm_head.weight").mutable_values()) v = 0.0;
  auto bias = m.parameter("lm_head.bias").mutable_values();
  for (double& v : bias) v = 0.0;
  bias[kEos] = eos_bias;
  return m;
}

std::size_t expected_candidates(std::size_t vocab, std::size_t max_len) {
  // PAD and BOS are never generated; EOS ends the sequence.
  const std::size_t k = vocab - 3;
  std::size_t total = 0, level = 1;
  for (std::size_t j = 0; j < max_len; ++j, level *= k) total += level;
  return total;
}

void check_ranked(const std::vector<BeamHypothesis>& hyps, double beta) {
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto& h = hyps[i];
    CHECK(h.finished);
    CHECK(h.tokens.starts_with_bos());
    CHECK(h.tokens.ends_with_eos());
    CHECK(h.sum_loglik <= 0.0);
    CHECK(std::abs(h.score - h.sum_loglik / std::pow(double(h.generated()), beta)) <= 1e-12);
    if (i > 0) CHECK(hyps[i - 1].score >= h.score);
  }
}

}  // namespace

TEST_CASE("score_sequence examples") {
  CHECK(score_sequence(std::vector<double>{-1.0}, 0.6) == -1.0);
  CHECK(score_sequence(std::vector<double>{-1.0}, 2.3) == -1.0);
  const double two_tokens = score_sequence(std::vector<double>{-1.0, -2.0}, 0.8);
  CHECK(two_tokens == doctest::Approx(-3.0 / std::pow(2.0, 0.8)).epsilon(1e-15));
  CHECK(std::abs(two_tokens - -1.72305) < 1e-5);
  CHECK_THROWS_AS(score_sequence(std::vector<double>{}, 0.6), DecodeError);
  CHECK(DecodeConfig{}.length_penalty_beta == 0.6);
  CHECK(DecodeConfig{}.beam_size == 4);
}

TEST_CASE("score_sequence properties") {
  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> ll(2 + rng.below(6));
    for (double& v : ll) v = rng.uniform(-4, -0.01);
    const double beta = rng.uniform(0.1, 1.5);
    const double base = score_sequence(ll, beta);
    auto bumped = ll;
    bumped[rng.below(ll.size())] += 0.005;
    CHECK(score_sequence(bumped, beta) > base);
    CHECK(score_sequence(ll, beta + 0.1) > base);
  }
}

TEST_CASE("decode config validation") {
  DecodeConfig c;
  CHECK(c.validate().empty());
  c.length_penalty_beta = 1.2;
  CHECK(c.validate().size() == 1);
  c.length_penalty_beta = 0.0;
  CHECK_THROWS_AS(c.validate(), DecodeError);
  c = DecodeConfig{};
  c.beam_size = 0;
  CHECK_THROWS_AS(c.validate(), DecodeError);
}

TEST_CASE("forced end of sequence") {
  const Seq2SeqModel m = eos_model(7, 60.0);
  const auto enc = m.encode(TokenSequence{{4, 5}});
  DecodeConfig cfg;
  cfg.max_len = 1;
  const auto single = beam_search(m, enc, cfg);
  REQUIRE(single.size() == 1);
  CHECK(single[0].tokens.ids == std::vector<TokenId>{kBos, kEos});
  const double f_eos = m.sequence_loglik(enc, single[0].tokens)[0];
  CHECK(single[0].score == f_eos);

  cfg.max_len = 4;
  const auto ranked = beam_search(m, enc, cfg);
  CHECK(ranked.front().tokens.ids == std::vector<TokenId>{kBos, kEos});
  CHECK(ranked.front().score == doctest::Approx(f_eos).epsilon(1e-15));
  CHECK(f_eos > -1e-20);
}

TEST_CASE("exhaustive enumeration count") {
  for (std::size_t vocab : {5u, 6u}) {
    for (std::size_t max_len : {1u, 2u, 3u}) {
      const Seq2SeqModel m(testutil::tiny_config(vocab), 4);
      const auto enc = m.encode(TokenSequence{{4}});
      DecodeConfig cfg;
      cfg.max_len = max_len;
      const auto all = exhaustive_search(m, enc, cfg);
      CHECK(all.size() == expected_candidates(vocab, max_len));
      check_ranked(all, cfg.length_penalty_beta);
    }
  }
  // vocab 5 = reserved tokens + one word: [EOS], [UNK, EOS], [a, EOS]
  const Seq2SeqModel m(testutil::tiny_config(5), 4);
  DecodeConfig cfg;
  cfg.max_len = 2;
  CHECK(exhaustive_search(m, m.encode(TokenSequence{{4}}), cfg).size() == 3);

  ModelConfig big = testutil::tiny_config(40);
  Seq2SeqModel mb(big, 1);
  cfg.max_len = 6;
  CHECK_THROWS_AS(exhaustive_search(mb, mb.encode(TokenSequence{{4}}), cfg), DecodeError);
}

TEST_CASE("saturated beam agrees with exhaustive search") {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng(Rng::derive(31, {trial}));
    const std::size_t vocab = 5 + rng.below(2);
    const std::size_t max_len = 1 + rng.below(5);
    ModelConfig mc = testutil::tiny_config(vocab);
    Seq2SeqModel m(mc, trial);
    TokenSequence src;
    for (std::size_t i = 0, n = 1 + rng.below(6); i < n; ++i) src.ids.push_back(4 + rng.below(vocab - 4));
    const auto enc = m.encode(src);
    DecodeConfig cfg;
    cfg.max_len = max_len;
    cfg.length_penalty_beta = rng.uniform(0.3, 1.0);
    cfg.beam_size = static_cast<std::size_t>(std::pow(vocab, max_len));
    const auto beam = beam_search(m, enc, cfg);
    const auto all = exhaustive_search(m, enc, cfg);
    CHECK(beam.front().tokens == all.front().tokens);
    CHECK(std::abs(beam.front().score - all.front().score) <= 1e-12);
    check_ranked(beam, cfg.length_penalty_beta);
  }
}

TEST_CASE("beam search determinism and silver generation") {
  const Seq2SeqModel m(testutil::tiny_config(12), 8);
  const TokenSequence src{{4, 9, 7, 5}};
  DecodeConfig cfg;
  cfg.max_len = 5;
  const auto a = beam_search(m, m.encode(src), cfg);
  const auto b = beam_search(m, m.encode(src), cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].score == b[i].score);
  }
  CHECK(a.size() <= cfg.beam_size);
  check_ranked(a, cfg.length_penalty_beta);
  CHECK(generate_silver(m, src, cfg) == a.front().tokens);

  cfg.max_len = 7;
  CHECK_THROWS_AS(beam_search(m, m.encode(src), cfg), DecodeError);
}

TEST_CASE("ranking ties fall back to token order") {
  BeamHypothesis x, y;
  x.tokens.ids = {kBos, 5, kEos};
  y.tokens.ids = {kBos, 4, kEos};
  x.score = y.score = -1.0;
  CHECK(ranks_before(y, x));
  CHECK_FALSE(ranks_before(x, y));
}
