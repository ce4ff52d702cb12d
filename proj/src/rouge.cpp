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

#include "conlab/rouge.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

namespace conlab::rouge {
namespace {

Prf make_prf(double overlap, double candidate_total, double reference_total) {
  Prf s;
  s.precision = candidate_total > 0 ? overlap / candidate_total : 0.0;
  s.recall = reference_total > 0 ? overlap / reference_total : 0.0;
  const double pr = s.precision + s.recall;
  s.f1 = pr > 0 ? 2.0 * s.precision * s.recall / pr : 0.0;
  return s;
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, std::size_t n, std::size_t& total) {
  NgramCounts counts;
  total = 0;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
    ++total;
  }
  return counts;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  flush();
  return out;
}

Prf rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
            int n) {
  if (n != 1 && n != 2) throw std::invalid_argument("rouge_n: n must be 1 or 2");
  std::size_t cand_total = 0, ref_total = 0;
  const NgramCounts cand = count_ngrams(candidate, static_cast<std::size_t>(n), cand_total);
  const NgramCounts ref = count_ngrams(reference, static_cast<std::size_t>(n), ref_total);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  return make_prf(static_cast<double>(overlap), static_cast<double>(cand_total),
                  static_cast<double>(ref_total));
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Prf rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty()) return {};
  return make_prf(static_cast<double>(lcs_length(candidate, reference)),
                  static_cast<double>(candidate.size()), static_cast<double>(reference.size()));
}

RougeScores score(const std::vector<std::string>& candidate,
                  const std::vector<std::string>& reference) {
  return {rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2),
          rouge_l(candidate, reference)};
}

RougeScores score_texts(std::string_view candidate, std::string_view reference) {
  return score(tokenize(candidate), tokenize(reference));
}

RougeScores mean_scores(const std::vector<RougeScores>& per_pair) {
  if (per_pair.empty()) throw std::invalid_argument("corpus_rouge: empty corpus");
  RougeScores m;
  auto acc = [](Prf& into, const Prf& x) {
    into.precision += x.precision;
    into.recall += x.recall;
    into.f1 += x.f1;
  };
  for (const RougeScores& s : per_pair) {
    acc(m.r1, s.r1);
    acc(m.r2, s.r2);
    acc(m.rl, s.rl);
  }
  const double n = static_cast<double>(per_pair.size());
  for (Prf* p : {&m.r1, &m.r2, &m.rl}) {
    p->precision /= n;
    p->recall /= n;
    p->f1 /= n;
  }
  return m;
}

RougeScores corpus_rouge(const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<RougeScores> per_pair;
  per_pair.reserve(pairs.size());
  for (const auto& [cand, ref] : pairs) per_pair.push_back(score_texts(cand, ref));
  return mean_scores(per_pair);
}

}  // namespace conlab::rouge
