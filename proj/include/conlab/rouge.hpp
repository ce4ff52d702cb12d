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

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace conlab::rouge {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RougeScores {
  Prf r1, r2, rl;
};

// Lowercases, splits punctuation characters into their own tokens and then
// splits on whitespace. No stemming or stopword removal.
std::vector<std::string> tokenize(std::string_view text);

// Clipped n-gram overlap; n must be 1 or 2.
Prf rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
            int n);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Summary-level LCS over the whole token sequences.
Prf rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

RougeScores score(const std::vector<std::string>& candidate,
                  const std::vector<std::string>& reference);
RougeScores score_texts(std::string_view candidate, std::string_view reference);

// Unweighted mean of per-pair precision, recall and F1 for each variant.
// Pairs are (candidate, reference) raw texts.
RougeScores corpus_rouge(const std::vector<std::pair<std::string, std::string>>& pairs);
RougeScores mean_scores(const std::vector<RougeScores>& per_pair);

}  // namespace conlab::rouge
