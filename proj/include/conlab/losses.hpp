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

#include <span>

#include "conlab/autodiff.hpp"

namespace conlab {

// Batch-averaged loss terms. total == lambda_nll * l_nll + l_con.
struct LossBreakdown {
  double l_nll = 0.0;
  double l_con = 0.0;
  double total = 0.0;
  bool hinge_active = false;  // any pair with l_con > 0
  double hinge_rate = 0.0;    // fraction of pairs with l_con > 0
  double pos_score = 0.0;
  double neg_score = 0.0;
  bool has_negatives = false;         // neg_score was computed
  std::size_t silver_equals_gold = 0;  // pairs skipped by the contrastive term
  std::size_t pairs = 0;
  std::size_t ss_draws = 0;     // scheduled-sampling Bernoulli draws
  std::size_t ss_replaced = 0;  // draws that chose the silver token(s)
};

// -sum(per_token_logliks).
double nll_loss(std::span<const double> per_token_logliks);
// max(0, neg - pos + gamma).
double contrastive_loss(double pos_score, double neg_score, double gamma);
double combined_loss(double l_nll, double l_con, double lambda_nll);

// Differentiable forms; each returns a [1] tensor recorded on the active tape.
ad::Tensor nll_loss(const ad::Tensor& per_token_logliks);
// Length-normalized beam score of a [n, 1] log-likelihood column.
ad::Tensor sequence_score(const ad::Tensor& per_token_logliks, double beta);
// Subgradient zero for both scores at and below the hinge.
ad::Tensor contrastive_loss(const ad::Tensor& pos_score, const ad::Tensor& neg_score, double gamma);
// l_con + lambda_nll * l_nll. Throws ad::TapeError if the inputs were
// recorded on different tapes.
ad::Tensor combined_loss(const ad::Tensor& l_nll, const ad::Tensor& l_con, double lambda_nll);

}  // namespace conlab
