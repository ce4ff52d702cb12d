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

#include "conlab/losses.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace conlab {
namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw ad::NonFiniteError(std::string(what) + ": non-finite input");
}

}  // namespace

double nll_loss(std::span<const double> per_token_logliks) {
  if (per_token_logliks.empty()) throw std::invalid_argument("nll_loss: empty log-likelihood list");
  return -std::accumulate(per_token_logliks.begin(), per_token_logliks.end(), 0.0);
}

double contrastive_loss(double pos_score, double neg_score, double gamma) {
  require_finite(pos_score, "contrastive_loss");
  require_finite(neg_score, "contrastive_loss");
  if (!(gamma >= 0.0)) throw std::invalid_argument("contrastive_loss: gamma must be >= 0");
  const double slack = neg_score + (-pos_score) + gamma;
  return slack > 0.0 ? slack : 0.0;
}

double combined_loss(double l_nll, double l_con, double lambda_nll) {
  if (!(lambda_nll >= 0.0)) throw std::invalid_argument("combined_loss: lambda_nll must be >= 0");
  return l_con + l_nll * lambda_nll;
}

ad::Tensor nll_loss(const ad::Tensor& per_token_logliks) {
  return ad::scale(ad::sum(per_token_logliks), -1.0);
}

ad::Tensor sequence_score(const ad::Tensor& per_token_logliks, double beta) {
  const double m = static_cast<double>(per_token_logliks.size());
  return ad::scale(ad::sum(per_token_logliks), 1.0 / std::pow(m, beta));
}

ad::Tensor contrastive_loss(const ad::Tensor& pos_score, const ad::Tensor& neg_score, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("contrastive_loss: gamma must be >= 0");
  const ad::Tensor diff = ad::add(neg_score, ad::scale(pos_score, -1.0));
  return ad::relu(ad::add(diff, ad::Tensor::scalar(gamma)));
}

ad::Tensor combined_loss(const ad::Tensor& l_nll, const ad::Tensor& l_con, double lambda_nll) {
  if (!(lambda_nll >= 0.0)) throw std::invalid_argument("combined_loss: lambda_nll must be >= 0");
  if (l_nll.producer() != nullptr && l_con.producer() != nullptr &&
      l_nll.producer() != l_con.producer()) {
    throw ad::TapeError("combined_loss: l_nll and l_con were recorded on different tapes");
  }
  return ad::add(l_con, ad::scale(l_nll, lambda_nll));
}

}  // namespace conlab
