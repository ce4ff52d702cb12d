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
#include <functional>

#include "conlab/autodiff.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace conlab;
using ad::Tensor;
using testutil::random_tensor;

namespace {

using Builder = std::function<Tensor(const std::vector<Tensor>&)>;

// Reduces `out` to a scalar with fixed random weights so every output
// coordinate contributes a distinct gradient.
Tensor weighted_sum(const Tensor& out, const Tensor& weights) {
  return ad::sum(ad::mul(out, weights));
}

// Analytic gradient of weighted_sum(build(inputs)) vs central differences.
double gradcheck(const Builder& build, std::vector<Tensor> inputs, Rng& rng) {
  Tensor probe;
  {
    ad::NoGradScope ng;
    probe = build(inputs);
  }
  const Tensor weights = random_tensor(rng, probe.shape(), -1.0, 1.0, false);
  ad::Tape tape;
  Tensor root;
  {
    ad::TapeScope scope(tape);
    root = weighted_sum(build(inputs), weights);
  }
  tape.backward(root);
  auto loss = [&] {
    ad::NoGradScope ng;
    return weighted_sum(build(inputs), weights).item();
  };
  std::vector<Tensor> grad_inputs;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) grad_inputs.push_back(t);
  }
  const auto numeric = ad::finite_difference_grad(loss, grad_inputs);
  double worst = 0.0;
  for (std::size_t i = 0; i < grad_inputs.size(); ++i) {
    worst = std::max(worst, testutil::max_rel_error(grad_inputs[i].grad(), numeric[i]));
  }
  return worst;
}

std::size_t dim(Rng& rng) { return 1 + static_cast<std::size_t>(rng.below(5)); }

// Values bounded away from the relu kink.
Tensor away_from_zero(Rng& rng, ad::Shape shape) {
  Tensor t = random_tensor(rng, std::move(shape));
  for (double& v : t.mutable_values()) v = (v < 0 ? -0.05 : 0.05) + v;
  return t;
}

}  // namespace

TEST_CASE("forward examples") {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor a({2, 2}, {1.5, -2, 3, 4});
  const Tensor p = ad::matmul(eye, a);
  CHECK(std::vector<double>(p.values().begin(), p.values().end()) ==
        std::vector<double>{1.5, -2, 3, 4});

  const Tensor s = ad::softmax_rows(Tensor({1, 2}, {0, 0}));
  CHECK(s.values()[0] == 0.5);
  CHECK(s.values()[1] == 0.5);

  const Tensor x(ad::Shape{3}, {-1.0, 0.0, 2.5});
  const Tensor y = ad::log(ad::exp(x));
  for (std::size_t i = 0; i < 3; ++i) CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-15));
}

TEST_CASE("backward examples") {
  SUBCASE("sum gives ones") {
    Tensor x(ad::Shape{3}, {0.3, -1.0, 2.0}, true);
    ad::Tape tape;
    Tensor r;
    {
      ad::TapeScope s(tape);
      r = ad::sum(x);
    }
    tape.backward(r);
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("sum of squares") {
    Tensor x(ad::Shape{2}, {2.0, -3.0}, true);
    ad::Tape tape;
    Tensor r;
    {
      ad::TapeScope s(tape);
      r = ad::sum(ad::mul(x, x));
    }
    tape.backward(r);
    CHECK(x.grad()[0] == 4.0);
    CHECK(x.grad()[1] == -6.0);
  }
}

TEST_CASE("backward errors") {
  Tensor x(ad::Shape{2}, {1.0, 2.0}, true);
  ad::Tape tape;
  Tensor v, r;
  {
    ad::TapeScope s(tape);
    v = ad::scale(x, 2.0);
    r = ad::sum(v);
  }
  CHECK_THROWS_AS(tape.backward(v), ad::TapeError);
  tape.backward(r);
  CHECK_THROWS_AS(tape.backward(r), ad::TapeError);

  ad::Tape other;
  Tensor r2;
  {
    ad::TapeScope s(other);
    r2 = ad::sum(x);
  }
  ad::Tape third;
  CHECK_THROWS_AS(third.backward(r2), ad::TapeError);
}

TEST_CASE("shape and finiteness errors") {
  const Tensor a({2, 3}, std::vector<double>(6, 1.0));
  const Tensor b({2, 3}, std::vector<double>(6, 1.0));
  try {
    ad::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ad::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2, 3]") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::add(a, Tensor({3, 2}, std::vector<double>(6, 1.0))), ad::ShapeError);
  CHECK_THROWS_AS(Tensor(ad::Shape{1}, {std::nan("")}), ad::NonFiniteError);
  CHECK_THROWS_AS(Tensor(ad::Shape{2}, {1.0}), ad::ShapeError);
  CHECK_THROWS_AS(ad::log(Tensor(ad::Shape{1}, {0.0})), ad::NonFiniteError);
  CHECK_THROWS_AS(ad::dropout_mask_apply(a, Tensor({2, 3}, std::vector<double>(6, 0.5)), 2.0),
                  ad::ShapeError);
}

TEST_CASE("finite differences") {
  Tensor theta(ad::Shape{1}, {3.0});
  std::vector<Tensor> params{theta};
  auto sq = ad::finite_difference_grad([&] { return theta.item() * theta.item(); }, params, 1e-5);
  CHECK(std::abs(sq[0][0] - 6.0) < 1e-6);
  CHECK(theta.item() == 3.0);

  auto constant = ad::finite_difference_grad([] { return 4.2; }, params);
  CHECK(constant[0][0] == 0.0);

  int calls = 0;
  CHECK_THROWS(ad::finite_difference_grad([&] { return static_cast<double>(++calls); }, params));
}

TEST_CASE("every op matches finite differences over 100 seeded trials") {
  using ad::Shape;
  struct Case {
    const char* name;
    std::function<std::pair<Builder, std::vector<Tensor>>(Rng&)> make;
  };
  const std::vector<Case> cases{
      {"matmul",
       [](Rng& r) {
         const std::size_t m = dim(r), k = dim(r), n = dim(r);
         return std::make_pair(Builder([](auto& in) { return ad::matmul(in[0], in[1]); }),
                               std::vector<Tensor>{random_tensor(r, {m, k}), random_tensor(r, {k, n})});
       }},
      {"add",
       [](Rng& r) {
         const std::size_t m = dim(r), n = dim(r);
         const bool bias = r.bernoulli(0.5);
         return std::make_pair(
             Builder([](auto& in) { return ad::add(in[0], in[1]); }),
             std::vector<Tensor>{random_tensor(r, {m, n}),
                                 bias ? random_tensor(r, {n}) : random_tensor(r, {m, n})});
       }},
      {"mul",
       [](Rng& r) {
         const Shape s{dim(r), dim(r)};
         return std::make_pair(Builder([](auto& in) { return ad::mul(in[0], in[1]); }),
                               std::vector<Tensor>{random_tensor(r, s), random_tensor(r, s)});
       }},
      {"softmax_rows",
       [](Rng& r) {
         return std::make_pair(Builder([](auto& in) { return ad::softmax_rows(in[0]); }),
                               std::vector<Tensor>{random_tensor(r, {dim(r), dim(r)}, -2, 2)});
       }},
      {"log_softmax_rows",
       [](Rng& r) {
         return std::make_pair(Builder([](auto& in) { return ad::log_softmax_rows(in[0]); }),
                               std::vector<Tensor>{random_tensor(r, {dim(r), dim(r)}, -2, 2)});
       }},
      {"log",
       [](Rng& r) {
         return std::make_pair(Builder([](auto& in) { return ad::log(in[0]); }),
                               std::vector<Tensor>{random_tensor(r, {dim(r), dim(r)}, 0.5, 2.0)});
       }},
      {"exp",
       [](Rng& r) {
         return std::make_pair(Builder([](auto& in) { return ad::exp(in[0]); }),
                               std::vector<Tensor>{random_tensor(r, {dim(r), dim(r)})});
       }},
      {"relu",
       [](Rng& r) {
         return std::make_pair(Builder([](auto& in) { return ad::relu(in[0]); }),
                               std::vector<Tensor>{away_from_zero(r, {dim(r), dim(r)})});
       }},
      {"layer_norm_rows",
       [](Rng& r) {
         const std::size_t m = dim(r), n = 1 + dim(r);
         return std::make_pair(
             Builder([](auto& in) { return ad::layer_norm_rows(in[0], in[1], in[2]); }),
             std::vector<Tensor>{random_tensor(r, {m, n}, -2, 2), random_tensor(r, {n}),
                                 random_tensor(r, {n})});
       }},
      {"embedding_lookup",
       [](Rng& r) {
         const std::size_t rows = dim(r), cols = dim(r), n = dim(r);
         std::vector<std::size_t> ids(n);
         for (auto& id : ids) id = static_cast<std::size_t>(r.below(rows));
         return std::make_pair(
             Builder([ids](auto& in) { return ad::embedding_lookup(in[0], ids); }),
             std::vector<Tensor>{random_tensor(r, {rows, cols})});
       }},
      {"concat",
       [](Rng& r) {
         const std::size_t axis = r.below(2), m = dim(r), n = dim(r);
         const Shape s2 = axis == 0 ? Shape{dim(r), n} : Shape{m, dim(r)};
         return std::make_pair(Builder([axis](auto& in) { return ad::concat(in, axis); }),
                               std::vector<Tensor>{random_tensor(r, {m, n}), random_tensor(r, s2)});
       }},
      {"slice",
       [](Rng& r) {
         const std::size_t axis = r.below(2), m = dim(r), n = dim(r);
         const std::size_t len = axis == 0 ? m : n;
         const std::size_t b = r.below(len), e = b + 1 + r.below(len - b);
         return std::make_pair(Builder([=](auto& in) { return ad::slice(in[0], axis, b, e); }),
                               std::vector<Tensor>{random_tensor(r, {m, n})});
       }},
      {"transpose",
       [](Rng& r) {
         return std::make_pair(Builder([](auto& in) { return ad::transpose(in[0]); }),
                               std::vector<Tensor>{random_tensor(r, {dim(r), dim(r)})});
       }},
      {"scale",
       [](Rng& r) {
         const double f = r.uniform(-3, 3);
         return std::make_pair(Builder([f](auto& in) { return ad::scale(in[0], f); }),
                               std::vector<Tensor>{random_tensor(r, {dim(r), dim(r)})});
       }},
      {"sum",
       [](Rng& r) {
         return std::make_pair(Builder([](auto& in) { return ad::sum(in[0]); }),
                               std::vector<Tensor>{random_tensor(r, {dim(r), dim(r)})});
       }},
      {"mean",
       [](Rng& r) {
         return std::make_pair(Builder([](auto& in) { return ad::mean(in[0]); }),
                               std::vector<Tensor>{random_tensor(r, {dim(r), dim(r)})});
       }},
      {"dropout_mask_apply",
       [](Rng& r) {
         const Shape s{dim(r), dim(r)};
         std::size_t n = s[0] * s[1];
         std::vector<double> mask(n);
         for (double& m : mask) m = r.bernoulli(0.3) ? 0.0 : 1.0;
         const Tensor mt(s, std::move(mask));
         return std::make_pair(
             Builder([mt](auto& in) { return ad::dropout_mask_apply(in[0], mt, 1.0 / 0.7); }),
             std::vector<Tensor>{random_tensor(r, s)});
       }},
  };
  for (const Case& c : cases) {
    CAPTURE(c.name);
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
      Rng rng(Rng::derive(2024, {trial}));
      auto [build, inputs] = c.make(rng);
      worst = std::max(worst, gradcheck(build, inputs, rng));
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("forward_op dispatches to the named ops") {
  Rng rng(5);
  const Tensor a = random_tensor(rng, {3, 4}, -1, 1, false);
  const Tensor b = random_tensor(rng, {4, 2}, -1, 1, false);
  const Tensor via_kind = ad::forward_op(ad::OpKind::kMatmul, std::vector<Tensor>{a, b});
  const Tensor direct = ad::matmul(a, b);
  CHECK(std::equal(via_kind.values().begin(), via_kind.values().end(), direct.values().begin()));

  ad::OpAttrs attrs;
  attrs.axis = 1;
  attrs.begin = 1;
  attrs.end = 3;
  const Tensor sl = ad::forward_op(ad::OpKind::kSlice, std::vector<Tensor>{a}, attrs);
  CHECK(sl.shape() == ad::Shape{3, 2});
  CHECK(std::string(ad::op_name(ad::OpKind::kLayerNormRows)) == "layer_norm_rows");
}

TEST_CASE("a leaf used twice accumulates both paths") {
  Rng rng(11);
  Tensor x = random_tensor(rng, {2, 3});
  Tensor w = random_tensor(rng, {3, 3}, -1, 1, false);
  ad::Tape t1;
  Tensor r1;
  {
    ad::TapeScope s(t1);
    r1 = ad::sum(ad::mul(ad::matmul(x, w), x));
  }
  t1.backward(r1);

  Tensor x1 = x.detach(), x2 = x.detach();
  x1.set_requires_grad(true);
  x2.set_requires_grad(true);
  ad::Tape t2;
  Tensor r2;
  {
    ad::TapeScope s(t2);
    r2 = ad::sum(ad::mul(ad::matmul(x1, w), x2));
  }
  t2.backward(r2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x.grad()[i] == doctest::Approx(x1.grad()[i] + x2.grad()[i]).epsilon(1e-14));
  }
}

TEST_CASE("identical tapes give bit-identical gradients") {
  auto run = [] {
    Rng rng(77);
    Tensor x = random_tensor(rng, {3, 4});
    Tensor g = random_tensor(rng, {4});
    Tensor b = random_tensor(rng, {4});
    ad::Tape tape;
    Tensor r;
    {
      ad::TapeScope s(tape);
      r = ad::sum(ad::log_softmax_rows(ad::layer_norm_rows(x, g, b)));
    }
    tape.backward(r);
    std::vector<double> out(x.grad().begin(), x.grad().end());
    out.insert(out.end(), g.grad().begin(), g.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("recording needs an active tape") {
  Tensor x(ad::Shape{2}, {1.0, 2.0}, true);
  const Tensor y = ad::scale(x, 3.0);
  CHECK(y.producer() == nullptr);
  ad::Tape tape;
  ad::TapeScope scope(tape);
  {
    ad::NoGradScope ng;
    const Tensor z = ad::scale(x, 3.0);
    CHECK(z.producer() == nullptr);
  }
  const Tensor w = ad::scale(x, 3.0);
  CHECK(w.producer() == &tape);
  CHECK(tape.size() == 1);
}
