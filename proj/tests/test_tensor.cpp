// Copyright 2026 The fedamole Authors
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
#include <vector>

#include "doctest.h"
#include "fedamole/error.hpp"
#include "fedamole/tensor.hpp"

using namespace fedamole;

TEST_CASE("matmul hand cases") {
  const Tensor id = Tensor::Matrix({{1, 0}, {0, 1}});
  const Tensor m = Tensor::Matrix({{1, 2}, {3, 4}});
  CHECK(Matmul(id, m) == m);
  CHECK(Matmul(Tensor::Matrix({{1, 0}, {0, 0}}), Tensor::Matrix({{5}, {7}})) ==
        Tensor::Matrix({{5}, {0}}));
  CHECK(Matmul(m, Tensor::Matrix({{1}, {1}})) == Tensor::Matrix({{3}, {7}}));
}

TEST_CASE("matmul shape mismatch") {
  CHECK_THROWS_AS(Matmul(Tensor::Zeros(2, 3), Tensor::Zeros(2, 3)),
                  DimensionError);
  CHECK_THROWS_AS(MatmulNT(Tensor::Zeros(2, 3), Tensor::Zeros(2, 4)),
                  DimensionError);
}

TEST_CASE("matmul_nt agrees with explicit transpose") {
  Rng rng(3);
  const Tensor a = Tensor::Normal(3, 5, 1.0, rng);
  const Tensor b = Tensor::Normal(4, 5, 1.0, rng);
  const Tensor x = MatmulNT(a, b);
  const Tensor y = Matmul(a, Transpose(b));
  REQUIRE(x.SameShape(y));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == doctest::Approx(y[i]));
}

TEST_CASE("tensor construction checks size") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  const Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.AllFinite());
}

TEST_CASE("softmax rows examples") {
  Tensor s = SoftmaxRows(Tensor::Row({0, 0}));
  CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-12));
  s = SoftmaxRows(Tensor::Row({0, std::log(3.0)}));
  CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-12));
  s = SoftmaxRows(Tensor::Row({1000, 1000}));
  CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.AllFinite());
}

TEST_CASE("softmax rows: sums to one and shift invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = Tensor::Normal(4, 7, 5.0, rng);
    const Tensor p = SoftmaxRows(x);
    Tensor shifted = x;
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) shifted(r, c) += 3.0 * r - 17.0;
    const Tensor q = SoftmaxRows(shifted);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double sum = 0.0;
      for (double v : p.row(r)) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
  }
}

TEST_CASE("softmax cols normalizes columns") {
  const Tensor p = SoftmaxCols(Tensor::Matrix({{0, 1}, {std::log(3.0), 1}}));
  CHECK(p(0, 0) == doctest::Approx(0.25));
  CHECK(p(1, 0) == doctest::Approx(0.75));
  CHECK(p(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("nll token loss examples") {
  const std::vector<int> t0 = {2};
  const std::vector<bool> on = {true};
  CHECK(NllTokenLoss(Tensor::Row({0, 0, 0, 0}), t0, on) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(NllTokenLoss(Tensor::Row({-1e4, -1e4, 0, -1e4}), t0, on) ==
        doctest::Approx(0.0));
  const std::vector<int> t1 = {1};
  CHECK(NllTokenLoss(Tensor::Row({0, std::log(3.0)}), t1, on) ==
        doctest::Approx(-std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("nll token loss masks instruction positions") {
  const Tensor logits = Tensor::Matrix({{5, 0}, {0, std::log(3.0)}});
  const std::vector<int> targets = {1, 1};
  CHECK(NllTokenLoss(logits, targets, {false, true}) ==
        doctest::Approx(-std::log(0.75)));
  CHECK_THROWS_AS(NllTokenLoss(logits, targets, {false, false}), Error);
}

TEST_CASE("determinism of seeded normal init") {
  Rng a(99), b(99);
  CHECK(Tensor::Normal(3, 3, 1.0, a) == Tensor::Normal(3, 3, 1.0, b));
}
