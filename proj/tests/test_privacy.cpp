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
#include "fedamole/privacy.hpp"

using namespace fedamole;

TEST_CASE("mean noise norm is within 20% of r / eta") {
  for (double eta : {1.0, 10.0, 100.0}) {
    for (std::size_t r : {1u, 4u, 16u}) {
      Rng rng(static_cast<std::uint64_t>(eta * 1000 + r));
      double sum = 0.0;
      for (int i = 0; i < 1000; ++i) sum += SampleNormLaplace(r, eta, rng).Norm();
      const double mean = sum / 1000.0;
      const double expect = static_cast<double>(r) / eta;
      CHECK(std::abs(mean - expect) < 0.2 * expect);
    }
  }
}

TEST_CASE("noise shrinks as eta grows") {
  Rng rng(1);
  double prev = 1e300;
  for (double eta : {1.0, 10.0, 100.0}) {
    double sum = 0.0;
    for (int i = 0; i < 1000; ++i) sum += SampleNormLaplace(4, eta, rng).Norm();
    CHECK(sum / 1000.0 < prev);
    prev = sum / 1000.0;
  }
  CHECK(prev == doctest::Approx(0.04).epsilon(0.2));
}

TEST_CASE("noise direction has zero mean") {
  Rng rng(2);
  std::vector<double> mean(4, 0.0);
  for (int i = 0; i < 1000; ++i) {
    const Tensor z = SampleNormLaplace(4, 10.0, rng);
    const double n = z.Norm();
    for (std::size_t k = 0; k < 4; ++k) mean[k] += z[k] / n / 1000.0;
  }
  for (double m : mean) CHECK(std::abs(m) < 0.1);
}

TEST_CASE("invalid noise parameters") {
  Rng rng(3);
  CHECK_THROWS_AS(SampleNormLaplace(0, 1.0, rng), Error);
  CHECK_THROWS_AS(SampleNormLaplace(3, 0.0, rng), Error);
  CHECK_THROWS_AS(SampleNormLaplace(3, -1.0, rng), Error);
}

TEST_CASE("clip examples") {
  const Tensor big = Tensor::Row({6, 8});  // norm 10
  CHECK(ClipNorm(big, 1.0).Norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ClipNorm(big, 1.0)[0] == doctest::Approx(0.6));
  const Tensor small = Tensor::Row({0.3, 0.4});
  CHECK(ClipNorm(small, 1.0) == small);
  CHECK(UnitNormalize(big).Norm() == doctest::Approx(1.0));
}

TEST_CASE("clipped norm is never above the bound, even by rounding") {
  Rng rng(9);
  for (int i = 0; i < 5000; ++i) {
    const Tensor v = Tensor::Normal(1, 1 + i % 16, 3.0, rng);
    const double bound = 0.1 + (i % 7) * 0.37;
    CHECK(ClipNorm(v, bound).Norm() <= bound);
  }
}

TEST_CASE("privatize clips v + z; large noise always hits the bound") {
  DPConfig cfg{true, 0.01, 1.0};
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    CHECK(Privatize(Tensor::Row({0.1, 0.2, 0.3}), cfg, rng).Norm() ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  cfg.eta = 1e9;
  cfg.clip = 10.0;
  const Tensor v = Tensor::Row({1, 2});
  const Tensor out = Privatize(v, cfg, rng);
  CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(out[1] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("privatized norm never exceeds the clip bound") {
  Rng rng(6);
  std::size_t over = 0;
  for (int i = 0; i < 10000; ++i) {
    const DPConfig cfg{true, i % 2 == 0 ? 1.0 : 50.0, 0.5 + (i % 3)};
    const Tensor v = Tensor::Normal(1, 4, 2.0, rng);
    if (Privatize(v, cfg, rng).Norm() > cfg.clip) ++over;
  }
  CHECK(over == 0);
}

TEST_CASE("disabled config is the identity and draws nothing") {
  const DPConfig off;
  Rng rng(7), untouched(7);
  const Tensor v = Tensor::Row({3, -4, 12});
  CHECK(Privatize(v, off, rng) == v);
  CHECK(rng() == untouched());
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(DPConfig{}.Validate());
  DPConfig bad{true, 0.0, 1.0};
  try {
    bad.Validate();
    FAIL("expected error");
  } catch (const ConfigError& e) {
    CHECK(e.key_path() == "privacy.eta_dp");
  }
  bad = {true, 1.0, -1.0};
  try {
    bad.Validate();
    FAIL("expected error");
  } catch (const ConfigError& e) {
    CHECK(e.key_path() == "privacy.c_clip");
  }
}
