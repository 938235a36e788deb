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
#include <string>
#include <vector>

#include "doctest.h"
#include "fedamole/error.hpp"
#include "fedamole/rsea.hpp"
#include "oracle/assignment_oracle.hpp"

using namespace fedamole;

namespace {

struct Instance {
  AssignmentProblem problem;
};

// Random feasible instance with C * E <= 20.
AssignmentProblem RandomInstance(Rng& rng) {
  std::uniform_int_distribution<std::size_t> cdist(1, 5);
  while (true) {
    const std::size_t c = cdist(rng);
    const std::size_t e =
        std::uniform_int_distribution<std::size_t>(1, 20 / c)(rng);
    const std::size_t k_c = std::uniform_int_distribution<std::size_t>(1, c)(rng);
    const std::size_t b = std::uniform_int_distribution<std::size_t>(1, e)(rng);
    const std::size_t k_e = std::uniform_int_distribution<std::size_t>(0, b)(rng);
    if (c * k_e > e * k_c || e * k_c > c * b) continue;
    Tensor scores = Tensor::Normal(c, e, 1.5, rng);
    return AssignmentProblem{SelectionProbabilities(scores), k_e, k_c, b};
  }
}

void ExpectValid(const AssignmentMatrix& d, const AssignmentProblem& p) {
  REQUIRE(d.clients() == p.clients());
  REQUIRE(d.experts() == p.experts());
  for (std::uint8_t v : d.cells()) CHECK((v == 0 || v == 1));
  for (std::size_t j = 0; j < d.experts(); ++j) CHECK(d.ColCount(j) == p.k_c);
  for (std::size_t i = 0; i < d.clients(); ++i) {
    CHECK(d.RowCount(i) >= p.k_e);
    CHECK(d.RowCount(i) <= p.b);
  }
  CHECK_NOTHROW(AuditAssignment(d, p.k_e, p.k_c, p.b));
}

}  // namespace

TEST_CASE("relevance examples") {
  const std::vector<Tensor> c = {Tensor::Row({1, 0})};
  const std::vector<Tensor> e = {Tensor::Row({0, 3})};
  CHECK(Relevance(c, e, 4)(0, 0) == 0.0);
  const std::vector<Tensor> c1 = {Tensor::Row({1})};
  const std::vector<Tensor> e1 = {Tensor::Row({2})};
  CHECK(Relevance(c1, e1, 4)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("relevance is bilinear in expert embeddings") {
  Rng rng(6);
  std::vector<Tensor> c, e;
  for (int i = 0; i < 3; ++i) c.push_back(Tensor::Normal(1, 4, 1.0, rng));
  for (int j = 0; j < 2; ++j) e.push_back(Tensor::Normal(1, 4, 1.0, rng));
  const Tensor s = Relevance(c, e, 16);
  std::vector<Tensor> scaled = e;
  scaled[1] *= -2.5;
  const Tensor t = Relevance(c, scaled, 16);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(t(i, 0) == s(i, 0));
    CHECK(t(i, 1) == doctest::Approx(-2.5 * s(i, 1)));
  }
}

TEST_CASE("relevance rejects mismatched dimensions") {
  const std::vector<Tensor> c = {Tensor::Row({1, 0})};
  const std::vector<Tensor> e = {Tensor::Row({1, 0, 0})};
  CHECK_THROWS_AS(Relevance(c, e, 4), DimensionError);
  CHECK_THROWS_AS(Relevance(c, c, 0), Error);
}

TEST_CASE("selection probabilities normalize over clients") {
  Tensor p = SelectionProbabilities(Tensor::Matrix({{0, 2}, {0, 2}}));
  CHECK(p(0, 0) == doctest::Approx(0.5));
  CHECK(p(1, 1) == doctest::Approx(0.5));
  p = SelectionProbabilities(Tensor::Matrix({{0}, {std::log(3.0)}}));
  CHECK(p(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p(1, 0) == doctest::Approx(0.75).epsilon(1e-12));

  Rng rng(2);
  const Tensor s = Tensor::Normal(4, 3, 2.0, rng);
  Tensor shifted = s;
  for (std::size_t i = 0; i < 4; ++i) shifted(i, 1) += 42.0;
  const Tensor a = SelectionProbabilities(s), b = SelectionProbabilities(shifted);
  for (std::size_t j = 0; j < 3; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      sum += a(i, j);
      CHECK(a(i, j) > 0.0);
      CHECK(a(i, j) < 1.0);
      CHECK(std::abs(a(i, j) - b(i, j)) < 1e-12);
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("identity instance: objective 1.8") {
  AssignmentProblem p{Tensor::Matrix({{0.9, 0.1}, {0.1, 0.9}}), 1, 1, 2};
  const AssignmentMatrix d = SolveAssignment(p);
  CHECK(d.at(0, 0));
  CHECK(d.at(1, 1));
  CHECK_FALSE(d.at(0, 1));
  CHECK_FALSE(d.at(1, 0));
  CHECK(Objective(p.probabilities, d) == doctest::Approx(1.8).epsilon(1e-15));
  const auto o = oracle::EnumerateOracle(p.probabilities, 1, 1, 2);
  REQUIRE(o.has_value());
  CHECK(o->objective == Objective(p.probabilities, d));
}

struct Shape {
  std::size_t c, e, ke, kc, b;
};

TEST_CASE("uniform probabilities: objective E*k_c/C") {
  for (auto [c, e, ke, kc, b] :
       std::vector<Shape>{
           {4, 6, 2, 2, 4}, {3, 3, 1, 1, 1}, {5, 4, 1, 3, 3}}) {
    AssignmentProblem p{Tensor({c, e}, 1.0 / static_cast<double>(c)), ke, kc, b};
    const AssignmentMatrix d = SolveAssignment(p);
    ExpectValid(d, p);
    CHECK(Objective(p.probabilities, d) ==
          doctest::Approx(static_cast<double>(e * kc) / static_cast<double>(c)));
  }
}

TEST_CASE("infeasible instance names the violated inequality") {
  AssignmentProblem p{Tensor({3, 2}, 1.0 / 3.0), 2, 2, 2};
  try {
    (void)SolveAssignment(p);
    FAIL("expected infeasibility");
  } catch (const InfeasibleError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("C*k_e <= E*k_c") != std::string::npos);
    CHECK(msg.find("(6 > 4)") != std::string::npos);
  }
  CHECK_THROWS_AS(CheckFeasible(2, 4, 1, 3, 2), InfeasibleError);  // k_c > C
  CHECK_THROWS_AS(CheckFeasible(2, 4, 1, 2, 3), InfeasibleError);  // E*k_c > C*b
  CHECK_THROWS_AS(CheckFeasible(2, 4, 3, 2, 2), InfeasibleError);  // k_e > b
  CHECK_NOTHROW(CheckFeasible(4, 6, 2, 2, 4));
}

TEST_CASE("solver matches the enumeration oracle on random instances") {
  Rng rng(777);
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    const AssignmentProblem p = RandomInstance(rng);
    const auto o = oracle::EnumerateOracle(p.probabilities, p.k_e, p.k_c, p.b);
    REQUIRE(o.has_value());
    const AssignmentMatrix d = SolveAssignment(p);
    ExpectValid(d, p);
    CHECK(Objective(p.probabilities, d) == o->objective);
    ++checked;
  }
  CHECK(checked >= 100);
}

TEST_CASE("random 3x3 instances agree with the oracle") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k_c = 1 + static_cast<std::size_t>(trial % 3);
    AssignmentProblem p{SelectionProbabilities(Tensor::Normal(3, 3, 1.0, rng)),
                        1, k_c, 3};
    const auto o = oracle::EnumerateOracle(p.probabilities, 1, k_c, 3);
    REQUIRE(o.has_value());
    CHECK(Objective(p.probabilities, SolveAssignment(p)) == o->objective);
  }
}

TEST_CASE("solver is deterministic") {
  Rng rng(5);
  const AssignmentProblem p{
      SelectionProbabilities(Tensor::Normal(4, 6, 1.0, rng)), 2, 2, 4};
  CHECK(SolveAssignment(p) == SolveAssignment(p));
}

TEST_CASE("monotone affinity: raising an assigned probability keeps it") {
  Rng rng(91);
  for (int trial = 0; trial < 50; ++trial) {
    AssignmentProblem p{SelectionProbabilities(Tensor::Normal(3, 4, 1.0, rng)),
                        1, 1, 2};
    const AssignmentMatrix d = SolveAssignment(p);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        if (!d.at(i, j)) continue;
        AssignmentProblem raised = p;
        raised.probabilities(i, j) += 0.05;
        CHECK(SolveAssignment(raised).at(i, j));
      }
    }
  }
}

TEST_CASE("unconstrained special case: k_e = 0, b = E picks top-k_c per column") {
  Rng rng(19);
  const Tensor prob = SelectionProbabilities(Tensor::Normal(4, 3, 1.0, rng));
  const AssignmentMatrix d = SolveAssignment({prob, 0, 2, 3});
  for (std::size_t j = 0; j < 3; ++j) {
    std::vector<double> col;
    for (std::size_t i = 0; i < 4; ++i) col.push_back(prob(i, j));
    std::vector<double> sorted = col;
    std::sort(sorted.rbegin(), sorted.rend());
    for (std::size_t i = 0; i < 4; ++i) CHECK(d.at(i, j) == (col[i] >= sorted[1]));
  }
}

TEST_CASE("plan helpers") {
  AssignmentMatrix id(3, 3);
  for (std::size_t i = 0; i < 3; ++i) id.set(i, i, true);
  const ModulePlan plan = PlanFromAssignment(id);
  for (std::size_t i = 0; i < 3; ++i) CHECK(plan[i] == std::vector<int>{int(i)});
  CHECK(AssignmentFromPlan(plan, 3) == id);

  AssignmentMatrix full(3, 2);
  for (std::size_t i = 0; i < 3; ++i) full.set(i, 1, true);
  for (const auto& row : PlanFromAssignment(full)) CHECK(row == std::vector<int>{1});

  CHECK_THROWS_AS(AssignmentFromPlan({{0}, {5}}, 3), Error);
}

TEST_CASE("round robin and random assignments pass the audit") {
  Rng rng(1);
  for (auto [c, e, ke, kc, b] :
       std::vector<Shape>{
           {4, 6, 2, 2, 4}, {4, 13, 2, 1, 4}, {1, 1, 1, 1, 1}, {5, 3, 0, 2, 3}}) {
    AssignmentProblem shape{Tensor({c, e}), ke, kc, b};
    ExpectValid(RoundRobinAssignment(c, e, ke, kc, b), shape);
    ExpectValid(RandomAssignment(c, e, ke, kc, b, rng), shape);
  }
}

TEST_CASE("audit rejects violating matrices") {
  AssignmentMatrix d(2, 2);
  d.set(0, 0, true);
  CHECK_THROWS_AS(AuditAssignment(d, 1, 1, 2), Error);  // column 1 empty
  d.set(1, 1, true);
  CHECK_NOTHROW(AuditAssignment(d, 1, 1, 2));
  CHECK_THROWS_AS(AuditAssignment(d, 2, 1, 2), Error);  // rows below k_e
}

TEST_CASE("flow network solves a circulation with lower bounds") {
  // 0 -> 1 -> 2 -> 0 with the cycle forced to carry 2 units and a cheaper
  // parallel path 1 -> 2.
  FlowNetwork net(3);
  const std::size_t a = net.AddArc(0, 1, 2, 2, 0.0);
  const std::size_t b = net.AddArc(1, 2, 0, 1, 1.0);
  const std::size_t c = net.AddArc(1, 2, 0, 5, -1.0);
  const std::size_t d = net.AddArc(2, 0, 0, 10, 0.0);
  REQUIRE(net.SolveCirculation());
  CHECK(net.flow(a) == 2);
  CHECK(net.flow(b) == 0);
  CHECK(net.flow(c) == 2);
  CHECK(net.flow(d) == 2);
  CHECK(net.total_cost() == doctest::Approx(-2.0));

  FlowNetwork bad(2);
  bad.AddArc(0, 1, 3, 3, 0.0);
  bad.AddArc(1, 0, 0, 1, 0.0);
  CHECK_FALSE(bad.SolveCirculation());
}

TEST_CASE("oracle bookkeeping") {
  CHECK(oracle::Subsets(4, 2).size() == 6);
  CHECK_FALSE(oracle::EnumerateOracle(Tensor({3, 2}, 0.3), 2, 2, 2).has_value());
  CHECK_THROWS_AS(oracle::EnumerateOracle(Tensor({5, 5}, 0.2), 1, 1, 5),
                  std::length_error);
}
