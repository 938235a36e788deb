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

#include "fedamole/rsea.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "fedamole/error.hpp"

namespace fedamole {

Tensor Relevance(std::span<const Tensor> client_embeddings,
                 std::span<const Tensor> expert_embeddings,
                 std::size_t scale_dim) {
  if (scale_dim == 0) {
    throw Error(ErrorKind::kInvalidArgument, "relevance: scale_dim is zero");
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(scale_dim));
  Tensor s({client_embeddings.size(), expert_embeddings.size()});
  for (std::size_t i = 0; i < client_embeddings.size(); ++i) {
    for (std::size_t j = 0; j < expert_embeddings.size(); ++j) {
      const Tensor& c = client_embeddings[i];
      const Tensor& e = expert_embeddings[j];
      if (c.size() != e.size()) {
        throw DimensionError("relevance: client embedding " +
                             c.ShapeString() + " vs expert embedding " +
                             e.ShapeString());
      }
      s(i, j) = Dot(c.data(), e.data()) * inv;
    }
  }
  return s;
}

Tensor SelectionProbabilities(const Tensor& scores) {
  return SoftmaxCols(scores);
}

void CheckFeasible(std::size_t clients, std::size_t experts, std::size_t k_e,
                   std::size_t k_c, std::size_t b) {
  auto fail = [](const std::string& what) {
    throw InfeasibleError("infeasible assignment: " + what);
  };
  auto s = [](std::size_t v) { return std::to_string(v); };
  if (clients == 0 || experts == 0) fail("no clients or no experts");
  if (k_c == 0) fail("k_c must be >= 1");
  if (k_c > clients) {
    fail("k_c <= C violated (" + s(k_c) + " > " + s(clients) + ")");
  }
  if (k_e > b) fail("k_e <= b violated (" + s(k_e) + " > " + s(b) + ")");
  if (b > experts) fail("b <= E violated (" + s(b) + " > " + s(experts) + ")");
  if (clients * k_e > experts * k_c) {
    fail("C*k_e <= E*k_c violated (" + s(clients * k_e) + " > " +
         s(experts * k_c) + ")");
  }
  if (experts * k_c > clients * b) {
    fail("E*k_c <= C*b violated (" + s(experts * k_c) + " > " +
         s(clients * b) + ")");
  }
}

void AssignmentProblem::Validate() const {
  if (probabilities.rank() != 2) {
    throw DimensionError("assignment: probability matrix must be rank 2");
  }
  if (!probabilities.AllFinite()) {
    throw Error(ErrorKind::kInvalidArgument,
                "assignment: probabilities must be finite");
  }
  CheckFeasible(clients(), experts(), k_e, k_c, b);
}

std::size_t AssignmentMatrix::RowCount(std::size_t i) const {
  std::size_t n = 0;
  for (std::size_t j = 0; j < experts_; ++j) n += at(i, j) ? 1 : 0;
  return n;
}

std::size_t AssignmentMatrix::ColCount(std::size_t j) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < clients_; ++i) n += at(i, j) ? 1 : 0;
  return n;
}

double Objective(const Tensor& probabilities, const AssignmentMatrix& d) {
  double total = 0.0;
  for (std::size_t i = 0; i < d.clients(); ++i)
    for (std::size_t j = 0; j < d.experts(); ++j)
      if (d.at(i, j)) total += probabilities(i, j);
  return total;
}

void AuditAssignment(const AssignmentMatrix& d, std::size_t k_e,
                     std::size_t k_c, std::size_t b) {
  for (std::size_t i = 0; i < d.clients(); ++i) {
    const std::size_t n = d.RowCount(i);
    if (n < k_e || n > b) {
      throw Error(ErrorKind::kProtocol,
                  "client " + std::to_string(i) + " holds " +
                      std::to_string(n) + " experts, outside [" +
                      std::to_string(k_e) + ", " + std::to_string(b) + "]");
    }
  }
  for (std::size_t j = 0; j < d.experts(); ++j) {
    if (d.ColCount(j) != k_c) {
      throw Error(ErrorKind::kProtocol,
                  "expert " + std::to_string(j) + " is on " +
                      std::to_string(d.ColCount(j)) + " clients, expected " +
                      std::to_string(k_c));
    }
  }
}

std::size_t FlowNetwork::AddArc(std::size_t from, std::size_t to,
                                std::int64_t lower, std::int64_t upper,
                                double cost) {
  if (from >= nodes_ || to >= nodes_) {
    throw Error(ErrorKind::kInvalidArgument, "flow arc endpoint out of range");
  }
  if (lower < 0 || upper < lower) {
    throw Error(ErrorKind::kInvalidArgument, "flow arc bounds invalid");
  }
  arcs_.push_back(Arc{from, to, lower, upper, cost, 0});
  return arcs_.size() - 1;
}

double FlowNetwork::total_cost() const {
  double c = 0.0;
  for (const Arc& a : arcs_) c += a.cost * static_cast<double>(a.flow);
  return c;
}

bool FlowNetwork::SolveCirculation() {
  struct Edge {
    std::size_t to;
    std::int64_t cap;
    double cost;
    std::size_t rev;
  };
  const std::size_t super_source = nodes_;
  const std::size_t super_sink = nodes_ + 1;
  const std::size_t n = nodes_ + 2;
  std::vector<std::vector<Edge>> graph(n);
  std::vector<std::int64_t> excess(n, 0);

  auto add_edge = [&](std::size_t u, std::size_t v, std::int64_t cap,
                      double cost) {
    graph[u].push_back(Edge{v, cap, cost, graph[v].size()});
    graph[v].push_back(Edge{u, 0, -cost, graph[u].size() - 1});
    return std::pair{u, graph[u].size() - 1};
  };

  // Forward residual edge of each arc and its reduced capacity.
  std::vector<std::pair<std::size_t, std::size_t>> handle(arcs_.size());
  std::vector<std::int64_t> reduced(arcs_.size());
  for (std::size_t a = 0; a < arcs_.size(); ++a) {
    const Arc& arc = arcs_[a];
    const std::int64_t cap = arc.upper == kInfinite
                                 ? kInfinite
                                 : arc.upper - arc.lower;
    reduced[a] = cap;
    excess[arc.to] += arc.lower;
    excess[arc.from] -= arc.lower;
    handle[a] = add_edge(arc.from, arc.to, cap, arc.cost);
    if (arc.cost < 0.0 && cap > 0) {
      if (cap == kInfinite) {
        throw Error(ErrorKind::kInvalidArgument,
                    "negative-cost arc with unbounded capacity");
      }
      Edge& fwd = graph[handle[a].first][handle[a].second];
      fwd.cap = 0;
      graph[fwd.to][fwd.rev].cap = cap;
      excess[arc.to] += cap;
      excess[arc.from] -= cap;
    }
  }

  std::int64_t required = 0;
  for (std::size_t v = 0; v < nodes_; ++v) {
    if (excess[v] > 0) {
      add_edge(super_source, v, excess[v], 0.0);
      required += excess[v];
    } else if (excess[v] < 0) {
      add_edge(v, super_sink, -excess[v], 0.0);
    }
  }

  // Successive shortest paths with a FIFO label-correcting search; residual
  // costs never admit a negative cycle, so each search terminates.
  constexpr double kEps = 1e-12;
  std::int64_t pushed = 0;
  std::vector<double> dist(n);
  std::vector<std::pair<std::size_t, std::size_t>> parent(n);
  std::vector<bool> queued(n);
  while (pushed < required) {
    std::fill(dist.begin(), dist.end(), INFINITY);
    std::fill(queued.begin(), queued.end(), false);
    dist[super_source] = 0.0;
    std::deque<std::size_t> queue{super_source};
    queued[super_source] = true;
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      queued[u] = false;
      for (std::size_t k = 0; k < graph[u].size(); ++k) {
        const Edge& e = graph[u][k];
        if (e.cap <= 0) continue;
        const double nd = dist[u] + e.cost;
        if (nd < dist[e.to] - kEps) {
          dist[e.to] = nd;
          parent[e.to] = {u, k};
          if (!queued[e.to]) {
            queue.push_back(e.to);
            queued[e.to] = true;
          }
        }
      }
    }
    if (dist[super_sink] == INFINITY) break;
    std::int64_t bottleneck = required - pushed;
    for (std::size_t v = super_sink; v != super_source;) {
      const auto [u, k] = parent[v];
      bottleneck = std::min(bottleneck, graph[u][k].cap);
      v = u;
    }
    for (std::size_t v = super_sink; v != super_source;) {
      const auto [u, k] = parent[v];
      Edge& e = graph[u][k];
      e.cap -= bottleneck;
      graph[e.to][e.rev].cap += bottleneck;
      v = u;
    }
    pushed += bottleneck;
  }

  for (std::size_t a = 0; a < arcs_.size(); ++a) {
    const Edge& fwd = graph[handle[a].first][handle[a].second];
    arcs_[a].flow = arcs_[a].lower + (reduced[a] - fwd.cap);
  }
  return pushed == required;
}

AssignmentMatrix SolveAssignment(const AssignmentProblem& problem) {
  problem.Validate();
  const std::size_t c = problem.clients();
  const std::size_t e = problem.experts();
  // Node layout: source, sink, experts, clients.
  const std::size_t source = 0, sink = 1;
  auto expert_node = [](std::size_t j) { return 2 + j; };
  auto client_node = [e](std::size_t i) { return 2 + e + i; };

  FlowNetwork net(2 + e + c);
  const auto kc = static_cast<std::int64_t>(problem.k_c);
  for (std::size_t j = 0; j < e; ++j) net.AddArc(source, expert_node(j), kc, kc, 0.0);
  std::vector<std::size_t> pair_arc(c * e);
  for (std::size_t j = 0; j < e; ++j) {
    for (std::size_t i = 0; i < c; ++i) {
      pair_arc[i * e + j] = net.AddArc(expert_node(j), client_node(i), 0, 1,
                                       -problem.probabilities(i, j));
    }
  }
  for (std::size_t i = 0; i < c; ++i) {
    net.AddArc(client_node(i), sink, static_cast<std::int64_t>(problem.k_e),
               static_cast<std::int64_t>(problem.b), 0.0);
  }
  net.AddArc(sink, source, 0, FlowNetwork::kInfinite, 0.0);

  if (!net.SolveCirculation()) {
    throw InfeasibleError("assignment: no feasible flow");
  }
  AssignmentMatrix d(c, e);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < e; ++j) d.set(i, j, net.flow(pair_arc[i * e + j]) == 1);
  AuditAssignment(d, problem.k_e, problem.k_c, problem.b);
  return d;
}

AssignmentMatrix RandomAssignment(std::size_t clients, std::size_t experts,
                                  std::size_t k_e, std::size_t k_c,
                                  std::size_t b, Rng& rng) {
  AssignmentProblem p;
  p.probabilities = Tensor({clients, experts});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : p.probabilities.data()) v = u(rng);
  p.k_e = k_e;
  p.k_c = k_c;
  p.b = b;
  return SolveAssignment(p);
}

AssignmentMatrix RoundRobinAssignment(std::size_t clients,
                                      std::size_t experts, std::size_t k_e,
                                      std::size_t k_c, std::size_t b) {
  CheckFeasible(clients, experts, k_e, k_c, b);
  AssignmentMatrix d(clients, experts);
  std::size_t next = 0;
  for (std::size_t j = 0; j < experts; ++j) {
    for (std::size_t r = 0; r < k_c; ++r) {
      d.set(next, j, true);
      next = (next + 1) % clients;
    }
  }
  AuditAssignment(d, k_e, k_c, b);
  return d;
}

ModulePlan PlanFromAssignment(const AssignmentMatrix& d) {
  ModulePlan plan(d.clients());
  for (std::size_t i = 0; i < d.clients(); ++i)
    for (std::size_t j = 0; j < d.experts(); ++j)
      if (d.at(i, j)) plan[i].push_back(static_cast<int>(j));
  return plan;
}

AssignmentMatrix AssignmentFromPlan(const ModulePlan& plan,
                                    std::size_t experts) {
  AssignmentMatrix d(plan.size(), experts);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    for (int j : plan[i]) {
      if (j < 0 || static_cast<std::size_t>(j) >= experts) {
        throw Error(ErrorKind::kProtocol,
                    "plan references unknown expert " + std::to_string(j));
      }
      d.set(i, static_cast<std::size_t>(j), true);
    }
  }
  return d;
}

}  // namespace fedamole
