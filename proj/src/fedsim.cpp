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

#include "fedamole/fedsim.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "fedamole/error.hpp"
#include "fedamole/optim.hpp"

namespace fedamole {

namespace {

// Sub-stream tags for DeriveSeed.
enum Stream : std::uint64_t {
  kServerStream = 1,
  kClientStream,
  kTrainStream,
  kPrivacyStream,
  kRandomPlanStream,
  kFinalStream,
};

struct ModeEntry {
  Mode mode;
  std::string_view name;
};

constexpr ModeEntry kModes[] = {
    {Mode::kFedAMoLE, "fedamole"}, {Mode::kFedIT, "fedit"},
    {Mode::kFedITFT, "fedit_ft"},  {Mode::kAblateH, "ablate-h"},
    {Mode::kAblateS, "ablate-s"},  {Mode::kAblateR, "ablate-r"},
    {Mode::kRandom, "random"},
};

Error Protocol(const std::string& what) {
  return Error(ErrorKind::kProtocol, what);
}

// Runs f(i) for every client, spread over `threads` workers. Each index is
// handled by exactly one worker, so results do not depend on scheduling.
template <typename F>
void ForEachClient(std::size_t n, int threads, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)),
                              1, std::max<std::size_t>(n, 1));
  auto work = [&](std::size_t start) {
    for (std::size_t i = start; i < n; i += workers) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void AverageInto(Tensor& into, const std::vector<const Tensor*>& parts,
                 const std::string& what) {
  Tensor sum(parts.front()->shape());
  for (const Tensor* t : parts) {
    if (!t->SameShape(sum)) {
      throw DimensionError(what + ": shape " + t->ShapeString() +
                           " does not match " + sum.ShapeString());
    }
    sum += *t;
  }
  sum *= 1.0 / static_cast<double>(parts.size());
  into = std::move(sum);
}

AdapterMap MakeAdapters(ClientState& client, Rng* dropout_rng,
                        std::map<InjectionPoint, ModuleOutput>* outputs) {
  AdapterMap adapters;
  for (auto& [point, state] : client.modules) {
    HMoLEModuleState* st = &state;
    const InjectionPoint p = point;
    adapters[point] = [st, p, dropout_rng, outputs](
                          Tape& tape, Var hidden, const Parameter& weight) {
      ModuleOutput out = ModuleForward(tape, *st, weight, hidden, dropout_rng);
      if (outputs != nullptr) (*outputs)[p] = out;
      return out.y;
    };
  }
  return adapters;
}

std::size_t ArgMax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace

std::string_view ModeName(Mode mode) {
  for (const auto& e : kModes)
    if (e.mode == mode) return e.name;
  return "unknown";
}

Mode ParseMode(std::string_view name) {
  for (const auto& e : kModes)
    if (e.name == name) return e.mode;
  throw Error(ErrorKind::kInvalidArgument,
              "unknown mode '" + std::string(name) + "'");
}

std::vector<Mode> AllModes() {
  std::vector<Mode> out;
  for (const auto& e : kModes) out.push_back(e.mode);
  return out;
}

std::string_view MetricName(Metric metric) {
  return metric == Metric::kRougeL ? "rouge_l" : "exact_match";
}

Metric ParseMetric(std::string_view name) {
  if (name == "exact_match") return Metric::kExactMatch;
  if (name == "rouge_l") return Metric::kRougeL;
  throw Error(ErrorKind::kInvalidArgument,
              "unknown metric '" + std::string(name) + "'");
}

void FLConfig::Validate() const {
  auto require = [](bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(ErrorKind::kConfig, key, what);
  };
  const HMoLEOptions& h = hmole;
  require(clients >= 1, "federation.clients", "must be >= 1");
  require(rounds >= 1, "federation.rounds", "must be >= 1");
  require(local_steps >= 0, "federation.local_steps", "must be >= 0");
  require(lr > 0.0 && std::isfinite(lr), "federation.lr", "must be > 0");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "federation.lr_decay",
          "must be in (0, 1]");
  require(threads >= 1, "federation.threads", "must be >= 1");
  require(embedding_set_size >= 1, "data.embedding_set_size", "must be >= 1");
  require(h.rank >= 1, "hmole.rank", "must be >= 1");
  require(h.alpha_lora > 0.0, "hmole.alpha_lora", "must be > 0");
  require(h.dropout >= 0.0 && h.dropout < 1.0, "hmole.dropout",
          "must be in [0, 1)");
  require(h.beta >= 0.0, "hmole.beta", "must be >= 0");
  require(h.e_total >= 1, "hmole.e_total", "must be >= 1");
  require(h.k_e >= 1, "hmole.k_e", "must be >= 1");
  require(h.k_e <= h.b, "hmole.k_e",
          "k_e <= b violated (" + std::to_string(h.k_e) + " > " +
              std::to_string(h.b) + ")");
  require(h.b <= h.e_total, "hmole.b",
          "b <= e_total violated (" + std::to_string(h.b) + " > " +
              std::to_string(h.e_total) + ")");
  require(h.k_c >= 1 && h.k_c <= clients, "hmole.k_c",
          "must be in [1, clients]");
  require(clients * h.k_e <= h.e_total * h.k_c, "hmole.k_e",
          "C*k_e <= E*k_c violated (" + std::to_string(clients * h.k_e) +
              " > " + std::to_string(h.e_total * h.k_c) + ")");
  require(h.e_total * h.k_c <= clients * h.b, "hmole.b",
          "E*k_c <= C*b violated (" + std::to_string(h.e_total * h.k_c) +
              " > " + std::to_string(clients * h.b) + ")");
  privacy.Validate();
}

ModeTraits TraitsFor(Mode mode) {
  ModeTraits t;
  switch (mode) {
    case Mode::kFedAMoLE:
      break;
    case Mode::kFedIT:
      t.shared_expert = false;
      t.assignment = ModeTraits::Assignment::kSingle;
      break;
    case Mode::kFedITFT:
      t.shared_expert = false;
      t.assignment = ModeTraits::Assignment::kSingle;
      t.final_finetune = true;
      break;
    case Mode::kAblateH:
      t.router = RouterKind::kVanilla;
      break;
    case Mode::kAblateS:
      t.shared_expert = false;
      break;
    case Mode::kAblateR:
      t.assignment = ModeTraits::Assignment::kFixed;
      break;
    case Mode::kRandom:
      t.assignment = ModeTraits::Assignment::kRandom;
      break;
  }
  return t;
}

HMoLEOptions EffectiveHMoLE(const FLConfig& cfg, Mode mode) {
  HMoLEOptions h = cfg.hmole;
  if (TraitsFor(mode).assignment == ModeTraits::Assignment::kSingle) {
    h.e_total = 1;
    h.k_e = 1;
    h.k_c = cfg.clients;
    h.b = 1;
  }
  return h;
}

RoundPlan InitialAssignment(const FLConfig& cfg, Mode mode,
                            std::span<const InjectionPoint> points) {
  const HMoLEOptions h = EffectiveHMoLE(cfg, mode);
  const ModulePlan module = PlanFromAssignment(
      RoundRobinAssignment(cfg.clients, h.e_total, h.k_e, h.k_c, h.b));
  RoundPlan plan;
  for (const InjectionPoint& p : points) plan[p] = module;
  return plan;
}

void AuditPlan(const RoundPlan& plan, const HMoLEOptions& opts,
               std::size_t clients) {
  for (const auto& [point, module] : plan) {
    if (module.size() != clients) {
      throw Protocol(point.name() + ": plan covers " +
                     std::to_string(module.size()) + " clients, expected " +
                     std::to_string(clients));
    }
    for (const auto& ids : module) {
      for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= opts.e_total) {
          throw Protocol(point.name() + ": expert id " + std::to_string(id) +
                         " outside the pool");
        }
      }
    }
    try {
      AuditAssignment(AssignmentFromPlan(module, opts.e_total), opts.k_e,
                      opts.k_c, opts.b);
    } catch (const Error& e) {
      throw Protocol(point.name() + ": " + e.what());
    }
  }
}

ServerState InitServer(const Backbone& backbone, const FLConfig& cfg,
                       Mode mode, std::uint64_t seed) {
  const ModeTraits traits = TraitsFor(mode);
  const HMoLEOptions h = EffectiveHMoLE(cfg, mode);
  const std::size_t d = static_cast<std::size_t>(backbone.config().hidden_dim);
  const double init_std = 1.0 / std::sqrt(static_cast<double>(d));
  ServerState server;
  for (const InjectionPoint& p : AllInjectionPoints(backbone.config().layers)) {
    Rng rng = MakeRng(seed, {kServerStream,
                             static_cast<std::uint64_t>(p.index())});
    const std::size_t out = backbone.projection(p).value.rows();
    GlobalModule m;
    if (traits.shared_expert) m.shared = LoRAExpert::Create(-1, h.rank, d, out, rng);
    m.token_projection = Parameter(Tensor::Normal(h.rank, d, init_std, rng));
    m.vanilla_router = Parameter(Tensor::Normal(h.e_total, d, init_std, rng));
    for (std::size_t j = 0; j < h.e_total; ++j)
      m.pool.push_back(
          LoRAExpert::Create(static_cast<int>(j), h.rank, d, out, rng));
    server.modules.emplace(p, std::move(m));
  }
  return server;
}

void BuildClientModules(const ServerState& server, const RoundPlan& plan,
                        const FLConfig& cfg, Mode mode, ClientState& client) {
  const ModeTraits traits = TraitsFor(mode);
  const HMoLEOptions h = EffectiveHMoLE(cfg, mode);
  client.modules.clear();
  for (const auto& [point, global] : server.modules) {
    HMoLEModuleState st;
    st.point = point;
    st.router = traits.router;
    st.shared = global.shared;
    if (traits.router == RouterKind::kTokenProjection) {
      st.token_projection = global.token_projection;
      // A single expert always gets probability 1; nothing to learn.
      st.token_projection.trainable = h.e_total > 1;
    } else {
      st.vanilla_router = global.vanilla_router;
    }
    const auto it = plan.find(point);
    if (it == plan.end() || client.id >= it->second.size()) {
      throw Protocol(point.name() + ": no plan for client " +
                     std::to_string(client.id));
    }
    for (int id : it->second[client.id])
      st.experts.push_back(global.pool.at(static_cast<std::size_t>(id)));
    st.k_e = h.k_e;
    st.scaling = h.alpha_lora / static_cast<double>(h.rank);
    st.dropout = h.dropout;
    st.Validate();
    client.modules.emplace(point, std::move(st));
  }
}

std::vector<double> LocalFinetune(const Backbone& backbone,
                                  ClientState& client, int steps, double lr,
                                  double beta, Rng& rng) {
  if (client.data.train.empty()) {
    throw Error(ErrorKind::kData, "client " + std::to_string(client.id) +
                                      " has an empty training set");
  }
  std::vector<double> trace;
  if (steps <= 0) return trace;
  std::vector<Parameter*> params;
  for (auto& [point, st] : client.modules) {
    auto p = st.TrainableParameters();
    params.insert(params.end(), p.begin(), p.end());
  }
  Adam adam(AdamOptions{.lr = lr});
  std::uniform_int_distribution<std::size_t> pick(
      0, client.data.train.size() - 1);
  std::map<InjectionPoint, ModuleOutput> outputs;
  const AdapterMap adapters = MakeAdapters(client, &rng, &outputs);
  trace.reserve(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    const TrainingSequence seq =
        MakeTrainingSequence(client.data.train[pick(rng)]);
    Tape tape;
    outputs.clear();
    const ForwardResult fr = backbone.Forward(tape, seq.inputs, adapters);
    Var loss = ad::NllLoss(fr.logits, seq.targets, seq.mask);
    if (beta > 0.0 && !outputs.empty()) {
      std::map<InjectionPoint, LoadBalanceStats> stats;
      for (const auto& [p, out] : outputs) stats[p] = MakeLoadBalanceStats(out);
      loss = ad::Add(loss, ad::Scale(LoadBalanceLoss(stats), beta));
    }
    tape.Backward(loss);
    adam.Step(params);
    trace.push_back(loss.value()[0]);
  }
  return trace;
}

ClientEmbeddings ComputeClientEmbeddings(const Backbone& backbone,
                                         const ClientState& client) {
  if (client.embedding_set.empty()) {
    throw Error(ErrorKind::kInvalidArgument,
                "client " + std::to_string(client.id) +
                    " has an empty embedding set");
  }
  // Forward passes need mutable module state for Tape::Param; work on a copy.
  ClientState local;
  local.id = client.id;
  local.modules = client.modules;
  const AdapterMap adapters = MakeAdapters(local, nullptr, nullptr);
  std::map<InjectionPoint, EmbeddingAccumulator> acc;
  for (const Example& ex : client.embedding_set) {
    const std::vector<int> tokens = ex.Tokens();
    Tape tape;
    const ForwardResult fr = backbone.Forward(tape, tokens, adapters);
    for (const auto& [point, st] : local.modules)
      acc[point].Add(st, fr.hidden.at(point).value());
  }
  ClientEmbeddings out;
  for (const auto& [point, st] : local.modules) {
    const EmbeddingAccumulator& a = acc.at(point);
    ModuleEmbeddings e;
    e.client = st.router == RouterKind::kTokenProjection ? a.TokenMean()
                                                         : a.HiddenMean();
    e.experts = a.ExpertMeans();
    out.emplace(point, std::move(e));
  }
  return out;
}

std::size_t UpdatePackage::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& [point, m] : modules) {
    if (m.shared) n += m.shared->a.value.size() + m.shared->b.value.size();
    if (m.router) n += m.router->size();
    for (const LoRAExpert& e : m.experts)
      n += e.a.value.size() + e.b.value.size();
  }
  return n;
}

bool UpdatePackage::HasShared() const {
  return std::any_of(modules.begin(), modules.end(),
                     [](const auto& kv) { return kv.second.shared.has_value(); });
}

UpdatePackage MakeUpload(const ClientState& client,
                         const ClientEmbeddings& embeddings,
                         const DPConfig& privacy, Rng& rng) {
  auto protect = [&](const Tensor& v) {
    return privacy.enabled ? Privatize(UnitNormalize(v), privacy, rng) : v;
  };
  UpdatePackage pkg;
  pkg.client = client.id;
  for (const auto& [point, st] : client.modules) {
    ModuleUpload up;
    up.shared = st.shared;
    up.router_kind = st.router;
    const Parameter& router = st.router == RouterKind::kTokenProjection
                                  ? st.token_projection
                                  : st.vanilla_router;
    if (router.trainable) up.router = router.value;
    up.experts = st.experts;
    const ModuleEmbeddings& e = embeddings.at(point);
    up.client_embedding = protect(e.client);
    for (const auto& [id, v] : e.experts) up.expert_embeddings[id] = protect(v);
    pkg.modules.emplace(point, std::move(up));
  }
  return pkg;
}

void Aggregate(ServerState& server, const RoundPlan& plan,
               std::span<const UpdatePackage> packages) {
  for (auto& [point, global] : server.modules) {
    const auto pit = plan.find(point);
    if (pit == plan.end()) throw Protocol(point.name() + ": no plan");
    const ModulePlan& mplan = pit->second;
    const std::size_t clients = mplan.size();

    std::vector<const ModuleUpload*> ups(clients, nullptr);
    for (const UpdatePackage& pkg : packages) {
      if (pkg.client >= clients) {
        throw Protocol("package from unknown client " +
                       std::to_string(pkg.client));
      }
      if (ups[pkg.client] != nullptr) {
        throw Protocol("duplicate package from client " +
                       std::to_string(pkg.client));
      }
      const auto mit = pkg.modules.find(point);
      if (mit == pkg.modules.end()) {
        throw Protocol("client " + std::to_string(pkg.client) +
                       " sent no update for " + point.name());
      }
      ups[pkg.client] = &mit->second;
    }
    for (std::size_t i = 0; i < clients; ++i) {
      if (ups[i] == nullptr) {
        throw Protocol("missing package from client " + std::to_string(i));
      }
      std::vector<int> sent;
      for (const LoRAExpert& e : ups[i]->experts) sent.push_back(e.id);
      if (sent != mplan[i]) {
        throw Protocol("client " + std::to_string(i) + " at " + point.name() +
                       " uploaded experts that differ from its assignment");
      }
    }

    if (global.shared) {
      std::vector<const Tensor*> as, bs;
      for (const ModuleUpload* u : ups) {
        if (!u->shared) {
          throw Protocol(point.name() + ": shared expert missing from upload");
        }
        as.push_back(&u->shared->a.value);
        bs.push_back(&u->shared->b.value);
      }
      AverageInto(global.shared->a.value, as, point.name() + " shared A");
      AverageInto(global.shared->b.value, bs, point.name() + " shared B");
    }

    std::vector<const Tensor*> routers;
    RouterKind kind = RouterKind::kTokenProjection;
    for (const ModuleUpload* u : ups) {
      if (u->router) {
        routers.push_back(&*u->router);
        kind = u->router_kind;
      }
    }
    if (!routers.empty()) {
      if (routers.size() != clients) {
        throw Protocol(point.name() + ": router missing from some uploads");
      }
      Tensor& target = kind == RouterKind::kTokenProjection
                           ? global.token_projection.value
                           : global.vanilla_router.value;
      AverageInto(target, routers, point.name() + " router");
    }

    global.client_embeddings.assign(clients, Tensor());
    for (std::size_t i = 0; i < clients; ++i)
      global.client_embeddings[i] = ups[i]->client_embedding;

    for (LoRAExpert& expert : global.pool) {
      std::vector<const Tensor*> as, bs, embs;
      for (std::size_t i = 0; i < clients; ++i) {
        for (const LoRAExpert& e : ups[i]->experts) {
          if (e.id != expert.id) continue;
          as.push_back(&e.a.value);
          bs.push_back(&e.b.value);
          const auto eit = ups[i]->expert_embeddings.find(e.id);
          if (eit != ups[i]->expert_embeddings.end())
            embs.push_back(&eit->second);
        }
      }
      if (as.empty()) continue;
      const std::string tag = point.name() + " expert " +
                              std::to_string(expert.id);
      AverageInto(expert.a.value, as, tag + " A");
      AverageInto(expert.b.value, bs, tag + " B");
      if (!embs.empty()) {
        if (embs.size() != as.size()) {
          throw Protocol(tag + ": embedding missing from some uploads");
        }
        AverageInto(global.expert_embeddings[expert.id], embs,
                    tag + " embedding");
      }
    }
  }
}

Tensor ClientLogits(const Backbone& backbone, ClientState& client,
                    std::span<const int> tokens) {
  const AdapterMap adapters = MakeAdapters(client, nullptr, nullptr);
  Tape tape;
  return backbone.Forward(tape, tokens, adapters).logits.value();
}

std::vector<int> GreedyDecode(const Backbone& backbone, ClientState& client,
                              std::span<const int> prompt,
                              std::size_t length) {
  const AdapterMap adapters = MakeAdapters(client, nullptr, nullptr);
  std::vector<int> tokens(prompt.begin(), prompt.end());
  std::vector<int> out;
  for (std::size_t k = 0; k < length; ++k) {
    Tape tape;
    const ForwardResult fr = backbone.Forward(tape, tokens, adapters);
    const Tensor& logits = fr.logits.value();
    const int next = static_cast<int>(ArgMax(logits.row(logits.rows() - 1)));
    out.push_back(next);
    tokens.push_back(next);
  }
  return out;
}

double EvaluateClient(const Backbone& backbone, ClientState& client,
                      std::span<const Example> examples, Metric metric) {
  if (examples.empty()) {
    throw Error(ErrorKind::kData, "client " + std::to_string(client.id) +
                                      " has no evaluation examples");
  }
  std::vector<TokenSeq> preds, refs;
  for (const Example& ex : examples) {
    preds.push_back(
        GreedyDecode(backbone, client, ex.instruction, ex.response.size()));
    refs.push_back(ex.response);
  }
  if (metric == Metric::kExactMatch) return ExactMatchAccuracy(preds, refs);
  double sum = 0.0;
  for (std::size_t i = 0; i < refs.size(); ++i) sum += RougeL(preds[i], refs[i]);
  return sum / static_cast<double>(refs.size());
}

nlohmann::json PlanToJson(const RoundPlan& plan, std::size_t client) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [point, module] : plan) j[point.name()] = module.at(client);
  return j;
}

RoundPlan RseaPlan(const ServerState& server, const FLConfig& cfg, Mode mode,
                   std::size_t hidden_dim, int round, const EventSink& events) {
  const HMoLEOptions h = EffectiveHMoLE(cfg, mode);
  const bool vanilla = TraitsFor(mode).router == RouterKind::kVanilla;
  RoundPlan plan;
  for (const auto& [point, global] : server.modules) {
    std::vector<Tensor> experts;
    for (std::size_t j = 0; j < h.e_total; ++j) {
      if (vanilla) {
        const auto row = global.vanilla_router.value.row(j);
        experts.push_back(Tensor::Row({row.begin(), row.end()}));
      } else {
        const auto it = global.expert_embeddings.find(static_cast<int>(j));
        if (it == global.expert_embeddings.end()) {
          throw Protocol(point.name() + ": no embedding for expert " +
                         std::to_string(j));
        }
        experts.push_back(it->second);
      }
    }
    const Tensor scores =
        Relevance(global.client_embeddings, experts, hidden_dim);
    AssignmentProblem problem{SelectionProbabilities(scores), h.k_e, h.k_c,
                              h.b};
    const AssignmentMatrix d = SolveAssignment(problem);
    plan[point] = PlanFromAssignment(d);
    if (events) {
      events({{"event", "rsea"},
              {"round", round},
              {"module", point.name()},
              {"objective", Objective(problem.probabilities, d)},
              {"assignment", plan[point]}});
    }
  }
  return plan;
}

Simulation MakeSimulation(const Backbone& backbone,
                          std::vector<ClientData> data, const FLConfig& cfg,
                          Mode mode, std::uint64_t seed,
                          std::optional<RoundPlan> initial_plan,
                          EventSink events) {
  cfg.Validate();
  if (data.size() != cfg.clients) {
    throw ConfigError(ErrorKind::kConfig, "federation.clients",
                      "partition produced " + std::to_string(data.size()) +
                          " clients, expected " + std::to_string(cfg.clients));
  }
  Simulation sim;
  sim.backbone = &backbone;
  sim.cfg = cfg;
  sim.mode = mode;
  sim.seed = seed;
  sim.events = std::move(events);
  sim.backbone_checksum = backbone.Checksum();
  sim.server = InitServer(backbone, cfg, mode, seed);
  for (std::size_t i = 0; i < data.size(); ++i) {
    ClientState c;
    c.id = i;
    c.seed = DeriveSeed(seed, {kClientStream, i});
    c.data = std::move(data[i]);
    if (c.data.train.empty()) {
      throw Error(ErrorKind::kData,
                  "client " + std::to_string(i) + " has no training data");
    }
    Rng rng(c.seed);
    c.embedding_set = SampleEmbeddingSet(
        c.data.train, std::min(cfg.embedding_set_size, c.data.train.size()),
        rng);
    sim.clients.push_back(std::move(c));
  }
  const auto points = AllInjectionPoints(backbone.config().layers);
  if (initial_plan &&
      TraitsFor(mode).assignment != ModeTraits::Assignment::kSingle) {
    sim.plan = std::move(*initial_plan);
  } else {
    sim.plan = InitialAssignment(cfg, mode, points);
  }
  AuditPlan(sim.plan, EffectiveHMoLE(cfg, mode), cfg.clients);
  if (sim.plan.size() != points.size()) {
    throw Protocol("initial plan must cover every injection point");
  }
  return sim;
}

RoundResult RunRound(Simulation& sim) {
  const Backbone& backbone = *sim.backbone;
  const FLConfig& cfg = sim.cfg;
  const HMoLEOptions h = EffectiveHMoLE(cfg, sim.mode);
  const ModeTraits traits = TraitsFor(sim.mode);
  const int round = sim.round + 1;
  const double lr = cfg.lr * std::pow(cfg.lr_decay, round - 1);
  const std::size_t n = sim.clients.size();
  AuditPlan(sim.plan, h, n);

  RoundResult result;
  result.packages.resize(n);
  std::vector<double> mean_loss(n, 0.0);
  ForEachClient(n, cfg.threads, [&](std::size_t i) {
    ClientState& c = sim.clients[i];
    BuildClientModules(sim.server, sim.plan, cfg, sim.mode, c);
    Rng train_rng =
        MakeRng(c.seed, {kTrainStream, static_cast<std::uint64_t>(round)});
    const std::vector<double> trace =
        LocalFinetune(backbone, c, cfg.local_steps, lr, h.beta, train_rng);
    if (!trace.empty()) {
      mean_loss[i] = std::accumulate(trace.begin(), trace.end(), 0.0) /
                     static_cast<double>(trace.size());
    }
    const ClientEmbeddings emb = ComputeClientEmbeddings(backbone, c);
    Rng dp_rng =
        MakeRng(c.seed, {kPrivacyStream, static_cast<std::uint64_t>(round)});
    result.packages[i] = MakeUpload(c, emb, cfg.privacy, dp_rng);
  });
  if (sim.events) {
    for (const UpdatePackage& p : result.packages) {
      sim.events({{"event", "upload"},
                  {"round", round},
                  {"client", p.client},
                  {"has_shared", p.HasShared()},
                  {"experts", PlanToJson(sim.plan, p.client)},
                  {"param_count", p.ParameterCount()}});
    }
  }

  Aggregate(sim.server, sim.plan, result.packages);

  std::vector<double> acc(n, 0.0);
  ForEachClient(n, cfg.threads, [&](std::size_t i) {
    ClientState& c = sim.clients[i];
    BuildClientModules(sim.server, sim.plan, cfg, sim.mode, c);
    acc[i] = EvaluateClient(backbone, c, c.data.test, cfg.metric);
  });

  MetricRecord& rec = result.record;
  rec.round = round;
  rec.accuracy = acc;
  rec.loss = mean_loss;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t total = 0;
    for (const auto& [point, module] : sim.plan) total += module[i].size();
    rec.experts_assigned.push_back(total);
  }
  if (sim.events) {
    for (std::size_t i = 0; i < n; ++i) {
      sim.events({{"event", "round"},
                  {"round", round},
                  {"client", i},
                  {"loss", mean_loss[i]},
                  {"acc", acc[i]},
                  {"assignment", PlanToJson(sim.plan, i)}});
    }
  }

  switch (traits.assignment) {
    case ModeTraits::Assignment::kRsea:
      result.next_plan =
          RseaPlan(sim.server, cfg, sim.mode,
                   static_cast<std::size_t>(backbone.config().hidden_dim),
                   round, sim.events);
      break;
    case ModeTraits::Assignment::kRandom:
      for (const auto& [point, module] : sim.plan) {
        Rng rng = MakeRng(sim.seed, {kRandomPlanStream,
                                     static_cast<std::uint64_t>(round),
                                     static_cast<std::uint64_t>(point.index())});
        result.next_plan[point] = PlanFromAssignment(
            RandomAssignment(n, h.e_total, h.k_e, h.k_c, h.b, rng));
      }
      break;
    case ModeTraits::Assignment::kFixed:
    case ModeTraits::Assignment::kSingle:
      result.next_plan = sim.plan;
      break;
  }
  AuditPlan(result.next_plan, h, n);
  spdlog::debug("{} seed {} round {}: mean acc {:.4f}", ModeName(sim.mode),
                sim.seed, round,
                std::accumulate(acc.begin(), acc.end(), 0.0) /
                    static_cast<double>(n));
  sim.plan = result.next_plan;
  sim.round = round;
  return result;
}

MetricLog RunTraining(Simulation& sim) {
  MetricLog log;
  while (sim.round < sim.cfg.rounds) log.Append(RunRound(sim).record);

  if (TraitsFor(sim.mode).final_finetune) {
    const FLConfig& cfg = sim.cfg;
    const double lr = cfg.lr * std::pow(cfg.lr_decay, sim.round);
    const std::size_t n = sim.clients.size();
    MetricRecord rec = log.records().back();
    ForEachClient(n, cfg.threads, [&](std::size_t i) {
      ClientState& c = sim.clients[i];
      BuildClientModules(sim.server, sim.plan, cfg, sim.mode, c);
      Rng rng = MakeRng(c.seed, {kFinalStream});
      LocalFinetune(*sim.backbone, c, cfg.local_steps, lr,
                    EffectiveHMoLE(cfg, sim.mode).beta, rng);
      rec.accuracy[i] =
          EvaluateClient(*sim.backbone, c, c.data.test, cfg.metric);
    });
    if (sim.events) {
      for (std::size_t i = 0; i < n; ++i) {
        sim.events({{"event", "final_finetune"},
                    {"round", sim.round},
                    {"client", i},
                    {"acc", rec.accuracy[i]}});
      }
    }
    log.ReplaceLast(std::move(rec));
  }

  if (sim.backbone->Checksum() != sim.backbone_checksum) {
    throw Protocol("frozen backbone changed during training");
  }
  return log;
}

MetricLog RunTraining(const Backbone& backbone, std::vector<ClientData> data,
                      const FLConfig& cfg, Mode mode, std::uint64_t seed,
                      std::optional<RoundPlan> initial_plan,
                      EventSink events) {
  Simulation sim = MakeSimulation(backbone, std::move(data), cfg, mode, seed,
                                  std::move(initial_plan), std::move(events));
  return RunTraining(sim);
}

}  // namespace fedamole
