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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedamole/backbone.hpp"
#include "fedamole/data.hpp"
#include "fedamole/evalkit.hpp"
#include "fedamole/hmole.hpp"
#include "fedamole/privacy.hpp"
#include "fedamole/rsea.hpp"
#include "json.hpp"

namespace fedamole {

enum class Mode {
  kFedAMoLE,
  kFedIT,     // one LoRA adapter shared by every client
  kFedITFT,   // kFedIT plus a local pass after the last aggregation
  kAblateH,   // vanilla MoLE router instead of the token projection
  kAblateS,   // no shared expert
  kAblateR,   // round-robin assignment, fixed after round 1
  kRandom,    // fresh random feasible assignment every round
};

std::string_view ModeName(Mode mode);
// Accepts the names returned by ModeName. Throws Error(kInvalidArgument).
Mode ParseMode(std::string_view name);
std::vector<Mode> AllModes();

enum class Metric { kExactMatch, kRougeL };
std::string_view MetricName(Metric metric);
Metric ParseMetric(std::string_view name);

struct HMoLEOptions {
  std::size_t rank = 4;
  double alpha_lora = 16.0;
  double dropout = 0.0;
  std::size_t k_e = 2;
  std::size_t k_c = 2;
  std::size_t b = 4;
  std::size_t e_total = 6;
  double beta = 1e-3;  // load-balance weight

  friend bool operator==(const HMoLEOptions&, const HMoLEOptions&) = default;
};

struct FLConfig {
  std::size_t clients = 4;
  int rounds = 5;
  int local_steps = 50;
  double lr = 5e-5;
  double lr_decay = 0.99;
  int threads = 1;
  std::size_t embedding_set_size = 32;
  Metric metric = Metric::kExactMatch;
  HMoLEOptions hmole;
  DPConfig privacy;

  // Throws ConfigError naming the offending key (e.g. "hmole.k_e").
  void Validate() const;
  friend bool operator==(const FLConfig&, const FLConfig&) = default;
};

// How a mode shapes the adapters and the round schedule.
struct ModeTraits {
  RouterKind router = RouterKind::kTokenProjection;
  bool shared_expert = true;
  enum class Assignment { kRsea, kFixed, kRandom, kSingle } assignment =
      Assignment::kRsea;
  bool final_finetune = false;
};
ModeTraits TraitsFor(Mode mode);

// The FedIT modes use a single expert that every client trains.
HMoLEOptions EffectiveHMoLE(const FLConfig& cfg, Mode mode);

using RoundPlan = std::map<InjectionPoint, ModulePlan>;

// Round-robin round-1 assignment at every injection point.
RoundPlan InitialAssignment(const FLConfig& cfg, Mode mode,
                            std::span<const InjectionPoint> points);
// Throws Error(kProtocol) when any module violates the assignment bounds.
void AuditPlan(const RoundPlan& plan, const HMoLEOptions& opts,
               std::size_t clients);

struct GlobalModule {
  std::optional<LoRAExpert> shared;
  Parameter token_projection;      // [rank x d]
  Parameter vanilla_router;        // [e_total x d]
  std::vector<LoRAExpert> pool;    // index == expert id
  std::vector<Tensor> client_embeddings;   // last uploads, per client
  std::map<int, Tensor> expert_embeddings; // aggregated, per expert id
};

struct ServerState {
  std::map<InjectionPoint, GlobalModule> modules;
};

ServerState InitServer(const Backbone& backbone, const FLConfig& cfg,
                       Mode mode, std::uint64_t seed);

struct ClientState {
  std::size_t id = 0;
  ClientData data;
  std::vector<Example> embedding_set;
  std::map<InjectionPoint, HMoLEModuleState> modules;
  std::uint64_t seed = 0;
};

// Broadcast: copies the global shared expert, router and the client's
// assigned experts into its modules.
void BuildClientModules(const ServerState& server, const RoundPlan& plan,
                        const FLConfig& cfg, Mode mode, ClientState& client);

// One training sequence per step: response-token NLL plus beta times the
// load-balance loss, followed by an Adam step. Returns the per-step losses.
std::vector<double> LocalFinetune(const Backbone& backbone,
                                  ClientState& client, int steps, double lr,
                                  double beta, Rng& rng);

struct ModuleEmbeddings {
  Tensor client;                    // token mean (or hidden mean, vanilla)
  std::map<int, Tensor> experts;    // per assigned expert id
};
using ClientEmbeddings = std::map<InjectionPoint, ModuleEmbeddings>;

ClientEmbeddings ComputeClientEmbeddings(const Backbone& backbone,
                                         const ClientState& client);

struct ModuleUpload {
  std::optional<LoRAExpert> shared;
  std::optional<Tensor> router;     // present when the router is trainable
  RouterKind router_kind = RouterKind::kTokenProjection;
  std::vector<LoRAExpert> experts;  // ascending id
  Tensor client_embedding;
  std::map<int, Tensor> expert_embeddings;
};

struct UpdatePackage {
  std::size_t client = 0;
  std::map<InjectionPoint, ModuleUpload> modules;

  [[nodiscard]] std::size_t ParameterCount() const;
  [[nodiscard]] bool HasShared() const;
};

// Packages the client's trainable parameters and (optionally privatized)
// embeddings.
UpdatePackage MakeUpload(const ClientState& client,
                         const ClientEmbeddings& embeddings,
                         const DPConfig& privacy, Rng& rng);

// Domain experts are averaged over the clients that trained them; shared
// expert and router over all clients. Throws Error(kProtocol) on missing
// packages or experts that disagree with the plan.
void Aggregate(ServerState& server, const RoundPlan& plan,
               std::span<const UpdatePackage> packages);

// Greedy decoding of each example's response; returns the mean metric.
double EvaluateClient(const Backbone& backbone, ClientState& client,
                      std::span<const Example> examples, Metric metric);
// Logits of the client's personal model (backbone plus its adapters).
Tensor ClientLogits(const Backbone& backbone, ClientState& client,
                    std::span<const int> tokens);
std::vector<int> GreedyDecode(const Backbone& backbone, ClientState& client,
                              std::span<const int> prompt, std::size_t length);

using EventSink = std::function<void(const nlohmann::json&)>;

// Next round's plan from the aggregated embeddings.
RoundPlan RseaPlan(const ServerState& server, const FLConfig& cfg, Mode mode,
                   std::size_t hidden_dim, int round, const EventSink& events);

struct Simulation {
  const Backbone* backbone = nullptr;
  FLConfig cfg;
  Mode mode = Mode::kFedAMoLE;
  std::uint64_t seed = 0;
  ServerState server;
  std::vector<ClientState> clients;
  RoundPlan plan;
  int round = 0;  // rounds completed
  EventSink events;
  std::uint64_t backbone_checksum = 0;
};

// Validates the config, builds server and clients and the round-1 plan.
Simulation MakeSimulation(const Backbone& backbone,
                          std::vector<ClientData> data, const FLConfig& cfg,
                          Mode mode, std::uint64_t seed,
                          std::optional<RoundPlan> initial_plan = {},
                          EventSink events = {});

struct RoundResult {
  MetricRecord record;
  std::vector<UpdatePackage> packages;
  RoundPlan next_plan;
};

// Broadcast, local fine-tuning, embeddings, upload, aggregation, evaluation
// and re-assignment for one round.
RoundResult RunRound(Simulation& sim);

// Runs every round; applies the final local pass for kFedITFT.
MetricLog RunTraining(Simulation& sim);
MetricLog RunTraining(const Backbone& backbone, std::vector<ClientData> data,
                      const FLConfig& cfg, Mode mode, std::uint64_t seed,
                      std::optional<RoundPlan> initial_plan = {},
                      EventSink events = {});

nlohmann::json PlanToJson(const RoundPlan& plan, std::size_t client);

}  // namespace fedamole
