#pragma once

// Local objectives, server aggregation, evaluation and the client-level
// baselines (FedAvg, FedProx, FedDyn).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedseq/data.hpp"
#include "fedseq/nn.hpp"

namespace fedseq {

struct TrainHyper {
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 4e-4;
  std::size_t batch_size = 64;
};

struct PlainObjective {};

/// L + (mu/2)||theta - anchor||^2
struct ProxObjective {
  double mu = 0.01;
  ParamVector anchor;
};

/// L - <grad_memory, theta> + (alpha/2)||theta - anchor||^2
struct DynObjective {
  double alpha = 0.1;
  ParamVector anchor;
  ParamVector grad_memory;
};

using LocalObjective = std::variant<PlainObjective, ProxObjective, DynObjective>;

struct ClientUpdate {
  ParamVector params;
  std::size_t n = 0;
  std::size_t id = 0;
  std::optional<ParamVector> grad_memory;  // dyn objective only
};

/// Epoch-wise shuffled mini-batch order for one client; one permutation per
/// epoch drawn from `rng`.
std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng);

/// E epochs of mini-batch SGD on dataset rows `indices`. The optimizer state
/// starts fresh. For the dyn objective the returned grad_memory is
/// memory - alpha * (theta_final - anchor).
ClientUpdate local_train(const ParamVector& init, const ModelSpec& spec, const LabeledDataset& dataset,
                         std::span<const std::size_t> indices, std::size_t epochs, const LocalObjective& objective,
                         const TrainHyper& hyper, std::uint64_t seed, std::size_t id = 0);

/// Sum_k (n_k / n) theta_k, reduced in the order given.
ParamVector fedavg_aggregate(std::span<const ClientUpdate> updates);

struct ServerState {
  ParamVector global;
  std::size_t round = 0;
  std::optional<ParamVector> h;  // running sum of (theta_k - theta_prev)
  std::size_t population = 0;    // m
};

/// theta = mean_k theta_k - (1/m) * H where H accumulates
/// sum_k (theta_k - theta_prev) across rounds in `state.h`.
ParamVector feddyn_aggregate(std::span<const ClientUpdate> updates, ServerState& state, const ParamVector& prev);

/// Fraction of correct argmax predictions; lowest class index wins ties.
double evaluate(const ParamVector& params, const ModelSpec& spec, const LabeledDataset& test);

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  double equivalent_round = 0.0;
  double test_accuracy = 0.0;
  bool aggregated = true;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<RoundRecord> rounds;
  bool diverged = false;
  std::string diagnostic;
  ParamVector final_params;

  std::vector<double> accuracies() const;
};

enum class ObjectiveKind { plain, prox, dyn };
enum class AggregationKind { fedavg, feddyn };

struct FederatedConfig {
  std::size_t rounds = 100;
  double fraction = 0.2;
  std::size_t local_epochs = 1;
  ObjectiveKind objective = ObjectiveKind::plain;
  double mu = 0.01;
  double alpha_dyn = 0.1;
  AggregationKind aggregation = AggregationKind::fedavg;
  TrainHyper hyper{};
  std::uint64_t seed = 0;
  bool record_wall_time = false;
  std::size_t threads = 1;
};

/// ceil(fraction * population), at least one.
std::size_t participants_per_round(double fraction, std::size_t population);

/// Uniform sample without replacement, in draw order.
std::vector<std::size_t> sample_participants(std::size_t population, std::size_t count, std::uint64_t seed,
                                             std::size_t round);

/// Mini-batch stream for (global seed, client, round, pass).
std::uint64_t client_stream_seed(std::uint64_t seed, std::size_t client, std::size_t round, std::size_t pass = 0);

/// Client-level baseline: FedAvg (plain), FedProx (prox) or FedDyn (dyn
/// objective, feddyn aggregation) over all clients of `partition`.
TrainHistory federated_run(const FederatedConfig& config, const ModelSpec& spec, const LabeledDataset& train,
                           const ClientPartition& partition, const LabeledDataset& test, const ParamVector& theta0);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace fedseq
