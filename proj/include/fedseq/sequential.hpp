#pragma once

// Sequential training inside superclients and the FedSeq / FedSeqInter
// round loops.

#include <cstddef>
#include <optional>
#include <vector>

#include "fedseq/fl.hpp"
#include "fedseq/grouping.hpp"

namespace fedseq {

struct FedSeqConfig : FederatedConfig {
  std::size_t superclient_epochs = 1;  // E_S
};

/// Per-client FedDyn gradient memories, persistent across rounds. Entries are
/// created lazily (zero) the first time a client trains.
using GradMemories = std::vector<std::optional<ParamVector>>;

/// Passes the model through the superclient's members in an order shuffled
/// once per round, E_S times, each member training E_k epochs. Prox/dyn
/// members are anchored to the model they received. Returns the last
/// member's model with n = N_z.
ClientUpdate sequential_train_superclient(const ParamVector& theta_in, const Superclient& superclient,
                                          const ModelSpec& spec, const LabeledDataset& train,
                                          const ClientPartition& partition, const FedSeqConfig& config,
                                          std::size_t round, GradMemories* memories = nullptr);

/// Member order used in `round` (exposed for tests and tracing).
std::vector<std::size_t> superclient_order(const Superclient& superclient, std::uint64_t seed, std::size_t round);

TrainHistory fedseq_run(const FedSeqConfig& config, const ModelSpec& spec, const LabeledDataset& train,
                        const ClientPartition& partition, const std::vector<Superclient>& superclients,
                        const LabeledDataset& test, const ParamVector& theta0);

/// Slot state of FedSeqInter.
struct InterState {
  std::vector<ParamVector> slots;
  std::vector<double> weights;
  std::size_t rounds_since_aggregation = 0;

  /// sum_i (w_i / w) * slots[i]
  ParamVector weighted_average() const;
};

/// Optional observer invoked after every round with the slot state (before a
/// reset on aggregation rounds) and the sampled superclient ids.
using InterObserver = std::function<void(std::size_t round, const InterState&, const std::vector<std::size_t>&)>;

TrainHistory fedseqinter_run(const FedSeqConfig& config, const ModelSpec& spec, const LabeledDataset& train,
                             const ClientPartition& partition, const std::vector<Superclient>& superclients,
                             const LabeledDataset& test, const ParamVector& theta0,
                             const InterObserver& observer = nullptr);

}  // namespace fedseq
