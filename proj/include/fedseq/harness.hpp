#pragma once

// Experiment orchestration: data preparation, client estimates and grouping,
// the centralized baseline, algorithm dispatch and round-based metrics.

#include <array>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "fedseq/approximator.hpp"
#include "fedseq/config.hpp"
#include "fedseq/data.hpp"
#include "fedseq/fl.hpp"
#include "fedseq/grouping.hpp"
#include "fedseq/sequential.hpp"

namespace fedseq {

struct PreparedData {
  LabeledDataset train;
  LabeledDataset test;  // evaluation split, exemplars removed
  ExemplarSet exemplars;
  ClientPartition partition;
  ModelSpec spec;
  ParamVector theta0;
};

/// Loads or synthesizes the splits, draws the exemplar set from the test
/// split (and removes it from evaluation), partitions the training split and
/// initializes theta0.
PreparedData prepare_data(const ExperimentConfig& config);

struct ClientEstimates {
  DistributionEstimate estimate;
  std::optional<PretrainResult> pretrain;  // absent for the oracle
};

ClientEstimates estimate_clients(const ExperimentConfig& config, const PreparedData& data);

std::vector<Superclient> build_superclients(const ExperimentConfig& config, const PreparedData& data,
                                            const DistributionEstimate& estimate);

struct CentralizedResult {
  TrainHistory history;  // one record per epoch
  double accuracy = 0.0; // Acc_centr, accuracy after the last epoch
};

/// Full-data SGD with the configured momentum and a per-epoch cosine
/// annealed learning rate.
CentralizedResult run_centralized(const ExperimentConfig& config, const PreparedData& data);

FedSeqConfig federated_config(const ExperimentConfig& config);

/// Runs the configured federated algorithm. `superclients` is required for
/// the sequential algorithms and ignored otherwise.
TrainHistory run_federated(const ExperimentConfig& config, const PreparedData& data,
                           const std::vector<Superclient>& superclients);

struct ExperimentResult {
  PreparedData data;
  std::optional<ClientEstimates> estimates;
  std::vector<Superclient> superclients;
  TrainHistory history;
  std::optional<double> centralized_accuracy;
};

/// partition -> (pretrain -> group) -> train for `config.algorithm`.
ExperimentResult run_experiment(const ExperimentConfig& config);

inline constexpr std::size_t kNotReached = std::numeric_limits<std::size_t>::max();

/// First 1-based round whose trailing-`window` mean accuracy is at least
/// fraction * acc_centr, or kNotReached.
std::size_t rounds_to_target(std::span<const double> accuracies, double acc_centr, double fraction,
                             std::size_t window = 10);

inline constexpr std::array<double, 3> kDefaultTargets{0.7, 0.8, 0.9};

struct TargetRow {
  double fraction = 0.0;
  std::size_t rounds = kNotReached;
};

std::vector<TargetRow> rounds_to_targets(std::span<const double> accuracies, double acc_centr,
                                         std::span<const double> fractions = kDefaultTargets,
                                         std::size_t window = 10);

/// fedavg_rounds / rounds; empty when either side never reached the target.
std::optional<double> speedup_vs_fedavg(std::size_t fedavg_rounds, std::size_t rounds);

/// Mean over the trailing min(last, length) entries.
double final_accuracy(std::span<const double> accuracies, std::size_t last = 100);

}  // namespace fedseq
