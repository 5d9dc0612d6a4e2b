#pragma once

// Experiment configuration: a flat key/value text format with optional
// [section] headers that prefix keys ("[train]\nrounds = 10" sets
// "train.rounds"). '#' starts a comment. Values may be quoted; lists are
// comma separated, optionally in brackets.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedseq/approximator.hpp"
#include "fedseq/fl.hpp"
#include "fedseq/grouping.hpp"
#include "fedseq/nn.hpp"

namespace fedseq {

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap read_config_file(const std::string& path);

/// Applies "key=value" overrides.
void apply_overrides(ConfigMap& map, const std::vector<std::string>& overrides);

enum class Algorithm {
  centralized,
  fedavg,
  fedprox,
  feddyn,
  fedseq,
  fedseqinter,
  fedseq_prox,
  fedseq_dyn,
  fedseqinter_prox,
  fedseqinter_dyn,
};

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);
bool uses_superclients(Algorithm a);

enum class ApproximatorKind { conf, clf, oracle };

struct ExperimentConfig {
  std::string preset = "desk-synth";
  std::uint64_t seed = 0;

  // data
  std::string data_source = "synthetic";  // synthetic | cifar10
  std::string cifar_path;
  std::size_t num_classes = 10;
  std::size_t train_per_class = 2000;
  std::size_t test_per_class = 200;
  std::size_t dim = 20;
  double separation = 4.0;

  // partition
  std::size_t clients = 50;
  double alpha = 0.0;

  // model
  Architecture arch = Architecture::mlp;
  std::vector<std::size_t> hidden{32, 16};
  std::size_t conv_filters = 6;
  ImageShape image{3, 32, 32};

  // federated training
  Algorithm algorithm = Algorithm::fedseq;
  std::size_t rounds = 300;
  double fraction = 0.2;
  std::size_t local_epochs = 1;
  std::size_t superclient_epochs = 1;
  TrainHyper hyper{};
  std::optional<double> mu;         // algorithm-dependent default
  std::optional<double> alpha_dyn;  // algorithm-dependent default
  std::size_t threads = 1;

  // centralized baseline
  std::size_t centralized_epochs = 30;
  double centralized_lr = 0.01;
  double centralized_momentum = 0.9;

  // grouping
  GroupingConfig grouping{4000, 11, GroupingMethod::greedy, Metric::kl, 0};

  // approximator
  ApproximatorKind approximator = ApproximatorKind::conf;
  std::size_t pretrain_epochs = 10;
  std::size_t exemplars_per_class = 10;
  ConfidenceMode conf_mode = ConfidenceMode::global_mean;
  ClassifierMode clf_mode = ClassifierMode::all;
  double explained_variance = 0.9;

  // output / reporting
  std::string output_dir = "out";
  bool wall_time = false;
  bool checkpoints = false;
  std::size_t target_window = 10;

  double resolved_mu() const;
  double resolved_alpha_dyn() const;
  ModelSpec model_spec() const;
};

/// Every key accepted in a config file.
const std::vector<std::string>& valid_config_keys();

/// Maps a key to its dotted form; a bare suffix ("algorithm") is accepted
/// when exactly one key ends in it. Throws ConfigError listing the valid keys.
std::string canonical_key(const std::string& key);

/// Builds a config from preset defaults (the "preset" key, default
/// desk-synth) overlaid with `map`. Throws ConfigError on unknown keys or
/// malformed values.
ExperimentConfig resolve_config(const ConfigMap& map);

/// Preset defaults as key/value pairs.
ConfigMap preset_values(const std::string& name);

/// Fully resolved config as key/value pairs (round-trips through
/// resolve_config).
ConfigMap to_config_map(const ExperimentConfig& config);

}  // namespace fedseq
