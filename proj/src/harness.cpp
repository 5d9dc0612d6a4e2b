#include "fedseq/harness.hpp"

#include <algorithm>
#include <numeric>

namespace fedseq {

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData out;
  LabeledDataset test;
  if (config.data_source == "cifar10") {
    if (config.num_classes != 10) throw ConfigError("cifar10 has 10 classes; data.num_classes must be 10");
    auto cifar = load_cifar10(config.cifar_path);
    out.train = std::move(cifar.train);
    test = std::move(cifar.test);
  } else {
    auto split = synth_train_test(config.num_classes, config.train_per_class, config.test_per_class, config.dim,
                                  config.separation, config.seed);
    out.train = std::move(split.train);
    test = std::move(split.test);
  }
  out.train.validate();
  test.validate();
  if (config.clients > out.train.size()) {
    throw ConfigError("partition.clients (" + std::to_string(config.clients) + ") exceeds the training set size");
  }
  out.exemplars = build_exemplar_set(test, config.exemplars_per_class, config.seed, "test");
  out.test = exclude_indices(test, out.exemplars.source_indices);
  out.partition = dirichlet_partition(out.train, config.clients, config.alpha, config.seed);
  out.spec = config.model_spec();
  out.theta0 = init_params(out.spec, config.seed);
  return out;
}

ClientEstimates estimate_clients(const ExperimentConfig& config, const PreparedData& data) {
  ClientEstimates out;
  if (config.approximator == ApproximatorKind::oracle) {
    out.estimate = oracle_estimate(data.partition, data.train);
    return out;
  }
  out.pretrain = pretrain_clients(data.theta0, data.spec, data.train, data.partition, config.pretrain_epochs,
                                  config.hyper, config.seed, config.threads);
  if (config.approximator == ApproximatorKind::conf) {
    out.estimate = psi_conf(*out.pretrain, data.spec, data.exemplars, config.conf_mode);
  } else {
    out.estimate = psi_clf(*out.pretrain, config.clf_mode, config.explained_variance);
  }
  return out;
}

std::vector<Superclient> build_superclients(const ExperimentConfig& config, const PreparedData& data,
                                            const DistributionEstimate& estimate) {
  GroupingConfig grouping = config.grouping;
  grouping.seed = config.seed;
  const auto sizes = data.partition.sizes();
  auto superclients = group_clients(estimate, sizes, grouping, config.num_classes);
  validate_superclients(superclients, sizes);
  return superclients;
}

CentralizedResult run_centralized(const ExperimentConfig& config, const PreparedData& data) {
  const std::size_t epochs = config.centralized_epochs;
  if (epochs == 0) throw ConfigError("centralized.epochs must be >= 1");
  const std::size_t batch = config.hyper.batch_size;

  CentralizedResult result;
  ParamVector params = data.theta0;
  auto opt = OptimizerState::for_params(params, config.centralized_lr, config.centralized_momentum,
                                        config.hyper.weight_decay);
  Rng rng(derive_seed({config.seed, stream::minibatch, 0xce47}));
  std::vector<std::size_t> rows;
  for (std::size_t e = 0; e < epochs; ++e) {
    opt.lr = cosine_annealing_lr(e, epochs, config.centralized_lr);
    const auto order = epoch_order(data.train.size(), rng);
    try {
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t stop = std::min(order.size(), start + batch);
        rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                    order.begin() + static_cast<std::ptrdiff_t>(stop));
        const auto lg = loss_and_grad(params, data.spec, data.train.gather(rows));
        sgd_step(params, lg.grad, opt);
      }
      if (!params.all_finite()) throw OverflowError("non-finite parameters", 0);
      RoundRecord rec;
      rec.round = e + 1;
      rec.equivalent_round = static_cast<double>(e + 1);
      rec.test_accuracy = evaluate(params, data.spec, data.test);
      result.history.rounds.push_back(rec);
    } catch (const OverflowError& err) {
      result.history.diverged = true;
      result.history.diagnostic = "epoch " + std::to_string(e + 1) + ": " + err.what();
      break;
    }
  }
  result.accuracy = result.history.rounds.empty() ? 0.0 : result.history.rounds.back().test_accuracy;
  result.history.final_params = std::move(params);
  return result;
}

FedSeqConfig federated_config(const ExperimentConfig& config) {
  FedSeqConfig fc;
  fc.rounds = config.rounds;
  fc.fraction = config.fraction;
  fc.local_epochs = config.local_epochs;
  fc.superclient_epochs = config.superclient_epochs;
  fc.mu = config.resolved_mu();
  fc.alpha_dyn = config.resolved_alpha_dyn();
  fc.hyper = config.hyper;
  fc.seed = config.seed;
  fc.record_wall_time = config.wall_time;
  fc.threads = config.threads;
  switch (config.algorithm) {
    case Algorithm::fedprox:
    case Algorithm::fedseq_prox:
    case Algorithm::fedseqinter_prox:
      fc.objective = ObjectiveKind::prox;
      break;
    case Algorithm::feddyn:
    case Algorithm::fedseq_dyn:
      fc.objective = ObjectiveKind::dyn;
      fc.aggregation = AggregationKind::feddyn;
      break;
    case Algorithm::fedseqinter_dyn:
      fc.objective = ObjectiveKind::dyn;
      break;
    default:
      break;
  }
  return fc;
}

TrainHistory run_federated(const ExperimentConfig& config, const PreparedData& data,
                           const std::vector<Superclient>& superclients) {
  const FedSeqConfig fc = federated_config(config);
  switch (config.algorithm) {
    case Algorithm::centralized:
      throw InvalidArgument("centralized training is not a federated algorithm");
    case Algorithm::fedavg:
    case Algorithm::fedprox:
    case Algorithm::feddyn:
      return federated_run(fc, data.spec, data.train, data.partition, data.test, data.theta0);
    case Algorithm::fedseq:
    case Algorithm::fedseq_prox:
    case Algorithm::fedseq_dyn:
      return fedseq_run(fc, data.spec, data.train, data.partition, superclients, data.test, data.theta0);
    case Algorithm::fedseqinter:
    case Algorithm::fedseqinter_prox:
    case Algorithm::fedseqinter_dyn:
      return fedseqinter_run(fc, data.spec, data.train, data.partition, superclients, data.test, data.theta0);
  }
  throw InvalidArgument("unknown algorithm");
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentResult out{prepare_data(config), std::nullopt, {}, {}, std::nullopt};
  if (config.algorithm == Algorithm::centralized) {
    auto central = run_centralized(config, out.data);
    out.history = std::move(central.history);
    out.centralized_accuracy = central.accuracy;
    return out;
  }
  if (uses_superclients(config.algorithm)) {
    out.estimates = estimate_clients(config, out.data);
    out.superclients = build_superclients(config, out.data, out.estimates->estimate);
  }
  out.history = run_federated(config, out.data, out.superclients);
  return out;
}

std::size_t rounds_to_target(std::span<const double> accuracies, double acc_centr, double fraction,
                             std::size_t window) {
  if (!(acc_centr > 0.0)) throw InvalidArgument("centralized accuracy must be positive");
  if (window == 0) throw InvalidArgument("smoothing window must be >= 1");
  const double target = fraction * acc_centr;
  double sum = 0.0;
  for (std::size_t r = 0; r < accuracies.size(); ++r) {
    sum += accuracies[r];
    if (r >= window) sum -= accuracies[r - window];
    const double mean = sum / static_cast<double>(std::min(r + 1, window));
    if (mean >= target) return r + 1;
  }
  return kNotReached;
}

std::vector<TargetRow> rounds_to_targets(std::span<const double> accuracies, double acc_centr,
                                         std::span<const double> fractions, std::size_t window) {
  std::vector<TargetRow> rows;
  for (double f : fractions) rows.push_back({f, rounds_to_target(accuracies, acc_centr, f, window)});
  return rows;
}

std::optional<double> speedup_vs_fedavg(std::size_t fedavg_rounds, std::size_t rounds) {
  if (fedavg_rounds == kNotReached || rounds == kNotReached || rounds == 0) return std::nullopt;
  return static_cast<double>(fedavg_rounds) / static_cast<double>(rounds);
}

double final_accuracy(std::span<const double> accuracies, std::size_t last) {
  if (accuracies.empty()) throw InvalidArgument("final accuracy of an empty history");
  if (last == 0) throw InvalidArgument("trailing window must be >= 1");
  const std::size_t k = std::min(last, accuracies.size());
  const auto tail = accuracies.subspan(accuracies.size() - k);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(k);
}

}  // namespace fedseq
