#include "fedseq/sequential.hpp"

#include <algorithm>
#include <chrono>

namespace fedseq {

std::vector<std::size_t> superclient_order(const Superclient& superclient, std::uint64_t seed, std::size_t round) {
  std::vector<std::size_t> order = superclient.clients;
  Rng rng(derive_seed({seed, stream::shuffle, superclient.id, round}));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

ClientUpdate sequential_train_superclient(const ParamVector& theta_in, const Superclient& superclient,
                                          const ModelSpec& spec, const LabeledDataset& train,
                                          const ClientPartition& partition, const FedSeqConfig& config,
                                          std::size_t round, GradMemories* memories) {
  if (superclient.clients.empty()) throw InvalidArgument("superclient " + std::to_string(superclient.id) + " is empty");
  if (config.superclient_epochs == 0) throw InvalidArgument("superclient epochs must be >= 1");
  if (config.objective == ObjectiveKind::dyn && memories == nullptr) {
    throw InvalidArgument("dyn chain needs per-client gradient memories");
  }
  const auto order = superclient_order(superclient, config.seed, round);
  ParamVector model = theta_in;
  for (std::size_t pass = 0; pass < config.superclient_epochs; ++pass) {
    for (std::size_t k : order) {
      if (k >= partition.num_clients()) throw InvalidArgument("superclient member " + std::to_string(k) + " unknown");
      LocalObjective objective = PlainObjective{};
      if (config.objective == ObjectiveKind::prox) {
        objective = ProxObjective{config.mu, model};
      } else if (config.objective == ObjectiveKind::dyn) {
        auto& memory = (*memories)[k];
        objective = DynObjective{config.alpha_dyn, model, memory ? *memory : model.zeros_like()};
      }
      auto update = local_train(model, spec, train, partition.clients[k], config.local_epochs, objective,
                                config.hyper, client_stream_seed(config.seed, k, round, pass), k);
      if (update.grad_memory) (*memories)[k] = std::move(update.grad_memory);
      model = std::move(update.params);
    }
  }
  return {std::move(model), superclient.num_samples, superclient.id, std::nullopt};
}

namespace {

class RoundClock {
 public:
  explicit RoundClock(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

void mark_diverged(TrainHistory& history, std::size_t round, const std::string& why) {
  history.diverged = true;
  history.diagnostic = "round " + std::to_string(round) + ": " + why;
}

}  // namespace

TrainHistory fedseq_run(const FedSeqConfig& config, const ModelSpec& spec, const LabeledDataset& train,
                        const ClientPartition& partition, const std::vector<Superclient>& superclients,
                        const LabeledDataset& test, const ParamVector& theta0) {
  if (superclients.empty()) throw InvalidArgument("no superclients");
  const RoundClock clock(config.record_wall_time);
  const std::size_t ns = superclients.size();
  const std::size_t per_round = participants_per_round(config.fraction, ns);

  TrainHistory history;
  ParamVector global = theta0;
  ServerState server{theta0, 0, std::nullopt, ns};
  GradMemories memories(partition.num_clients());

  for (std::size_t t = 0; t < config.rounds; ++t) {
    auto sampled = sample_participants(ns, per_round, config.seed, t);
    std::sort(sampled.begin(), sampled.end());
    std::vector<ClientUpdate> updates(sampled.size());
    try {
      parallel_for(sampled.size(), config.threads, [&](std::size_t i) {
        updates[i] = sequential_train_superclient(global, superclients[sampled[i]], spec, train, partition, config, t,
                                                  &memories);
      });
    } catch (const OverflowError& e) {
      mark_diverged(history, t + 1, e.what());
      break;
    }

    ParamVector next = config.aggregation == AggregationKind::feddyn ? feddyn_aggregate(updates, server, global)
                                                                      : fedavg_aggregate(updates);
    if (!next.all_finite()) {
      mark_diverged(history, t + 1, "non-finite global parameters");
      break;
    }
    global = std::move(next);
    server.global = global;
    server.round = t + 1;

    RoundRecord rec;
    rec.round = t + 1;
    rec.equivalent_round = static_cast<double>(t + 1) / static_cast<double>(config.superclient_epochs);
    try {
      rec.test_accuracy = evaluate(global, spec, test);
    } catch (const OverflowError& e) {
      mark_diverged(history, t + 1, e.what());
      break;
    }
    rec.aggregated = true;
    rec.wall_seconds = clock.seconds();
    history.rounds.push_back(rec);
  }
  history.final_params = std::move(global);
  return history;
}

ParamVector InterState::weighted_average() const {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw InvalidArgument("slot weights are all zero");
  ParamVector out = slots.front().zeros_like();
  for (std::size_t i = 0; i < slots.size(); ++i) out.values() += (weights[i] / total) * slots[i].values();
  return out;
}

TrainHistory fedseqinter_run(const FedSeqConfig& config, const ModelSpec& spec, const LabeledDataset& train,
                             const ClientPartition& partition, const std::vector<Superclient>& superclients,
                             const LabeledDataset& test, const ParamVector& theta0, const InterObserver& observer) {
  if (superclients.empty()) throw InvalidArgument("no superclients");
  if (config.aggregation != AggregationKind::fedavg) {
    throw InvalidArgument("FedSeqInter aggregates by weighted slot averaging; feddyn aggregation is not supported");
  }
  const RoundClock clock(config.record_wall_time);
  const std::size_t ns = superclients.size();
  const std::size_t slot_count = participants_per_round(config.fraction, ns);

  TrainHistory history;
  InterState state{std::vector<ParamVector>(slot_count, theta0), std::vector<double>(slot_count, 0.0), 0};
  GradMemories memories(partition.num_clients());
  ParamVector global = theta0;

  for (std::size_t t = 0; t < config.rounds; ++t) {
    // slot i continues with the i-th sampled superclient
    const auto sampled = sample_participants(ns, slot_count, config.seed, t);
    std::vector<ClientUpdate> updates(slot_count);
    try {
      parallel_for(slot_count, config.threads, [&](std::size_t i) {
        updates[i] = sequential_train_superclient(state.slots[i], superclients[sampled[i]], spec, train, partition,
                                                  config, t, &memories);
      });
    } catch (const OverflowError& e) {
      mark_diverged(history, t + 1, e.what());
      break;
    }
    bool finite = true;
    for (std::size_t i = 0; i < slot_count; ++i) {
      state.slots[i] = std::move(updates[i].params);
      state.weights[i] += static_cast<double>(updates[i].n);
      finite = finite && state.slots[i].all_finite();
    }
    ++state.rounds_since_aggregation;
    if (observer) observer(t, state, sampled);
    if (!finite) {
      mark_diverged(history, t + 1, "non-finite slot parameters");
      break;
    }

    const bool aggregate = t % ns == 0;
    ParamVector average = state.weighted_average();
    if (aggregate) {
      global = average;
      std::fill(state.slots.begin(), state.slots.end(), global);
      std::fill(state.weights.begin(), state.weights.end(), 0.0);
      state.rounds_since_aggregation = 0;
    }

    RoundRecord rec;
    rec.round = t + 1;
    rec.equivalent_round = static_cast<double>(t + 1) / static_cast<double>(config.superclient_epochs);
    try {
      rec.test_accuracy = evaluate(average, spec, test);
    } catch (const OverflowError& e) {
      mark_diverged(history, t + 1, e.what());
      break;
    }
    rec.aggregated = aggregate;
    rec.wall_seconds = clock.seconds();
    history.rounds.push_back(rec);
  }
  const bool pending = std::any_of(state.weights.begin(), state.weights.end(), [](double w) { return w > 0.0; });
  history.final_params = pending && !history.diverged ? state.weighted_average() : std::move(global);
  return history;
}

}  // namespace fedseq
