#include "fedseq/fl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace fedseq {

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

namespace {

const ParamVector* anchor_of(const LocalObjective& objective) {
  if (const auto* p = std::get_if<ProxObjective>(&objective)) return &p->anchor;
  if (const auto* d = std::get_if<DynObjective>(&objective)) return &d->anchor;
  return nullptr;
}

}  // namespace

ClientUpdate local_train(const ParamVector& init, const ModelSpec& spec, const LabeledDataset& dataset,
                         std::span<const std::size_t> indices, std::size_t epochs, const LocalObjective& objective,
                         const TrainHyper& hyper, std::uint64_t seed, std::size_t id) {
  if (epochs == 0) throw InvalidArgument("local training needs at least one epoch");
  if (indices.empty()) throw InvalidArgument("client " + std::to_string(id) + " has no samples");
  if (hyper.batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (const auto* anchor = anchor_of(objective); anchor && !anchor->same_layout(init)) {
    throw ShapeError("objective anchor layout differs from the model layout");
  }
  const auto* dyn = std::get_if<DynObjective>(&objective);
  if (dyn && !dyn->grad_memory.same_layout(init)) throw ShapeError("dyn gradient memory layout differs from the model");
  const auto* prox = std::get_if<ProxObjective>(&objective);

  ParamVector params = init;
  auto opt = OptimizerState::for_params(params, hyper.lr, hyper.momentum, hyper.weight_decay);
  Rng rng(seed);
  std::vector<std::size_t> rows;
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto order = epoch_order(indices.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t stop = std::min(order.size(), start + hyper.batch_size);
      rows.clear();
      for (std::size_t i = start; i < stop; ++i) rows.push_back(indices[order[i]]);
      auto [loss, grad] = loss_and_grad(params, spec, dataset.gather(rows));
      if (prox) {
        grad.values() += prox->mu * (params.values() - prox->anchor.values());
      } else if (dyn) {
        grad.values() += dyn->alpha * (params.values() - dyn->anchor.values()) - dyn->grad_memory.values();
      }
      sgd_step(params, grad, opt);
    }
  }

  ClientUpdate update{std::move(params), indices.size(), id, std::nullopt};
  if (dyn) {
    ParamVector memory = dyn->grad_memory;
    memory.values() -= dyn->alpha * (update.params.values() - dyn->anchor.values());
    update.grad_memory = std::move(memory);
  }
  return update;
}

ParamVector fedavg_aggregate(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw InvalidArgument("cannot aggregate an empty update list");
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.n == 0) throw InvalidArgument("update " + std::to_string(u.id) + " reports zero samples");
    if (!u.params.same_layout(updates.front().params)) throw ShapeError("updates have inconsistent layouts");
    total += static_cast<double>(u.n);
  }
  ParamVector out = updates.front().params.zeros_like();
  for (const auto& u : updates) out.values() += (static_cast<double>(u.n) / total) * u.params.values();
  return out;
}

ParamVector feddyn_aggregate(std::span<const ClientUpdate> updates, ServerState& state, const ParamVector& prev) {
  if (updates.empty()) throw InvalidArgument("cannot aggregate an empty update list");
  if (state.population == 0) throw InvalidArgument("feddyn aggregation needs a positive population");
  if (!state.h) state.h = prev.zeros_like();
  ParamVector mean = prev.zeros_like();
  for (const auto& u : updates) {
    if (!u.params.same_layout(prev)) throw ShapeError("updates have inconsistent layouts");
    mean.values() += u.params.values();
    state.h->values() += u.params.values() - prev.values();
  }
  mean.values() /= static_cast<double>(updates.size());
  mean.values() -= state.h->values() / static_cast<double>(state.population);
  return mean;
}

double evaluate(const ParamVector& params, const ModelSpec& spec, const LabeledDataset& test) {
  if (test.size() == 0) return 0.0;
  constexpr Eigen::Index chunk = 1024;
  std::size_t correct = 0;
  for (Eigen::Index start = 0; start < test.inputs.rows(); start += chunk) {
    const Eigen::Index rows = std::min(chunk, test.inputs.rows() - start);
    const RowMatrixXd logits = forward<double>(params, spec, RowMatrixXd(test.inputs.middleRows(start, rows)));
    for (Eigen::Index r = 0; r < rows; ++r)
      if (argmax_row(logits.row(r)) == test.labels[static_cast<std::size_t>(start + r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::vector<double> TrainHistory::accuracies() const {
  std::vector<double> a;
  a.reserve(rounds.size());
  for (const auto& r : rounds) a.push_back(r.test_accuracy);
  return a;
}

std::size_t participants_per_round(double fraction, std::size_t population) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("participation fraction must lie in (0, 1]");
  if (population == 0) throw InvalidArgument("population is empty");
  // tolerance keeps e.g. 0.2 * 5 at exactly one participant
  const auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(population) - 1e-9));
  return std::clamp<std::size_t>(count, 1, population);
}

std::vector<std::size_t> sample_participants(std::size_t population, std::size_t count, std::uint64_t seed,
                                             std::size_t round) {
  if (count > population) throw InvalidArgument("cannot sample more participants than the population");
  Rng rng(derive_seed({seed, stream::sampling, round}));
  std::vector<std::size_t> ids(population);
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(count);
  return ids;
}

std::uint64_t client_stream_seed(std::uint64_t seed, std::size_t client, std::size_t round, std::size_t pass) {
  return derive_seed({seed, stream::minibatch, client, round, pass});
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

TrainHistory federated_run(const FederatedConfig& config, const ModelSpec& spec, const LabeledDataset& train,
                           const ClientPartition& partition, const LabeledDataset& test, const ParamVector& theta0) {
  const auto clock_start = std::chrono::steady_clock::now();
  const std::size_t population = partition.num_clients();
  const std::size_t per_round = participants_per_round(config.fraction, population);

  TrainHistory history;
  ParamVector global = theta0;
  ServerState server{theta0, 0, std::nullopt, population};
  std::vector<std::optional<ParamVector>> memories(population);

  for (std::size_t t = 0; t < config.rounds; ++t) {
    auto sampled = sample_participants(population, per_round, config.seed, t);
    std::sort(sampled.begin(), sampled.end());
    std::vector<ClientUpdate> updates(sampled.size());
    try {
      parallel_for(sampled.size(), config.threads, [&](std::size_t i) {
        const std::size_t k = sampled[i];
        LocalObjective objective = PlainObjective{};
        if (config.objective == ObjectiveKind::prox) {
          objective = ProxObjective{config.mu, global};
        } else if (config.objective == ObjectiveKind::dyn) {
          objective = DynObjective{config.alpha_dyn, global, memories[k] ? *memories[k] : global.zeros_like()};
        }
        updates[i] = local_train(global, spec, train, partition.clients[k], config.local_epochs, objective,
                                 config.hyper, client_stream_seed(config.seed, k, t), k);
      });
    } catch (const OverflowError& e) {
      history.diverged = true;
      history.diagnostic = "round " + std::to_string(t + 1) + ": " + e.what();
      break;
    }
    for (auto& u : updates)
      if (u.grad_memory) memories[u.id] = std::move(u.grad_memory);

    ParamVector next = config.aggregation == AggregationKind::feddyn ? feddyn_aggregate(updates, server, global)
                                                                      : fedavg_aggregate(updates);
    if (!next.all_finite()) {
      history.diverged = true;
      history.diagnostic = "round " + std::to_string(t + 1) + ": non-finite global parameters";
      break;
    }
    global = std::move(next);
    server.global = global;
    server.round = t + 1;

    RoundRecord rec;
    rec.round = t + 1;
    rec.equivalent_round = static_cast<double>(t + 1);
    try {
      rec.test_accuracy = evaluate(global, spec, test);
    } catch (const OverflowError& e) {
      history.diverged = true;
      history.diagnostic = "round " + std::to_string(t + 1) + ": " + e.what();
      break;
    }
    rec.aggregated = true;
    if (config.record_wall_time) {
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    }
    history.rounds.push_back(rec);
  }
  history.final_params = std::move(global);
  return history;
}

}  // namespace fedseq
