#include <algorithm>
#include <numeric>

#include "gtest/gtest.h"
#include "fedseq/sequential.hpp"
#include "test_util.hpp"

namespace fedseq {
namespace {

struct Toy {
  ModelSpec spec;
  TrainTest split;
  ClientPartition partition;
  ParamVector theta0;
  std::vector<std::size_t> sizes;
};

Toy toy(std::size_t clients, double alpha, std::uint64_t seed) {
  Toy t;
  t.spec.input_dim = 5;
  t.spec.hidden = {6};
  t.spec.num_classes = 4;
  t.split = synth_train_test(4, 50, 30, 5, 3.0, seed);
  t.partition = dirichlet_partition(t.split.train, clients, alpha, seed);
  t.theta0 = init_params(t.spec, seed);
  for (std::size_t k = 0; k < clients; ++k) t.sizes.push_back(t.partition.client_size(k));
  return t;
}

std::vector<Superclient> singletons(const std::vector<std::size_t>& sizes) {
  std::vector<Superclient> out;
  for (std::size_t k = 0; k < sizes.size(); ++k) out.push_back({k, {k}, sizes[k], false});
  return out;
}

std::vector<Superclient> chunks(const std::vector<std::size_t>& sizes, std::size_t per) {
  std::vector<Superclient> out;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (k % per == 0) out.push_back({out.size(), {}, 0, false});
    out.back().clients.push_back(k);
    out.back().num_samples += sizes[k];
  }
  return out;
}

FedSeqConfig base_config() {
  FedSeqConfig cfg;
  cfg.rounds = 8;
  cfg.fraction = 0.5;
  cfg.hyper.lr = 0.05;
  cfg.hyper.batch_size = 8;
  cfg.seed = 3;
  return cfg;
}

double max_diff(const ParamVector& a, const ParamVector& b) { return (a.values() - b.values()).cwiseAbs().maxCoeff(); }

TEST(SeqChain, SingletonEqualsLocalTrain) {
  const auto t = toy(4, 0.0, 1);
  const auto cfg = base_config();
  const Superclient sc{2, {2}, t.sizes[2], false};
  const auto chain = sequential_train_superclient(t.theta0, sc, t.spec, t.split.train, t.partition, cfg, 5);
  const auto direct = local_train(t.theta0, t.spec, t.split.train, t.partition.clients[2], 1, PlainObjective{},
                                  cfg.hyper, client_stream_seed(cfg.seed, 2, 5), 2);
  EXPECT_EQ(chain.params.values(), direct.params.values());
  EXPECT_EQ(chain.n, t.sizes[2]);
  EXPECT_EQ(chain.id, 2u);
}

TEST(SeqChain, TwoIdenticalClientsEqualDoubleEpochs) {
  auto t = toy(4, 0.0, 2);
  t.partition.clients[1] = t.partition.clients[0];
  auto cfg = base_config();
  cfg.hyper.batch_size = 1000;  // full batch, so the two clients' shuffles cannot matter
  cfg.hyper.momentum = 0.0;
  cfg.local_epochs = 3;
  const Superclient sc{0, {0, 1}, 2 * t.partition.client_size(0), false};
  const auto chain = sequential_train_superclient(t.theta0, sc, t.spec, t.split.train, t.partition, cfg, 0);
  const auto direct = local_train(t.theta0, t.spec, t.split.train, t.partition.clients[0], 6, PlainObjective{},
                                  cfg.hyper, 0);
  EXPECT_LT(max_diff(chain.params, direct.params), 1e-12);
}

TEST(SeqChain, ProxWithZeroMuEqualsPlain) {
  const auto t = toy(6, 0.5, 3);
  auto cfg = base_config();
  const Superclient sc{0, {0, 3, 5}, t.sizes[0] + t.sizes[3] + t.sizes[5], false};
  cfg.superclient_epochs = 2;
  const auto plain = sequential_train_superclient(t.theta0, sc, t.spec, t.split.train, t.partition, cfg, 1);
  cfg.objective = ObjectiveKind::prox;
  cfg.mu = 0.0;
  const auto prox = sequential_train_superclient(t.theta0, sc, t.spec, t.split.train, t.partition, cfg, 1);
  EXPECT_EQ(plain.params.values(), prox.params.values());
}

TEST(SeqChain, ManualComposition) {
  const auto t = toy(6, 0.5, 4);
  auto cfg = base_config();
  cfg.superclient_epochs = 2;
  const Superclient sc{1, {1, 2, 4}, t.sizes[1] + t.sizes[2] + t.sizes[4], false};
  const auto order = superclient_order(sc, cfg.seed, 7);
  EXPECT_TRUE(std::is_permutation(order.begin(), order.end(), sc.clients.begin()));
  ParamVector model = t.theta0;
  for (std::size_t pass = 0; pass < 2; ++pass)
    for (auto k : order)
      model = local_train(model, t.spec, t.split.train, t.partition.clients[k], 1, PlainObjective{}, cfg.hyper,
                          client_stream_seed(cfg.seed, k, 7, pass), k)
                  .params;
  const auto chain = sequential_train_superclient(t.theta0, sc, t.spec, t.split.train, t.partition, cfg, 7);
  EXPECT_EQ(chain.params.values(), model.values());
}

TEST(SeqChain, DynRequiresMemories) {
  const auto t = toy(4, 0.0, 5);
  auto cfg = base_config();
  cfg.objective = ObjectiveKind::dyn;
  const Superclient sc{0, {0, 1}, t.sizes[0] + t.sizes[1], false};
  EXPECT_THROW(sequential_train_superclient(t.theta0, sc, t.spec, t.split.train, t.partition, cfg, 0),
               InvalidArgument);
  GradMemories mem(4);
  sequential_train_superclient(t.theta0, sc, t.spec, t.split.train, t.partition, cfg, 0, &mem);
  EXPECT_TRUE(mem[0].has_value());
  EXPECT_TRUE(mem[1].has_value());
  EXPECT_FALSE(mem[2].has_value());
}

TEST(SeqRun, SingletonsReduceToFedAvg) {
  const auto t = toy(5, 0.5, 6);
  auto cfg = base_config();
  cfg.rounds = 20;
  cfg.fraction = 0.4;
  const auto seq = fedseq_run(cfg, t.spec, t.split.train, t.partition, singletons(t.sizes), t.split.test, t.theta0);
  const auto avg = federated_run(cfg, t.spec, t.split.train, t.partition, t.split.test, t.theta0);
  ASSERT_EQ(seq.rounds.size(), avg.rounds.size());
  EXPECT_LE(max_diff(seq.final_params, avg.final_params), 1e-12);
  EXPECT_EQ(seq.accuracies(), avg.accuracies());
}

TEST(SeqRun, OneSingletonFullParticipationIsOneClientFedAvg) {
  const auto t = toy(1, 0.5, 7);
  auto cfg = base_config();
  cfg.fraction = 1.0;
  const auto seq = fedseq_run(cfg, t.spec, t.split.train, t.partition, singletons(t.sizes), t.split.test, t.theta0);
  const auto avg = federated_run(cfg, t.spec, t.split.train, t.partition, t.split.test, t.theta0);
  EXPECT_EQ(seq.final_params.values(), avg.final_params.values());
}

TEST(SeqRun, ZeroLearningRateKeepsTheta) {
  const auto t = toy(6, 0.0, 8);
  auto cfg = base_config();
  cfg.fraction = 1.0;
  cfg.hyper.lr = 0.0;
  const auto h = fedseq_run(cfg, t.spec, t.split.train, t.partition, chunks(t.sizes, 2), t.split.test, t.theta0);
  EXPECT_LT(max_diff(h.final_params, t.theta0), 1e-15);
  for (const auto& r : h.rounds) EXPECT_EQ(r.test_accuracy, h.rounds.front().test_accuracy);
}

TEST(SeqRun, EquivalentRoundsAndDeterminism) {
  const auto t = toy(8, 0.0, 9);
  auto cfg = base_config();
  cfg.superclient_epochs = 3;
  const auto groups = chunks(t.sizes, 2);
  const auto a = fedseq_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0);
  for (const auto& r : a.rounds) EXPECT_EQ(r.equivalent_round, static_cast<double>(r.round) / 3.0);
  const auto b = fedseq_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0);
  EXPECT_EQ(a.final_params.values(), b.final_params.values());
  EXPECT_EQ(a.accuracies(), b.accuracies());
  cfg.threads = 4;
  const auto c = fedseq_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0);
  EXPECT_EQ(a.final_params.values(), c.final_params.values());
}

TEST(SeqRun, ProxAndDynVariantsRun) {
  const auto t = toy(8, 0.0, 10);
  auto cfg = base_config();
  cfg.objective = ObjectiveKind::prox;
  const auto groups = chunks(t.sizes, 2);
  EXPECT_EQ(fedseq_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0).rounds.size(), 8u);
  cfg.objective = ObjectiveKind::dyn;
  cfg.aggregation = AggregationKind::feddyn;
  const auto dyn = fedseq_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0);
  EXPECT_EQ(dyn.rounds.size(), 8u);
  EXPECT_TRUE(dyn.final_params.all_finite());
}

TEST(InterRun, BookkeepingTrace) {
  const auto t = toy(6, 0.0, 11);
  auto cfg = base_config();
  cfg.rounds = 7;
  cfg.fraction = 0.5;  // 3 superclients -> 2 slots
  const auto groups = chunks(t.sizes, 2);
  ASSERT_EQ(groups.size(), 3u);

  std::vector<double> expected_weights(2, 0.0);
  std::size_t checked = 0;
  const auto observer = [&](std::size_t round, const InterState& s, const std::vector<std::size_t>& sampled) {
    ASSERT_EQ(s.slots.size(), 2u);
    ASSERT_EQ(sampled.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) expected_weights[i] += static_cast<double>(groups[sampled[i]].num_samples);
    EXPECT_EQ(s.weights, expected_weights) << "round " << round;
    EXPECT_EQ(s.rounds_since_aggregation, round == 0 ? 1u : (round - 1) % 3 + 1) << "round " << round;
    if (round % 3 == 0) std::fill(expected_weights.begin(), expected_weights.end(), 0.0);
    ++checked;
  };
  const auto h = fedseqinter_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0, observer);
  EXPECT_EQ(checked, 7u);
  const std::vector<bool> flags{true, false, false, true, false, false, true};
  for (std::size_t r = 0; r < 7; ++r) EXPECT_EQ(h.rounds[r].aggregated, flags[r]) << "round " << r;
}

TEST(InterRun, SlotsRestartFromAggregateAfterReset) {
  const auto t = toy(6, 0.0, 12);
  auto cfg = base_config();
  cfg.rounds = 2;
  const auto groups = chunks(t.sizes, 2);
  std::vector<InterState> seen;
  std::vector<std::vector<std::size_t>> picks;
  const auto observer = [&](std::size_t, const InterState& s, const std::vector<std::size_t>& sampled) {
    seen.push_back(s);
    picks.push_back(sampled);
  };
  fedseqinter_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0, observer);
  ASSERT_EQ(seen.size(), 2u);
  // round 0 aggregates; every round-1 slot must have started from that aggregate
  const auto aggregate = seen[0].weighted_average();
  for (std::size_t i = 0; i < 2; ++i) {
    const auto expected =
        sequential_train_superclient(aggregate, groups[picks[1][i]], t.spec, t.split.train, t.partition, cfg, 1);
    EXPECT_EQ(seen[1].slots[i].values(), expected.params.values()) << "slot " << i;
    EXPECT_EQ(seen[1].weights[i], static_cast<double>(groups[picks[1][i]].num_samples));
  }
}

TEST(InterRun, SingleSuperclientFullParticipationEqualsFedSeq) {
  const auto t = toy(4, 0.0, 13);
  auto cfg = base_config();
  cfg.fraction = 1.0;
  const auto groups = chunks(t.sizes, 4);
  ASSERT_EQ(groups.size(), 1u);
  const auto seq = fedseq_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0);
  const auto inter = fedseqinter_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0);
  EXPECT_LE(max_diff(seq.final_params, inter.final_params), 1e-12);
  EXPECT_EQ(seq.accuracies(), inter.accuracies());
  for (const auto& r : inter.rounds) EXPECT_TRUE(r.aggregated);
}

TEST(InterRun, ThreadsAndFedDynRejection) {
  const auto t = toy(8, 0.0, 14);
  auto cfg = base_config();
  const auto groups = chunks(t.sizes, 2);
  const auto a = fedseqinter_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0);
  cfg.threads = 3;
  const auto b = fedseqinter_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0);
  EXPECT_EQ(a.final_params.values(), b.final_params.values());
  EXPECT_EQ(a.accuracies(), b.accuracies());
  cfg.aggregation = AggregationKind::feddyn;
  EXPECT_THROW(fedseqinter_run(cfg, t.spec, t.split.train, t.partition, groups, t.split.test, t.theta0),
               InvalidArgument);
}

}  // namespace
}  // namespace fedseq
