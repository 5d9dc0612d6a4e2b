#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "gtest/gtest.h"
#include "fedseq/grouping.hpp"
#include "test_util.hpp"

namespace fedseq {
namespace {

VectorXd one_hot(Eigen::Index n, Eigen::Index c) {
  VectorXd v = VectorXd::Zero(n);
  v(c) = 1.0;
  return v;
}

struct OracleSetup {
  LabeledDataset data;
  ClientPartition partition;
  DistributionEstimate estimate;
  std::vector<std::size_t> sizes;
};

OracleSetup oracle_setup(std::size_t classes, std::size_t clients, std::size_t per_class, std::uint64_t seed) {
  OracleSetup s;
  s.data = testing_util::label_dataset(classes, per_class);
  s.partition = dirichlet_partition(s.data, clients, 0.0, seed);
  s.estimate = oracle_estimate(s.partition, s.data);
  for (std::size_t k = 0; k < clients; ++k) s.sizes.push_back(s.partition.client_size(k));
  return s;
}

TEST(GroupingTau, HandValues) {
  const VectorXd a = one_hot(3, 0), b = one_hot(3, 1);
  EXPECT_NEAR(tau(a, b, Metric::wasserstein), 1.0, 1e-15);
  EXPECT_NEAR(tau(a, b, Metric::euclidean), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(tau(a, b, Metric::cosine), 1.0, 1e-15);
  EXPECT_NEAR(tau(a, one_hot(3, 2), Metric::wasserstein), 2.0, 1e-15);
  const VectorXd u = VectorXd::Constant(5, 0.2);
  EXPECT_NEAR(tau(u, u, Metric::gini), 1.0 - 1.0 / 5.0, 1e-15);
  EXPECT_NEAR(tau(a, b, Metric::gini), 0.5, 1e-15);
  for (auto m : {Metric::cosine, Metric::euclidean, Metric::wasserstein, Metric::kl})
    EXPECT_NEAR(tau(u, u, m), 0.0, 1e-15) << to_string(m);
  // KL direction: KL(a||b) with a uniform over {0,1} and b concentrated
  const VectorXd half = (VectorXd(2) << 0.5, 0.5).finished();
  const VectorXd skew = (VectorXd(2) << 0.9, 0.1).finished();
  EXPECT_NEAR(tau(half, skew, Metric::kl), 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1), 1e-8);
}

TEST(GroupingTau, EmbeddingVariants) {
  const VectorXd a = (VectorXd(3) << 3.0, -1.0, 2.0).finished();
  const VectorXd b = (VectorXd(3) << 0.0, 1.0, 2.0).finished();
  // sorted: (-1,2,3) vs (0,1,2)
  EXPECT_NEAR(tau(a, b, Metric::wasserstein, EstimateKind::classifier_embedding), 1.0, 1e-15);
  EXPECT_THROW(tau(a, b, Metric::kl, EstimateKind::classifier_embedding), InvalidArgument);
  EXPECT_THROW(tau(a, b, Metric::gini, EstimateKind::classifier_embedding), InvalidArgument);
  EXPECT_THROW(tau(a, VectorXd::Zero(3), Metric::cosine), InvalidArgument);
  EXPECT_THROW(tau(a, VectorXd::Zero(2), Metric::euclidean), ShapeError);
}

TEST(GroupingKMeans, SeparatesBlobs) {
  RowMatrixXd pts(30, 2);
  Rng rng(3);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (Eigen::Index i = 0; i < 30; ++i) {
    const double cx = static_cast<double>(i % 3) * 10.0;
    pts(i, 0) = cx + noise(rng);
    pts(i, 1) = noise(rng);
  }
  const auto km = kmeans(pts, 3, 1);
  for (Eigen::Index i = 3; i < 30; ++i)
    EXPECT_EQ(km.assignment[static_cast<std::size_t>(i)], km.assignment[static_cast<std::size_t>(i % 3)]);
  std::set<std::size_t> labels(km.assignment.begin(), km.assignment.end());
  EXPECT_EQ(labels.size(), 3u);
}

TEST(GroupingKMeans, KEqualsNGivesZeroSse) {
  RowMatrixXd pts(6, 2);
  for (Eigen::Index i = 0; i < 6; ++i) pts.row(i) << static_cast<double>(i), static_cast<double>(i * i);
  const auto km = kmeans(pts, 6, 2);
  EXPECT_NEAR(km.sse_history.back(), 0.0, 1e-24);
  std::set<std::size_t> labels(km.assignment.begin(), km.assignment.end());
  EXPECT_EQ(labels.size(), 6u);
}

TEST(GroupingKMeans, SseNeverIncreases) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    std::normal_distribution<double> n01;
    RowMatrixXd pts(80, 4);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = n01(rng);
    const auto km = kmeans(pts, 5, seed);
    for (std::size_t i = 1; i < km.sse_history.size(); ++i)
      EXPECT_LE(km.sse_history[i], km.sse_history[i - 1] + 1e-9);
  }
}

TEST(GroupingRandom, FixedSizeGroups) {
  const std::vector<std::size_t> sizes(10, 100);
  GroupingConfig cfg;
  cfg.min_samples = 300;
  cfg.max_clients = 11;
  const auto groups = phi_random(sizes, cfg);
  validate_superclients(groups, sizes);
  ASSERT_EQ(groups.size(), 4u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(groups[i].clients.size(), 3u);
    EXPECT_EQ(groups[i].num_samples, 300u);
    EXPECT_FALSE(groups[i].undersized);
  }
  EXPECT_EQ(groups[3].clients.size(), 1u);
  EXPECT_TRUE(groups[3].undersized);
}

TEST(GroupingRandom, MaxOneClientGivesSingletons) {
  const std::vector<std::size_t> sizes{5, 7, 9, 11};
  GroupingConfig cfg;
  cfg.min_samples = 1000;
  cfg.max_clients = 1;
  const auto groups = phi_random(sizes, cfg);
  ASSERT_EQ(groups.size(), 4u);
  for (const auto& g : groups) {
    EXPECT_EQ(g.clients.size(), 1u);
    EXPECT_EQ(g.num_samples, sizes[g.clients[0]]);
  }
}

TEST(GroupingKMeansStrategy, OracleGroupsCoverAllClasses) {
  const auto s = oracle_setup(10, 100, 100, 4);
  GroupingConfig cfg;
  cfg.method = GroupingMethod::kmeans;
  cfg.min_samples = 100;  // 10 clients of 10 samples
  cfg.max_clients = 10;
  const auto groups = phi_kmeans(s.estimate, s.sizes, cfg, 10);
  validate_superclients(groups, s.sizes);
  const auto q = grouping_quality(groups, s.partition, s.data);
  EXPECT_EQ(q.mean_covered, 1.0);
  EXPECT_EQ(q.mean_balance, 1.0);
}

TEST(GroupingGreedy, TwoClientsFarthestJoins) {
  DistributionEstimate est;
  est.rows.resize(3, 3);
  est.rows.row(0) = one_hot(3, 0).transpose();
  est.rows.row(1) = one_hot(3, 0).transpose();
  est.rows.row(2) = one_hot(3, 1).transpose();
  const std::vector<std::size_t> sizes{1, 1, 1};
  GroupingConfig cfg;
  cfg.metric = Metric::cosine;
  cfg.min_samples = 2;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cfg.seed = seed;
    const auto groups = phi_greedy(est, sizes, cfg);
    validate_superclients(groups, sizes);
    const auto& first = groups[0].clients;
    ASSERT_EQ(first.size(), 2u);
    if (first[0] == 2) {
      EXPECT_EQ(first[1], 0u);  // tie between 0 and 1 goes to the lower id
    } else {
      EXPECT_EQ(first[1], 2u);
    }
  }
}

// wasserstein is left out: on class-index CDFs it keeps choosing the extreme labels
TEST(GroupingGreedy, BeatsRandomOnBalance) {
  for (auto metric : {Metric::cosine, Metric::kl, Metric::euclidean, Metric::gini}) {
    std::size_t wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto s = oracle_setup(10, 100, 100, seed);
      GroupingConfig cfg;
      cfg.metric = metric;
      cfg.seed = seed;
      cfg.min_samples = 100;
      cfg.max_clients = 10;
      const auto greedy = grouping_quality(phi_greedy(s.estimate, s.sizes, cfg), s.partition, s.data);
      const auto random = grouping_quality(phi_random(s.sizes, cfg), s.partition, s.data);
      wins += greedy.mean_balance > random.mean_balance ? 1 : 0;
    }
    EXPECT_GE(wins, 8u) << to_string(metric);
  }
}

TEST(GroupingGroupClients, AllMethodsPartitionClients) {
  const auto s = oracle_setup(5, 37, 40, 1);
  for (auto method : {GroupingMethod::random, GroupingMethod::kmeans, GroupingMethod::greedy}) {
    GroupingConfig cfg;
    cfg.method = method;
    cfg.min_samples = 23;
    cfg.max_clients = 4;
    const auto groups = group_clients(s.estimate, s.sizes, cfg, 5);
    EXPECT_NO_THROW(validate_superclients(groups, s.sizes)) << to_string(method);
    for (std::size_t i = 0; i < groups.size(); ++i) {
      EXPECT_EQ(groups[i].id, i);
      EXPECT_LE(groups[i].clients.size(), 4u);
    }
    const auto again = group_clients(s.estimate, s.sizes, cfg, 5);
    ASSERT_EQ(again.size(), groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) EXPECT_EQ(again[i].clients, groups[i].clients);
  }
}

TEST(GroupingValidate, RejectsBadGroupings) {
  const std::vector<std::size_t> sizes{2, 3, 4};
  EXPECT_THROW(validate_superclients(std::vector<Superclient>{{0, {0, 1}, 5, false}}, sizes), InvalidArgument);
  EXPECT_THROW(validate_superclients(std::vector<Superclient>{{0, {0, 1}, 5, false}, {1, {1, 2}, 7, false}}, sizes),
               InvalidArgument);
  EXPECT_THROW(validate_superclients(std::vector<Superclient>{{0, {0, 1, 2}, 8, false}}, sizes), InvalidArgument);
  EXPECT_NO_THROW(validate_superclients(std::vector<Superclient>{{0, {2, 0}, 6, false}, {1, {1}, 3, false}}, sizes));
}

TEST(GroupingQualityMeasures, BalanceAndCoverage) {
  const std::vector<std::size_t> counts{10, 20, 40};
  EXPECT_DOUBLE_EQ(balance_ratio(counts), 0.25);
  EXPECT_EQ(balance_ratio(std::vector<std::size_t>{5, 0, 5}), 0.0);
  EXPECT_DOUBLE_EQ(covered_classes(std::vector<std::size_t>{5, 0, 5, 0}), 0.5);
  EXPECT_EQ(covered_classes(counts), 1.0);

  const auto ds = testing_util::label_dataset(3, 10);
  ClientPartition p;
  p.clients = {{0, 1}, {10}, {20, 21, 22, 23}};
  const Superclient sc{0, {0, 1, 2}, 7, false};
  EXPECT_EQ(superclient_class_counts(sc, p, ds), (std::vector<std::size_t>{2, 1, 4}));
  const auto q = grouping_quality(std::vector<Superclient>{sc}, p, ds);
  EXPECT_DOUBLE_EQ(q.mean_balance, 0.25);
}

TEST(GroupingNames, RoundTripAndErrors) {
  for (auto m : {Metric::cosine, Metric::euclidean, Metric::wasserstein, Metric::kl, Metric::gini})
    EXPECT_EQ(parse_metric(to_string(m)), m);
  for (auto g : {GroupingMethod::random, GroupingMethod::kmeans, GroupingMethod::greedy})
    EXPECT_EQ(parse_grouping_method(to_string(g)), g);
  EXPECT_THROW(parse_metric("manhattan"), ConfigError);
  EXPECT_THROW(parse_grouping_method("spectral"), ConfigError);
}

}  // namespace
}  // namespace fedseq
