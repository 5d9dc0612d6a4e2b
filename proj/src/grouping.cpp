#include "fedseq/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace fedseq {

namespace {

VectorXd smoothed(const VectorXd& p) {
  VectorXd q = p.array() + kKlSmoothing;
  return q / q.sum();
}

}  // namespace

double tau(const VectorXd& a, const VectorXd& b, Metric metric, EstimateKind kind) {
  if (a.size() != b.size()) throw ShapeError("tau: estimate rows differ in length");
  if (a.size() == 0) throw ShapeError("tau: empty estimate rows");
  const bool simplex = kind == EstimateKind::confidence;
  switch (metric) {
    case Metric::cosine: {
      const double na = a.norm(), nb = b.norm();
      if (!(na > 0.0) || !(nb > 0.0)) throw InvalidArgument("cosine distance of a zero-norm vector");
      return std::max(0.0, 1.0 - a.dot(b) / (na * nb));
    }
    case Metric::euclidean:
      return (a - b).norm();
    case Metric::wasserstein: {
      if (simplex) {
        double ca = 0.0, cb = 0.0, w = 0.0;
        for (Eigen::Index c = 0; c < a.size(); ++c) {
          ca += a(c);
          cb += b(c);
          w += std::abs(ca - cb);
        }
        return w;
      }
      std::vector<double> sa(a.data(), a.data() + a.size()), sb(b.data(), b.data() + b.size());
      std::sort(sa.begin(), sa.end());
      std::sort(sb.begin(), sb.end());
      double w = 0.0;
      for (std::size_t i = 0; i < sa.size(); ++i) w += std::abs(sa[i] - sb[i]);
      return w / static_cast<double>(sa.size());
    }
    case Metric::kl: {
      if (!simplex) throw InvalidArgument("KL divergence needs confidence-vector estimates");
      const VectorXd p = smoothed(a), q = smoothed(b);
      return std::max(0.0, (p.array() * (p.array() / q.array()).log()).sum());
    }
    case Metric::gini: {
      if (!simplex) throw InvalidArgument("Gini index needs confidence-vector estimates");
      const VectorXd m = 0.5 * a + 0.5 * b;
      return 1.0 - m.squaredNorm();
    }
  }
  throw InvalidArgument("unknown metric");
}

namespace {

class Builder {
 public:
  Builder(std::span<const std::size_t> sizes, const GroupingConfig& config) : sizes_(sizes), config_(config) {
    if (config.min_samples == 0) throw InvalidArgument("min_samples must be >= 1");
    if (config.max_clients == 0) throw InvalidArgument("max_clients must be >= 1");
  }

  bool open() const {
    return current_.num_samples < config_.min_samples && current_.clients.size() < config_.max_clients;
  }
  bool empty() const { return current_.clients.empty(); }

  void add(std::size_t client) {
    current_.clients.push_back(client);
    current_.num_samples += sizes_[client];
  }

  void close() {
    current_.id = out_.size();
    current_.undersized = open();
    out_.push_back(std::move(current_));
    current_ = {};
  }

  std::vector<Superclient> finish() { return std::move(out_); }

 private:
  std::span<const std::size_t> sizes_;
  const GroupingConfig& config_;
  Superclient current_;
  std::vector<Superclient> out_;
};

std::size_t take_random(std::vector<std::size_t>& pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const auto pos = pool.begin() + static_cast<std::ptrdiff_t>(pick(rng));
  const std::size_t id = *pos;
  pool.erase(pos);
  return id;
}

}  // namespace

std::vector<Superclient> phi_random(std::span<const std::size_t> client_sizes, const GroupingConfig& config) {
  Builder b(client_sizes, config);
  std::vector<std::size_t> order(client_sizes.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed({config.seed, stream::grouping, 1}));
  std::shuffle(order.begin(), order.end(), rng);
  for (auto k : order) {
    b.add(k);
    if (!b.open()) b.close();
  }
  if (!b.empty()) b.close();
  return b.finish();
}

std::vector<Superclient> phi_kmeans(const DistributionEstimate& estimates, std::span<const std::size_t> client_sizes,
                                    const GroupingConfig& config, std::size_t num_classes) {
  const std::size_t n = estimates.num_clients();
  if (n != client_sizes.size()) throw ShapeError("estimate rows do not match client count");
  const std::size_t clusters = std::min(num_classes, n);
  const auto km = kmeans(estimates.rows, clusters, config.seed);

  std::vector<std::vector<std::size_t>> pools(clusters);
  for (std::size_t k = 0; k < n; ++k) pools[km.assignment[k]].push_back(k);

  Rng rng(derive_seed({config.seed, stream::grouping, 2}));
  Builder b(client_sizes, config);
  std::size_t remaining = n;
  std::size_t j = 0;
  while (remaining > 0) {
    while (b.open() && remaining > 0) {
      while (pools[j].empty()) j = (j + 1) % clusters;
      b.add(take_random(pools[j], rng));
      --remaining;
      j = (j + 1) % clusters;
    }
    b.close();
  }
  return b.finish();
}

std::vector<Superclient> phi_greedy(const DistributionEstimate& estimates, std::span<const std::size_t> client_sizes,
                                    const GroupingConfig& config) {
  const std::size_t n = estimates.num_clients();
  if (n != client_sizes.size()) throw ShapeError("estimate rows do not match client count");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<VectorXd> rows(n);
  for (std::size_t k = 0; k < n; ++k) rows[k] = estimates.rows.row(static_cast<Eigen::Index>(k)).transpose();

  Rng rng(derive_seed({config.seed, stream::grouping, 3}));
  Builder b(client_sizes, config);
  while (!pool.empty()) {
    const std::size_t first = take_random(pool, rng);
    b.add(first);
    VectorXd running = rows[first];
    while (b.open() && !pool.empty()) {
      // pool stays sorted, so strict '>' keeps the lowest id on ties
      std::size_t best_pos = 0;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < pool.size(); ++p) {
        const double d = tau(rows[pool[p]], running, config.metric, estimates.kind);
        if (d > best) {
          best = d;
          best_pos = p;
        }
      }
      const std::size_t chosen = pool[best_pos];
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best_pos));
      running = 0.5 * running + 0.5 * rows[chosen];
      b.add(chosen);
    }
    b.close();
  }
  return b.finish();
}

std::vector<Superclient> group_clients(const DistributionEstimate& estimates, std::span<const std::size_t> client_sizes,
                                       const GroupingConfig& config, std::size_t num_classes) {
  switch (config.method) {
    case GroupingMethod::random:
      return phi_random(client_sizes, config);
    case GroupingMethod::kmeans:
      return phi_kmeans(estimates, client_sizes, config, num_classes);
    case GroupingMethod::greedy:
      return phi_greedy(estimates, client_sizes, config);
  }
  throw InvalidArgument("unknown grouping method");
}

void validate_superclients(std::span<const Superclient> superclients, std::span<const std::size_t> client_sizes) {
  std::vector<char> seen(client_sizes.size(), 0);
  for (const auto& sc : superclients) {
    if (sc.clients.empty()) throw InvalidArgument("superclient " + std::to_string(sc.id) + " is empty");
    std::size_t total = 0;
    for (auto k : sc.clients) {
      if (k >= client_sizes.size()) throw InvalidArgument("superclient references unknown client " + std::to_string(k));
      if (seen[k]) throw InvalidArgument("client " + std::to_string(k) + " appears in two superclients");
      seen[k] = 1;
      total += client_sizes[k];
    }
    if (total != sc.num_samples) throw InvalidArgument("superclient " + std::to_string(sc.id) + " sample total is stale");
  }
  for (std::size_t k = 0; k < seen.size(); ++k)
    if (!seen[k]) throw InvalidArgument("client " + std::to_string(k) + " belongs to no superclient");
}

std::vector<std::size_t> superclient_class_counts(const Superclient& sc, const ClientPartition& partition,
                                                  const LabeledDataset& dataset) {
  std::vector<std::size_t> counts(dataset.num_classes, 0);
  for (auto k : sc.clients)
    for (auto i : partition.clients.at(k)) ++counts[static_cast<std::size_t>(dataset.labels[i])];
  return counts;
}

double balance_ratio(std::span<const std::size_t> class_counts) {
  if (class_counts.empty()) throw InvalidArgument("balance ratio of an empty histogram");
  const auto [lo, hi] = std::minmax_element(class_counts.begin(), class_counts.end());
  if (*hi == 0) throw InvalidArgument("balance ratio of an empty superclient");
  return static_cast<double>(*lo) / static_cast<double>(*hi);
}

double covered_classes(std::span<const std::size_t> class_counts) {
  if (class_counts.empty()) throw InvalidArgument("covered classes of an empty histogram");
  const auto present = std::count_if(class_counts.begin(), class_counts.end(), [](std::size_t c) { return c > 0; });
  return static_cast<double>(present) / static_cast<double>(class_counts.size());
}

GroupingQuality grouping_quality(std::span<const Superclient> superclients, const ClientPartition& partition,
                                 const LabeledDataset& dataset) {
  GroupingQuality q;
  for (const auto& sc : superclients) {
    const auto counts = superclient_class_counts(sc, partition, dataset);
    q.balance.push_back(balance_ratio(counts));
    q.covered.push_back(covered_classes(counts));
  }
  if (!superclients.empty()) {
    q.mean_balance = std::accumulate(q.balance.begin(), q.balance.end(), 0.0) / static_cast<double>(q.balance.size());
    q.mean_covered = std::accumulate(q.covered.begin(), q.covered.end(), 0.0) / static_cast<double>(q.covered.size());
  }
  return q;
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::cosine: return "cosine";
    case Metric::euclidean: return "euclidean";
    case Metric::wasserstein: return "wasserstein";
    case Metric::kl: return "kl";
    case Metric::gini: return "gini";
  }
  return "?";
}

std::string to_string(GroupingMethod m) {
  switch (m) {
    case GroupingMethod::random: return "random";
    case GroupingMethod::kmeans: return "kmeans";
    case GroupingMethod::greedy: return "greedy";
  }
  return "?";
}

Metric parse_metric(const std::string& s) {
  for (auto m : {Metric::cosine, Metric::euclidean, Metric::wasserstein, Metric::kl, Metric::gini})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown metric '" + s + "' (valid: cosine, euclidean, wasserstein, kl, gini)");
}

GroupingMethod parse_grouping_method(const std::string& s) {
  for (auto m : {GroupingMethod::random, GroupingMethod::kmeans, GroupingMethod::greedy})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown grouping method '" + s + "' (valid: random, kmeans, greedy)");
}

}  // namespace fedseq
