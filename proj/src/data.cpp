#include "fedseq/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace fedseq {

void LabeledDataset::validate() const {
  if (num_classes < 2) throw InvalidArgument("dataset needs at least two classes");
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw ShapeError("dataset has " + std::to_string(inputs.rows()) + " rows but " + std::to_string(labels.size()) +
                     " labels");
  }
  if (size() < num_classes) throw InvalidArgument("dataset smaller than its class count");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw InvalidArgument("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                            " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Batch LabeledDataset::gather(std::span<const std::size_t> indices) const {
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(indices.size()), inputs.cols());
  b.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    b.inputs.row(static_cast<Eigen::Index>(r)) = inputs.row(static_cast<Eigen::Index>(indices[r]));
    b.labels.push_back(labels[indices[r]]);
  }
  return b;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  auto b = gather(indices);
  return {std::move(b.inputs), std::move(b.labels), num_classes};
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

std::vector<std::vector<std::size_t>> LabeledDataset::indices_by_class() const {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  return by_class;
}

std::vector<std::size_t> ClientPartition::sizes() const {
  std::vector<std::size_t> s;
  s.reserve(clients.size());
  for (const auto& c : clients) s.push_back(c.size());
  return s;
}

std::size_t ClientPartition::total() const {
  std::size_t t = 0;
  for (const auto& c : clients) t += c.size();
  return t;
}

void ClientPartition::validate(std::size_t n) const {
  std::vector<char> seen(n, 0);
  for (std::size_t k = 0; k < clients.size(); ++k) {
    if (clients[k].empty()) throw InvalidArgument("client " + std::to_string(k) + " is empty");
    for (auto i : clients[k]) {
      if (i >= n) throw InvalidArgument("client " + std::to_string(k) + " references index " + std::to_string(i));
      if (seen[i]) throw InvalidArgument("index " + std::to_string(i) + " assigned twice");
      seen[i] = 1;
    }
  }
}

std::vector<std::size_t> client_class_counts(const ClientPartition& partition, const LabeledDataset& dataset,
                                             std::size_t client) {
  std::vector<std::size_t> counts(dataset.num_classes, 0);
  for (auto i : partition.clients.at(client)) ++counts[static_cast<std::size_t>(dataset.labels[i])];
  return counts;
}

std::vector<double> client_label_entropy(const ClientPartition& partition, const LabeledDataset& dataset) {
  std::vector<double> out;
  for (std::size_t k = 0; k < partition.num_clients(); ++k) {
    const auto counts = client_class_counts(partition, dataset, k);
    const double n = static_cast<double>(partition.client_size(k));
    double h = 0.0;
    for (auto c : counts) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
    out.push_back(h);
  }
  return out;
}

namespace {

ClientPartition single_class_partition(const LabeledDataset& dataset, std::size_t num_clients, Rng& rng) {
  const std::size_t nc = dataset.num_classes;
  std::vector<std::size_t> class_order(nc);
  std::iota(class_order.begin(), class_order.end(), 0);
  std::shuffle(class_order.begin(), class_order.end(), rng);

  std::vector<std::vector<std::size_t>> owners(nc);
  for (std::size_t k = 0; k < num_clients; ++k) owners[class_order[k % nc]].push_back(k);

  auto pools = dataset.indices_by_class();
  ClientPartition part;
  part.clients.resize(num_clients);
  for (std::size_t c = 0; c < nc; ++c) {
    const auto& who = owners[c];
    if (who.empty()) continue;
    auto& pool = pools[c];
    if (pool.size() < who.size()) {
      throw InvalidArgument("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                            " samples for " + std::to_string(who.size()) + " clients");
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t base = pool.size() / who.size();
    const std::size_t extra = pool.size() % who.size();
    std::size_t pos = 0;
    for (std::size_t j = 0; j < who.size(); ++j) {
      const std::size_t take = base + (j < extra ? 1 : 0);
      auto& dst = part.clients[who[j]];
      dst.assign(pool.begin() + static_cast<std::ptrdiff_t>(pos), pool.begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;
    }
  }
  return part;
}

std::vector<double> sample_dirichlet(double alpha, std::size_t dim, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> q(dim);
  double sum = 0.0;
  for (auto& v : q) sum += (v = gamma(rng));
  if (sum > 0.0 && std::isfinite(sum)) {
    for (auto& v : q) v /= sum;
  } else {
    // every draw underflowed: the limit of Dirichlet(alpha -> 0) is a vertex
    std::fill(q.begin(), q.end(), 0.0);
    q[std::uniform_int_distribution<std::size_t>(0, dim - 1)(rng)] = 1.0;
  }
  return q;
}

// Splits `quota` over classes in proportion to q (largest remainder), capped
// by what is left in each pool. Shortfalls from exhausted classes move to the
// remaining classes, by q where it has mass there and by pool size otherwise.
std::vector<std::size_t> allocate_counts(const std::vector<double>& q, const std::vector<std::vector<std::size_t>>& pools,
                                         std::size_t quota) {
  const std::size_t nc = q.size();
  std::vector<std::size_t> counts(nc, 0);
  std::size_t remaining = quota;
  while (remaining > 0) {
    std::vector<double> weight(nc, 0.0);
    double mass = 0.0;
    for (std::size_t c = 0; c < nc; ++c)
      if (counts[c] < pools[c].size()) mass += (weight[c] = q[c]);
    if (!(mass > 0.0)) {
      for (std::size_t c = 0; c < nc; ++c) {
        weight[c] = static_cast<double>(pools[c].size() - counts[c]);
        mass += weight[c];
      }
    }
    if (!(mass > 0.0)) throw InvalidArgument("dataset exhausted before every client quota was filled");
    std::vector<std::size_t> add(nc, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < nc; ++c) {
      if (weight[c] <= 0.0) continue;
      const double exact = static_cast<double>(remaining) * weight[c] / mass;
      add[c] = static_cast<std::size_t>(std::floor(exact));
      assigned += add[c];
      remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < remaining && i < remainders.size(); ++i, ++assigned) ++add[remainders[i].second];
    std::size_t placed = 0;
    for (std::size_t c = 0; c < nc; ++c) {
      const std::size_t take = std::min(add[c], pools[c].size() - counts[c]);
      counts[c] += take;
      placed += take;
    }
    remaining -= placed;
  }
  return counts;
}

}  // namespace

ClientPartition dirichlet_partition(const LabeledDataset& dataset, std::size_t num_clients, double alpha,
                                    std::uint64_t seed) {
  dataset.validate();
  if (num_clients == 0) throw InvalidArgument("need at least one client");
  if (num_clients > dataset.size()) throw InvalidArgument("more clients than samples");
  if (!(alpha >= 0.0)) throw InvalidArgument("alpha must be non-negative");
  for (auto c : dataset.class_counts())
    if (c == 0) throw InvalidArgument("dataset labels do not cover every class");

  Rng rng(derive_seed({seed, stream::partition}));
  if (alpha == 0.0) return single_class_partition(dataset, num_clients, rng);

  const std::size_t nc = dataset.num_classes;
  auto pools = dataset.indices_by_class();
  for (auto& p : pools) std::shuffle(p.begin(), p.end(), rng);

  const std::size_t base = dataset.size() / num_clients;
  const std::size_t extra = dataset.size() % num_clients;

  ClientPartition part;
  part.clients.resize(num_clients);
  for (std::size_t k = 0; k < num_clients; ++k) {
    const auto q = sample_dirichlet(alpha, nc, rng);
    const std::size_t quota = base + (k < extra ? 1 : 0);
    const auto counts = allocate_counts(q, pools, quota);
    auto& dst = part.clients[k];
    dst.reserve(quota);
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t s = 0; s < counts[c]; ++s) {
        dst.push_back(pools[c].back());
        pools[c].pop_back();
      }
  }
  return part;
}

RowMatrixXd synth_means(std::size_t num_classes, std::size_t dim, double separation, std::uint64_t seed) {
  if (!(separation > 0.0)) throw InvalidArgument("separation must be positive");
  if (num_classes < 2 || dim == 0) throw InvalidArgument("need >= 2 classes and dim >= 1");
  RowMatrixXd means = RowMatrixXd::Zero(static_cast<Eigen::Index>(num_classes), static_cast<Eigen::Index>(dim));
  if (dim >= num_classes) {
    for (std::size_t c = 0; c < num_classes; ++c) means(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) = separation;
    return means;
  }
  Rng rng(derive_seed({seed, stream::data, 0}));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index c = 0; c < means.rows(); ++c) {
    for (Eigen::Index j = 0; j < means.cols(); ++j) means(c, j) = normal(rng);
    means.row(c) *= separation / means.row(c).norm();
  }
  return means;
}

namespace {

LabeledDataset sample_blobs(const RowMatrixXd& means, std::size_t per_class, std::uint64_t stream_seed) {
  const auto nc = static_cast<std::size_t>(means.rows());
  const auto dim = means.cols();
  Rng rng(stream_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledDataset ds;
  ds.num_classes = nc;
  ds.inputs.resize(static_cast<Eigen::Index>(nc * per_class), dim);
  ds.labels.reserve(nc * per_class);
  Eigen::Index r = 0;
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t i = 0; i < per_class; ++i, ++r) {
      for (Eigen::Index j = 0; j < dim; ++j) ds.inputs(r, j) = means(static_cast<Eigen::Index>(c), j) + normal(rng);
      ds.labels.push_back(static_cast<int>(c));
    }
  return ds;
}

}  // namespace

LabeledDataset synth_dataset(std::size_t num_classes, std::size_t per_class, std::size_t dim, double separation,
                             std::uint64_t seed) {
  return sample_blobs(synth_means(num_classes, dim, separation, seed), per_class, derive_seed({seed, stream::data, 1}));
}

TrainTest synth_train_test(std::size_t num_classes, std::size_t train_per_class, std::size_t test_per_class,
                           std::size_t dim, double separation, std::uint64_t seed) {
  const auto means = synth_means(num_classes, dim, separation, seed);
  return {sample_blobs(means, train_per_class, derive_seed({seed, stream::data, 1})),
          sample_blobs(means, test_per_class, derive_seed({seed, stream::data, 2}))};
}

ExemplarSet build_exemplar_set(const LabeledDataset& split, std::size_t per_class, std::uint64_t seed,
                               std::string source) {
  if (per_class == 0) throw InvalidArgument("exemplar count per class must be positive");
  auto by_class = split.indices_by_class();
  Rng rng(derive_seed({seed, stream::exemplars}));
  ExemplarSet ex;
  ex.per_class = per_class;
  ex.source = std::move(source);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pool = by_class[c];
    if (pool.size() < per_class) {
      throw InvalidArgument("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                            " samples, exemplar set needs " + std::to_string(per_class));
    }
    // partial Fisher-Yates: first per_class entries become a uniform draw
    for (std::size_t i = 0; i < per_class; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      ex.source_indices.push_back(pool[i]);
    }
  }
  ex.samples = split.subset(ex.source_indices);
  return ex;
}

LabeledDataset exclude_indices(const LabeledDataset& split, std::span<const std::size_t> indices) {
  std::unordered_set<std::size_t> drop(indices.begin(), indices.end());
  std::vector<std::size_t> keep;
  keep.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i)
    if (!drop.contains(i)) keep.push_back(i);
  return split.subset(keep);
}

}  // namespace fedseq
