#pragma once

// Heterogeneity metrics between client distribution estimates, the three
// superclient grouping strategies and superclient quality measures.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedseq/approximator.hpp"
#include "fedseq/data.hpp"

namespace fedseq {

enum class Metric { cosine, euclidean, wasserstein, kl, gini };
enum class GroupingMethod { random, kmeans, greedy };

inline constexpr double kKlSmoothing = 1e-9;

/// Distance / heterogeneity between two estimate rows. Larger means more
/// dissimilar (or, for gini, a more heterogeneous 50/50 mixture).
///  cosine:      max(0, 1 - a.b / (|a||b|))
///  euclidean:   |a - b|
///  wasserstein: sum_c |CDF_a(c) - CDF_b(c)| for confidence vectors,
///               mean |sort(a)_i - sort(b)_i| for embeddings
///  kl:          KL(a || b) after additive smoothing
///  gini:        1 - sum_c m_c^2 with m = (a + b) / 2
double tau(const VectorXd& a, const VectorXd& b, Metric metric, EstimateKind kind = EstimateKind::confidence);

struct GroupingConfig {
  std::size_t min_samples = 800;  // |D_S|_min
  std::size_t max_clients = 11;   // K_S,max
  GroupingMethod method = GroupingMethod::greedy;
  Metric metric = Metric::kl;
  std::uint64_t seed = 0;
};

struct Superclient {
  std::size_t id = 0;
  std::vector<std::size_t> clients;
  std::size_t num_samples = 0;  // N_z
  bool undersized = false;      // closed because clients ran out
};

struct KMeansResult {
  std::vector<std::size_t> assignment;
  RowMatrixXd centroids;
  std::vector<double> sse_history;  // after each iteration
  std::size_t iterations = 0;
};

/// Lloyd's algorithm: init from k distinct sampled points, stop after
/// `max_iterations` or when assignments stop changing. An empty cluster takes
/// the point farthest from its centroid in the largest cluster.
KMeansResult kmeans(const RowMatrixXd& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations = 300);

std::vector<Superclient> phi_random(std::span<const std::size_t> client_sizes, const GroupingConfig& config);

/// K-means with one cluster per class, then superclients drawn round-robin
/// across clusters (empty clusters skipped).
std::vector<Superclient> phi_kmeans(const DistributionEstimate& estimates, std::span<const std::size_t> client_sizes,
                                    const GroupingConfig& config, std::size_t num_classes);

/// Seeds each superclient with a random client, then repeatedly adds the
/// remaining client farthest (by tau) from the running superclient estimate,
/// which is updated as the half/half mixture. Ties go to the lowest id.
std::vector<Superclient> phi_greedy(const DistributionEstimate& estimates, std::span<const std::size_t> client_sizes,
                                    const GroupingConfig& config);

std::vector<Superclient> group_clients(const DistributionEstimate& estimates, std::span<const std::size_t> client_sizes,
                                       const GroupingConfig& config, std::size_t num_classes);

/// Throws unless the superclients partition [0, num_clients) and carry
/// correct sample totals.
void validate_superclients(std::span<const Superclient> superclients, std::span<const std::size_t> client_sizes);

std::vector<std::size_t> superclient_class_counts(const Superclient& sc, const ClientPartition& partition,
                                                  const LabeledDataset& dataset);

/// min_c N_c / max_c N_c; zero when any class is absent.
double balance_ratio(std::span<const std::size_t> class_counts);

/// Fraction of classes with at least one sample.
double covered_classes(std::span<const std::size_t> class_counts);

struct GroupingQuality {
  std::vector<double> balance;
  std::vector<double> covered;
  double mean_balance = 0.0;
  double mean_covered = 0.0;
};

GroupingQuality grouping_quality(std::span<const Superclient> superclients, const ClientPartition& partition,
                                 const LabeledDataset& dataset);

std::string to_string(Metric m);
std::string to_string(GroupingMethod m);
Metric parse_metric(const std::string& s);
GroupingMethod parse_grouping_method(const std::string& s);

}  // namespace fedseq
