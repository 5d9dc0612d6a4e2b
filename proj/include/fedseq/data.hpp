#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedseq/nn.hpp"

namespace fedseq {

struct LabeledDataset {
  RowMatrixXd inputs;  // n x input_dim
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }

  /// Throws unless every label lies in [0, num_classes) and n >= num_classes.
  void validate() const;

  Batch gather(std::span<const std::size_t> indices) const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
  std::vector<std::vector<std::size_t>> indices_by_class() const;
};

/// Per-client index lists into a LabeledDataset.
struct ClientPartition {
  std::vector<std::vector<std::size_t>> clients;

  std::size_t num_clients() const { return clients.size(); }
  std::size_t client_size(std::size_t k) const { return clients.at(k).size(); }
  std::vector<std::size_t> sizes() const;
  std::size_t total() const;

  /// Disjoint, in range [0, n), every client non-empty.
  void validate(std::size_t n) const;
};

std::vector<std::size_t> client_class_counts(const ClientPartition& partition, const LabeledDataset& dataset,
                                             std::size_t client);

/// Shannon entropy (nats) of each client's label histogram.
std::vector<double> client_label_entropy(const ClientPartition& partition, const LabeledDataset& dataset);

/// Label-skewed split. For alpha > 0 each client draws class proportions from
/// Dirichlet(alpha * 1) and takes round(q_c * quota) samples of class c
/// without replacement, where quota is n/K with the remainder spread over the
/// first clients; exhausted classes are dropped and q renormalized. alpha == 0 gives every client a
/// single class, assigned round-robin over a shuffled class order, with each
/// class split evenly among its clients.
ClientPartition dirichlet_partition(const LabeledDataset& dataset, std::size_t num_clients, double alpha,
                                    std::uint64_t seed);

/// Class means for synth_dataset: separation * e_c when dim >= num_classes,
/// otherwise separation times seeded random unit directions.
RowMatrixXd synth_means(std::size_t num_classes, std::size_t dim, double separation, std::uint64_t seed);

/// Gaussian blobs with unit covariance, one per class, ordered by class.
LabeledDataset synth_dataset(std::size_t num_classes, std::size_t per_class, std::size_t dim, double separation,
                             std::uint64_t seed);

struct TrainTest {
  LabeledDataset train;
  LabeledDataset test;
};

/// Train and test splits drawn around the same class means.
TrainTest synth_train_test(std::size_t num_classes, std::size_t train_per_class, std::size_t test_per_class,
                           std::size_t dim, double separation, std::uint64_t seed);

struct ExemplarSet {
  LabeledDataset samples;                   // ordered by class, J per class
  std::vector<std::size_t> source_indices;  // indices into the split they came from
  std::size_t per_class = 0;
  std::string source;
};

ExemplarSet build_exemplar_set(const LabeledDataset& split, std::size_t per_class, std::uint64_t seed,
                               std::string source = "test");

/// Copy of `split` with the given indices removed.
LabeledDataset exclude_indices(const LabeledDataset& split, std::span<const std::size_t> indices);

// CIFAR-10 binary batches: records of 1 label byte followed by 3072 pixel
// bytes (1024 red, 1024 green, 1024 blue, each 32x32 row-major).
inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::array<double, 3> kCifarMean{0.4914, 0.4822, 0.4465};
inline constexpr std::array<double, 3> kCifarStd{0.2470, 0.2435, 0.2616};

/// One batch file with pixels scaled to [0,1] (no normalization).
LabeledDataset load_cifar10_batch(const std::string& path);

struct CifarData {
  LabeledDataset train;
  LabeledDataset test;
  std::array<double, 3> mean = kCifarMean;
  std::array<double, 3> stddev = kCifarStd;
};

/// Reads data_batch_1..5.bin and test_batch.bin from `dir` and applies
/// per-channel normalization with the constants stored in the result.
CifarData load_cifar10(const std::string& dir);

}  // namespace fedseq
