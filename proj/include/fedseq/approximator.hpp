#pragma once

// Client pre-training and the distribution approximators used to group
// clients without looking at their data: confidence vectors measured on a
// public exemplar set, and PCA-reduced classifier weights.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedseq/data.hpp"
#include "fedseq/fl.hpp"
#include "fedseq/nn.hpp"

namespace fedseq {

struct PretrainResult {
  ParamVector theta0;
  std::vector<ParamVector> clients;
  std::size_t epochs = 0;
};

std::uint64_t pretrain_seed(std::uint64_t seed, std::size_t client);

/// Every client trains `epochs` epochs of plain local SGD from theta0.
/// Results are stored in client-id order regardless of `threads`.
PretrainResult pretrain_clients(const ParamVector& theta0, const ModelSpec& spec, const LabeledDataset& train,
                                const ClientPartition& partition, std::size_t epochs, const TrainHyper& hyper,
                                std::uint64_t seed, std::size_t threads = 1);

enum class EstimateKind { confidence, classifier_embedding };

/// One row per client.
struct DistributionEstimate {
  EstimateKind kind = EstimateKind::confidence;
  RowMatrixXd rows;
  bool degenerate = false;  // PCA saw identical rows

  std::size_t num_clients() const { return static_cast<std::size_t>(rows.rows()); }
};

/// How the class-wise scalar confidence is read off the averaged predictions.
///  global_mean:    p_c = mean over all exemplars of softmax(f(x))_c
///  per_class_diag: p_c = mean over class-c exemplars of softmax(f(x))_c
enum class ConfidenceMode { global_mean, per_class_diag };

/// Confidence vectors p_k = softmax(p_{k,1..N_C}).
DistributionEstimate psi_conf(const PretrainResult& pretrain, const ModelSpec& spec, const ExemplarSet& exemplars,
                              ConfidenceMode mode = ConfidenceMode::global_mean);

struct PcaResult {
  RowMatrixXd projected;   // n x dims
  RowMatrixXd components;  // dims x d, unit rows, first nonzero entry positive
  VectorXd eigenvalues;    // retained, descending
  double total_variance = 0.0;
  bool degenerate = false;
  std::size_t dims() const { return static_cast<std::size_t>(projected.cols()); }
};

/// Projects mean-centered rows onto the fewest principal components whose
/// cumulative explained variance reaches `explained_variance`.
PcaResult pca(const RowMatrixXd& rows, double explained_variance);

DistributionEstimate psi_clf(const PretrainResult& pretrain, ClassifierMode mode, double explained_variance = 0.9);

struct SimilarityMatrix {
  Eigen::MatrixXd values;  // cosine similarity of flattened parameters
  std::size_t epochs = 0;
  double frobenius_norm = 0.0;
};

SimilarityMatrix similarity_matrix(const PretrainResult& pretrain);

/// Normalized per-client label histograms.
DistributionEstimate oracle_estimate(const ClientPartition& partition, const LabeledDataset& dataset);

}  // namespace fedseq
