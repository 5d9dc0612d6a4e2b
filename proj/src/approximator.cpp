#include "fedseq/approximator.hpp"

#include <algorithm>
#include <cmath>

namespace fedseq {

std::uint64_t pretrain_seed(std::uint64_t seed, std::size_t client) {
  return derive_seed({seed, stream::pretrain, client});
}

PretrainResult pretrain_clients(const ParamVector& theta0, const ModelSpec& spec, const LabeledDataset& train,
                                const ClientPartition& partition, std::size_t epochs, const TrainHyper& hyper,
                                std::uint64_t seed, std::size_t threads) {
  if (epochs == 0) throw InvalidArgument("pre-training needs at least one epoch");
  PretrainResult result{theta0, std::vector<ParamVector>(partition.num_clients()), epochs};
  parallel_for(partition.num_clients(), threads, [&](std::size_t k) {
    if (partition.clients[k].empty()) throw InvalidArgument("client " + std::to_string(k) + " is empty");
    result.clients[k] = local_train(theta0, spec, train, partition.clients[k], epochs, PlainObjective{}, hyper,
                                    pretrain_seed(seed, k), k)
                            .params;
  });
  return result;
}

namespace {

VectorXd softmax_vector(const VectorXd& v) {
  VectorXd e = (v.array() - v.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

DistributionEstimate psi_conf(const PretrainResult& pretrain, const ModelSpec& spec, const ExemplarSet& exemplars,
                              ConfidenceMode mode) {
  if (exemplars.samples.num_classes != spec.num_classes) {
    throw InvalidArgument("exemplar classes do not match the model output classes");
  }
  const std::size_t nc = spec.num_classes;
  DistributionEstimate est;
  est.kind = EstimateKind::confidence;
  est.rows.resize(static_cast<Eigen::Index>(pretrain.clients.size()), static_cast<Eigen::Index>(nc));
  const auto& labels = exemplars.samples.labels;
  std::vector<double> class_size(nc, 0.0);
  for (int y : labels) class_size[static_cast<std::size_t>(y)] += 1.0;

  for (std::size_t k = 0; k < pretrain.clients.size(); ++k) {
    const RowMatrixXd probs = softmax<double>(forward<double>(pretrain.clients[k], spec, exemplars.samples.inputs));
    VectorXd scores = VectorXd::Zero(static_cast<Eigen::Index>(nc));
    if (mode == ConfidenceMode::global_mean) {
      scores = probs.colwise().mean().transpose();
    } else {
      for (std::size_t r = 0; r < labels.size(); ++r) {
        const auto c = static_cast<Eigen::Index>(labels[r]);
        scores(c) += probs(static_cast<Eigen::Index>(r), c);
      }
      for (std::size_t c = 0; c < nc; ++c)
        if (class_size[c] > 0) scores(static_cast<Eigen::Index>(c)) /= class_size[c];
    }
    est.rows.row(static_cast<Eigen::Index>(k)) = softmax_vector(scores).transpose();
  }
  return est;
}

PcaResult pca(const RowMatrixXd& rows, double explained_variance) {
  if (!(explained_variance > 0.0 && explained_variance <= 1.0)) {
    throw InvalidArgument("explained variance must lie in (0, 1]");
  }
  const Eigen::Index n = rows.rows();
  const Eigen::Index d = rows.cols();
  if (n < 2) throw InvalidArgument("PCA needs at least two rows");

  const RowMatrixXd centered = rows.rowwise() - rows.colwise().mean();
  const double scale = std::max(1.0, rows.cwiseAbs().maxCoeff());
  PcaResult out;
  out.total_variance = centered.squaredNorm() / static_cast<double>(n - 1);
  if (centered.cwiseAbs().maxCoeff() <= 1e-14 * scale) {
    out.degenerate = true;
    out.projected = RowMatrixXd::Zero(n, 1);
    out.components = RowMatrixXd::Zero(1, d);
    out.eigenvalues = VectorXd::Zero(1);
    return out;
  }

  // Eigen-decompose whichever of the covariance (d x d) or Gram (n x n)
  // matrix is smaller; both share the nonzero spectrum.
  VectorXd eigvals;
  Eigen::MatrixXd loadings;  // d x r, columns are principal axes, descending
  const double denom = static_cast<double>(n - 1);
  if (d <= n) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(centered.transpose() * centered) / denom);
    eigvals = solver.eigenvalues().reverse();
    loadings = solver.eigenvectors().rowwise().reverse();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(centered * centered.transpose()) / denom);
    eigvals = solver.eigenvalues().reverse();
    const Eigen::MatrixXd u = solver.eigenvectors().rowwise().reverse();
    loadings = Eigen::MatrixXd::Zero(d, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (eigvals(i) <= 0.0) continue;
      loadings.col(i) = centered.transpose() * u.col(i);
      loadings.col(i).normalize();
    }
  }

  const double tol = 1e-12 * std::max(eigvals(0), 0.0);
  const double target = explained_variance * out.total_variance * (1.0 - 1e-12);
  Eigen::Index keep = 0;
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < eigvals.size() && eigvals(i) > tol; ++i) {
    cumulative += eigvals(i);
    keep = i + 1;
    if (cumulative >= target) break;
  }
  keep = std::max<Eigen::Index>(keep, 1);

  out.components.resize(keep, d);
  for (Eigen::Index i = 0; i < keep; ++i) {
    Eigen::VectorXd axis = loadings.col(i);
    const double cutoff = 1e-12 * axis.cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j < d; ++j) {
      if (std::abs(axis(j)) > cutoff) {
        if (axis(j) < 0) axis = -axis;
        break;
      }
    }
    out.components.row(i) = axis.transpose();
  }
  out.eigenvalues = eigvals.head(keep);
  out.projected = centered * out.components.transpose();
  return out;
}

DistributionEstimate psi_clf(const PretrainResult& pretrain, ClassifierMode mode, double explained_variance) {
  if (pretrain.clients.size() < 2) throw InvalidArgument("classifier embeddings need at least two clients");
  const VectorXd first = extract_classifier(pretrain.clients.front(), mode);
  RowMatrixXd stacked(static_cast<Eigen::Index>(pretrain.clients.size()), first.size());
  for (std::size_t k = 0; k < pretrain.clients.size(); ++k)
    stacked.row(static_cast<Eigen::Index>(k)) = extract_classifier(pretrain.clients[k], mode).transpose();
  auto reduced = pca(stacked, explained_variance);
  return {EstimateKind::classifier_embedding, std::move(reduced.projected), reduced.degenerate};
}

SimilarityMatrix similarity_matrix(const PretrainResult& pretrain) {
  const auto k = static_cast<Eigen::Index>(pretrain.clients.size());
  if (k == 0) throw InvalidArgument("no pre-trained clients");
  const auto d = static_cast<Eigen::Index>(pretrain.clients.front().size());
  Eigen::MatrixXd unit(d, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& v = pretrain.clients[static_cast<std::size_t>(i)].values();
    const double norm = v.norm();
    if (!(norm > 0.0)) throw InvalidArgument("client " + std::to_string(i) + " has a zero-norm parameter vector");
    unit.col(i) = v / norm;
  }
  SimilarityMatrix s;
  s.values = unit.transpose() * unit;
  s.values.diagonal().setOnes();
  s.values = 0.5 * (s.values + s.values.transpose()).eval();
  s.epochs = pretrain.epochs;
  s.frobenius_norm = s.values.norm();
  return s;
}

DistributionEstimate oracle_estimate(const ClientPartition& partition, const LabeledDataset& dataset) {
  DistributionEstimate est;
  est.kind = EstimateKind::confidence;
  est.rows = RowMatrixXd::Zero(static_cast<Eigen::Index>(partition.num_clients()),
                               static_cast<Eigen::Index>(dataset.num_classes));
  for (std::size_t k = 0; k < partition.num_clients(); ++k) {
    const auto counts = client_class_counts(partition, dataset, k);
    const double n = static_cast<double>(partition.client_size(k));
    if (n == 0) continue;
    for (std::size_t c = 0; c < counts.size(); ++c)
      est.rows(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = static_cast<double>(counts[c]) / n;
  }
  return est;
}

}  // namespace fedseq
