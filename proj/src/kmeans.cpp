#include <algorithm>
#include <limits>
#include <numeric>

#include "fedseq/grouping.hpp"

namespace fedseq {

namespace {

double sse(const RowMatrixXd& points, const RowMatrixXd& centroids, const std::vector<std::size_t>& assignment) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    total += (points.row(i) - centroids.row(static_cast<Eigen::Index>(assignment[static_cast<std::size_t>(i)])))
                 .squaredNorm();
  return total;
}

}  // namespace

KMeansResult kmeans(const RowMatrixXd& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k == 0 || k > n) throw InvalidArgument("kmeans needs 1 <= k <= number of points");

  Rng rng(derive_seed({seed, stream::grouping, 0x6b6d}));
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }

  KMeansResult res;
  res.centroids.resize(static_cast<Eigen::Index>(k), points.cols());
  for (std::size_t c = 0; c < k; ++c) res.centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(ids[c]));
  res.assignment.assign(n, std::numeric_limits<std::size_t>::max());

  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    std::vector<std::size_t> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d =
            (points.row(static_cast<Eigen::Index>(i)) - res.centroids.row(static_cast<Eigen::Index>(c))).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      next[i] = best;
    }

    // repair empty clusters
    std::vector<std::size_t> count(k, 0);
    for (auto a : next) ++count[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) continue;
      const auto largest = static_cast<std::size_t>(std::max_element(count.begin(), count.end()) - count.begin());
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (next[i] != largest) continue;
        const double d = (points.row(static_cast<Eigen::Index>(i)) -
                          res.centroids.row(static_cast<Eigen::Index>(largest)))
                             .squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      next[far] = c;
      --count[largest];
      ++count[c];
    }

    const bool changed = next != res.assignment;
    res.assignment = std::move(next);
    res.iterations = iter + 1;

    RowMatrixXd sums = RowMatrixXd::Zero(static_cast<Eigen::Index>(k), points.cols());
    for (std::size_t i = 0; i < n; ++i)
      sums.row(static_cast<Eigen::Index>(res.assignment[i])) += points.row(static_cast<Eigen::Index>(i));
    for (std::size_t c = 0; c < k; ++c)
      res.centroids.row(static_cast<Eigen::Index>(c)) =
          sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(count[c]);
    res.sse_history.push_back(sse(points, res.centroids, res.assignment));
    if (!changed) break;
  }
  return res;
}

}  // namespace fedseq
