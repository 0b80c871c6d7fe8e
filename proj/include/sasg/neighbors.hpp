#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sasg/common.hpp"

// Point sets are (n, D) matrices, one point per row. Distances are summed
// coordinate by coordinate in index order, so sphere-membership tests on
// boundary points are reproducible.

namespace sasg {

template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> pairwise_distances(const Eigen::MatrixBase<DerivedA>& a,
                                                      const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.cols()) throw ConfigError("point sets have different dimensions");
  MatrixX<Scalar> d(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      Scalar s = 0;
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const Scalar diff = a(i, c) - b(j, c);
        s += diff * diff;
      }
      d(i, j) = std::sqrt(s);
    }
  return d;
}

/// Distances to the k nearest other points of each row (ascending), self
/// excluded by index. Returns an (n, k) matrix.
template <typename Scalar>
MatrixX<Scalar> knn_distances_within(const MatrixX<Scalar>& dist, int k) {
  const Eigen::Index n = dist.rows();
  if (k < 1 || k >= n) throw ConfigError("k must satisfy 1 <= k < number of points");
  MatrixX<Scalar> out(n, k);
  std::vector<Scalar> row;
  for (Eigen::Index i = 0; i < n; ++i) {
    row.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) row.push_back(dist(i, j));
    std::partial_sort(row.begin(), row.begin() + k, row.end());
    for (int m = 0; m < k; ++m) out(i, m) = row[static_cast<std::size_t>(m)];
  }
  return out;
}

/// Distances from each query row to its k nearest reference rows.
template <typename Scalar>
MatrixX<Scalar> knn_distances_to(const MatrixX<Scalar>& dist_query_ref, int k) {
  const Eigen::Index n = dist_query_ref.rows();
  if (k < 1 || k > dist_query_ref.cols()) throw ConfigError("k must satisfy 1 <= k <= reference size");
  MatrixX<Scalar> out(n, k);
  std::vector<Scalar> row;
  for (Eigen::Index i = 0; i < n; ++i) {
    row.clear();
    for (Eigen::Index j = 0; j < dist_query_ref.cols(); ++j) row.push_back(dist_query_ref(i, j));
    std::partial_sort(row.begin(), row.begin() + k, row.end());
    for (int m = 0; m < k; ++m) out(i, m) = row[static_cast<std::size_t>(m)];
  }
  return out;
}

/// Radius of each point's k-NN sphere within the set (self excluded).
template <typename Derived>
VectorX<typename Derived::Scalar> knn_radii(const Eigen::MatrixBase<Derived>& points, int k) {
  const auto d = pairwise_distances(points, points);
  return knn_distances_within(d, k).col(k - 1);
}

}  // namespace sasg
