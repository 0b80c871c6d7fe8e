#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "sasg/encoder.hpp"

namespace sasg {

struct ClassGaussian {
  int class_id = 0;
  VectorXd mean;
  MatrixXd raw_covariance;  // unbiased sample covariance
  MatrixXd covariance;      // raw_covariance + shrinkage * I
  double shrinkage = 0.0;
  std::size_t sample_count = 0;

  Eigen::Index dim() const { return mean.size(); }
};

struct CandidateSet {
  int class_id = 0;
  std::vector<SemanticFeature> candidates;
};

/// Mean and unbiased covariance of the rows of `points`.
template <typename Derived>
std::pair<VectorX<typename Derived::Scalar>, MatrixX<typename Derived::Scalar>> mean_and_covariance(
    const Eigen::MatrixBase<Derived>& points) {
  using Scalar = typename Derived::Scalar;
  if (points.rows() < 2) throw ConfigError("covariance needs at least two points");
  const VectorX<Scalar> mu = points.colwise().mean().transpose();
  const MatrixX<Scalar> centered = points.rowwise() - mu.transpose();
  MatrixX<Scalar> cov = (centered.transpose() * centered) / static_cast<Scalar>(points.rows() - 1);
  cov = Scalar(0.5) * (cov + cov.transpose()).eval();
  return {mu, cov};
}

/// lambda = 1e-4 * tr(cov) / D, floored at 1e-6.
double shrinkage_for(const MatrixXd& raw_covariance);

ClassGaussian fit_gaussian(int class_id, const MatrixXd& points);

/// One Gaussian per class id 0..K-1. Throws naming the first class with
/// fewer than two features.
std::vector<ClassGaussian> fit_class_gaussians(std::span<const SemanticFeature> features, int classes);

/// Factor A with A A^T = scale * covariance: Cholesky, or the eigen square
/// root when Cholesky fails.
MatrixXd sampling_factor(const ClassGaussian& g, double scale);

SemanticFeature sample_condition(const ClassGaussian& g, double scale, Rng& rng);
std::vector<SemanticFeature> sample_conditions(const ClassGaussian& g, double scale, std::size_t count, Rng& rng);

CandidateSet oversample_candidates(const ClassGaussian& g, int b, int factor, Rng& rng);

void save_gaussians(const std::vector<ClassGaussian>& gaussians, const std::filesystem::path& path);
std::vector<ClassGaussian> load_gaussians(const std::filesystem::path& path);

}  // namespace sasg
