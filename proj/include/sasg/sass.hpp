#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "sasg/gmss.hpp"
#include "sasg/neighbors.hpp"

namespace sasg {

struct SassConfig {
  int conditions_per_class = 16;  // B
  int oversample_factor = 10;
  int rarity_k = 5;
  int iterations = 200;
  double eps_radius = 3.0;
  double eta = 10.0;
  double conf_threshold = 0.15;
  // When set, eps_radius and eta are read in units of the reference set's
  // median k-NN radius instead of raw feature units.
  bool relative_scale = false;

  void validate() const;
};

/// Real train features of one class with their k-NN sphere radii.
struct ReferenceSet {
  int class_id = 0;
  int k = 0;
  MatrixXd points;  // (n, D)
  VectorXd radii;

  static ReferenceSet build(int class_id, MatrixXd points, int k);
  Eigen::Index size() const { return points.rows(); }
};

/// Radius of the smallest reference sphere containing each candidate row,
/// 0 when none does.
VectorXd rarity_scores(const MatrixXd& candidates, const ReferenceSet& reference);

/// Indices of the B highest scores, descending, ties by index.
std::vector<std::size_t> top_rarity_indices(const VectorXd& scores, int b);
MatrixXd select_top_rarity(const MatrixXd& candidates, const ReferenceSet& reference, int b);

template <typename Scalar>
struct PotentialEvaluation {
  Scalar value = 0;
  MatrixX<Scalar> gradient;
};

namespace detail {

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  using std::exp;
  return z >= 0 ? Scalar(1) / (Scalar(1) + exp(-z)) : exp(z) / (Scalar(1) + exp(z));
}

}  // namespace detail

/// Phi = mean_i N_i^2 with N_i = sum_j sigma(eps - |c_i - r_j|) over the
/// reference rows. Coincident pairs contribute no gradient.
template <typename Scalar>
PotentialEvaluation<Scalar> sparsity_potential(const MatrixX<Scalar>& candidates, const MatrixX<Scalar>& reference,
                                              Scalar eps) {
  const Eigen::Index b = candidates.rows();
  if (b < 1) throw ConfigError("sparsity potential needs at least one candidate");
  if (reference.cols() != candidates.cols()) throw ConfigError("candidate and reference dimensions differ");
  PotentialEvaluation<Scalar> out;
  out.gradient = MatrixX<Scalar>::Zero(b, candidates.cols());
  VectorX<Scalar> diff(candidates.cols());
  for (Eigen::Index i = 0; i < b; ++i) {
    Scalar n = 0;
    VectorX<Scalar> dn = VectorX<Scalar>::Zero(candidates.cols());
    for (Eigen::Index j = 0; j < reference.rows(); ++j) {
      diff = (candidates.row(i) - reference.row(j)).transpose();
      const Scalar d = diff.norm();
      const Scalar s = detail::sigmoid(eps - d);
      n += s;
      if (d > Scalar(0)) dn -= (s * (Scalar(1) - s) / d) * diff;
    }
    out.value += n * n;
    out.gradient.row(i) = (Scalar(2) * n / static_cast<Scalar>(b)) * dn.transpose();
  }
  out.value /= static_cast<Scalar>(b);
  return out;
}

/// Phi = mean_i M_i^2 with M_i = sum_{j != i} sigma(eps - |c_i - c_j|).
template <typename Scalar>
PotentialEvaluation<Scalar> diversity_potential(const MatrixX<Scalar>& candidates, Scalar eps) {
  const Eigen::Index b = candidates.rows();
  if (b < 1) throw ConfigError("diversity potential needs at least one candidate");
  MatrixX<Scalar> dist = MatrixX<Scalar>::Zero(b, b);
  MatrixX<Scalar> sig = MatrixX<Scalar>::Zero(b, b);
  VectorX<Scalar> m = VectorX<Scalar>::Zero(b);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = i + 1; j < b; ++j) {
      dist(i, j) = dist(j, i) = (candidates.row(i) - candidates.row(j)).norm();
      sig(i, j) = sig(j, i) = detail::sigmoid(eps - dist(i, j));
      m(i) += sig(i, j);
      m(j) += sig(i, j);
    }
  PotentialEvaluation<Scalar> out;
  out.value = m.squaredNorm() / static_cast<Scalar>(b);
  out.gradient = MatrixX<Scalar>::Zero(b, candidates.cols());
  // The pair (a, j) enters both M_a and M_j.
  for (Eigen::Index a = 0; a < b; ++a)
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == a || dist(a, j) <= Scalar(0)) continue;
      const Scalar s = sig(a, j);
      const Scalar coef = -(m(a) + m(j)) * s * (Scalar(1) - s) / dist(a, j);
      out.gradient.row(a) += coef * (candidates.row(a) - candidates.row(j));
    }
  out.gradient *= Scalar(2) / static_cast<Scalar>(b);
  return out;
}

struct OptimizationTrace {
  std::vector<double> potential;  // total Phi before each step, then the final value
};

/// Length unit of the optimization: 1, or the median k-NN radius of the
/// reference set under relative_scale.
double optimization_scale(const ReferenceSet& reference, const SassConfig& config);

/// Full-batch gradient descent on Phi_sparsity + Phi_diversity for
/// config.iterations steps.
MatrixXd optimize_candidates(MatrixXd candidates, const ReferenceSet& reference, const SassConfig& config,
                             OptimizationTrace* trace = nullptr);

enum class Provenance : std::uint8_t { Optimized = 0, Supplemented = 1, Sampled = 2 };

const char* provenance_name(Provenance p);

struct ConditionSet {
  int class_id = 0;
  std::vector<SemanticFeature> conditions;
  std::vector<Provenance> provenance;

  std::size_t count(Provenance p) const;
  void validate(std::size_t expected) const;
};

using ConfidenceFn = std::function<double(const SemanticFeature&, int)>;
ConfidenceFn encoder_confidence(const EncoderModel& filter_model);

/// Keeps optimized rows with confidence >= threshold, then tops up with
/// unfiltered draws from N(mu, 0.5 Sigma).
ConditionSet filter_and_supplement(const MatrixXd& optimized, const ConfidenceFn& confidence,
                                   const ClassGaussian& g, const SassConfig& config, Rng& rng);
ConditionSet filter_and_supplement(const MatrixXd& optimized, const EncoderModel& filter_model,
                                   const ClassGaussian& g, const SassConfig& config, Rng& rng);

/// Intermediate products of one sass_sample call.
struct SassDiagnostics {
  MatrixXd candidates;
  VectorXd candidate_rarity;
  MatrixXd selected;
  VectorXd selected_rarity;
  MatrixXd optimized;
  VectorXd optimized_rarity;
  OptimizationTrace trace;
};

ConditionSet sass_sample(const ClassGaussian& g, const ReferenceSet& reference, const ConfidenceFn& confidence,
                         const SassConfig& config, Rng& rng, SassDiagnostics* diagnostics = nullptr);
ConditionSet sass_sample(const ClassGaussian& g, const ReferenceSet& reference, const EncoderModel& filter_model,
                         const SassConfig& config, Rng& rng, SassDiagnostics* diagnostics = nullptr);

/// Plain GMSS: `count` draws from N(mu, Sigma), tagged Sampled.
ConditionSet gmss_conditions(const ClassGaussian& g, int count, Rng& rng);

void save_condition_sets(const std::vector<ConditionSet>& sets, const std::filesystem::path& path);
std::vector<ConditionSet> load_condition_sets(const std::filesystem::path& path);

/// Per-class histogram of rarity scores: class,bin_lo,bin_hi,count rows.
void write_rarity_histogram(const std::vector<std::pair<int, VectorXd>>& scores, int bins,
                            const std::filesystem::path& path);

}  // namespace sasg
