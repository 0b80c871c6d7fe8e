#include "sasg/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace sasg {

namespace {

constexpr double kLrdCap = 1e12;

MatrixXd sym_sqrt(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (a + a.transpose()));
  const VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

// Indices of the points within k-distance of point i (ties included), i excluded.
std::vector<Eigen::Index> neighborhood(const MatrixXd& dist_row_owner, Eigen::Index i, double kdist, bool exclude_self) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < dist_row_owner.cols(); ++j) {
    if (exclude_self && j == i) continue;
    if (dist_row_owner(i, j) <= kdist) out.push_back(j);
  }
  return out;
}

double lrd_from(const std::vector<Eigen::Index>& nbrs, const MatrixXd& dist, Eigen::Index i, const VectorXd& kdist) {
  double reach = 0.0;
  for (auto j : nbrs) reach += std::max(kdist(j), dist(i, j));
  reach /= static_cast<double>(nbrs.size());
  return reach > 0.0 ? std::min(1.0 / reach, kLrdCap) : kLrdCap;
}

}  // namespace

double fid(const MatrixXd& real, const MatrixXd& generated) {
  if (real.cols() != generated.cols()) throw ConfigError("FID: feature dimensions differ");
  if (real.rows() < 2 || generated.rows() < 2) throw ConfigError("FID needs at least two points per set");
  const auto [mu_r, cov_r] = mean_and_covariance(real);
  const auto [mu_g, cov_g] = mean_and_covariance(generated);
  const MatrixXd root_r = sym_sqrt(cov_r);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(root_r * cov_g * root_r, Eigen::EigenvaluesOnly);
  VectorXd lambda = eig.eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda(i) < 0.0) lambda(i) = 0.0;
  const double value =
      (mu_r - mu_g).squaredNorm() + cov_r.trace() + cov_g.trace() - 2.0 * lambda.cwiseSqrt().sum();
  return std::max(value, 0.0);
}

double cas(const EncoderModel& eval_model, const WindowedDataset& generated) {
  if (generated.empty()) throw ConfigError("CAS of an empty generated set");
  return accuracy(eval_model, generated);
}

double avg_knn(const MatrixXd& points, int k) {
  if (points.rows() <= k) throw ConfigError("AvgKNN needs more than k points");
  const MatrixXd nn = knn_distances_within(pairwise_distances(points, points), k);
  return nn.rowwise().mean().mean();
}

VectorXd knn_mean_distance_to(const MatrixXd& query, const MatrixXd& reference, int k) {
  if (reference.rows() < k) throw ConfigError("AvgKNN needs at least k reference points");
  return knn_distances_to(pairwise_distances(query, reference), k).rowwise().mean();
}

VectorXd lof(const MatrixXd& points, int k) {
  const Eigen::Index n = points.rows();
  if (n <= k) throw ConfigError("LOF needs more than k points");
  const MatrixXd d = pairwise_distances(points, points);
  const VectorXd kdist = knn_distances_within(d, k).col(k - 1);
  std::vector<std::vector<Eigen::Index>> nbrs(static_cast<std::size_t>(n));
  VectorXd lrd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    nbrs[i] = neighborhood(d, i, kdist(i), true);
    lrd(i) = lrd_from(nbrs[i], d, i, kdist);
  }
  VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (auto j : nbrs[i]) s += lrd(j) / lrd(i);
    out(i) = s / static_cast<double>(nbrs[i].size());
  }
  return out;
}

VectorXd lof_to_reference(const MatrixXd& query, const MatrixXd& reference, int k) {
  const Eigen::Index n = reference.rows();
  if (n <= k) throw ConfigError("LOF needs more than k reference points");
  const MatrixXd dr = pairwise_distances(reference, reference);
  const VectorXd kdist = knn_distances_within(dr, k).col(k - 1);
  VectorXd lrd_ref(n);
  for (Eigen::Index i = 0; i < n; ++i) lrd_ref(i) = lrd_from(neighborhood(dr, i, kdist(i), true), dr, i, kdist);

  const MatrixXd dq = pairwise_distances(query, reference);
  const VectorXd qkdist = knn_distances_to(dq, k).col(k - 1);
  VectorXd out(query.rows());
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    const auto nb = neighborhood(dq, q, qkdist(q), false);
    const double lrd_q = lrd_from(nb, dq, q, kdist);
    double s = 0.0;
    for (auto j : nb) s += lrd_ref(j) / lrd_q;
    out(q) = s / static_cast<double>(nb.size());
  }
  return out;
}

double rarity_mean(const MatrixXd& generated, const ReferenceSet& reference) {
  if (generated.rows() == 0) throw ConfigError("rarity of an empty set");
  return rarity_scores(generated, reference).mean();
}

double median(VectorXd values) {
  if (values.size() == 0) throw ConfigError("median of an empty set");
  if (values.hasNaN()) return std::nan("");
  std::sort(values.data(), values.data() + values.size());
  const Eigen::Index n = values.size();
  return n % 2 ? values(n / 2) : 0.5 * (values(n / 2 - 1) + values(n / 2));
}

ClassificationReport classification_report(const std::vector<int>& predictions, const std::vector<int>& labels,
                                           int classes) {
  if (predictions.size() != labels.size()) throw ConfigError("predictions and labels differ in length");
  if (classes < 1) throw ConfigError("class count must be positive");
  ClassificationReport r;
  r.confusion = MatrixXd::Zero(classes, classes);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes || predictions[i] < 0 || predictions[i] >= classes)
      throw ConfigError("class id out of range in classification report");
    r.confusion(labels[i], predictions[i]) += 1.0;
    hits += predictions[i] == labels[i];
  }
  r.accuracy = labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
  for (int c = 0; c < classes; ++c) {
    ClassMetrics m;
    const double tp = r.confusion(c, c);
    const double predicted = r.confusion.col(c).sum();
    const double actual = r.confusion.row(c).sum();
    m.support = static_cast<std::size_t>(actual);
    m.absent = predicted == 0.0 && actual == 0.0;
    m.precision = predicted > 0.0 ? tp / predicted : 0.0;
    m.recall = actual > 0.0 ? tp / actual : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.precision += m.precision;
    r.recall += m.recall;
    r.f1 += m.f1;
    r.per_class.push_back(m);
  }
  r.precision /= classes;
  r.recall /= classes;
  r.f1 /= classes;
  return r;
}

void MetricsReport::validate() const {
  for (double v : {fid, cas, avg_knn, lof_median, rarity_mean, classification.accuracy, classification.precision,
                   classification.recall, classification.f1})
    if (!std::isfinite(v)) throw StageError("metrics", "non-finite metric value");
  for (double v : {cas, classification.accuracy, classification.precision, classification.recall, classification.f1})
    if (v < 0.0 || v > 1.0) throw StageError("metrics", "rate outside [0, 1]");
}

Pca2 Pca2::fit(const MatrixXd& basis) {
  if (basis.rows() < 2 || basis.cols() < 2) throw ConfigError("PCA needs at least two points in two dimensions");
  auto [mu, cov] = mean_and_covariance(basis);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  Pca2 p;
  p.mean = mu;
  const Eigen::Index d = cov.rows();
  p.axes.resize(d, 2);
  p.axes.col(0) = eig.eigenvectors().col(d - 1);
  p.axes.col(1) = eig.eigenvectors().col(d - 2);
  // Fix the sign so the largest-magnitude loading is positive.
  for (int a = 0; a < 2; ++a) {
    Eigen::Index arg;
    p.axes.col(a).cwiseAbs().maxCoeff(&arg);
    if (p.axes(arg, a) < 0) p.axes.col(a) *= -1.0;
  }
  return p;
}

MatrixXd Pca2::project(const MatrixXd& points) const {
  return (points.rowwise() - mean.transpose()) * axes;
}

}  // namespace sasg
