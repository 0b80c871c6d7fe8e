#pragma once

#include <vector>

#include "sasg/sass.hpp"

namespace sasg {

/// Frechet distance between Gaussian fits of the rows of two sets.
double fid(const MatrixXd& real, const MatrixXd& generated);

/// Fraction of generated windows the evaluation model assigns to their label.
double cas(const EncoderModel& eval_model, const WindowedDataset& generated);

/// Mean over points of the mean distance to their k nearest other points.
double avg_knn(const MatrixXd& points, int k = 5);
/// Per-query mean distance to the k nearest reference points.
VectorXd knn_mean_distance_to(const MatrixXd& query, const MatrixXd& reference, int k = 5);

/// Local outlier factor of every point within its own set.
VectorXd lof(const MatrixXd& points, int k = 20);
/// LOF of query points measured against a fixed reference set whose
/// k-distances and densities are computed within the reference.
VectorXd lof_to_reference(const MatrixXd& query, const MatrixXd& reference, int k = 20);

/// Mean of rarity_scores over the rows of `generated`.
double rarity_mean(const MatrixXd& generated, const ReferenceSet& reference);

double median(VectorXd values);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  bool absent = false;  // in neither predictions nor labels
};

struct ClassificationReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  MatrixXd confusion;  // rows: true class, cols: predicted
};

ClassificationReport classification_report(const std::vector<int>& predictions, const std::vector<int>& labels,
                                           int classes);

struct MetricsReport {
  double fid = 0.0;
  double cas = 0.0;
  double avg_knn = 0.0;
  double lof_median = 0.0;
  double rarity_mean = 0.0;
  ClassificationReport classification;

  void validate() const;
};

/// Projection of rows onto the two leading principal axes of `basis`.
struct Pca2 {
  VectorXd mean;
  MatrixXd axes;  // (D, 2)

  static Pca2 fit(const MatrixXd& basis);
  MatrixXd project(const MatrixXd& points) const;
};

}  // namespace sasg
