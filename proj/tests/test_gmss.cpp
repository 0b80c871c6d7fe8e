#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "sasg/gmss.hpp"

using namespace sasg;

namespace {

std::vector<SemanticFeature> as_features(const MatrixXd& rows, int label) {
  std::vector<SemanticFeature> out;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out.push_back({rows.row(i).transpose(), label, std::nullopt});
  return out;
}

MatrixXd draws(const ClassGaussian& g, double scale, int n, Rng& rng) {
  MatrixXd out(n, g.dim());
  for (int i = 0; i < n; ++i) out.row(i) = sample_condition(g, scale, rng).vector.transpose();
  return out;
}

}  // namespace

TEST_CASE("two-point fit") {
  MatrixXd pts(2, 2);
  pts << 0, 0, 2, 2;
  const auto g = fit_class_gaussians(as_features(pts, 0), 1).front();
  CHECK(g.mean.isApprox(VectorXd::Constant(2, 1.0)));
  CHECK(g.raw_covariance.isApprox(MatrixXd::Constant(2, 2, 2.0)));
  CHECK(g.sample_count == 2);
  CHECK(g.shrinkage == doctest::Approx(1e-4 * 4.0 / 2.0));
}

TEST_CASE("identical features fit to shrinkage only") {
  const MatrixXd pts = MatrixXd::Constant(5, 3, 0.7);
  const auto g = fit_gaussian(0, pts);
  CHECK(g.raw_covariance.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.shrinkage == 1e-6);
  CHECK((g.covariance - 1e-6 * MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit matches direct summation") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    MatrixXd pts(50, 8);
    fill_normal(pts, rng);
    pts.col(2) *= 5.0;
    pts.col(3) += 3.0 * pts.col(1);
    const auto g = fit_gaussian(0, pts);
    const auto o = oracle::mean_cov(oracle::rows_of(pts));
    for (int a = 0; a < 8; ++a) {
      CHECK(std::abs(g.mean(a) - o.mean[a]) < 1e-10);
      for (int b = 0; b < 8; ++b) CHECK(std::abs(g.raw_covariance(a, b) - o.cov[a][b]) < 1e-10);
    }
    CHECK((g.raw_covariance - g.raw_covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("Monte-Carlo recovery of a known 3-D Gaussian") {
  ClassGaussian truth;
  truth.mean = VectorXd(3);
  truth.mean << 1.0, -2.0, 0.5;
  truth.covariance = MatrixXd(3, 3);
  truth.covariance << 2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 0.8;
  Rng rng(3);
  const auto g = fit_gaussian(0, draws(truth, 1.0, 500, rng));
  CHECK((g.mean - truth.mean).cwiseAbs().maxCoeff() < 0.15);
  CHECK((g.raw_covariance - truth.covariance).cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("class with fewer than two features is named") {
  MatrixXd pts(3, 2);
  pts << 0, 0, 1, 1, 2, 0;
  auto feats = as_features(pts, 0);
  feats.push_back({VectorXd::Zero(2), 2, std::nullopt});
  feats.push_back({VectorXd::Ones(2), 1, std::nullopt});
  feats.push_back({VectorXd::Zero(2), 1, std::nullopt});
  try {
    fit_class_gaussians(feats, 3);
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("class 2") != std::string::npos);
  }
}

TEST_CASE("one Gaussian per class ordered by id") {
  Rng rng(5);
  std::vector<SemanticFeature> feats;
  for (int k : {2, 0, 1, 2, 1, 0, 0}) {
    VectorXd v(2);
    v << standard_normal(rng) + k * 10, standard_normal(rng);
    feats.push_back({v, k, std::nullopt});
  }
  const auto gs = fit_class_gaussians(feats, 3);
  REQUIRE(gs.size() == 3);
  for (int k = 0; k < 3; ++k) CHECK(gs[k].class_id == k);
  CHECK(gs[0].sample_count == 3);
  CHECK(gs[2].mean(0) > 15.0);
}

TEST_CASE("degenerate Gaussian samples stay at the mean") {
  const auto g = fit_gaussian(0, MatrixXd::Constant(4, 5, -1.25));
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const auto s = sample_condition(g, 1.0, rng);
    CHECK((s.vector - g.mean).cwiseAbs().maxCoeff() <= 5.0 * std::sqrt(g.shrinkage));
  }
}

TEST_CASE("sample moments") {
  ClassGaussian g;
  g.class_id = 1;
  g.mean = VectorXd(2);
  g.mean << 3.0, -1.0;
  g.covariance = MatrixXd(2, 2);
  g.covariance << 4.0, 1.2, 1.2, 1.0;
  Rng rng(21);
  const MatrixXd x = draws(g, 1.0, 10000, rng);
  const double tol = 0.05 * std::sqrt(g.covariance.diagonal().maxCoeff());
  const VectorXd m = x.colwise().mean().transpose();
  CHECK((m - g.mean).cwiseAbs().maxCoeff() < tol);

  const MatrixXd half = draws(g, 0.5, 10000, rng);
  const MatrixXd c = mean_and_covariance(half).second;
  CHECK((c - 0.5 * g.covariance).norm() / (0.5 * g.covariance).norm() < 0.1);
  CHECK(sample_condition(g, 1.0, rng).gesture_label == 1);
}

TEST_CASE("sampling is reproducible and deterministic in rng state") {
  Rng data_rng(2);
  MatrixXd pts(30, 4);
  fill_normal(pts, data_rng);
  const auto g = fit_gaussian(0, pts);
  Rng a(77), b(77);
  for (int i = 0; i < 10; ++i) CHECK(sample_condition(g, 0.5, a).vector == sample_condition(g, 0.5, b).vector);
  Rng c(1), d(1);
  const auto ca = oversample_candidates(g, 16, 10, c);
  const auto cb = oversample_candidates(g, 16, 10, d);
  REQUIRE(ca.candidates.size() == 160);
  for (std::size_t i = 0; i < 160; ++i) CHECK(ca.candidates[i].vector == cb.candidates[i].vector);
  Rng e(1);
  CHECK(oversample_candidates(g, 7, 1, e).candidates.size() == 7);
}

TEST_CASE("fit of samples recovers the fitted Gaussian") {
  Rng rng(8);
  MatrixXd pts(40, 3);
  fill_normal(pts, rng);
  pts.col(0) *= 2.0;
  const auto g = fit_gaussian(0, pts);
  const auto refit = fit_gaussian(0, draws(g, 1.0, 20000, rng));
  CHECK((refit.mean - g.mean).cwiseAbs().maxCoeff() < 0.05);
  CHECK((refit.raw_covariance - g.covariance).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("stored covariance always factorizes") {
  Rng rng(4);
  for (int n : {2, 3, 5}) {
    MatrixXd pts(n, 16);
    fill_normal(pts, rng);
    const auto g = fit_gaussian(0, pts);
    Eigen::LLT<MatrixXd> llt(g.covariance);
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("invalid scale and indefinite covariance") {
  ClassGaussian g;
  g.mean = VectorXd::Zero(2);
  g.covariance = -MatrixXd::Identity(2, 2);
  Rng rng(0);
  CHECK_THROWS_AS(sample_condition(g, 1.0, rng), StageError);
  g.covariance = MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(sample_condition(g, 0.0, rng), ConfigError);
}

TEST_CASE("Gaussian container round trip") {
  Rng rng(6);
  MatrixXd pts(12, 5);
  fill_normal(pts, rng);
  std::vector<ClassGaussian> gs{fit_gaussian(0, pts), fit_gaussian(1, 2.0 * pts)};
  const auto path = std::filesystem::temp_directory_path() / "sasg_gauss.bin";
  save_gaussians(gs, path);
  const auto back = load_gaussians(path);
  REQUIRE(back.size() == 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(back[k].class_id == k);
    CHECK(back[k].sample_count == 12);
    CHECK((back[k].mean - gs[k].mean).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((back[k].covariance - gs[k].covariance).cwiseAbs().maxCoeff() < 1e-5);
  }
  std::ofstream(path, std::ios::binary | std::ios::trunc) << "SAUGX";
  CHECK_THROWS_AS(load_gaussians(path), ParseError);
  std::filesystem::remove(path);
}
