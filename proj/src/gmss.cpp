#include "sasg/gmss.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "sasg/binary_io.hpp"

namespace sasg {

namespace {

constexpr char kGaussianMagic[] = "SAUGG";
constexpr std::uint32_t kGaussianVersion = 1;

}  // namespace

double shrinkage_for(const MatrixXd& raw_covariance) {
  const double d = static_cast<double>(raw_covariance.rows());
  return std::max(1e-4 * raw_covariance.trace() / d, 1e-6);
}

ClassGaussian fit_gaussian(int class_id, const MatrixXd& points) {
  if (points.rows() < 2)
    throw ConfigError("class " + std::to_string(class_id) + " has " + std::to_string(points.rows()) +
                      " features; at least 2 are needed to fit a Gaussian");
  ClassGaussian g;
  g.class_id = class_id;
  std::tie(g.mean, g.raw_covariance) = mean_and_covariance(points);
  g.shrinkage = shrinkage_for(g.raw_covariance);
  g.covariance = g.raw_covariance;
  g.covariance.diagonal().array() += g.shrinkage;
  g.sample_count = static_cast<std::size_t>(points.rows());
  return g;
}

std::vector<ClassGaussian> fit_class_gaussians(std::span<const SemanticFeature> features, int classes) {
  if (classes < 1) throw ConfigError("class count must be positive");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const int k = features[i].gesture_label;
    if (k < 0 || k >= classes) throw ConfigError("feature label " + std::to_string(k) + " out of range");
    members[static_cast<std::size_t>(k)].push_back(i);
  }
  std::vector<ClassGaussian> out;
  out.reserve(members.size());
  for (int k = 0; k < classes; ++k) {
    const auto& idx = members[static_cast<std::size_t>(k)];
    if (idx.size() < 2)
      throw ConfigError("class " + std::to_string(k) + " has " + std::to_string(idx.size()) +
                        " features; at least 2 are needed to fit a Gaussian");
    MatrixXd pts(static_cast<Eigen::Index>(idx.size()), features[idx.front()].vector.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (features[idx[r]].vector.size() != pts.cols()) throw ConfigError("features have inconsistent dimensions");
      pts.row(static_cast<Eigen::Index>(r)) = features[idx[r]].vector.transpose();
    }
    out.push_back(fit_gaussian(k, pts));
  }
  return out;
}

MatrixXd sampling_factor(const ClassGaussian& g, double scale) {
  if (!(scale > 0.0)) throw ConfigError("covariance scale must be positive");
  const MatrixXd s = scale * g.covariance;
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
  if (eig.info() != Eigen::Success)
    throw StageError("gmss", "eigendecomposition failed for class " + std::to_string(g.class_id));
  const VectorXd lambda = eig.eigenvalues();
  if (lambda.minCoeff() <= 0.0)
    throw StageError("gmss", "covariance of class " + std::to_string(g.class_id) +
                                 " is not positive definite after shrinkage");
  return eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal();
}

SemanticFeature sample_condition(const ClassGaussian& g, double scale, Rng& rng) {
  return sample_conditions(g, scale, 1, rng).front();
}

std::vector<SemanticFeature> sample_conditions(const ClassGaussian& g, double scale, std::size_t count, Rng& rng) {
  const MatrixXd a = sampling_factor(g, scale);
  std::vector<SemanticFeature> out;
  out.reserve(count);
  VectorXd z(g.dim());
  for (std::size_t n = 0; n < count; ++n) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = standard_normal(rng);
    out.push_back({g.mean + a * z, g.class_id, std::nullopt});
  }
  return out;
}

CandidateSet oversample_candidates(const ClassGaussian& g, int b, int factor, Rng& rng) {
  if (b < 1) throw ConfigError("B must be >= 1");
  if (factor < 1) throw ConfigError("oversample factor must be >= 1");
  CandidateSet c;
  c.class_id = g.class_id;
  c.candidates = sample_conditions(g, 1.0, static_cast<std::size_t>(b) * static_cast<std::size_t>(factor), rng);
  return c;
}

void save_gaussians(const std::vector<ClassGaussian>& gaussians, const std::filesystem::path& path) {
  io::Writer w;
  w.magic(std::string_view(kGaussianMagic, 5));
  w.put<std::uint32_t>(kGaussianVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(gaussians.size()));
  w.put<std::uint32_t>(gaussians.empty() ? 0u : static_cast<std::uint32_t>(gaussians.front().dim()));
  for (const auto& g : gaussians) {
    w.put<std::int32_t>(g.class_id);
    w.put<std::uint64_t>(g.sample_count);
    w.put<double>(g.shrinkage);
    w.put_f32(g.mean);
    w.put_f32(g.raw_covariance);
  }
  w.write_file(path);
}

std::vector<ClassGaussian> load_gaussians(const std::filesystem::path& path) {
  auto r = io::Reader::from_file(path);
  r.expect_magic(std::string_view(kGaussianMagic, 5));
  if (r.get<std::uint32_t>() != kGaussianVersion)
    throw ParseError(ParseError::Kind::BadVersion, "unsupported Gaussian container version");
  const auto count = r.get<std::uint32_t>();
  const auto dim = static_cast<Eigen::Index>(r.get<std::uint32_t>());
  if (static_cast<std::uint64_t>(count) * static_cast<std::uint64_t>(dim * dim + dim) * 4 > r.remaining())
    throw ParseError(ParseError::Kind::Truncated, "Gaussian container shorter than its header declares");
  std::vector<ClassGaussian> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    ClassGaussian g;
    g.class_id = r.get<std::int32_t>();
    g.sample_count = r.get<std::uint64_t>();
    g.shrinkage = r.get<double>();
    Eigen::VectorXf mean(dim);
    Eigen::MatrixXf cov(dim, dim);
    r.get_f32(mean.data(), static_cast<std::size_t>(dim));
    r.get_f32(cov.data(), static_cast<std::size_t>(dim * dim));
    g.mean = mean.cast<double>();
    g.raw_covariance = cov.cast<double>();
    g.raw_covariance = 0.5 * (g.raw_covariance + g.raw_covariance.transpose()).eval();
    g.covariance = g.raw_covariance;
    g.covariance.diagonal().array() += g.shrinkage;
    if (!g.mean.allFinite() || !g.covariance.allFinite())
      throw ParseError(ParseError::Kind::BadValue, "non-finite Gaussian parameters");
    out.push_back(std::move(g));
  }
  r.expect_end();
  return out;
}

}  // namespace sasg
