#include <doctest.h>

#include "oracles.hpp"
#include "sasg/sass.hpp"

using namespace sasg;

namespace {

MatrixXd random_points(Eigen::Index n, Eigen::Index d, Rng& rng, double spread = 1.0) {
  MatrixXd m(n, d);
  fill_normal(m, rng);
  return spread * m;
}

ClassGaussian standard_gaussian(int k, int dim, double var = 1.0) {
  ClassGaussian g;
  g.class_id = k;
  g.mean = VectorXd::Zero(dim);
  g.raw_covariance = var * MatrixXd::Identity(dim, dim);
  g.covariance = g.raw_covariance;
  g.sample_count = 100;
  return g;
}

ConfidenceFn constant_confidence(double c) {
  return [c](const SemanticFeature&, int) { return c; };
}

}  // namespace

TEST_CASE("rarity on a two-point reference") {
  MatrixXd ref(2, 1);
  ref << 0.0, 1.0;
  const auto r = ReferenceSet::build(0, ref, 1);
  CHECK(r.radii(0) == 1.0);
  CHECK(r.radii(1) == 1.0);
  MatrixXd c(2, 1);
  c << 0.5, 3.0;
  const VectorXd s = rarity_scores(c, r);
  CHECK(s(0) == 1.0);
  CHECK(s(1) == 0.0);
}

TEST_CASE("rarity_k must be below the reference size") {
  MatrixXd ref(3, 2);
  ref.setRandom();
  CHECK_THROWS_AS(ReferenceSet::build(0, ref, 3), ConfigError);
}

TEST_CASE("rarity matches the brute-force oracle, including points on references") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const MatrixXd ref = random_points(60, 3, rng);
    MatrixXd cands(80, 3);
    cands.topRows(60) = random_points(60, 3, rng, 1.5);
    cands.bottomRows(20) = ref.topRows(20);
    const auto r = ReferenceSet::build(0, ref, 5);
    const VectorXd s = rarity_scores(cands, r);
    const auto o = oracle::rarity(oracle::rows_of(cands), oracle::rows_of(ref), 5);
    for (Eigen::Index i = 0; i < cands.rows(); ++i) CHECK(s(i) == o[i]);
    for (Eigen::Index i = 60; i < 80; ++i) {
      CHECK(s(i) > 0.0);
      CHECK(s(i) <= r.radii(i - 60));
    }
  }
}

TEST_CASE("top-B selection and tie-break") {
  VectorXd s(3);
  s << 0.9, 0.9, 0.1;
  CHECK(top_rarity_indices(s, 2) == std::vector<std::size_t>{0, 1});
  VectorXd flat = VectorXd::Constant(6, 0.4);
  CHECK(top_rarity_indices(flat, 3) == std::vector<std::size_t>{0, 1, 2});
  VectorXd d(5);
  d << 0.1, 0.5, 0.3, 0.9, 0.2;
  CHECK(top_rarity_indices(d, 2) == std::vector<std::size_t>{3, 1});
  CHECK_THROWS_AS(top_rarity_indices(d, 6), ConfigError);
}

TEST_CASE("potential values on closed-form configurations") {
  MatrixXd c = MatrixXd::Zero(1, 2);
  MatrixXd ref(1, 2);
  ref << 3.0, 0.0;
  CHECK(sparsity_potential(c, ref, 3.0).value == doctest::Approx(0.25).epsilon(1e-12));
  ref << 23.0, 0.0;
  CHECK(sparsity_potential(c, ref, 3.0).value < 1e-8);

  const auto single = diversity_potential(c, 3.0);
  CHECK(single.value == 0.0);
  CHECK(single.gradient.cwiseAbs().maxCoeff() == 0.0);

  const MatrixXd twins = MatrixXd::Zero(2, 4);
  const auto pd = diversity_potential(twins, 3.0);
  CHECK(pd.value == doctest::Approx(0.907397).epsilon(1e-6));
  CHECK(pd.gradient.allFinite());

  const auto coincide = sparsity_potential(MatrixXd(ref), ref, 3.0);
  CHECK(coincide.value == doctest::Approx(std::pow(logistic(3.0), 2)));
  CHECK(coincide.gradient.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("potential gradients match finite differences") {
  Rng rng(41);
  for (int rep = 0; rep < 10; ++rep) {
    const MatrixXd c = random_points(5, 4, rng, 1.5);
    const MatrixXd ref = random_points(20, 4, rng, 1.5);
    const auto ps = sparsity_potential(c, ref, 3.0);
    const auto fd_s = oracle::central_difference(
        [&](const MatrixXd& x) { return sparsity_potential(x, ref, 3.0).value; }, c, 1e-5);
    CHECK(oracle::relative_error(ps.gradient, fd_s) < 1e-4);

    const MatrixXd c6 = random_points(6, 4, rng, 1.5);
    const auto pd = diversity_potential(c6, 3.0);
    const auto fd_d =
        oracle::central_difference([&](const MatrixXd& x) { return diversity_potential(x, 3.0).value; }, c6, 1e-5);
    CHECK(oracle::relative_error(pd.gradient, fd_d) < 1e-4);
  }
}

TEST_CASE("potentials are permutation equivariant and translation invariant") {
  Rng rng(5);
  const MatrixXd c = random_points(6, 3, rng);
  const MatrixXd ref = random_points(15, 3, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 3, 0, 5, 1, 4, 2;
  const MatrixXd cp = perm * c;
  const auto s = sparsity_potential(c, ref, 2.0), sp = sparsity_potential(cp, ref, 2.0);
  const auto d = diversity_potential(c, 2.0), dp = diversity_potential(cp, 2.0);
  CHECK(sp.value == doctest::Approx(s.value).epsilon(1e-12));
  CHECK(dp.value == doctest::Approx(d.value).epsilon(1e-12));
  CHECK(((perm * s.gradient) - sp.gradient).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(((perm * d.gradient) - dp.gradient).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::RowVectorXd shift = Eigen::RowVectorXd::Constant(3, 7.5);
  const MatrixXd ct = c.rowwise() + shift;
  const MatrixXd rt = ref.rowwise() + shift;
  CHECK(std::abs(sparsity_potential(ct, rt, 2.0).value - s.value) < 1e-9);
  CHECK(std::abs(diversity_potential(ct, 2.0).value - d.value) < 1e-9);
  CHECK(s.value >= 0.0);
  CHECK(d.value >= 0.0);
}

TEST_CASE("optimize_candidates") {
  SassConfig cfg;
  cfg.iterations = 0;
  MatrixXd ref(3, 2);
  ref << 0, 0, 1, 0, 0, 1;
  const auto r = ReferenceSet::build(0, ref, 1);
  MatrixXd c(2, 2);
  c << 0.2, 0.3, 0.5, 0.1;
  CHECK(optimize_candidates(c, r, cfg) == c);

  SUBCASE("flat tail barely moves") {
    cfg.iterations = 50;
    MatrixXd far(2, 2);
    far << 100, 0, 0, 100;
    CHECK((optimize_candidates(far, r, cfg) - far).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("single step repels from a close reference") {
    MatrixXd ref2(2, 2);
    ref2 << 0.0, 0.0, -40.0, 0.0;
    const auto r2 = ReferenceSet::build(0, ref2, 1);
    MatrixXd cand(1, 2);
    cand << 1.0, 0.0;
    cfg.iterations = 1;
    cfg.eta = 0.5;
    const MatrixXd out = optimize_candidates(cand, r2, cfg);
    CHECK(out.row(0).norm() > 1.0);
  }
  SUBCASE("deterministic with a decreasing trace") {
    cfg.iterations = 30;
    cfg.eps_radius = 1.0;
    cfg.eta = 0.05;
    OptimizationTrace t1, t2;
    const MatrixXd a = optimize_candidates(c, r, cfg, &t1);
    const MatrixXd b = optimize_candidates(c, r, cfg, &t2);
    CHECK(a == b);
    REQUIRE(t1.potential.size() == 31);
    CHECK(t1.potential.back() < t1.potential.front());
  }
}

TEST_CASE("filter_and_supplement bookkeeping") {
  SassConfig cfg;
  cfg.conditions_per_class = 8;
  const auto g = standard_gaussian(2, 3);
  Rng rng(1);
  const MatrixXd opt = random_points(8, 3, rng);

  const auto all = filter_and_supplement(opt, constant_confidence(0.9), g, cfg, rng);
  CHECK(all.count(Provenance::Optimized) == 8);
  for (int i = 0; i < 8; ++i) CHECK(all.conditions[i].vector == VectorXd(opt.row(i).transpose()));

  const auto none = filter_and_supplement(opt, constant_confidence(0.01), g, cfg, rng);
  CHECK(none.count(Provenance::Supplemented) == 8);

  // Rows 1, 4 and 6 fall below the threshold.
  ConfidenceFn by_row = [&](const SemanticFeature& f, int) {
    for (int i : {1, 4, 6})
      if (f.vector == VectorXd(opt.row(i).transpose())) return 0.05;
    return 0.5;
  };
  const auto mixed = filter_and_supplement(opt, by_row, g, cfg, rng);
  CHECK(mixed.conditions.size() == 8);
  CHECK(mixed.count(Provenance::Optimized) == 5);
  CHECK(mixed.count(Provenance::Supplemented) == 3);
  for (const auto& c : mixed.conditions) CHECK(c.gesture_label == 2);
}

TEST_CASE("sass_sample composition") {
  Rng rng(12);
  const MatrixXd ref = random_points(40, 2, rng);
  const auto r = ReferenceSet::build(0, ref, 5);
  const auto g = standard_gaussian(0, 2);
  SassConfig cfg;
  cfg.conditions_per_class = 6;
  cfg.iterations = 0;
  cfg.conf_threshold = 0.0;

  SUBCASE("degenerate config returns the top-B rarity candidates") {
    Rng a(3), b(3);
    SassDiagnostics diag;
    const auto s = sass_sample(g, r, constant_confidence(0.5), cfg, a, &diag);
    const auto cands = oversample_candidates(g, 6, 10, b);
    const MatrixXd cm = feature_matrix(cands.candidates);
    const MatrixXd top = select_top_rarity(cm, r, 6);
    REQUIRE(s.conditions.size() == 6);
    for (int i = 0; i < 6; ++i) {
      CHECK(s.conditions[i].vector == VectorXd(top.row(i).transpose()));
      CHECK(s.provenance[i] == Provenance::Optimized);
    }
    CHECK(diag.selected == top);
  }
  SUBCASE("always B conditions, reproducible") {
    cfg.iterations = 20;
    cfg.eps_radius = 0.5;
    cfg.eta = 0.1;
    cfg.conf_threshold = 0.5;
    Rng a(9), b(9);
    ConfidenceFn half = [](const SemanticFeature& f, int) { return f.vector(0) > 0 ? 0.9 : 0.1; };
    const auto s1 = sass_sample(g, r, half, cfg, a);
    const auto s2 = sass_sample(g, r, half, cfg, b);
    CHECK(s1.conditions.size() == 6);
    CHECK(s1.provenance.size() == 6);
    for (int i = 0; i < 6; ++i) CHECK(s1.conditions[i].vector == s2.conditions[i].vector);
  }
  SUBCASE("too few references") {
    MatrixXd tiny(5, 2);
    tiny.setRandom();
    const auto rt = ReferenceSet::build(0, tiny, 4);
    cfg.rarity_k = 5;
    CHECK_THROWS_AS(sass_sample(g, rt, constant_confidence(1.0), cfg, rng), ConfigError);
  }
}

TEST_CASE("config validation") {
  SassConfig c;
  CHECK_NOTHROW(c.validate());
  c.conf_threshold = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SassConfig{};
  c.eta = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SassConfig{};
  c.iterations = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("condition container round trip") {
  Rng rng(2);
  const auto g = standard_gaussian(1, 4);
  std::vector<ConditionSet> sets{gmss_conditions(g, 5, rng)};
  sets.front().provenance[2] = Provenance::Supplemented;
  const auto path = std::filesystem::temp_directory_path() / "sasg_cond.bin";
  save_condition_sets(sets, path);
  const auto back = load_condition_sets(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].class_id == 1);
  CHECK(back[0].provenance == sets[0].provenance);
  for (int i = 0; i < 5; ++i)
    CHECK((back[0].conditions[i].vector - sets[0].conditions[i].vector).cwiseAbs().maxCoeff() < 1e-6);
  std::filesystem::remove(path);
}
