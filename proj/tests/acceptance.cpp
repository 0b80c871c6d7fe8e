// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "sasg/pipeline.hpp"
#include "sasg/report.hpp"

using namespace sasg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;
std::function<bool(int)> selected = [](int) { return true; };

void emit(int id, const std::string& name, const Outcome& o, double seconds) {
  std::printf("CRITERION %-3d %s  %s: %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
              seconds);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

template <typename F>
Outcome timed(int id, const std::string& name, double limit_s, F&& body) {
  if (!selected(id)) return {};
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_s > 0 && s >= limit_s) {
    o.pass = false;
    o.detail += " (runtime limit " + std::to_string(static_cast<int>(limit_s)) + " s exceeded)";
  }
  emit(id, name, o, s);
  return o;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

MatrixXd normal_matrix(Eigen::Index n, Eigen::Index d, Rng& rng) {
  MatrixXd m(n, d);
  fill_normal(m, rng);
  return m;
}

double max_abs_diff(const std::vector<double>& a, const VectorXd& b) {
  if (static_cast<Eigen::Index>(a.size()) != b.size()) return 1e300;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b(static_cast<Eigen::Index>(i))));
  return m;
}

Outcome gaussian_fit() {
  Rng rng(101);
  double worst = 0.0;
  for (int set = 0; set < 100; ++set) {
    const MatrixXd mix = normal_matrix(8, 8, rng);
    const MatrixXd x = (normal_matrix(50, 8, rng) * mix).rowwise() + normal_matrix(1, 8, rng).row(0) * 3.0;
    std::vector<SemanticFeature> feats;
    for (Eigen::Index i = 0; i < x.rows(); ++i) feats.push_back({x.row(i).transpose(), 0, std::nullopt});
    const auto g = fit_class_gaussians(feats, 1).front();
    const auto ref = oracle::mean_cov(oracle::rows_of(x));
    for (int a = 0; a < 8; ++a) {
      worst = std::max(worst, std::abs(g.mean(a) - ref.mean[a]));
      for (int b = 0; b < 8; ++b) worst = std::max(worst, std::abs(g.raw_covariance(a, b) - ref.cov[a][b]));
    }
  }
  return {worst < 1e-10, fmt("100 sets, n=50, d=8, max element error %.3g (< 1e-10)", worst)};
}

Outcome potential_gradients() {
  Rng rng(202);
  std::uniform_int_distribution<int> bd(1, 8), rd(1, 50), dd(1, 8);
  double worst = 0.0;
  for (int cfg = 0; cfg < 100; ++cfg) {
    const int b = bd(rng), r = rd(rng), d = dd(rng);
    const MatrixXd c = 1.5 * normal_matrix(b, d, rng);
    const MatrixXd ref = 1.5 * normal_matrix(r, d, rng);
    const double eps = 3.0;
    const auto s = sparsity_potential(c, ref, eps);
    const MatrixXd fs = oracle::central_difference(
        [&](const MatrixXd& m) { return sparsity_potential(m, ref, eps).value; }, c, 1e-5);
    const auto v = diversity_potential(c, eps);
    const MatrixXd fv =
        oracle::central_difference([&](const MatrixXd& m) { return diversity_potential(m, eps).value; }, c, 1e-5);
    worst = std::max({worst, oracle::relative_error(s.gradient, fs), oracle::relative_error(v.gradient, fv)});
  }
  return {worst < 1e-4, fmt("100 configs (B<=8, |R|<=50, d<=8), max relative error %.3g (< 1e-4)", worst)};
}

Outcome neighbour_oracles() {
  Rng rng(303);
  std::uniform_int_distribution<int> nd(30, 500), dd(2, 8);
  double worst = 0.0;
  for (int set = 0; set < 50; ++set) {
    const int n = nd(rng), d = dd(rng);
    MatrixXd x = normal_matrix(n, d, rng);
    // Every fifth set sits on a coarse grid so distance ties occur.
    if (set % 5 == 4) x = (x * 2.0).array().round().matrix();
    MatrixXd q = 1.3 * normal_matrix(std::max(n / 3, 5), d, rng);
    if (set % 5 == 4) q = (q * 2.0).array().round().matrix();
    const auto px = oracle::rows_of(x), pq = oracle::rows_of(q);
    const auto ref = ReferenceSet::build(0, x, 5);
    worst = std::max(worst, max_abs_diff(oracle::rarity(pq, px, 5), rarity_scores(q, ref)));
    worst = std::max(worst, std::abs(oracle::avg_knn(px, 5) - avg_knn(x, 5)));
    worst = std::max(worst, max_abs_diff(oracle::lof(px, 20), lof(x, 20)));
    worst = std::max(worst, max_abs_diff(oracle::lof_novelty(pq, px, 20), lof_to_reference(q, x, 20)));
  }
  return {worst <= 1e-9, fmt("50 sets of 30-500 points (10 with ties), max deviation %.3g (<= 1e-9)", worst)};
}

struct FixtureStats {
  int decreased = 0;
  double selected_rarity = 0.0;
  double optimized_rarity = 0.0;
};

// One class drawn from three unit-variance Gaussians on a triangle with the
// given side length, 100 reference points each.
FixtureStats sass_fixture(double side, const SassConfig& cfg) {
  FixtureStats st;
  for (int run = 0; run < 20; ++run) {
    Rng rng(7000 + static_cast<std::uint64_t>(run));
    const double mu[3][2] = {{0.0, 0.0}, {side, 0.0}, {side / 2.0, side * 0.8660254037844386}};
    MatrixXd ref(300, 2);
    for (int i = 0; i < 300; ++i) {
      ref(i, 0) = mu[i / 100][0] + standard_normal(rng);
      ref(i, 1) = mu[i / 100][1] + standard_normal(rng);
    }
    const auto g = fit_gaussian(0, ref);
    const auto rs = ReferenceSet::build(0, ref, cfg.rarity_k);
    const auto cands = oversample_candidates(g, cfg.conditions_per_class, cfg.oversample_factor, rng);
    const MatrixXd top = select_top_rarity(feature_matrix(cands.candidates), rs, cfg.conditions_per_class);
    OptimizationTrace trace;
    const MatrixXd opt = optimize_candidates(top, rs, cfg, &trace);
    if (trace.potential.back() < trace.potential.front()) ++st.decreased;
    if (run < 3) {
      st.selected_rarity += rarity_scores(top, rs).mean() / 3.0;
      st.optimized_rarity += rarity_scores(opt, rs).mean() / 3.0;
    }
  }
  return st;
}

SassConfig fixture_preset() {
  SassConfig c;
  c.iterations = 200;
  c.eps_radius = 3.0;  // in units of the median 5-NN radius
  c.relative_scale = true;
  c.eta = 5e-4;
  return c;
}

Outcome sass_mechanism() {
  const SassConfig cfg = fixture_preset();
  const auto st = sass_fixture(3.0, cfg);
  const auto sep = sass_fixture(6.0, cfg);
  const bool pass = st.decreased >= 19 && st.optimized_rarity > st.selected_rarity;
  return {pass, fmt("3 overlapping modes (spacing 3 sd), eps=3 x median kNN radius, eta=5e-4: potential decreased in "
                    "%d/20 runs; rarity top-B %.4f -> optimized %.4f (3 seeds). "
                    "[info: well-separated modes (spacing 6 sd): %d/20 decreased, rarity %.4f -> %.4f]",
                    st.decreased, st.selected_rarity, st.optimized_rarity, sep.decreased, sep.selected_rarity,
                    sep.optimized_rarity)};
}

Outcome diffusion_unit(const std::vector<double>& loss_trace) {
  std::vector<std::string> parts;
  bool pass = true;

  // (a) constant x0 predictor
  {
    const auto s = cosine_schedule(1000);
    const float target = 0.6180339f;
    X0Predictor constant = [&](const MatrixXf& x, const std::vector<int>&) {
      return MatrixXf::Constant(x.rows(), x.cols(), target);
    };
    double worst = 0.0;
    for (double eta : {0.0, 1.0}) {
      SamplerConfig sc;
      sc.ddim_steps = 50;
      sc.stochasticity = eta;
      Rng rng(7);
      worst = std::max(worst, static_cast<double>((ddim_sample_with(constant, s, 4, 128, 3, sc, rng).array() - target)
                                                      .abs()
                                                      .maxCoeff()));
    }
    const bool ok = worst <= 1e-5;
    pass &= ok;
    parts.push_back(fmt("(a) DDIM constant-x0 error %.2g %s", worst, ok ? "ok" : "BAD"));
  }
  // (b) schedule
  {
    const auto s = cosine_schedule(1000);
    bool ok = s.alpha_bar.front() == 1.0 && s.alpha_bar.back() < 1e-3 && s.alpha_bar.back() >= 0.0;
    for (std::size_t t = 1; t < s.alpha_bar.size(); ++t) {
      ok &= s.alpha_bar[t] < s.alpha_bar[t - 1];
      ok &= s.beta[t] > 0.0 && s.beta[t] <= 0.999;
      ok &= std::abs(s.alpha_bar[t] - s.alpha_bar[t - 1] * (1.0 - s.beta[t])) <= 1e-15;
    }
    pass &= ok;
    parts.push_back(fmt("(b) schedule alpha_bar[0]=1, alpha_bar[T]=%.2g, monotone %s", s.alpha_bar.back(),
                        ok ? "ok" : "BAD"));
  }
  // (c) Parseval
  {
    Rng rng(8);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const MatrixXd r = normal_matrix(4, 128 * 3, rng);
      const auto terms = srg_terms(r, 128);
      worst = std::max(worst, std::abs(terms.fourier - terms.time) / terms.time);
    }
    const bool ok = worst <= 1e-6;
    pass &= ok;
    parts.push_back(fmt("(c) Parseval relative gap %.2g %s", worst, ok ? "ok" : "BAD"));
  }
  // (d) miniature model gradient check
  {
    DenoiserArch a;
    a.channels = 2;
    a.length = 8;
    a.classes = 3;
    a.feature_dim = 4;
    a.base_width = 4;
    a.depth = 2;
    a.time_dim = 4;
    a.embed_dim = 4;
    a.heads = 2;
    a.cond_tokens = 2;
    a.groups = 2;
    Rng rng(9);
    Denoiser<double> net(a);
    net.initialize(rng);
    MatrixXd x(2, 24), x0(2, 24);
    fill_normal(x, rng);
    fill_normal(x0, rng);
    Conditioning<double> cond;
    cond.labels = {0, -1, 2};
    cond.use_feature = {true, false, true};
    cond.features = MatrixXd(4, 3);
    fill_normal(cond.features, rng);
    const std::vector<int> ts{3, 500, 990};
    auto loss_of = [&]() {
      nn::Tape<double> e(false);
      return e.value(srg_loss(e, net.forward(e, e.input(x), ts, cond), x0, 8))(0, 0);
    };
    nn::Tape<double> t(true);
    t.backward(srg_loss(t, net.forward(t, t.input(x), ts, cond), x0, 8));
    auto grads = net.params.zero_gradients();
    t.accumulate(grads);
    const VectorXd theta = net.params.flatten();
    VectorXd analytic(theta.size());
    Eigen::Index o = 0;
    for (const auto& g : grads) {
      analytic.segment(o, g.size()) = Eigen::Map<const VectorXd>(g.data(), g.size());
      o += g.size();
    }
    VectorXd an(theta.size()), num(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      VectorXd tp = theta, tm = theta;
      tp(i) += 1e-5;
      tm(i) -= 1e-5;
      net.params.assign(tp);
      const double fp = loss_of();
      net.params.assign(tm);
      const double fm = loss_of();
      num(i) = (fp - fm) / 2e-5;
      an(i) = analytic(i);
    }
    net.params.assign(theta);
    const double err = oracle::relative_error(an, num);
    const bool ok = err < 1e-3;
    pass &= ok;
    parts.push_back(fmt("(d) mini-model gradient over all %d parameters, rel err %.2g %s",
                        static_cast<int>(theta.size()), err, ok ? "ok" : "BAD"));
  }
  // (e) toy training
  {
    bool ok = loss_trace.size() >= 200;
    double head = 0.0, tail = 0.0;
    if (ok) {
      head = std::accumulate(loss_trace.begin(), loss_trace.begin() + 100, 0.0) / 100.0;
      tail = std::accumulate(loss_trace.end() - 100, loss_trace.end(), 0.0) / 100.0;
      ok = tail <= 0.5 * head;
    }
    pass &= ok;
    parts.push_back(fmt("(e) toy run: first-100 mean loss %.1f, last-100 %.1f, ratio %.3f (<= 0.5) %s", head, tail,
                        head > 0 ? tail / head : 0.0, ok ? "ok" : "BAD"));
  }
  std::string detail;
  for (const auto& p : parts) detail += (detail.empty() ? "" : "; ") + p;
  return {pass, detail};
}

Outcome dropout_rates() {
  Rng rng(10);
  WindowedDataset d{{}, SplitTag::Train, 2};
  std::vector<SemanticFeature> feats;
  for (int i = 0; i < 40; ++i) {
    SignalWindow w;
    w.values = MatrixXf(2, 8);
    fill_normal(w.values, rng);
    w.gesture_label = i % 2;
    d.windows.push_back(w);
    VectorXd f(4);
    for (auto& e : f) e = standard_normal(rng);
    feats.push_back({f, w.gesture_label, std::nullopt});
  }
  DenoiserArch a;
  a.base_width = 4;
  a.depth = 2;
  a.time_dim = 4;
  a.embed_dim = 4;
  a.heads = 1;
  a.cond_tokens = 1;
  a.groups = 2;
  const DenoiserArch arch = denoiser_arch_for(d, 4, a);
  const auto schedule = cosine_schedule(100);
  auto run = [&](double rate, int iterations) {
    DiffusionTrainConfig c;
    c.batch_size = 50;
    c.iterations = iterations;
    c.cond_dropout = rate;
    c.seed = 11;
    DiffusionTrainStats st;
    train_diffusion(d, feats, c, arch, schedule, &st);
    return st;
  };
  const auto s05 = run(0.05, 200);
  const auto s1 = run(1.0, 20);
  const auto s0 = run(0.0, 20);
  const double frac = static_cast<double>(s05.dropped) / static_cast<double>(s05.samples);
  const bool pass = s05.samples == 10000 && frac >= 0.03 && frac <= 0.07 && s1.dropped == s1.samples &&
                    s1.semantic_used == 0 && s0.dropped == 0 && s0.semantic_used == s0.samples;
  return {pass, fmt("rate 0.05: %zu/%zu dropped (%.4f in [0.03, 0.07]); rate 1: %zu/%zu; rate 0: %zu/%zu", s05.dropped,
                    s05.samples, frac, s1.dropped, s1.samples, s0.dropped, s0.samples)};
}

struct ToyRuns {
  std::vector<ExperimentResult> runs;
  std::vector<double> seconds;
};

ToyRuns toy_runs() {
  ToyRuns out;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    ExperimentConfig c = ExperimentConfig::desk();
    c.seed = seed;
    const auto t0 = Clock::now();
    RunOptions opt;
    opt.progress = [seed, t0](const std::string& s) {
      std::fprintf(stderr, "  [toy seed %llu, %6.1f s] %s\n", static_cast<unsigned long long>(seed),
                   std::chrono::duration<double>(Clock::now() - t0).count(), s.c_str());
    };
    out.runs.push_back(run_experiment(c, opt));
    out.seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return out;
}

double mean_over(const ToyRuns& t, const std::function<double(const ExperimentResult&)>& f) {
  double s = 0.0;
  for (const auto& r : t.runs) s += f(r);
  return s / static_cast<double>(t.runs.size());
}

Outcome sparsity_direction(const ToyRuns& t) {
  auto g = [](Arm a, double GenerationMetrics::*m) {
    return [a, m](const ExperimentResult& r) { return (*r.arm(a).generation).*m; };
  };
  const double ks = mean_over(t, g(Arm::Sass, &GenerationMetrics::avg_knn));
  const double kg = mean_over(t, g(Arm::Gmss, &GenerationMetrics::avg_knn));
  const double ls = mean_over(t, g(Arm::Sass, &GenerationMetrics::lof_median));
  const double lg = mean_over(t, g(Arm::Gmss, &GenerationMetrics::lof_median));
  const double rs = mean_over(t, g(Arm::Sass, &GenerationMetrics::rarity_mean));
  const double rg = mean_over(t, g(Arm::Gmss, &GenerationMetrics::rarity_mean));
  return {ks > kg && ls > lg && rs > rg,
          fmt("3-seed means SASS vs GMSS: AvgKNN %.4f vs %.4f, median LOF %.4f vs %.4f, rarity %.4f vs %.4f", ks, kg,
              ls, lg, rs, rg)};
}

Outcome faithfulness_direction(const ToyRuns& t) {
  auto g = [](Arm a, double GenerationMetrics::*m) {
    return [a, m](const ExperimentResult& r) { return (*r.arm(a).generation).*m; };
  };
  const double fg = mean_over(t, g(Arm::Gmss, &GenerationMetrics::fid));
  const double fl = mean_over(t, g(Arm::LabelOnly, &GenerationMetrics::fid));
  const double cg = mean_over(t, g(Arm::Gmss, &GenerationMetrics::cas));
  const double cl = mean_over(t, g(Arm::LabelOnly, &GenerationMetrics::cas));
  const double ftg = mean_over(t, g(Arm::Gmss, &GenerationMetrics::fid_train));
  const double ftl = mean_over(t, g(Arm::LabelOnly, &GenerationMetrics::fid_train));
  return {fg < fl && cg > cl,
          fmt("3-seed means GMSS vs label-only: FID(test) %.4f vs %.4f, CAS %.4f vs %.4f "
              "[info: FID(train) %.4f vs %.4f]",
              fg, fl, cg, cl, ftg, ftl)};
}

Outcome accuracy_direction(const ToyRuns& t) {
  double base = 0.0, aug = 0.0, worst_s = 0.0;
  int at_least = 0;
  std::string per;
  bool shape = true;
  for (std::size_t i = 0; i < t.runs.size(); ++i) {
    const auto& r = t.runs[i];
    const double b = r.arm(Arm::Baseline).downstream.accuracy;
    const double a = r.arm(Arm::Sass).downstream.accuracy;
    base += b / 3.0;
    aug += a / 3.0;
    if (a >= b) ++at_least;
    worst_s = std::max(worst_s, t.seconds[i]);
    per += fmt(" seed%llu %.4f/%.4f", static_cast<unsigned long long>(r.seed), a, b);
    shape &= r.train_size == 160 && r.arm(Arm::Sass).train_size == 2 * r.train_size;
    for (auto n : generation_counts(prepare_data(ExperimentConfig::desk()).train, 1.0)) shape &= n == 40;
  }
  const bool pass = aug >= base - 0.005 && at_least >= 2 && worst_s < 1800.0 && shape;
  return {pass, fmt("augmented (SASS, ratio 1) vs baseline mean accuracy %.4f vs %.4f, >= baseline in %d/3 seeds "
                    "(augmented/baseline:%s); 40 train windows/class, combined = 2x: %s; slowest full pipeline %.0f s "
                    "(< 1800)",
                    aug, base, at_least, per.c_str(), shape ? "yes" : "NO", worst_s)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const std::filesystem::path& cli) {
  const auto root = std::filesystem::temp_directory_path() / "sasg_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  const std::string flags =
      " --seed 5 --diffusion.iterations 150 --encoder.generation.epochs 8 --encoder.evaluation.epochs 8"
      " --downstream.epochs 8 --sampler.ddim_steps 20 --sass.B 8";
  for (const char* run : {"a", "b"}) {
    const std::string cmd = "\"" + cli.string() + "\" run --out \"" + (root / run).string() + "\"" + flags +
                            " > \"" + (root / (std::string(run) + ".log")).string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "run " + std::string(run) + " failed: " + cmd};
  }
  std::size_t compared = 0, differing = 0;
  std::string first_diff;
  for (const char* dir : {"data", "models", "generated", "report"})
    for (const auto& e : std::filesystem::directory_iterator(root / "a" / dir)) {
      const auto name = e.path().filename();
      if (std::string(dir) == "report" && name.extension() != ".csv") continue;
      ++compared;
      if (slurp(e.path()) != slurp(root / "b" / dir / name)) {
        ++differing;
        if (first_diff.empty()) first_diff = (std::filesystem::path(dir) / name).string();
      }
    }
  const bool json_same = slurp(root / "a" / "results.json") == slurp(root / "b" / "results.json");
  const bool pass = compared >= 5 && differing == 0 && json_same;
  return {pass, fmt("two CLI runs, %zu files (data, models, generated datasets, metric CSVs) compared byte-for-byte, %zu differ%s; "
                    "results.json identical: %s",
                    compared, differing, first_diff.empty() ? "" : (" (first: " + first_diff + ")").c_str(),
                    json_same ? "yes" : "no")};
}

}  // namespace

// Usage: acceptance [path/to/sasgda] [comma-separated criterion ids]
int main(int argc, char** argv) {
  const std::filesystem::path cli = argc > 1 ? argv[1] : "sasgda";
  std::set<int> only;
  if (argc > 2) {
    std::stringstream ss(argv[2]);
    for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
  }
  selected = [only](int id) { return only.empty() || only.count(id) > 0; };
  timed(1, "Gaussian fit oracle", 5.0, gaussian_fit);
  timed(2, "potential gradients", 10.0, potential_gradients);
  timed(3, "rarity/AvgKNN/LOF oracles", 30.0, neighbour_oracles);
  timed(4, "SASS mechanism on a 2-D fixture", 60.0, sass_mechanism);

  ToyRuns toy;
  std::string toy_error;
  if (selected(5) || selected(6) || selected(7) || selected(8)) {
    std::fprintf(stderr, "toy end-to-end runs (3 seeds)...\n");
    try {
      toy = toy_runs();
    } catch (const std::exception& e) {
      toy_error = e.what();
    }
  }
  auto toy_criterion = [&](int id, const std::string& name, const std::function<Outcome(const ToyRuns&)>& f) {
    if (!selected(id)) return;
    if (!toy_error.empty()) return emit(id, name, {false, "toy run failed: " + toy_error}, 0.0);
    timed(id, name, 0.0, [&] { return f(toy); });
  };
  toy_criterion(5, "sparsity direction", sparsity_direction);
  toy_criterion(6, "faithfulness direction", faithfulness_direction);
  timed(7, "diffusion correctness", 0.0, [&] {
    return diffusion_unit(toy.runs.empty() ? std::vector<double>{} : toy.runs.front().semantic_loss);
  });
  toy_criterion(8, "end-to-end accuracy", accuracy_direction);
  timed(9, "determinism", 0.0, [&] { return determinism(cli); });
  timed(10, "condition dropout", 0.0, dropout_rates);

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
