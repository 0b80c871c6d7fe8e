#include "sasg/sass.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "sasg/binary_io.hpp"

namespace sasg {

namespace {

constexpr char kConditionMagic[] = "SAUGC";
constexpr std::uint32_t kConditionVersion = 1;

SemanticFeature as_feature(const MatrixXd& rows, Eigen::Index i, int k) {
  return {rows.row(i).transpose(), k, std::nullopt};
}

}  // namespace

void SassConfig::validate() const {
  if (conditions_per_class < 1) throw ConfigError("sass.B must be >= 1");
  if (oversample_factor < 1) throw ConfigError("sass.oversample_factor must be >= 1");
  if (rarity_k < 1) throw ConfigError("sass.rarity_k must be >= 1");
  if (iterations < 0) throw ConfigError("sass.iter must be >= 0");
  if (!(eps_radius > 0.0)) throw ConfigError("sass.eps_radius must be > 0");
  if (!(eta > 0.0)) throw ConfigError("sass.eta must be > 0");
  if (!(conf_threshold >= 0.0 && conf_threshold < 1.0)) throw ConfigError("sass.conf_threshold must be in [0, 1)");
}

ReferenceSet ReferenceSet::build(int class_id, MatrixXd points, int k) {
  if (k < 1) throw ConfigError("rarity_k must be >= 1");
  if (k >= points.rows())
    throw ConfigError("rarity_k=" + std::to_string(k) + " needs more than " + std::to_string(k) +
                      " reference points; class " + std::to_string(class_id) + " has " +
                      std::to_string(points.rows()));
  ReferenceSet r;
  r.class_id = class_id;
  r.k = k;
  r.radii = knn_radii(points, k);
  r.points = std::move(points);
  return r;
}

VectorXd rarity_scores(const MatrixXd& candidates, const ReferenceSet& reference) {
  if (reference.k >= reference.size() || reference.radii.size() != reference.size())
    throw ConfigError("reference set has too few points for rarity_k");
  const MatrixXd d = pairwise_distances(candidates, reference.points);
  VectorXd out = VectorXd::Zero(candidates.rows());
  for (Eigen::Index i = 0; i < candidates.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < reference.size(); ++j)
      if (d(i, j) <= reference.radii(j)) best = std::min(best, reference.radii(j));
    if (std::isfinite(best)) out(i) = best;
  }
  return out;
}

std::vector<std::size_t> top_rarity_indices(const VectorXd& scores, int b) {
  if (b < 1) throw ConfigError("B must be >= 1");
  if (scores.size() < b)
    throw ConfigError("cannot select " + std::to_string(b) + " of " + std::to_string(scores.size()) + " candidates");
  std::vector<std::size_t> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(c));
  });
  idx.resize(static_cast<std::size_t>(b));
  return idx;
}

MatrixXd select_top_rarity(const MatrixXd& candidates, const ReferenceSet& reference, int b) {
  const auto idx = top_rarity_indices(rarity_scores(candidates, reference), b);
  MatrixXd out(b, candidates.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = candidates.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

double optimization_scale(const ReferenceSet& reference, const SassConfig& config) {
  if (!config.relative_scale) return 1.0;
  std::vector<double> r(reference.radii.data(), reference.radii.data() + reference.radii.size());
  if (r.empty()) throw ConfigError("empty reference set");
  std::sort(r.begin(), r.end());
  const std::size_t n = r.size();
  const double m = n % 2 ? r[n / 2] : 0.5 * (r[n / 2 - 1] + r[n / 2]);
  if (!(m > 0.0)) throw StageError("sass", "reference set of class " + std::to_string(reference.class_id) +
                                               " has zero median k-NN radius");
  return m;
}

MatrixXd optimize_candidates(MatrixXd candidates, const ReferenceSet& reference, const SassConfig& config,
                             OptimizationTrace* trace) {
  config.validate();
  if (trace) trace->potential.clear();
  const double scale = optimization_scale(reference, config);
  candidates /= scale;
  const MatrixXd ref = reference.points / scale;
  for (int step = 0; step <= config.iterations; ++step) {
    const auto ps = sparsity_potential(candidates, ref, config.eps_radius);
    const auto pd = diversity_potential(candidates, config.eps_radius);
    const double phi = ps.value + pd.value;
    if (!std::isfinite(phi) || !ps.gradient.allFinite() || !pd.gradient.allFinite())
      throw StageError("sass", "non-finite potential or gradient at step " + std::to_string(step));
    if (trace) trace->potential.push_back(phi);
    if (step == config.iterations) break;
    candidates -= config.eta * (ps.gradient + pd.gradient);
  }
  return candidates * scale;
}

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Optimized: return "optimized";
    case Provenance::Supplemented: return "supplemented";
    case Provenance::Sampled: return "sampled";
  }
  return "unknown";
}

std::size_t ConditionSet::count(Provenance p) const {
  return static_cast<std::size_t>(std::count(provenance.begin(), provenance.end(), p));
}

void ConditionSet::validate(std::size_t expected) const {
  if (conditions.size() != expected || provenance.size() != expected)
    throw StageError("sass", "class " + std::to_string(class_id) + " has " + std::to_string(conditions.size()) +
                                 " conditions, expected " + std::to_string(expected));
  for (const auto& c : conditions)
    if (c.gesture_label != class_id) throw StageError("sass", "condition label does not match its class");
}

ConfidenceFn encoder_confidence(const EncoderModel& filter_model) {
  return [&filter_model](const SemanticFeature& f, int k) { return class_confidence(filter_model, f, k); };
}

ConditionSet filter_and_supplement(const MatrixXd& optimized, const ConfidenceFn& confidence,
                                   const ClassGaussian& g, const SassConfig& config, Rng& rng) {
  const auto b = static_cast<std::size_t>(config.conditions_per_class);
  ConditionSet out;
  out.class_id = g.class_id;
  for (Eigen::Index i = 0; i < optimized.rows() && out.conditions.size() < b; ++i) {
    SemanticFeature f = as_feature(optimized, i, g.class_id);
    const double c = confidence(f, g.class_id);
    if (c >= config.conf_threshold) {
      f.confidence = c;
      out.conditions.push_back(std::move(f));
      out.provenance.push_back(Provenance::Optimized);
    }
  }
  if (out.conditions.size() < b) {
    for (auto& f : sample_conditions(g, 0.5, b - out.conditions.size(), rng)) {
      out.conditions.push_back(std::move(f));
      out.provenance.push_back(Provenance::Supplemented);
    }
  }
  out.validate(b);
  return out;
}

ConditionSet filter_and_supplement(const MatrixXd& optimized, const EncoderModel& filter_model,
                                   const ClassGaussian& g, const SassConfig& config, Rng& rng) {
  if (g.class_id >= filter_model.arch.classes) throw ConfigError("filter model has fewer classes than the data");
  return filter_and_supplement(optimized, encoder_confidence(filter_model), g, config, rng);
}

ConditionSet sass_sample(const ClassGaussian& g, const ReferenceSet& reference, const ConfidenceFn& confidence,
                         const SassConfig& config, Rng& rng, SassDiagnostics* diagnostics) {
  config.validate();
  if (reference.class_id != g.class_id) throw ConfigError("reference set and Gaussian belong to different classes");
  if (reference.size() < config.rarity_k + 1)
    throw ConfigError("class " + std::to_string(g.class_id) + " needs at least rarity_k+1 reference features");
  const CandidateSet cands = oversample_candidates(g, config.conditions_per_class, config.oversample_factor, rng);
  const MatrixXd c = feature_matrix(cands.candidates);
  const VectorXd scores = rarity_scores(c, reference);
  const auto top = top_rarity_indices(scores, config.conditions_per_class);
  MatrixXd selected(config.conditions_per_class, c.cols());
  for (std::size_t i = 0; i < top.size(); ++i)
    selected.row(static_cast<Eigen::Index>(i)) = c.row(static_cast<Eigen::Index>(top[i]));

  SassDiagnostics local;
  SassDiagnostics& diag = diagnostics ? *diagnostics : local;
  const MatrixXd optimized = optimize_candidates(selected, reference, config, &diag.trace);
  ConditionSet out = filter_and_supplement(optimized, confidence, g, config, rng);
  if (diagnostics) {
    diag.candidates = c;
    diag.candidate_rarity = scores;
    diag.selected = selected;
    diag.selected_rarity = rarity_scores(selected, reference);
    diag.optimized = optimized;
    diag.optimized_rarity = rarity_scores(optimized, reference);
  }
  return out;
}

ConditionSet sass_sample(const ClassGaussian& g, const ReferenceSet& reference, const EncoderModel& filter_model,
                         const SassConfig& config, Rng& rng, SassDiagnostics* diagnostics) {
  if (g.class_id >= filter_model.arch.classes) throw ConfigError("filter model has fewer classes than the data");
  return sass_sample(g, reference, encoder_confidence(filter_model), config, rng, diagnostics);
}

ConditionSet gmss_conditions(const ClassGaussian& g, int count, Rng& rng) {
  if (count < 1) throw ConfigError("condition count must be >= 1");
  ConditionSet out;
  out.class_id = g.class_id;
  out.conditions = sample_conditions(g, 1.0, static_cast<std::size_t>(count), rng);
  out.provenance.assign(out.conditions.size(), Provenance::Sampled);
  return out;
}

void save_condition_sets(const std::vector<ConditionSet>& sets, const std::filesystem::path& path) {
  io::Writer w;
  w.magic(std::string_view(kConditionMagic, 5));
  w.put<std::uint32_t>(kConditionVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(sets.size()));
  for (const auto& s : sets) {
    w.put<std::int32_t>(s.class_id);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.conditions.size()));
    w.put<std::uint32_t>(s.conditions.empty() ? 0u : static_cast<std::uint32_t>(s.conditions.front().vector.size()));
    for (std::size_t i = 0; i < s.conditions.size(); ++i) {
      w.put<std::uint8_t>(static_cast<std::uint8_t>(s.provenance[i]));
      w.put_f32(s.conditions[i].vector);
    }
  }
  w.write_file(path);
}

std::vector<ConditionSet> load_condition_sets(const std::filesystem::path& path) {
  auto r = io::Reader::from_file(path);
  r.expect_magic(std::string_view(kConditionMagic, 5));
  if (r.get<std::uint32_t>() != kConditionVersion)
    throw ParseError(ParseError::Kind::BadVersion, "unsupported condition container version");
  const auto n_sets = r.get<std::uint32_t>();
  std::vector<ConditionSet> out;
  for (std::uint32_t s = 0; s < n_sets; ++s) {
    ConditionSet cs;
    cs.class_id = r.get<std::int32_t>();
    const auto n = r.get<std::uint32_t>();
    const auto dim = r.get<std::uint32_t>();
    if (static_cast<std::uint64_t>(n) * (1 + 4ull * dim) > r.remaining())
      throw ParseError(ParseError::Kind::Truncated, "condition container shorter than its header declares");
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto tag = r.get<std::uint8_t>();
      if (tag > 2) throw ParseError(ParseError::Kind::BadValue, "unknown provenance tag");
      Eigen::VectorXf v(dim);
      r.get_f32(v.data(), dim);
      if (!v.allFinite()) throw ParseError(ParseError::Kind::BadValue, "non-finite condition vector");
      cs.conditions.push_back({v.cast<double>(), cs.class_id, std::nullopt});
      cs.provenance.push_back(static_cast<Provenance>(tag));
    }
    out.push_back(std::move(cs));
  }
  r.expect_end();
  return out;
}

void write_rarity_histogram(const std::vector<std::pair<int, VectorXd>>& scores, int bins,
                            const std::filesystem::path& path) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  double hi = 0.0;
  for (const auto& [k, s] : scores)
    if (s.size() > 0) hi = std::max(hi, s.maxCoeff());
  if (hi <= 0.0) hi = 1.0;
  std::ofstream out(path);
  if (!out) throw ParseError(ParseError::Kind::Io, "cannot open for writing: " + path.string());
  out << "class,bin_lo,bin_hi,count\n";
  const double width = hi / bins;
  for (const auto& [k, s] : scores) {
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (Eigen::Index i = 0; i < s.size(); ++i)
      ++counts[static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(s(i) / width)))];
    for (int b = 0; b < bins; ++b) out << k << ',' << b * width << ',' << (b + 1) * width << ',' << counts[b] << '\n';
  }
}

}  // namespace sasg
