#include "sasg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include <json.hpp>

namespace sasg {

namespace {

constexpr const char* kVersion = "sasg 0.1.0";

template <typename F>
auto run_stage(const std::string& name, const ProgressFn& progress, F&& body) -> decltype(body()) {
  if (progress) progress(name);
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::uint64_t file_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("persist", "cannot write " + path.string());
  out << text;
  if (!out) throw StageError("persist", "write failed for " + path.string());
}

/// Records artifacts written under the bundle root; a no-op without one.
class BundleWriter {
 public:
  BundleWriter(std::filesystem::path root, ExperimentResult& result) : root_(std::move(root)), result_(result) {
    if (root_.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(root_ / "data", ec);
    std::filesystem::create_directories(root_ / "models", ec);
    std::filesystem::create_directories(root_ / "generated", ec);
    if (ec || !std::filesystem::is_directory(root_)) throw StageError("persist", "cannot create " + root_.string());
  }

  bool enabled() const { return !root_.empty(); }

  template <typename Save>
  void put(const std::string& rel, Save&& save) {
    if (!enabled()) return;
    const auto path = root_ / rel;
    save(path);
    result_.artifacts.emplace_back(rel, file_fingerprint(path));
  }

  void text(const std::string& rel, const std::string& body) {
    put(rel, [&](const std::filesystem::path& p) { write_text(p, body); });
  }

 private:
  std::filesystem::path root_;
  ExperimentResult& result_;
};

std::vector<std::vector<std::size_t>> indices_by_class(const WindowedDataset& data, int classes) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < data.size(); ++i)
    out[static_cast<std::size_t>(data.windows[i].gesture_label)].push_back(i);
  return out;
}

MatrixXd rows_of(const MatrixXd& m, const std::vector<std::size_t>& idx) {
  MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

VectorXd channel_std(const WindowedDataset& data) {
  const Eigen::Index c = data.channels();
  VectorXd sum = VectorXd::Zero(c), sq = VectorXd::Zero(c);
  double n = 0;
  for (const auto& w : data.windows) {
    const MatrixXd v = w.values.cast<double>();
    sum += v.rowwise().sum();
    sq += v.array().square().matrix().rowwise().sum();
    n += static_cast<double>(v.cols());
  }
  const VectorXd mean = sum / n;
  return (sq / n - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
}

struct EvalContext {
  const EncoderModel* eval = nullptr;
  MatrixXd test_features;
  MatrixXd train_features;
  std::vector<MatrixXd> train_by_class;  // eval-encoder features of real train windows
  std::vector<ReferenceSet> references;
};

GenerationMetrics generation_metrics(const WindowedDataset& generated, const EvalContext& ctx,
                                     const ExperimentConfig& config) {
  GenerationMetrics m;
  const auto feats = extract_features(*ctx.eval, generated.windows);
  const MatrixXd g = feature_matrix(feats);
  m.fid = fid(ctx.test_features, g);
  m.fid_train = fid(ctx.train_features, g);
  m.cas = cas(*ctx.eval, generated);
  m.knn_samples.assign(generated.size(), 0.0);
  m.lof_samples.assign(generated.size(), 0.0);
  m.rarity_samples.assign(generated.size(), 0.0);
  const auto by_class = indices_by_class(generated, static_cast<int>(ctx.train_by_class.size()));
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    if (by_class[k].empty()) continue;
    const MatrixXd q = rows_of(g, by_class[k]);
    const auto ref_n = static_cast<int>(ctx.train_by_class[k].rows());
    const VectorXd nan = VectorXd::Constant(q.rows(), std::nan(""));
    const VectorXd knn =
        ref_n >= config.metrics_knn_k ? knn_mean_distance_to(q, ctx.train_by_class[k], config.metrics_knn_k) : nan;
    const VectorXd lf =
        ref_n > config.metrics_lof_k ? lof_to_reference(q, ctx.train_by_class[k], config.metrics_lof_k) : nan;
    const VectorXd rar = rarity_scores(q, ctx.references[k]);
    for (std::size_t i = 0; i < by_class[k].size(); ++i) {
      const auto j = by_class[k][i];
      const auto e = static_cast<Eigen::Index>(i);
      m.knn_samples[j] = knn(e);
      m.lof_samples[j] = lf(e);
      m.rarity_samples[j] = rar(e);
    }
    m.per_class.push_back({static_cast<int>(k), by_class[k].size(), knn.mean(), median(lf), rar.mean()});
  }
  const Eigen::Map<const VectorXd> knn_all(m.knn_samples.data(), static_cast<Eigen::Index>(m.knn_samples.size()));
  const Eigen::Map<const VectorXd> lof_all(m.lof_samples.data(), static_cast<Eigen::Index>(m.lof_samples.size()));
  const Eigen::Map<const VectorXd> rar_all(m.rarity_samples.data(), static_cast<Eigen::Index>(m.rarity_samples.size()));
  m.avg_knn = knn_all.mean();
  m.lof_median = median(lof_all);
  m.rarity_mean = rar_all.mean();
  const auto n = static_cast<int>(g.rows());
  m.avg_knn_within = n > config.metrics_knn_k ? avg_knn(g, config.metrics_knn_k) : std::nan("");
  m.lof_median_within = n > config.metrics_lof_k ? median(lof(g, config.metrics_lof_k)) : std::nan("");
  m.channel_std = channel_std(generated);
  return m;
}

WindowedDataset combined_train(const WindowedDataset& train, const WindowedDataset& generated, std::uint64_t seed) {
  WindowedDataset out;
  out.split = SplitTag::Train;
  out.class_count = train.class_count;
  out.windows = train.windows;
  out.windows.insert(out.windows.end(), generated.windows.begin(), generated.windows.end());
  Rng rng(seed);
  std::shuffle(out.windows.begin(), out.windows.end(), rng);
  return out;
}

nlohmann::ordered_json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::ordered_json report_json(const ClassificationReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  auto& pc = j["per_class"] = nlohmann::ordered_json::array();
  for (const auto& c : r.per_class)
    pc.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support},
                  {"absent", c.absent}});
  auto& cm = j["confusion"] = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < r.confusion.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index k = 0; k < r.confusion.cols(); ++k) row.push_back(r.confusion(i, k));
    cm.push_back(row);
  }
  return j;
}

nlohmann::ordered_json arm_json(const ArmResult& a) {
  nlohmann::ordered_json j;
  j["arm"] = arm_name(a.arm);
  j["ratio"] = a.ratio;
  j["generated"] = a.generated;
  j["train_size"] = a.train_size;
  j["generated_file"] = a.generated_file;
  j["generated_hash"] = hex64(a.generated_hash);
  j["downstream"] = report_json(a.downstream);
  auto& curve = j["curve"] = nlohmann::ordered_json::array();
  for (const auto& e : a.curve)
    curve.push_back({{"epoch", e.epoch},
                     {"loss", e.loss},
                     {"train_accuracy", e.train_accuracy},
                     {"test_accuracy", e.monitor_accuracy ? nlohmann::ordered_json(*e.monitor_accuracy) : nullptr}});
  if (a.generation) {
    const auto& g = *a.generation;
    auto& m = j["generation"];
    m["fid"] = json_number(g.fid);
    m["fid_train"] = json_number(g.fid_train);
    m["cas"] = g.cas;
    m["avg_knn"] = g.avg_knn;
    m["lof_median"] = g.lof_median;
    m["rarity_mean"] = g.rarity_mean;
    m["avg_knn_within"] = json_number(g.avg_knn_within);
    m["lof_median_within"] = json_number(g.lof_median_within);
    auto& pc = m["per_class"] = nlohmann::ordered_json::array();
    for (const auto& r : g.per_class)
      pc.push_back({{"class", r.class_id},
                    {"count", r.count},
                    {"avg_knn", r.avg_knn},
                    {"lof_median", r.lof_median},
                    {"rarity_mean", r.rarity_mean}});
    m["knn_samples"] = g.knn_samples;
    m["lof_samples"] = g.lof_samples;
    m["rarity_samples"] = g.rarity_samples;
    m["channel_std"] = std::vector<double>(g.channel_std.data(), g.channel_std.data() + g.channel_std.size());
  }
  return j;
}

std::string ratio_tag(double ratio) {
  std::string s = std::to_string(ratio);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

std::string loss_csv(const ExperimentResult& r) {
  std::string out = "model,iteration,loss\n";
  auto emit = [&](const char* name, const std::vector<double>& trace) {
    for (std::size_t i = 0; i < trace.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", trace[i]);
      out += std::string(name) + "," + std::to_string(i) + "," + buf + "\n";
    }
  };
  emit("semantic", r.semantic_loss);
  emit("label_only", r.label_loss);
  return out;
}

}  // namespace

const char* arm_name(Arm arm) {
  switch (arm) {
    case Arm::Baseline: return "baseline";
    case Arm::LabelOnly: return "label_only";
    case Arm::Gmss: return "gmss";
    case Arm::Sass: return "sass";
  }
  return "?";
}

Arm parse_arm(const std::string& text) {
  for (Arm a : {Arm::Baseline, Arm::LabelOnly, Arm::Gmss, Arm::Sass})
    if (text == arm_name(a)) return a;
  throw ConfigError("unknown arm \"" + text + "\"");
}

std::vector<Arm> arms_for(ConditionMode mode) {
  switch (mode) {
    case ConditionMode::LabelOnly: return {Arm::Baseline, Arm::LabelOnly};
    case ConditionMode::Gmss: return {Arm::Baseline, Arm::Gmss};
    case ConditionMode::Sass: return {Arm::Baseline, Arm::Sass};
    case ConditionMode::All: return {Arm::Baseline, Arm::LabelOnly, Arm::Gmss, Arm::Sass};
  }
  return {Arm::Baseline};
}

const ArmResult* ExperimentResult::find(Arm a) const {
  for (const auto& r : arms)
    if (r.arm == a) return &r;
  return nullptr;
}

const ArmResult& ExperimentResult::arm(Arm a) const {
  const ArmResult* r = find(a);
  if (!r) throw ConfigError(std::string("experiment has no ") + arm_name(a) + " arm");
  return *r;
}

PreparedData prepare_data(const ExperimentConfig& config) {
  std::vector<SignalWindow> windows;
  const auto& d = config.data;
  if (d.path.empty()) {
    windows = segment_all(synth_dataset(d.synth), d.synth.window_ms(), d.synth.step_ms);
  } else {
    const std::filesystem::path p(d.path);
    const WindowedDataset loaded =
        p.extension() == ".csv" ? import_csv(p, d.csv_channels, d.csv_length) : load_dataset(p);
    windows = loaded.windows;
  }
  const int classes = exclude_and_relabel(windows, d.exclude_labels);
  auto [train, test] = split_by_trials(windows, config.split, classes);
  PreparedData out;
  auto [std_train, stats] = standardize_channels(train);
  out.train = std::move(std_train);
  out.test = apply_channel_stats(test, stats);
  out.stats = std::move(stats);
  return out;
}

std::vector<std::size_t> generation_counts(const WindowedDataset& train, double ratio) {
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw ConfigError("augmentation ratio must be >= 0");
  auto counts = train.class_counts();
  for (auto& c : counts) c = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(c)));
  return counts;
}

std::uint64_t dataset_fingerprint(const WindowedDataset& data) {
  std::string bytes;
  for (const auto& w : data.windows) {
    const std::int32_t meta[3] = {w.gesture_label, w.trial_index, w.subject_id};
    bytes.append(reinterpret_cast<const char*>(meta), sizeof meta);
    bytes.append(reinterpret_cast<const char*>(w.values.data()),
                 static_cast<std::size_t>(w.values.size()) * sizeof(float));
  }
  return fnv1a64(bytes);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const auto& progress = options.progress;
  ExperimentResult result;
  result.config_hash = config_hash(config);
  result.seed = config.seed;
  BundleWriter bundle(options.bundle, result);
  const std::string stamp = "# seed = " + std::to_string(config.seed) + "\n# config_hash = " + result.config_hash +
                            "\n# version = " + kVersion + "\n";
  bundle.text("config.txt", stamp + config_snapshot(config));

  const PreparedData data = run_stage("dataset", progress, [&] { return prepare_data(config); });
  const auto& train = data.train;
  const auto& test = data.test;
  const int classes = train.class_count;
  result.train_size = train.size();
  result.test_size = test.size();
  bundle.put("data/train.bin", [&](const auto& p) { save_dataset(train, p); });
  bundle.put("data/test.bin", [&](const auto& p) { save_dataset(test, p); });

  const EncoderArch arch = arch_for(train, config.encoder);
  auto train_role = [&](const char* stage, EncoderTrainConfig tc, const WindowedDataset& set,
                        std::vector<EncoderEpoch>* history) {
    tc.seed = derive_seed(config.seed, stage);
    return train_encoder(set, tc, arch, &test, history);
  };

  const EncoderModel gen_encoder = run_stage("encoder.generation", progress, [&] {
    return train_role("encoder.generation", config.generation_encoder, train, nullptr);
  });
  result.generation_encoder_accuracy = accuracy(gen_encoder, test);
  bundle.put("models/encoder_generation.bin", [&](const auto& p) { save_encoder(gen_encoder, p); });

  const auto gen_features =
      run_stage("features", progress, [&] { return extract_features(gen_encoder, train.windows); });

  const EncoderModel eval_encoder = run_stage("encoder.evaluation", progress, [&] {
    return train_role("encoder.evaluation", config.evaluation_encoder, train, nullptr);
  });
  result.evaluation_encoder_accuracy = accuracy(eval_encoder, test);
  bundle.put("models/encoder_evaluation.bin", [&](const auto& p) { save_encoder(eval_encoder, p); });

  const std::vector<Arm> arms = arms_for(config.condition_mode);
  auto has = [&](Arm a) { return std::find(arms.begin(), arms.end(), a) != arms.end() || (options.sweep && a == Arm::Sass); };
  const bool any_generation = config.augmentation_ratio > 0.0 || options.sweep;

  std::vector<ClassGaussian> gaussians;
  std::vector<ConditionSet> sass_sets, gmss_sets;
  if (any_generation && (has(Arm::Gmss) || has(Arm::Sass))) {
    gaussians = run_stage("gmss", progress, [&] { return fit_class_gaussians(gen_features, classes); });
    bundle.put("gmss.bin", [&](const auto& p) { save_gaussians(gaussians, p); });
    const MatrixXd f = feature_matrix(gen_features);
    const auto by_class = indices_by_class(train, classes);
    if (has(Arm::Sass)) {
      run_stage("sass", progress, [&] {
        Rng rng(derive_seed(config.seed, "sass"));
        for (int k = 0; k < classes; ++k) {
          const auto ref = ReferenceSet::build(k, rows_of(f, by_class[static_cast<std::size_t>(k)]), config.sass.rarity_k);
          SassDiagnostics diag;
          sass_sets.push_back(sass_sample(gaussians[static_cast<std::size_t>(k)], ref, gen_encoder, config.sass, rng, &diag));
          const auto& s = sass_sets.back();
          result.sass_summary.push_back({k, s.count(Provenance::Optimized), s.count(Provenance::Supplemented),
                                         diag.selected_rarity.mean(), diag.optimized_rarity.mean(),
                                         diag.trace.potential.front(), diag.trace.potential.back()});
        }
      });
      bundle.put("conditions_sass.bin", [&](const auto& p) { save_condition_sets(sass_sets, p); });
    }
    if (has(Arm::Gmss)) {
      run_stage("gmss.conditions", progress, [&] {
        Rng rng(derive_seed(config.seed, "gmss"));
        const auto counts = generation_counts(train, config.augmentation_ratio);
        for (int k = 0; k < classes; ++k) {
          const int n = config.gmss_conditions_per_class > 0
                            ? config.gmss_conditions_per_class
                            : std::max(1, static_cast<int>(counts[static_cast<std::size_t>(k)]));
          gmss_sets.push_back(gmss_conditions(gaussians[static_cast<std::size_t>(k)], n, rng));
        }
      });
      bundle.put("conditions_gmss.bin", [&](const auto& p) { save_condition_sets(gmss_sets, p); });
    }
  }

  const NoiseSchedule schedule = cosine_schedule(config.diffusion_steps);
  const DenoiserArch darch = denoiser_arch_for(train, arch.feature_dim, config.denoiser);
  DiffusionTrainConfig dcfg = config.diffusion;
  dcfg.seed = derive_seed(config.seed, "diffusion");
  std::optional<DiffusionModel> semantic_model, label_model;
  if (any_generation && (has(Arm::Gmss) || has(Arm::Sass))) {
    semantic_model = run_stage("diffusion.semantic", progress, [&] {
      DiffusionTrainStats stats;
      auto m = train_diffusion(train, gen_features, dcfg, darch, schedule, &stats);
      result.semantic_loss = stats.loss_trace;
      return m;
    });
    bundle.put("models/diffusion_semantic.bin", [&](const auto& p) { save_diffusion(*semantic_model, p); });
  }
  if (any_generation && has(Arm::LabelOnly)) {
    label_model = run_stage("diffusion.label_only", progress, [&] {
      DiffusionTrainStats stats;
      auto m = train_diffusion(train, {}, dcfg, darch, schedule, &stats);
      result.label_loss = stats.loss_trace;
      return m;
    });
    bundle.put("models/diffusion_label_only.bin", [&](const auto& p) { save_diffusion(*label_model, p); });
  }

  EvalContext ctx;
  ctx.eval = &eval_encoder;
  if (any_generation) {
    ctx.test_features = feature_matrix(extract_features(eval_encoder, test.windows));
    ctx.train_features = feature_matrix(extract_features(eval_encoder, train.windows));
    const MatrixXd& ef = ctx.train_features;
    const auto by_class = indices_by_class(train, classes);
    for (int k = 0; k < classes; ++k) {
      ctx.train_by_class.push_back(rows_of(ef, by_class[static_cast<std::size_t>(k)]));
      ctx.references.push_back(ReferenceSet::build(k, ctx.train_by_class.back(), config.sass.rarity_k));
    }
  }

  const std::uint64_t shuffle_seed = derive_seed(config.seed, "shuffle");
  auto build_arm = [&](Arm a, double ratio) {
    ArmResult r;
    r.arm = a;
    r.ratio = a == Arm::Baseline ? 0.0 : ratio;
    const std::string tag = std::string(arm_name(a)) + (ratio == config.augmentation_ratio ? "" : "_r" + ratio_tag(ratio));
    WindowedDataset generated;
    generated.split = SplitTag::Generated;
    generated.class_count = classes;
    const auto counts = generation_counts(train, r.ratio);
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (a != Arm::Baseline && total > 0) {
      generated = run_stage("generate." + tag, progress, [&] {
        std::vector<GenerationRequest> requests;
        const DiffusionModel* model = &*semantic_model;
        if (a == Arm::LabelOnly) {
          requests = label_requests(counts);
          model = &*label_model;
        } else {
          requests = requests_for_counts(a == Arm::Sass ? sass_sets : gmss_sets, counts);
        }
        SamplerConfig sc = config.sampler;
        // Every arm at a given ratio sees the same noise stream.
        sc.seed = derive_seed(config.seed, "generate.r" + ratio_tag(ratio));
        Rng rng(sc.seed);
        return generate_windows(*model, requests, classes, sc, rng);
      });
      r.generated_file = "generated/" + tag + ".bin";
      bundle.put(r.generated_file, [&](const auto& p) { save_dataset(generated, p); });
      r.generation = run_stage("metrics." + tag, progress, [&] { return generation_metrics(generated, ctx, config); });
    }
    r.generated = generated.size();
    r.generated_hash = dataset_fingerprint(generated);
    const WindowedDataset combined = combined_train(train, generated, shuffle_seed);
    r.train_size = combined.size();
    const EncoderModel clf = run_stage("downstream." + tag, progress, [&] {
      return train_role("downstream", config.downstream, combined, &r.curve);
    });
    r.downstream = classification_report(predict(clf, test.windows), test.labels(), classes);
    return r;
  };

  for (Arm a : arms) result.arms.push_back(build_arm(a, config.augmentation_ratio));
  if (options.sweep)
    for (double ratio : config.sweep_ratios) {
      const ArmResult* same = ratio == config.augmentation_ratio ? result.find(Arm::Sass) : nullptr;
      result.sweep.push_back(same ? *same : build_arm(Arm::Sass, ratio));
    }

  bundle.text("loss_trace.csv", loss_csv(result));
  if (bundle.enabled()) write_text(options.bundle / "results.json", results_json(config, result));
  return result;
}

std::string results_json(const ExperimentConfig& config, const ExperimentResult& result) {
  nlohmann::ordered_json j;
  j["version"] = kVersion;
  j["name"] = config.name;
  j["seed"] = result.seed;
  j["config_hash"] = result.config_hash;
  j["condition_mode"] = condition_mode_name(config.condition_mode);
  j["augmentation_ratio"] = config.augmentation_ratio;
  j["train_size"] = result.train_size;
  j["test_size"] = result.test_size;
  j["classes"] = result.arms.empty() ? 0 : result.arms.front().downstream.per_class.size();
  j["epochs"] = config.downstream.epochs;
  j["generation_encoder_accuracy"] = result.generation_encoder_accuracy;
  j["evaluation_encoder_accuracy"] = result.evaluation_encoder_accuracy;
  auto& ss = j["sass_summary"] = nlohmann::ordered_json::array();
  for (const auto& s : result.sass_summary)
    ss.push_back({{"class", s.class_id},
                  {"optimized", s.optimized},
                  {"supplemented", s.supplemented},
                  {"selected_rarity", s.selected_rarity},
                  {"optimized_rarity", s.optimized_rarity},
                  {"potential_initial", s.potential_initial},
                  {"potential_final", s.potential_final}});
  auto& arms = j["arms"] = nlohmann::ordered_json::array();
  for (const auto& a : result.arms) arms.push_back(arm_json(a));
  auto& sweep = j["sweep"] = nlohmann::ordered_json::array();
  for (const auto& a : result.sweep) sweep.push_back(arm_json(a));
  auto& art = j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& [path, hash] : result.artifacts)
    art.push_back({{"path", path}, {"fnv1a64", hex64(hash)}, {"seed", result.seed}, {"config_hash", result.config_hash}});
  return j.dump(2) + "\n";
}

std::vector<ExperimentResult> ablation_suite(const ExperimentConfig& config, const std::filesystem::path& root,
                                             const ProgressFn& progress) {
  config.validate();
  if (config.ablation_seeds < 1) throw ConfigError("ablation.seeds must be >= 1");
  std::vector<ExperimentResult> out;
  for (int s = 0; s < config.ablation_seeds; ++s) {
    ExperimentConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(s);
    c.condition_mode = ConditionMode::All;
    RunOptions opt;
    if (!root.empty()) opt.bundle = root / ("seed_" + std::to_string(c.seed));
    opt.sweep = true;
    if (progress) opt.progress = [&, seed = c.seed](const std::string& st) { progress("seed " + std::to_string(seed) + ": " + st); };
    out.push_back(run_experiment(c, opt));
  }
  return out;
}

}  // namespace sasg
