// Command-line front end: single stages and the full experiment.
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "sasg/report.hpp"

using namespace sasg;

namespace {

struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;  // --<key> flags
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app, bool seed_required) {
    app->add_option("--config", file, "key = value config file");
    app->add_option("--set", sets, "extra key=value overrides, applied last");
    auto* s = app->add_option("--seed", seed, "master seed");
    if (seed_required) s->required();
    for (const auto& key : config_keys()) {
      if (key == "seed") continue;
      app->add_option("--" + key, values[key])->group("Config keys");
    }
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = file.empty() ? ExperimentConfig::desk() : load_config(file);
    for (const auto& key : config_keys()) {
      const auto it = values.find(key);
      if (it != values.end() && !it->second.empty()) set_config_value(c, key, it->second);
    }
    for (const auto& s : sets) apply_assignment(c, s);
    if (seed) c.seed = *seed;
    c.validate();
    return c;
  }
};

void log_line(const std::string& msg) {
  static const auto t0 = std::chrono::steady_clock::now();
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "[%7.1fs] %s\n", s, msg.c_str());
}

EncoderTrainConfig role_config(const ExperimentConfig& c, const std::string& role) {
  EncoderTrainConfig tc;
  if (role == "generation") tc = c.generation_encoder;
  else if (role == "evaluation") tc = c.evaluation_encoder;
  else if (role == "downstream") tc = c.downstream;
  else throw ConfigError("unknown encoder role \"" + role + "\" (generation, evaluation, downstream)");
  tc.seed = derive_seed(c.seed, role == "downstream" ? "downstream" : "encoder." + role);
  return tc;
}

std::vector<ReferenceSet> references(const EncoderModel& enc, const WindowedDataset& train, int k) {
  const MatrixXd f = feature_matrix(extract_features(enc, train.windows));
  std::vector<ReferenceSet> out;
  for (int c = 0; c < train.class_count; ++c) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (train.windows[i].gesture_label == c) idx.push_back(static_cast<Eigen::Index>(i));
    MatrixXd rows(static_cast<Eigen::Index>(idx.size()), f.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = f.row(idx[i]);
    out.push_back(ReferenceSet::build(c, rows, k));
  }
  return out;
}

void print_arms(const ExperimentResult& r) {
  std::printf("seed %llu  config %s  train %zu  test %zu\n", static_cast<unsigned long long>(r.seed),
              r.config_hash.c_str(), r.train_size, r.test_size);
  std::printf("%-11s %8s %8s %8s %8s %8s %8s\n", "arm", "acc", "fid", "cas", "avg_knn", "lof", "rarity");
  for (const auto& a : r.arms) {
    std::printf("%-11s %8.4f", arm_name(a.arm), a.downstream.accuracy);
    if (a.generation)
      std::printf(" %8.4f %8.4f %8.4f %8.4f %8.4f", a.generation->fid, a.generation->cas, a.generation->avg_knn,
                  a.generation->lof_median, a.generation->rarity_mean);
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-aware semantic-guided diffusion augmentation for multichannel time series"};
  app.require_subcommand(1);

  ConfigFlags cf;
  std::string out, data_path, encoder_path, gmss_path, model_path, cond_path, bundle_path, role = "generation",
                               histogram_path, loss_path;
  int channels = 0, length = 0, per_class = 0, bins = 20;
  bool sweep = false;

  auto* synth = app.add_subcommand("synth", "write the synthetic dataset as a container");
  cf.attach(synth, false);
  synth->add_option("--out", out, "output container")->required();

  auto* ingest = app.add_subcommand("ingest", "convert a CSV of windows to a container");
  ingest->add_option("--csv", data_path, "input CSV (label, trial, subject, C*L values)")->required();
  ingest->add_option("--channels", channels)->required();
  ingest->add_option("--length", length)->required();
  ingest->add_option("--out", out)->required();

  auto* train_enc = app.add_subcommand("train-encoder", "train one encoder role on the configured data");
  cf.attach(train_enc, false);
  train_enc->add_option("--role", role, "generation, evaluation or downstream");
  train_enc->add_option("--out", out)->required();

  auto* fit = app.add_subcommand("fit-gmss", "fit per-class Gaussians to encoder features");
  cf.attach(fit, false);
  fit->add_option("--encoder", encoder_path)->required();
  fit->add_option("--out", out)->required();

  auto* sass = app.add_subcommand("sass", "build sparse-aware condition sets");
  cf.attach(sass, false);
  sass->add_option("--encoder", encoder_path, "generation encoder")->required();
  sass->add_option("--gmss", gmss_path)->required();
  sass->add_option("--out", out)->required();
  sass->add_option("--histogram", histogram_path, "per-class rarity histogram CSV of the candidates");
  sass->add_option("--bins", bins);

  auto* train_diff = app.add_subcommand("train-diffusion", "train the conditional diffusion model");
  cf.attach(train_diff, false);
  train_diff->add_option("--encoder", encoder_path, "generation encoder; omit for a label-only model");
  train_diff->add_option("--out", out)->required();
  train_diff->add_option("--loss-csv", loss_path);

  auto* gen = app.add_subcommand("generate", "sample windows from a diffusion model");
  cf.attach(gen, false);
  gen->add_option("--model", model_path)->required();
  gen->add_option("--conditions", cond_path, "condition sets; omit for label-only requests");
  gen->add_option("--per-class", per_class, "windows per class (default: augmentation_ratio x train counts)");
  gen->add_option("--out", out)->required();

  auto* run = app.add_subcommand("run", "full experiment into a bundle directory");
  cf.attach(run, true);
  run->add_option("--out", out, "bundle directory")->required();
  run->add_flag("--sweep", sweep, "also run the SASS size sweep");

  auto* ablate = app.add_subcommand("ablate", "all arms over ablation.seeds seeds plus the size sweep");
  cf.attach(ablate, true);
  ablate->add_option("--out", out, "root directory")->required();

  auto* report = app.add_subcommand("report", "CSV and SVG report of a bundle");
  report->add_option("--bundle", bundle_path)->required();
  report->add_option("--out", out, "output directory (default: <bundle>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) {
      const auto c = cf.resolve();
      WindowedDataset d;
      d.windows = segment_all(synth_dataset(c.data.synth), c.data.synth.window_ms(), c.data.synth.step_ms);
      d.class_count = c.data.synth.classes;
      save_dataset(d, out);
      std::printf("%zu windows -> %s\n", d.size(), out.c_str());
    } else if (*ingest) {
      const auto d = import_csv(data_path, channels, length);
      save_dataset(d, out);
      std::printf("%zu windows, %d classes -> %s\n", d.size(), d.class_count, out.c_str());
    } else if (*train_enc) {
      const auto c = cf.resolve();
      const auto data = prepare_data(c);
      std::vector<EncoderEpoch> history;
      const auto model = train_encoder(data.train, role_config(c, role), arch_for(data.train, c.encoder), &data.test,
                                       &history);
      save_encoder(model, out);
      std::printf("train acc %.4f  test acc %.4f -> %s\n", accuracy(model, data.train), accuracy(model, data.test),
                  out.c_str());
    } else if (*fit) {
      const auto c = cf.resolve();
      const auto data = prepare_data(c);
      const auto enc = load_encoder(encoder_path);
      const auto g = fit_class_gaussians(extract_features(enc, data.train.windows), data.train.class_count);
      save_gaussians(g, out);
      std::printf("%zu class Gaussians -> %s\n", g.size(), out.c_str());
    } else if (*sass) {
      const auto c = cf.resolve();
      const auto data = prepare_data(c);
      const auto enc = load_encoder(encoder_path);
      const auto g = load_gaussians(gmss_path);
      const auto refs = references(enc, data.train, c.sass.rarity_k);
      Rng rng(derive_seed(c.seed, "sass"));
      std::vector<ConditionSet> sets;
      std::vector<std::pair<int, VectorXd>> hist;
      for (std::size_t k = 0; k < refs.size(); ++k) {
        SassDiagnostics diag;
        sets.push_back(sass_sample(g.at(k), refs[k], enc, c.sass, rng, &diag));
        hist.emplace_back(static_cast<int>(k), diag.candidate_rarity);
        std::printf("class %zu: optimized %zu supplemented %zu, rarity %.4f -> %.4f, potential %.4f -> %.4f\n", k,
                    sets.back().count(Provenance::Optimized), sets.back().count(Provenance::Supplemented),
                    diag.selected_rarity.mean(), diag.optimized_rarity.mean(), diag.trace.potential.front(),
                    diag.trace.potential.back());
      }
      save_condition_sets(sets, out);
      if (!histogram_path.empty()) write_rarity_histogram(hist, bins, histogram_path);
    } else if (*train_diff) {
      const auto c = cf.resolve();
      const auto data = prepare_data(c);
      std::vector<SemanticFeature> feats;
      int dim = c.encoder.feature_dim;
      if (!encoder_path.empty()) {
        const auto enc = load_encoder(encoder_path);
        feats = extract_features(enc, data.train.windows);
        dim = enc.arch.feature_dim;
      }
      auto dc = c.diffusion;
      dc.seed = derive_seed(c.seed, "diffusion");
      DiffusionTrainStats stats;
      const auto model = train_diffusion(data.train, feats, dc, denoiser_arch_for(data.train, dim, c.denoiser),
                                         cosine_schedule(c.diffusion_steps), &stats);
      save_diffusion(model, out);
      if (!loss_path.empty()) {
        std::ofstream f(loss_path);
        f << "iteration,loss\n";
        for (std::size_t i = 0; i < stats.loss_trace.size(); ++i) f << i << "," << stats.loss_trace[i] << "\n";
        if (!f) throw StageError("train-diffusion", "cannot write " + loss_path);
      }
      std::printf("%zu iterations, final loss %.4f -> %s\n", stats.loss_trace.size(), stats.loss_trace.back(),
                  out.c_str());
    } else if (*gen) {
      const auto c = cf.resolve();
      const auto model = load_diffusion(model_path);
      const int classes = model.net.arch.classes;
      std::vector<std::size_t> counts;
      if (per_class > 0) {
        counts.assign(static_cast<std::size_t>(classes), static_cast<std::size_t>(per_class));
      } else {
        counts = generation_counts(prepare_data(c).train, c.augmentation_ratio);
      }
      const auto requests = cond_path.empty() ? label_requests(counts)
                                              : requests_for_counts(load_condition_sets(cond_path), counts);
      SamplerConfig sc = c.sampler;
      sc.seed = derive_seed(c.seed, "generate");
      Rng rng(sc.seed);
      const auto d = generate_windows(model, requests, classes, sc, rng);
      save_dataset(d, out);
      std::printf("%zu windows -> %s\n", d.size(), out.c_str());
    } else if (*run) {
      const auto c = cf.resolve();
      RunOptions opt;
      opt.bundle = out;
      opt.sweep = sweep;
      opt.progress = log_line;
      const auto r = run_experiment(c, opt);
      const auto files = write_report(out, std::filesystem::path(out) / "report");
      print_arms(r);
      std::printf("bundle %s, %zu report files\n", out.c_str(), files.size());
    } else if (*ablate) {
      const auto c = cf.resolve();
      const auto runs = ablation_suite(c, out, log_line);
      for (const auto& r : runs) {
        write_report(std::filesystem::path(out) / ("seed_" + std::to_string(r.seed)),
                     std::filesystem::path(out) / ("seed_" + std::to_string(r.seed)) / "report");
        print_arms(r);
      }
      write_ablation_table(runs, std::filesystem::path(out) / "ablation.csv");
      write_sweep_table(runs, std::filesystem::path(out) / "sweep.csv");
      std::printf("ablation table -> %s/ablation.csv\n", out.c_str());
    } else if (*report) {
      const std::filesystem::path dst = out.empty() ? std::filesystem::path(bundle_path) / "report" : std::filesystem::path(out);
      for (const auto& f : write_report(bundle_path, dst)) std::printf("%s\n", f.string().c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const StageError& e) {
    std::fprintf(stderr, "stage failure in %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 3;
  }
  return 0;
}
