#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sasg/config.hpp"
#include "sasg/generation.hpp"
#include "sasg/metrics.hpp"

namespace sasg {

enum class Arm { Baseline, LabelOnly, Gmss, Sass };

const char* arm_name(Arm arm);
Arm parse_arm(const std::string& text);

/// Arms built for a condition mode, baseline first.
std::vector<Arm> arms_for(ConditionMode mode);

struct PreparedData {
  WindowedDataset train;
  WindowedDataset test;
  ChannelStats stats;
};

/// Loads or synthesizes the windows, splits by trial and standardizes with
/// train statistics.
PreparedData prepare_data(const ExperimentConfig& config);

/// counts[k] = round(ratio * |train_k|).
std::vector<std::size_t> generation_counts(const WindowedDataset& train, double ratio);

/// Class-wise sparsity of generated features against real train features
/// of the same class, in the evaluation encoder's space.
struct SparsityRow {
  int class_id = 0;
  std::size_t count = 0;
  double avg_knn = 0.0;
  double lof_median = 0.0;
  double rarity_mean = 0.0;
};

struct GenerationMetrics {
  double fid = 0.0;        // against real test features
  double fid_train = 0.0;  // against real train features
  double cas = 0.0;
  double avg_knn = 0.0;     // mean k-NN distance to same-class real train features
  double lof_median = 0.0;  // median novelty LOF against same-class real train features
  double rarity_mean = 0.0;
  double avg_knn_within = 0.0;  // within the generated set
  double lof_median_within = 0.0;
  std::vector<SparsityRow> per_class;
  // Per generated window, in dataset order.
  std::vector<double> knn_samples, lof_samples, rarity_samples;
  VectorXd channel_std;
};

struct ArmResult {
  Arm arm = Arm::Baseline;
  double ratio = 0.0;
  std::size_t generated = 0;
  std::size_t train_size = 0;
  std::optional<GenerationMetrics> generation;
  ClassificationReport downstream;
  std::vector<EncoderEpoch> curve;
  std::string generated_file;    // bundle-relative, empty for baseline
  std::uint64_t generated_hash = 0;  // dataset_fingerprint of the generated windows
};

struct ConditionSummary {
  int class_id = 0;
  std::size_t optimized = 0;
  std::size_t supplemented = 0;
  double selected_rarity = 0.0;
  double optimized_rarity = 0.0;
  double potential_initial = 0.0;
  double potential_final = 0.0;
};

struct ExperimentResult {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double generation_encoder_accuracy = 0.0;  // on test
  double evaluation_encoder_accuracy = 0.0;
  std::vector<double> semantic_loss;
  std::vector<double> label_loss;
  std::vector<ConditionSummary> sass_summary;
  std::vector<ArmResult> arms;
  std::vector<ArmResult> sweep;  // SASS arm at each ablation ratio
  std::vector<std::pair<std::string, std::uint64_t>> artifacts;  // bundle-relative path, FNV-1a of bytes

  const ArmResult& arm(Arm a) const;
  const ArmResult* find(Arm a) const;
};

using ProgressFn = std::function<void(const std::string&)>;

struct RunOptions {
  std::filesystem::path bundle;  // empty: keep nothing on disk
  bool sweep = false;
  ProgressFn progress;
};

/// The full experiment: encoders, GMSS, SASS, diffusion, augmentation,
/// downstream training and metrics. Every stage failure surfaces as a
/// StageError carrying the stage name; artifacts written before the
/// failure are kept.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Runs `config.ablation_seeds` seeds (seed, seed+1, ...) in condition mode
/// `all` with the size sweep; one bundle per seed under `root`.
std::vector<ExperimentResult> ablation_suite(const ExperimentConfig& config, const std::filesystem::path& root,
                                             const ProgressFn& progress = {});

/// FNV-1a over labels and window values; equal for bit-identical datasets.
std::uint64_t dataset_fingerprint(const WindowedDataset& data);

std::string results_json(const ExperimentConfig& config, const ExperimentResult& result);

}  // namespace sasg
