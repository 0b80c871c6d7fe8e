#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "sasg/dataset.hpp"
#include "sasg/diffusion.hpp"
#include "sasg/encoder.hpp"
#include "sasg/sass.hpp"

namespace sasg {

/// Which generated arms an experiment builds. `all` runs every arm from
/// shared encoders and diffusion models.
enum class ConditionMode { LabelOnly, Gmss, Sass, All };

const char* condition_mode_name(ConditionMode mode);
ConditionMode parse_condition_mode(const std::string& text);

struct DataConfig {
  std::string path;  // empty: synthetic; otherwise a .csv or a dataset container
  int csv_channels = 0;
  int csv_length = 0;
  std::set<int> exclude_labels;
  SynthParams synth;
};

struct ExperimentConfig {
  std::string name = "desk";
  std::uint64_t seed = 0;
  ConditionMode condition_mode = ConditionMode::All;
  double augmentation_ratio = 1.0;

  DataConfig data;
  SplitSpec split = SplitSpec::standard();

  EncoderArch encoder;
  EncoderTrainConfig generation_encoder;
  EncoderTrainConfig evaluation_encoder;
  EncoderTrainConfig downstream;

  int gmss_conditions_per_class = 0;  // 0: one fresh draw per generated window
  SassConfig sass;

  int diffusion_steps = 1000;
  DenoiserArch denoiser;
  DiffusionTrainConfig diffusion;
  SamplerConfig sampler;

  int metrics_knn_k = 5;
  int metrics_lof_k = 20;

  int ablation_seeds = 3;
  std::vector<double> sweep_ratios{1.0, 2.0, 3.0, 4.0};

  void validate() const;

  /// Desk-scale preset used by the toy benchmark.
  static ExperimentConfig desk();
  /// Full-scale hyperparameters (hours of CPU time at desk size).
  static ExperimentConfig full();
  static ExperimentConfig preset(const std::string& name);
};

/// Registered dotted keys in snapshot order.
const std::vector<std::string>& config_keys();

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& config, const std::string& key);

/// Applies a "key = value" or "key=value" assignment.
void apply_assignment(ExperimentConfig& config, const std::string& assignment);

/// Reads a key = value file. A leading `preset = name` line selects the
/// starting preset; '#' starts a comment.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

/// Canonical "key = value" listing of every registered key.
std::string config_snapshot(const ExperimentConfig& config);

/// 16 hex digits of FNV-1a 64 over the snapshot.
std::string config_hash(const ExperimentConfig& config);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Independent, reproducible stream seed for a named stage.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage);

}  // namespace sasg
