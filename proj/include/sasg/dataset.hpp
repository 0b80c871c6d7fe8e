#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sasg/common.hpp"

namespace sasg {

/// One continuous multichannel recording (channels x samples).
struct SignalRecording {
  int subject_id = 0;
  int gesture_label = 0;
  int trial_index = 1;
  double sample_rate = 0.0;
  MatrixXf values;
};

/// Fixed-length segment C x L cut from a recording.
struct SignalWindow {
  MatrixXf values;
  int gesture_label = 0;
  int trial_index = 1;
  int subject_id = 0;
};

enum class SplitTag { Train, Test, Generated };

struct WindowedDataset {
  std::vector<SignalWindow> windows;
  SplitTag split = SplitTag::Train;
  int class_count = 0;

  bool empty() const { return windows.empty(); }
  std::size_t size() const { return windows.size(); }
  Eigen::Index channels() const { return windows.empty() ? 0 : windows.front().values.rows(); }
  Eigen::Index length() const { return windows.empty() ? 0 : windows.front().values.cols(); }
  std::vector<int> labels() const;
  std::vector<std::size_t> class_counts() const;

  /// Throws ConfigError if the shape or label invariants are violated.
  void validate() const;
};

struct SplitSpec {
  std::set<int> train_trials;
  std::set<int> test_trials;

  /// Trials 1,3,4,6 for training and 2,5 for testing.
  static SplitSpec standard();
  void validate() const;
};

struct ChannelStats {
  VectorXd mean;
  VectorXd stddev;
};

inline constexpr double kStdFloor = 1e-8;

/// Converts a duration to a whole number of samples; fractional results
/// are rejected rather than rounded.
Eigen::Index samples_for_duration(double duration_ms, double sample_rate);

std::vector<SignalWindow> segment_windows(const SignalRecording& recording, double window_ms, double step_ms);

/// Per-channel mean/std over every window of the dataset.
ChannelStats compute_channel_stats(const WindowedDataset& dataset);
WindowedDataset apply_channel_stats(const WindowedDataset& dataset, const ChannelStats& stats);
std::pair<WindowedDataset, ChannelStats> standardize_channels(const WindowedDataset& dataset);

std::pair<WindowedDataset, WindowedDataset> split_by_trials(const std::vector<SignalWindow>& windows,
                                                            const SplitSpec& spec, int class_count);

/// Drops windows whose label is listed and remaps the remaining labels to
/// a contiguous range [0, K) in ascending order. Returns K.
int exclude_and_relabel(std::vector<SignalWindow>& windows, const std::set<int>& excluded);

struct SynthParams {
  std::uint64_t seed = 0;
  int classes = 4;
  int trials = 6;
  int windows_per_trial = 10;
  int channels = 4;
  int length = 128;
  double sample_rate = 640.0;
  double step_ms = 50.0;
  int subject_id = 1;
  double noise_std = 0.6;
  double freq_jitter = 0.08;
  double gain_jitter = 0.35;

  double window_ms() const { return 1000.0 * length / sample_rate; }
};

/// Base carrier frequency (Hz) of class k for the synthetic generator.
double synth_carrier_hz(const SynthParams& params, int k);

/// One recording per (class, trial), long enough for windows_per_trial
/// windows at params.step_ms.
std::vector<SignalRecording> synth_dataset(const SynthParams& params);

/// Segments every recording with the given window/step.
std::vector<SignalWindow> segment_all(const std::vector<SignalRecording>& recordings, double window_ms,
                                      double step_ms);

void save_dataset(const WindowedDataset& dataset, const std::filesystem::path& path);
WindowedDataset load_dataset(const std::filesystem::path& path);

/// CSV rows: label, trial, subject, then C*L values (row-major C x L).
WindowedDataset import_csv(const std::filesystem::path& path, Eigen::Index channels, Eigen::Index length);

}  // namespace sasg
