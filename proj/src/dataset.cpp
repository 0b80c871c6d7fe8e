#include "sasg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "sasg/binary_io.hpp"

namespace sasg {

namespace {

constexpr char kDatasetMagic[] = "SAUG";
constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

std::vector<int> WindowedDataset::labels() const {
  std::vector<int> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(w.gesture_label);
  return out;
}

std::vector<std::size_t> WindowedDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(class_count, 0)), 0);
  for (const auto& w : windows)
    if (w.gesture_label >= 0 && w.gesture_label < class_count) ++counts[w.gesture_label];
  return counts;
}

void WindowedDataset::validate() const {
  if (class_count < 1) throw ConfigError("dataset class count must be positive");
  for (const auto& w : windows) {
    if (w.gesture_label < 0 || w.gesture_label >= class_count)
      throw ConfigError("window label " + std::to_string(w.gesture_label) + " outside [0, K)");
    if (w.values.rows() != channels() || w.values.cols() != length())
      throw ConfigError("windows do not share a common C x L shape");
    if (!w.values.allFinite()) throw ConfigError("non-finite window values");
  }
}

SplitSpec SplitSpec::standard() { return SplitSpec{{1, 3, 4, 6}, {2, 5}}; }

void SplitSpec::validate() const {
  for (int t : train_trials)
    if (test_trials.count(t)) throw ConfigError("trial " + std::to_string(t) + " is in both train and test");
}

Eigen::Index samples_for_duration(double duration_ms, double sample_rate) {
  if (!(sample_rate > 0.0)) throw ConfigError("sample rate must be positive");
  const double exact = duration_ms * sample_rate / 1000.0;
  const double rounded = std::round(exact);
  if (std::abs(exact - rounded) > 1e-6 * std::max(1.0, exact))
    throw ConfigError("duration " + std::to_string(duration_ms) + " ms is not a whole number of samples at " +
                      std::to_string(sample_rate) + " Hz");
  if (rounded < 1) throw ConfigError("duration converts to fewer than one sample");
  return static_cast<Eigen::Index>(rounded);
}

std::vector<SignalWindow> segment_windows(const SignalRecording& recording, double window_ms, double step_ms) {
  const Eigen::Index length = samples_for_duration(window_ms, recording.sample_rate);
  const Eigen::Index step = samples_for_duration(step_ms, recording.sample_rate);
  const Eigen::Index n = recording.values.cols();
  std::vector<SignalWindow> out;
  if (n < length) return out;
  const Eigen::Index count = (n - length) / step + 1;
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i)
    out.push_back({recording.values.middleCols(i * step, length), recording.gesture_label, recording.trial_index,
                   recording.subject_id});
  return out;
}

std::vector<SignalWindow> segment_all(const std::vector<SignalRecording>& recordings, double window_ms,
                                      double step_ms) {
  std::vector<SignalWindow> out;
  for (const auto& r : recordings) {
    auto w = segment_windows(r, window_ms, step_ms);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

ChannelStats compute_channel_stats(const WindowedDataset& dataset) {
  if (dataset.empty()) throw ConfigError("cannot standardize an empty dataset");
  const Eigen::Index c = dataset.channels();
  VectorXd sum = VectorXd::Zero(c);
  double count = 0;
  for (const auto& w : dataset.windows) {
    sum += w.values.cast<double>().rowwise().sum();
    count += static_cast<double>(w.values.cols());
  }
  ChannelStats stats;
  stats.mean = sum / count;
  VectorXd sq = VectorXd::Zero(c);
  for (const auto& w : dataset.windows)
    sq += (w.values.cast<double>().colwise() - stats.mean).rowwise().squaredNorm();
  stats.stddev = (sq / count).cwiseSqrt();
  return stats;
}

WindowedDataset apply_channel_stats(const WindowedDataset& dataset, const ChannelStats& stats) {
  WindowedDataset out = dataset;
  if (!dataset.empty() && stats.mean.size() != dataset.channels())
    throw ConfigError("channel statistics do not match dataset channel count");
  const VectorXd inv = stats.stddev.cwiseMax(kStdFloor).cwiseInverse();
  for (auto& w : out.windows) {
    MatrixXd v = w.values.cast<double>();
    v.colwise() -= stats.mean;
    v = inv.asDiagonal() * v;
    w.values = v.cast<float>();
  }
  return out;
}

std::pair<WindowedDataset, ChannelStats> standardize_channels(const WindowedDataset& dataset) {
  ChannelStats stats = compute_channel_stats(dataset);
  return {apply_channel_stats(dataset, stats), stats};
}

std::pair<WindowedDataset, WindowedDataset> split_by_trials(const std::vector<SignalWindow>& windows,
                                                            const SplitSpec& spec, int class_count) {
  spec.validate();
  WindowedDataset train{{}, SplitTag::Train, class_count};
  WindowedDataset test{{}, SplitTag::Test, class_count};
  for (const auto& w : windows) {
    if (spec.train_trials.count(w.trial_index))
      train.windows.push_back(w);
    else if (spec.test_trials.count(w.trial_index))
      test.windows.push_back(w);
  }
  if (train.empty() || test.empty()) throw ConfigError("trial split leaves the train or test set empty");
  return {std::move(train), std::move(test)};
}

int exclude_and_relabel(std::vector<SignalWindow>& windows, const std::set<int>& excluded) {
  std::erase_if(windows, [&](const SignalWindow& w) { return excluded.count(w.gesture_label) > 0; });
  std::map<int, int> remap;
  for (const auto& w : windows) remap.emplace(w.gesture_label, 0);
  int next = 0;
  for (auto& [label, id] : remap) id = next++;
  for (auto& w : windows) w.gesture_label = remap.at(w.gesture_label);
  return next;
}

double synth_carrier_hz(const SynthParams& params, int k) {
  // Spread carriers over [0.06, 0.3] of the sample rate.
  const double lo = 0.06 * params.sample_rate;
  const double hi = 0.30 * params.sample_rate;
  return params.classes > 1 ? lo + (hi - lo) * k / (params.classes - 1) : lo;
}

std::vector<SignalRecording> synth_dataset(const SynthParams& params) {
  if (params.classes < 2) throw ConfigError("synthetic dataset needs at least two classes");
  if (params.channels < 1) throw ConfigError("synthetic dataset needs at least one channel");
  if (params.length < 32) throw ConfigError("synthetic window length must be at least 32");
  if (params.trials < 1 || params.windows_per_trial < 1) throw ConfigError("trials and windows_per_trial must be >= 1");
  const Eigen::Index step = samples_for_duration(params.step_ms, params.sample_rate);
  samples_for_duration(params.window_ms(), params.sample_rate);
  const Eigen::Index n = params.length + (params.windows_per_trial - 1) * step;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  std::vector<SignalRecording> out;
  out.reserve(static_cast<std::size_t>(params.classes * params.trials));
  for (int k = 0; k < params.classes; ++k) {
    // Class-level structure shared by all trials: per-channel gains and a
    // second-harmonic mix.
    std::seed_seq class_seq{static_cast<std::uint32_t>(params.seed), static_cast<std::uint32_t>(params.seed >> 32),
                            static_cast<std::uint32_t>(k), 0xC1A55u};
    Rng class_rng(class_seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    VectorXd gain(params.channels), harmonic(params.channels);
    for (int c = 0; c < params.channels; ++c) {
      gain(c) = 0.4 + 1.2 * unit(class_rng);
      harmonic(c) = 0.6 * unit(class_rng);
    }
    const double carrier = synth_carrier_hz(params, k);

    for (int trial = 1; trial <= params.trials; ++trial) {
      std::seed_seq trial_seq{static_cast<std::uint32_t>(params.seed), static_cast<std::uint32_t>(params.seed >> 32),
                              static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(trial), 0x7121A1u};
      Rng rng(trial_seq);
      const double freq = carrier * (1.0 + params.freq_jitter * (2.0 * unit(rng) - 1.0));
      const double amp = std::max(0.2, 1.0 + params.gain_jitter * standard_normal(rng));
      MatrixXf values(params.channels, n);
      for (int c = 0; c < params.channels; ++c) {
        const double phase = two_pi * unit(rng);
        const double channel_gain = gain(c) * std::max(0.1, 1.0 + 0.5 * params.gain_jitter * standard_normal(rng));
        // Smooth envelope: a few slow sinusoids around 1.
        double env_freq[3], env_phase[3], env_amp[3];
        for (int m = 0; m < 3; ++m) {
          env_freq[m] = 0.5 + 2.5 * unit(rng);
          env_phase[m] = two_pi * unit(rng);
          env_amp[m] = 0.25 * unit(rng);
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double time = static_cast<double>(i) / params.sample_rate;
          double env = 1.0;
          for (int m = 0; m < 3; ++m) env += env_amp[m] * std::sin(two_pi * env_freq[m] * time + env_phase[m]);
          const double carrier_wave = std::sin(two_pi * freq * time + phase) +
                                      harmonic(c) * std::sin(2.0 * (two_pi * freq * time + phase));
          values(c, i) = static_cast<float>(amp * channel_gain * std::max(env, 0.05) * carrier_wave +
                                            params.noise_std * standard_normal(rng));
        }
      }
      out.push_back({params.subject_id, k, trial, params.sample_rate, std::move(values)});
    }
  }
  return out;
}

void save_dataset(const WindowedDataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  io::Writer w;
  w.magic(std::string_view(kDatasetMagic, 4));
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.channels()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.length()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.class_count));
  for (const auto& win : dataset.windows) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(win.gesture_label));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(win.trial_index));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(win.subject_id));
    w.put<std::uint16_t>(0);
    // Row-major C x L on disk.
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = win.values;
    w.put_f32(rm);
  }
  w.write_file(path);
}

WindowedDataset load_dataset(const std::filesystem::path& path) {
  auto r = io::Reader::from_file(path);
  r.expect_magic(std::string_view(kDatasetMagic, 4));
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) throw ParseError(ParseError::Kind::BadVersion, "unsupported dataset version");
  const auto count = r.get<std::uint32_t>();
  const auto channels = r.get<std::uint32_t>();
  const auto length = r.get<std::uint32_t>();
  const auto classes = r.get<std::uint32_t>();
  if (count > 0 && (channels == 0 || length == 0))
    throw ParseError(ParseError::Kind::ShapeMismatch, "zero channel or length with non-empty payload");
  const std::size_t record = 8 + static_cast<std::size_t>(channels) * length * 4;
  if (r.remaining() < record * count) throw ParseError(ParseError::Kind::Truncated, "truncated payload");
  if (r.remaining() > record * count)
    throw ParseError(ParseError::Kind::ShapeMismatch, "payload larger than header declares");
  WindowedDataset ds;
  ds.class_count = static_cast<int>(classes);
  ds.windows.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    SignalWindow win;
    win.gesture_label = r.get<std::uint16_t>();
    win.trial_index = r.get<std::uint16_t>();
    win.subject_id = r.get<std::uint16_t>();
    r.get<std::uint16_t>();
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(channels, length);
    r.get_f32(rm.data(), static_cast<std::size_t>(rm.size()));
    win.values = rm;
    if (win.gesture_label >= ds.class_count)
      throw ParseError(ParseError::Kind::ShapeMismatch, "label outside declared class count");
    ds.windows.push_back(std::move(win));
  }
  return ds;
}

WindowedDataset import_csv(const std::filesystem::path& path, Eigen::Index channels, Eigen::Index length) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseError::Kind::Io, "cannot open: " + path.string());
  WindowedDataset ds;
  std::string line;
  int max_label = -1;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        fields.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        if (line_no == 1 && fields.empty()) break;  // header row
        throw ParseError(ParseError::Kind::BadValue, "non-numeric CSV field on line " + std::to_string(line_no));
      }
    }
    if (fields.empty()) continue;
    if (fields.size() != static_cast<std::size_t>(3 + channels * length))
      throw ParseError(ParseError::Kind::ShapeMismatch,
                       "CSV line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) + " fields");
    SignalWindow w;
    w.gesture_label = static_cast<int>(fields[0]);
    w.trial_index = static_cast<int>(fields[1]);
    w.subject_id = static_cast<int>(fields[2]);
    w.values.resize(channels, length);
    for (Eigen::Index c = 0; c < channels; ++c)
      for (Eigen::Index l = 0; l < length; ++l) w.values(c, l) = static_cast<float>(fields[3 + c * length + l]);
    max_label = std::max(max_label, w.gesture_label);
    ds.windows.push_back(std::move(w));
  }
  ds.class_count = max_label + 1;
  return ds;
}

}  // namespace sasg
