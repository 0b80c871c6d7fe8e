#include "sasg/encoder.hpp"

#include <algorithm>
#include <numeric>

#include "sasg/nn/optim.hpp"
#include "sasg/nn/serialize.hpp"

namespace sasg {

namespace {

constexpr char kEncoderMagic[] = "SAUGM";
constexpr std::uint32_t kEncoderVersion = 1;
constexpr std::size_t kInferenceBatch = 256;

void check_shape(const EncoderModel& model, const SignalWindow& w) {
  if (w.values.rows() != model.arch.channels || w.values.cols() != model.arch.length)
    throw ConfigError("window shape " + std::to_string(w.values.rows()) + "x" + std::to_string(w.values.cols()) +
                      " does not match encoder input " + std::to_string(model.arch.channels) + "x" +
                      std::to_string(model.arch.length));
}

// (feature_dim, N) features for a contiguous run of windows.
MatrixXf feature_block(const EncoderModel& model, std::span<const SignalWindow> windows) {
  for (const auto& w : windows) check_shape(model, w);
  nn::Tape<float> t(false);
  return t.value(model.features(t, t.input(pack_windows(windows))));
}

}  // namespace

void EncoderArch::validate() const {
  if (channels < 1 || length < 1) throw ConfigError("encoder input shape must be positive");
  if (classes < 2) throw ConfigError("encoder needs at least two classes");
  if (feature_dim < 2) throw ConfigError("encoder feature_dim must be >= 2");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("encoder kernel must be odd and positive");
  for (int h : hidden_channels)
    if (h < 1) throw ConfigError("encoder hidden channel counts must be positive");
}

void EncoderTrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("encoder epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("encoder batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("encoder learning_rate must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("encoder momentum must be in [0, 1)");
}

MatrixXf pack_windows(std::span<const SignalWindow> windows) {
  if (windows.empty()) return MatrixXf();
  const Eigen::Index c = windows.front().values.rows();
  const Eigen::Index l = windows.front().values.cols();
  MatrixXf x(c, l * static_cast<Eigen::Index>(windows.size()));
  for (std::size_t i = 0; i < windows.size(); ++i) x.middleCols(static_cast<Eigen::Index>(i) * l, l) = windows[i].values;
  return x;
}

MatrixXf pack_windows(const std::vector<SignalWindow>& windows, std::span<const std::size_t> indices) {
  const Eigen::Index c = windows.front().values.rows();
  const Eigen::Index l = windows.front().values.cols();
  MatrixXf x(c, l * static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i)
    x.middleCols(static_cast<Eigen::Index>(i) * l, l) = windows[indices[i]].values;
  return x;
}

EncoderArch arch_for(const WindowedDataset& data, EncoderArch base) {
  base.channels = static_cast<int>(data.channels());
  base.length = static_cast<int>(data.length());
  base.classes = data.class_count;
  return base;
}

EncoderModel train_encoder(const WindowedDataset& train, const EncoderTrainConfig& config, const EncoderArch& arch,
                           const WindowedDataset* monitor, std::vector<EncoderEpoch>* history) {
  config.validate();
  if (train.empty()) throw ConfigError("cannot train an encoder on an empty dataset");
  if (train.class_count < 2) throw ConfigError("encoder training needs K >= 2");
  train.validate();
  EncoderModel model(arch_for(train, arch));
  Rng rng(config.seed);
  model.initialize(rng);

  nn::Sgd<float> opt(model.params, config.learning_rate, config.momentum);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::vector<int> all_labels = train.labels();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr =
        config.learning_rate * (epoch >= config.lr_decay_epoch ? config.lr_decay_factor : 1.0);
    opt.set_learning_rate(lr);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (auto i : idx) labels.push_back(all_labels[i]);
      auto grads = model.params.zero_gradients();
      loss_sum += model.loss_and_gradients(pack_windows(train.windows, idx), labels, grads);
      opt.step(model.params, grads);
      ++batches;
    }
    if (!model.params.all_finite())
      throw StageError("train_encoder", "non-finite parameters at epoch " + std::to_string(epoch));
    if (history) {
      EncoderEpoch rec;
      rec.epoch = epoch + 1;
      rec.loss = loss_sum / static_cast<double>(batches);
      rec.train_accuracy = accuracy(model, train);
      if (monitor) rec.monitor_accuracy = accuracy(model, *monitor);
      history->push_back(rec);
    }
  }
  return model;
}

std::vector<SemanticFeature> extract_features(const EncoderModel& model, std::span<const SignalWindow> windows) {
  std::vector<SemanticFeature> out;
  out.reserve(windows.size());
  for (std::size_t start = 0; start < windows.size(); start += kInferenceBatch) {
    const auto chunk = windows.subspan(start, std::min(kInferenceBatch, windows.size() - start));
    const MatrixXf f = feature_block(model, chunk);
    for (std::size_t i = 0; i < chunk.size(); ++i)
      out.push_back({f.col(static_cast<Eigen::Index>(i)).cast<double>(), chunk[i].gesture_label, std::nullopt});
  }
  return out;
}

VectorXd class_probabilities(const EncoderModel& model, const VectorXd& feature) {
  if (feature.size() != model.arch.feature_dim)
    throw ConfigError("feature dimension " + std::to_string(feature.size()) + " does not match encoder D_c " +
                      std::to_string(model.arch.feature_dim));
  const MatrixXd w = model.params[model.head_weight_index()].value.cast<double>();
  const VectorXd b = model.params[model.head_bias_index()].value.col(0).cast<double>();
  VectorXd z = w * feature + b;
  z.array() -= z.maxCoeff();
  VectorXd p = z.array().exp();
  return p / p.sum();
}

double class_confidence(const EncoderModel& model, const SemanticFeature& feature, int k) {
  if (k < 0 || k >= model.arch.classes) throw ConfigError("class id out of range");
  return class_probabilities(model, feature.vector)(k);
}

std::vector<int> predict(const EncoderModel& model, std::span<const SignalWindow> windows) {
  std::vector<int> out;
  out.reserve(windows.size());
  for (const auto& f : extract_features(model, windows)) {
    const VectorXd p = class_probabilities(model, f.vector);
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < p.size(); ++k)
      if (p(k) > p(best)) best = k;
    out.push_back(static_cast<int>(best));
  }
  return out;
}

double accuracy(const EncoderModel& model, const WindowedDataset& data) {
  if (data.empty()) return 0.0;
  const auto pred = predict(model, data.windows);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.windows[i].gesture_label;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

void save_encoder(const EncoderModel& model, const std::filesystem::path& path) {
  io::Writer w;
  w.magic(std::string_view(kEncoderMagic, 5));
  w.put<std::uint32_t>(kEncoderVersion);
  const auto& a = model.arch;
  for (int v : {a.channels, a.length, a.classes, a.feature_dim, a.kernel}) w.put<std::int32_t>(v);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(a.hidden_channels.size()));
  for (int h : a.hidden_channels) w.put<std::int32_t>(h);
  nn::write_parameters(w, model.params);
  w.write_file(path);
}

EncoderModel load_encoder(const std::filesystem::path& path) {
  auto r = io::Reader::from_file(path);
  r.expect_magic(std::string_view(kEncoderMagic, 5));
  if (r.get<std::uint32_t>() != kEncoderVersion)
    throw ParseError(ParseError::Kind::BadVersion, "unsupported encoder version");
  EncoderArch a;
  a.channels = r.get<std::int32_t>();
  a.length = r.get<std::int32_t>();
  a.classes = r.get<std::int32_t>();
  a.feature_dim = r.get<std::int32_t>();
  a.kernel = r.get<std::int32_t>();
  const auto n_hidden = r.get<std::uint32_t>();
  if (n_hidden > 64) throw ParseError(ParseError::Kind::ShapeMismatch, "implausible hidden layer count");
  a.hidden_channels.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) a.hidden_channels.push_back(r.get<std::int32_t>());
  try {
    a.validate();
  } catch (const ConfigError& e) {
    throw ParseError(ParseError::Kind::ShapeMismatch, std::string("invalid encoder architecture: ") + e.what());
  }
  EncoderModel model(a);
  nn::read_parameters(r, model.params);
  r.expect_end();
  return model;
}

MatrixXd feature_matrix(std::span<const SemanticFeature> features) {
  if (features.empty()) return MatrixXd();
  MatrixXd m(static_cast<Eigen::Index>(features.size()), features.front().vector.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].vector.size() != m.cols()) throw ConfigError("features have inconsistent dimensions");
    m.row(static_cast<Eigen::Index>(i)) = features[i].vector.transpose();
  }
  return m;
}

}  // namespace sasg
