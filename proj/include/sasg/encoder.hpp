#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sasg/dataset.hpp"
#include "sasg/nn/ops.hpp"

namespace sasg {

/// penultimate-layer representation of a window plus its label.
struct SemanticFeature {
  VectorXd vector;
  int gesture_label = 0;
  std::optional<double> confidence;
};

struct EncoderArch {
  int channels = 4;
  int length = 128;
  int classes = 4;
  int feature_dim = 32;
  std::vector<int> hidden_channels{16};
  int kernel = 5;

  void validate() const;
};

struct EncoderTrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 0.01;
  int lr_decay_epoch = 60;
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Conv1d+ReLU stack -> global average pool (the feature) -> linear head.
template <typename S>
class Encoder {
 public:
  EncoderArch arch;
  nn::ParameterSet<S> params;

  Encoder() = default;

  explicit Encoder(const EncoderArch& a) : arch(a) {
    arch.validate();
    int in = arch.channels;
    std::vector<int> widths = arch.hidden_channels;
    widths.push_back(arch.feature_dim);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      conv_w_.push_back(params.add("conv" + std::to_string(i) + ".weight", widths[i], arch.kernel * in));
      conv_b_.push_back(params.add("conv" + std::to_string(i) + ".bias", widths[i], 1));
      in = widths[i];
    }
    head_w_ = params.add("head.weight", arch.classes, arch.feature_dim);
    head_b_ = params.add("head.bias", arch.classes, 1);
  }

  /// Scaled-uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  void initialize(Rng& rng) {
    for (auto& p : params) {
      if (p.value.cols() == 1) {
        p.value.setZero();
        continue;
      }
      const double bound = 1.0 / std::sqrt(static_cast<double>(p.value.cols()));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<S>(dist(rng));
    }
  }

  std::size_t head_weight_index() const { return head_w_; }
  std::size_t head_bias_index() const { return head_b_; }

  /// x is (C, N*L); returns the (feature_dim, N) pooled features.
  nn::Var features(nn::Tape<S>& t, nn::Var x) const {
    nn::Var h = x;
    for (std::size_t i = 0; i < conv_w_.size(); ++i) {
      h = nn::conv1d(t, h, t.param(params, conv_w_[i]), t.param(params, conv_b_[i]), arch.length, arch.kernel);
      h = nn::relu(t, h);
    }
    return nn::mean_over_time(t, h, arch.length);
  }

  nn::Var logits(nn::Tape<S>& t, nn::Var feats) const {
    return nn::linear(t, feats, t.param(params, head_w_), t.param(params, head_b_));
  }

  /// Mean cross-entropy over the batch and its parameter gradients.
  S loss_and_gradients(const MatrixX<S>& x, const std::vector<int>& labels, nn::Gradients<S>& grads) const {
    nn::Tape<S> t(true);
    nn::Var loss = nn::softmax_cross_entropy(t, logits(t, features(t, t.input(x))), labels);
    t.backward(loss);
    t.accumulate(grads);
    return t.value(loss)(0, 0);
  }

  S loss(const MatrixX<S>& x, const std::vector<int>& labels) const {
    nn::Tape<S> t(false);
    return t.value(nn::softmax_cross_entropy(t, logits(t, features(t, t.input(x))), labels))(0, 0);
  }

  template <typename Other>
  Encoder<Other> cast() const {
    Encoder<Other> out(arch);
    out.params = params.template cast<Other>();
    return out;
  }

 private:
  std::vector<std::size_t> conv_w_, conv_b_;
  std::size_t head_w_ = 0, head_b_ = 0;
};

using EncoderModel = Encoder<float>;

/// Stacks windows into the (C, N*L) activation layout.
MatrixXf pack_windows(std::span<const SignalWindow> windows);
MatrixXf pack_windows(const std::vector<SignalWindow>& windows, std::span<const std::size_t> indices);

struct EncoderEpoch {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> monitor_accuracy;
};

/// Trains with SGD+momentum and a step decay. If `monitor` is given its
/// accuracy is recorded each epoch (it never influences the updates).
EncoderModel train_encoder(const WindowedDataset& train, const EncoderTrainConfig& config, const EncoderArch& arch,
                           const WindowedDataset* monitor = nullptr, std::vector<EncoderEpoch>* history = nullptr);

EncoderArch arch_for(const WindowedDataset& data, EncoderArch base);

std::vector<SemanticFeature> extract_features(const EncoderModel& model, std::span<const SignalWindow> windows);

/// Softmax of head(feature) evaluated in double precision.
VectorXd class_probabilities(const EncoderModel& model, const VectorXd& feature);
double class_confidence(const EncoderModel& model, const SemanticFeature& feature, int k);

std::vector<int> predict(const EncoderModel& model, std::span<const SignalWindow> windows);
double accuracy(const EncoderModel& model, const WindowedDataset& data);

void save_encoder(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_encoder(const std::filesystem::path& path);

/// Feature vectors as rows of an (n, D) matrix.
MatrixXd feature_matrix(std::span<const SemanticFeature> features);

}  // namespace sasg
