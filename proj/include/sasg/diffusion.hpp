#pragma once

#include <complex>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "sasg/dataset.hpp"
#include "sasg/encoder.hpp"
#include "sasg/nn/ops.hpp"

namespace sasg {

/// beta[t] and alpha_bar[t] for t = 0..T; beta[0] = 0, alpha_bar[0] = 1.
struct NoiseSchedule {
  int steps = 0;
  double offset = 0.008;
  double max_beta = 0.999;
  std::vector<double> beta;
  std::vector<double> alpha_bar;
};

/// Squared-cosine alpha_bar profile with offset s; betas clipped at
/// max_beta and alpha_bar re-accumulated from the clipped betas.
NoiseSchedule cosine_schedule(int steps, double offset = 0.008, double max_beta = 0.999);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise, for 0 <= t <= T.
template <typename D1, typename D2>
auto forward_diffuse(const Eigen::MatrixBase<D1>& x0, int t, const Eigen::MatrixBase<D2>& noise,
                     const NoiseSchedule& schedule) {
  using Scalar = typename D1::Scalar;
  if (x0.rows() != noise.rows() || x0.cols() != noise.cols()) throw ConfigError("forward_diffuse: shape mismatch");
  if (t < 0 || t > schedule.steps) throw ConfigError("forward_diffuse: timestep out of range");
  const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
  MatrixX<Scalar> out = static_cast<Scalar>(std::sqrt(ab)) * x0 + static_cast<Scalar>(std::sqrt(1.0 - ab)) * noise;
  return out;
}

struct DenoiserArch {
  int channels = 4;
  int length = 128;
  int classes = 4;
  int feature_dim = 32;
  int base_width = 32;
  int depth = 3;
  int time_dim = 32;
  int embed_dim = 64;
  int heads = 4;
  int cond_tokens = 4;
  int groups = 8;
  int kernel = 3;

  int width(int level) const { return base_width * (level == 0 ? 1 : 2); }
  int bottleneck_width() const { return width(depth - 1); }
  void validate() const;
};

/// Per-sample conditioning: label < 0 means "no label"; samples without a
/// feature use the learned null tokens.
template <typename S>
struct Conditioning {
  std::vector<int> labels;
  MatrixX<S> features;  // (feature_dim, N); columns with use_feature=false are ignored
  std::vector<bool> use_feature;
};

namespace detail {

inline int group_count(int channels, int preferred) { return std::gcd(channels, preferred); }

template <typename S>
MatrixX<S> timestep_embedding(const std::vector<int>& timesteps, int dim) {
  const int half = dim / 2;
  MatrixX<S> e = MatrixX<S>::Zero(dim, static_cast<Eigen::Index>(timesteps.size()));
  for (std::size_t n = 0; n < timesteps.size(); ++n)
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double arg = timesteps[n] * freq;
      e(i, static_cast<Eigen::Index>(n)) = static_cast<S>(std::sin(arg));
      e(i + half, static_cast<Eigen::Index>(n)) = static_cast<S>(std::cos(arg));
    }
  return e;
}

}  // namespace detail

/// 1-D U-Net x0-predictor. Time and label embeddings are summed and injected
/// additively into every residual block; the semantic feature enters
/// through cross-attention at the bottleneck as cond_tokens key/value tokens.
template <typename S>
class Denoiser {
 public:
  DenoiserArch arch;
  nn::ParameterSet<S> params;

  Denoiser() = default;

  explicit Denoiser(const DenoiserArch& a) : arch(a) {
    arch.validate();
    time1_ = linear_layer("time.0", arch.time_dim, arch.embed_dim);
    time2_ = linear_layer("time.1", arch.embed_dim, arch.embed_dim);
    label_table_ = params.add("label.table", arch.embed_dim, arch.classes);
    in_conv_ = conv_layer("in", arch.channels, arch.width(0), arch.kernel);
    int prev = arch.width(0);
    for (int i = 0; i < arch.depth; ++i) {
      down_.push_back(res_block("down" + std::to_string(i), prev, arch.width(i)));
      prev = arch.width(i);
    }
    const int d = arch.bottleneck_width();
    attn_norm_ = norm_layer("attn.norm", d);
    q_ = linear_layer("attn.q", d, d);
    k_ = linear_layer("attn.k", d, d);
    v_ = linear_layer("attn.v", d, d);
    o_ = linear_layer("attn.o", d, d);
    sem_proj_ = linear_layer("attn.semantic", arch.feature_dim, d * arch.cond_tokens);
    null_tokens_ = params.add("attn.null_tokens", d, arch.cond_tokens);
    mid_ = res_block("mid", d, d);
    for (int i = arch.depth - 2; i >= 0; --i) {
      up_.push_back(res_block("up" + std::to_string(i), prev + arch.width(i), arch.width(i)));
      prev = arch.width(i);
    }
    out_norm_ = norm_layer("out.norm", prev);
    out_conv_ = conv_layer("out", prev, arch.channels, arch.kernel);
  }

  void initialize(Rng& rng) {
    for (auto& p : params) {
      const bool is_norm_scale = p.name.ends_with(".gamma");
      if (is_norm_scale) {
        p.value.setOnes();
        continue;
      }
      if (p.value.cols() == 1 || p.name.ends_with(".beta")) {
        p.value.setZero();
        continue;
      }
      double bound = 1.0 / std::sqrt(static_cast<double>(p.value.cols()));
      if (p.name == "label.table" || p.name == "attn.null_tokens") bound = 1.0;
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<S>(dist(rng));
    }
  }

  /// Number of samples in the last forward() whose semantic feature reached
  /// the cross-attention keys.
  std::size_t last_semantic_count() const { return last_semantic_; }

  nn::Var forward(nn::Tape<S>& t, nn::Var x, const std::vector<int>& timesteps, const Conditioning<S>& cond) const {
    const auto batch = static_cast<Eigen::Index>(timesteps.size());
    if (t.value(x).rows() != arch.channels || t.value(x).cols() != batch * arch.length)
      throw ConfigError("denoiser input shape mismatch");
    if (static_cast<Eigen::Index>(cond.labels.size()) != batch ||
        static_cast<Eigen::Index>(cond.use_feature.size()) != batch)
      throw ConfigError("conditioning batch size mismatch");

    nn::Var temb = t.input(detail::timestep_embedding<S>(timesteps, arch.time_dim));
    temb = apply_linear(t, time1_, temb);
    temb = nn::silu(t, temb);
    temb = apply_linear(t, time2_, temb);
    for (int y : cond.labels)
      if (y >= arch.classes) throw ConfigError("label outside model class range");
    nn::Var emb = nn::add(t, temb, nn::gather_columns(t, t.param(params, label_table_), cond.labels));
    nn::Var emb_act = nn::silu(t, emb);

    Eigen::Index length = arch.length;
    nn::Var h = apply_conv(t, in_conv_, x, length);
    std::vector<nn::Var> skips;
    for (int i = 0; i < arch.depth; ++i) {
      h = apply_res(t, down_[static_cast<std::size_t>(i)], h, emb_act, length);
      if (i < arch.depth - 1) {
        skips.push_back(h);
        h = nn::avg_pool2(t, h, length);
        length /= 2;
      }
    }

    h = nn::add(t, h, cross_attention(t, h, cond, batch, length));
    h = apply_res(t, mid_, h, emb_act, length);

    for (std::size_t u = 0; u < up_.size(); ++u) {
      h = nn::upsample2(t, h);
      length *= 2;
      h = nn::concat_rows(t, h, skips[skips.size() - 1 - u]);
      h = apply_res(t, up_[u], h, emb_act, length);
    }
    h = nn::silu(t, apply_norm(t, out_norm_, h, length));
    return apply_conv(t, out_conv_, h, length);
  }

  template <typename Other>
  Denoiser<Other> cast() const {
    Denoiser<Other> out(arch);
    out.params = params.template cast<Other>();
    return out;
  }

 private:
  struct Linear {
    std::size_t w, b;
  };
  struct Conv {
    std::size_t w, b;
    int kernel;
  };
  struct Norm {
    std::size_t gamma, beta;
    int groups;
  };
  struct Res {
    Norm norm1, norm2;
    Conv conv1, conv2;
    Linear emb;
    std::optional<Conv> skip;
  };

  Linear linear_layer(const std::string& name, int in, int out) {
    return {params.add(name + ".weight", out, in), params.add(name + ".bias", out, 1)};
  }
  Conv conv_layer(const std::string& name, int in, int out, int kernel) {
    return {params.add(name + ".weight", out, kernel * in), params.add(name + ".bias", out, 1), kernel};
  }
  Norm norm_layer(const std::string& name, int channels) {
    return {params.add(name + ".gamma", channels, 1), params.add(name + ".beta", channels, 1),
            detail::group_count(channels, arch.groups)};
  }
  Res res_block(const std::string& name, int in, int out) {
    Res r{norm_layer(name + ".norm1", in),
          norm_layer(name + ".norm2", out),
          conv_layer(name + ".conv1", in, out, arch.kernel),
          conv_layer(name + ".conv2", out, out, arch.kernel),
          linear_layer(name + ".emb", arch.embed_dim, out),
          std::nullopt};
    if (in != out) r.skip = conv_layer(name + ".skip", in, out, 1);
    return r;
  }

  nn::Var apply_linear(nn::Tape<S>& t, const Linear& l, nn::Var x) const {
    return nn::linear(t, x, t.param(params, l.w), t.param(params, l.b));
  }
  nn::Var apply_conv(nn::Tape<S>& t, const Conv& c, nn::Var x, Eigen::Index length) const {
    return nn::conv1d(t, x, t.param(params, c.w), t.param(params, c.b), length, c.kernel);
  }
  nn::Var apply_norm(nn::Tape<S>& t, const Norm& n, nn::Var x, Eigen::Index length) const {
    return nn::group_norm(t, x, t.param(params, n.gamma), t.param(params, n.beta), n.groups, length);
  }
  nn::Var apply_res(nn::Tape<S>& t, const Res& r, nn::Var x, nn::Var emb_act, Eigen::Index length) const {
    nn::Var h = apply_conv(t, r.conv1, nn::silu(t, apply_norm(t, r.norm1, x, length)), length);
    h = nn::add_per_sample(t, h, apply_linear(t, r.emb, emb_act), length);
    h = apply_conv(t, r.conv2, nn::silu(t, apply_norm(t, r.norm2, h, length)), length);
    nn::Var skip = r.skip ? apply_conv(t, *r.skip, x, length) : x;
    return nn::add(t, skip, h);
  }

  nn::Var cross_attention(nn::Tape<S>& t, nn::Var h, const Conditioning<S>& cond, Eigen::Index batch,
                          Eigen::Index length) const {
    const Eigen::Index d = arch.bottleneck_width();
    const Eigen::Index m = arch.cond_tokens;
    nn::Var tokens = nn::tile_columns(t, t.param(params, null_tokens_), batch);
    std::vector<bool> use_null(static_cast<std::size_t>(batch));
    std::size_t semantic = 0;
    for (Eigen::Index n = 0; n < batch; ++n) {
      use_null[static_cast<std::size_t>(n)] = !cond.use_feature[static_cast<std::size_t>(n)];
      semantic += cond.use_feature[static_cast<std::size_t>(n)] ? 1 : 0;
    }
    last_semantic_ = semantic;
    if (semantic > 0) {
      if (cond.features.rows() != arch.feature_dim || cond.features.cols() != batch)
        throw ConfigError("semantic feature shape mismatch");
      nn::Var proj = apply_linear(t, sem_proj_, t.input(cond.features));
      proj = nn::reshape(t, proj, d, batch * m);
      tokens = nn::select_groups(t, proj, tokens, use_null, m);
    }
    nn::Var hn = apply_norm(t, attn_norm_, h, length);
    nn::Var q = apply_linear(t, q_, hn);
    nn::Var k = apply_linear(t, k_, tokens);
    nn::Var v = apply_linear(t, v_, tokens);
    nn::Var a = nn::attention(t, q, k, v, arch.heads, length, m);
    return apply_linear(t, o_, a);
  }

  Linear time1_{}, time2_{};
  std::size_t label_table_ = 0;
  Conv in_conv_{}, out_conv_{};
  std::vector<Res> down_, up_;
  Res mid_{};
  Norm attn_norm_{}, out_norm_{};
  Linear q_{}, k_{}, v_{}, o_{}, sem_proj_{};
  std::size_t null_tokens_ = 0;
  mutable std::size_t last_semantic_ = 0;
};

/// Per-sample squared error in time plus squared error of the orthonormal
/// DFT (per channel), averaged over the batch.
template <typename S>
nn::Var srg_loss(nn::Tape<S>& t, nn::Var x0_hat, const MatrixX<S>& x0, Eigen::Index length) {
  const MatrixX<S>& xh = t.value(x0_hat);
  if (xh.rows() != x0.rows() || xh.cols() != x0.cols()) throw ConfigError("srg_loss: shape mismatch");
  const Eigen::Index batch = x0.cols() / length;
  const double norm = 1.0 / std::sqrt(static_cast<double>(length));
  const MatrixX<S> residual = x0 - xh;
  Eigen::FFT<double> fft;
  double time_term = 0.0, freq_term = 0.0;
  // Fourier residual per (channel, sample) row segment.
  std::vector<std::vector<std::complex<double>>> spectra;
  spectra.reserve(static_cast<std::size_t>(x0.rows() * batch));
  std::vector<std::complex<double>> in(static_cast<std::size_t>(length)), out;
  for (Eigen::Index n = 0; n < batch; ++n)
    for (Eigen::Index c = 0; c < x0.rows(); ++c) {
      for (Eigen::Index l = 0; l < length; ++l) {
        const double r = static_cast<double>(residual(c, n * length + l));
        in[static_cast<std::size_t>(l)] = r;
        time_term += r * r;
      }
      fft.fwd(out, in);
      for (auto& z : out) {
        z *= norm;
        freq_term += std::norm(z);
      }
      spectra.push_back(out);
    }
  MatrixX<S> y(1, 1);
  y(0, 0) = static_cast<S>((time_term + freq_term) / static_cast<double>(batch));
  if (!std::isfinite(static_cast<double>(y(0, 0)))) throw StageError("srg_loss", "non-finite loss");
  return t.push(std::move(y), t.requires_grad(x0_hat),
                [x0_hat, residual, spectra = std::move(spectra), length, batch, norm](nn::Tape<S>& t, nn::Var self) {
                  const double g = static_cast<double>(t.grad(self)(0, 0)) / static_cast<double>(batch);
                  MatrixX<S>& dx = t.grad(x0_hat);
                  Eigen::FFT<double> fft;
                  std::vector<std::complex<double>> back;
                  const Eigen::Index channels = residual.rows();
                  for (Eigen::Index n = 0; n < batch; ++n)
                    for (Eigen::Index c = 0; c < channels; ++c) {
                      // d/dxhat |F r|^2 = -2 F^H F r, with F^H = sqrt(L) * inverse DFT.
                      fft.inv(back, spectra[static_cast<std::size_t>(n * channels + c)]);
                      for (Eigen::Index l = 0; l < length; ++l) {
                        const double time_grad = -2.0 * static_cast<double>(residual(c, n * length + l));
                        const double freq_grad =
                            -2.0 * back[static_cast<std::size_t>(l)].real() * static_cast<double>(length) * norm;
                        dx(c, n * length + l) += static_cast<S>(g * (time_grad + freq_grad));
                      }
                    }
                });
}

struct SrgTerms {
  double time = 0.0;
  double fourier = 0.0;
};

/// The two loss terms separately for a residual (C, N*L), for diagnostics.
SrgTerms srg_terms(const MatrixXd& residual, Eigen::Index length);

struct DiffusionTrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int iterations = 2000;
  double cond_dropout = 0.05;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SamplerConfig {
  int ddim_steps = 500;
  double stochasticity = 0.0;
  std::uint64_t seed = 0;
};

struct DiffusionModel {
  Denoiser<float> net;
  NoiseSchedule schedule;
  bool semantic = true;  // false: trained on labels only
};

struct DiffusionTrainStats {
  std::vector<double> loss_trace;
  std::size_t samples = 0;
  std::size_t dropped = 0;
  std::size_t semantic_used = 0;
};

DenoiserArch denoiser_arch_for(const WindowedDataset& data, int feature_dim, DenoiserArch base);

/// Trains an x0-predictor. With `features` empty the model is label-only:
/// the semantic path always receives null tokens.
DiffusionModel train_diffusion(const WindowedDataset& train, std::span<const SemanticFeature> features,
                               const DiffusionTrainConfig& config, const DenoiserArch& arch,
                               const NoiseSchedule& schedule, DiffusionTrainStats* stats = nullptr);

/// Dropout mask draw used by training: true = condition dropped.
std::vector<bool> draw_dropout_mask(std::size_t count, double rate, Rng& rng);

/// A single x0 prediction; the class id and feature are optional.
MatrixXf denoise(const DiffusionModel& model, const MatrixXf& x_t, int t, std::optional<int> label,
                 const std::optional<VectorXd>& feature);

/// (C, N*L) noisy batch + timesteps -> (C, N*L) x0 estimates.
using X0Predictor = std::function<MatrixXf(const MatrixXf& x_t, const std::vector<int>& timesteps)>;

/// Decreasing DDIM timestep subsequence of `steps` entries ending at T.
std::vector<int> ddim_timesteps(int total, int steps);

/// DDIM over `batch` samples of shape (channels, length); returns the last
/// x0 estimate.
MatrixXf ddim_sample_with(const X0Predictor& predictor, const NoiseSchedule& schedule, Eigen::Index channels,
                          Eigen::Index length, Eigen::Index batch, const SamplerConfig& sampler, Rng& rng);

struct GenerationRequest {
  int label = 0;
  std::optional<VectorXd> feature;
};

/// Samples one window per request, batching internally; x_T noise is drawn
/// from `rng` in request order.
std::vector<MatrixXf> ddim_sample(const DiffusionModel& model, const NoiseSchedule& schedule,
                                  std::span<const GenerationRequest> requests, const SamplerConfig& sampler, Rng& rng);

void save_diffusion(const DiffusionModel& model, const std::filesystem::path& path);
DiffusionModel load_diffusion(const std::filesystem::path& path);

}  // namespace sasg
