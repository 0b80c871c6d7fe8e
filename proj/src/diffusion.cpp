#include "sasg/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sasg/nn/optim.hpp"
#include "sasg/nn/serialize.hpp"

namespace sasg {

namespace {

constexpr char kDiffusionMagic[] = "SAUGD";
constexpr std::uint32_t kDiffusionVersion = 1;
constexpr std::size_t kSampleBatch = 64;

}  // namespace

NoiseSchedule cosine_schedule(int steps, double offset, double max_beta) {
  if (steps < 1) throw ConfigError("noise schedule needs T >= 1");
  NoiseSchedule s;
  s.steps = steps;
  s.offset = offset;
  s.max_beta = max_beta;
  auto g = [&](double t) {
    const double c = std::cos((t / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double g0 = g(0.0);
  s.beta.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  s.alpha_bar.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  double prev = 1.0;  // closed-form alpha_bar at t-1
  for (int t = 1; t <= steps; ++t) {
    const double cur = g(t) / g0;
    const double beta = std::min(1.0 - cur / prev, max_beta);
    s.beta[static_cast<std::size_t>(t)] = beta;
    s.alpha_bar[static_cast<std::size_t>(t)] = s.alpha_bar[static_cast<std::size_t>(t) - 1] * (1.0 - beta);
    prev = cur;
  }
  return s;
}

SrgTerms srg_terms(const MatrixXd& residual, Eigen::Index length) {
  SrgTerms terms;
  const Eigen::Index batch = residual.cols() / length;
  const double norm = 1.0 / std::sqrt(static_cast<double>(length));
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in(static_cast<std::size_t>(length)), out;
  for (Eigen::Index n = 0; n < batch; ++n)
    for (Eigen::Index c = 0; c < residual.rows(); ++c) {
      for (Eigen::Index l = 0; l < length; ++l) {
        in[static_cast<std::size_t>(l)] = residual(c, n * length + l);
        terms.time += residual(c, n * length + l) * residual(c, n * length + l);
      }
      fft.fwd(out, in);
      for (const auto& z : out) terms.fourier += std::norm(z * norm);
    }
  terms.time /= static_cast<double>(batch);
  terms.fourier /= static_cast<double>(batch);
  return terms;
}

void DenoiserArch::validate() const {
  if (channels < 1 || length < 1 || classes < 1 || feature_dim < 1) throw ConfigError("denoiser shape must be positive");
  if (depth < 1) throw ConfigError("denoiser depth must be >= 1");
  if (length % (1 << (depth - 1)) != 0) throw ConfigError("window length must be divisible by 2^(depth-1)");
  if (base_width < 1 || time_dim < 2 || time_dim % 2 != 0 || embed_dim < 1)
    throw ConfigError("denoiser widths must be positive (time_dim even)");
  if (heads < 1 || bottleneck_width() % heads != 0) throw ConfigError("attention heads must divide bottleneck width");
  if (cond_tokens < 1 || groups < 1) throw ConfigError("cond_tokens and groups must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("denoiser kernel must be odd");
}

void DiffusionTrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("diffusion learning_rate must be non-negative");
  if (batch_size < 1) throw ConfigError("diffusion batch_size must be >= 1");
  if (iterations < 0) throw ConfigError("diffusion iterations must be >= 0");
  if (cond_dropout < 0.0 || cond_dropout > 1.0) throw ConfigError("cond_dropout must be in [0, 1]");
}

DenoiserArch denoiser_arch_for(const WindowedDataset& data, int feature_dim, DenoiserArch base) {
  base.channels = static_cast<int>(data.channels());
  base.length = static_cast<int>(data.length());
  base.classes = data.class_count;
  base.feature_dim = feature_dim;
  return base;
}

std::vector<bool> draw_dropout_mask(std::size_t count, double rate, Rng& rng) {
  std::vector<bool> mask(count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) mask[i] = unit(rng) < rate;
  return mask;
}

DiffusionModel train_diffusion(const WindowedDataset& train, std::span<const SemanticFeature> features,
                               const DiffusionTrainConfig& config, const DenoiserArch& arch,
                               const NoiseSchedule& schedule, DiffusionTrainStats* stats) {
  config.validate();
  if (train.empty()) throw ConfigError("cannot train diffusion on an empty dataset");
  const bool semantic = !features.empty();
  if (semantic && features.size() != train.size())
    throw ConfigError("features are not aligned with training windows (" + std::to_string(features.size()) +
                      " vs " + std::to_string(train.size()) + ")");
  if (semantic)
    for (std::size_t i = 0; i < features.size(); ++i)
      if (features[i].gesture_label != train.windows[i].gesture_label)
        throw ConfigError("feature " + std::to_string(i) + " label does not match its window");

  DiffusionModel model{Denoiser<float>(arch), schedule, semantic};
  if (semantic && features.front().vector.size() != arch.feature_dim)
    throw ConfigError("feature dimension does not match denoiser feature_dim");
  Rng rng(config.seed);
  model.net.initialize(rng);
  nn::Adam<float> opt(model.net.params, config.learning_rate);

  const auto batch = static_cast<std::size_t>(config.batch_size);
  const Eigen::Index channels = arch.channels;
  const Eigen::Index length = arch.length;
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  std::uniform_int_distribution<int> pick_t(1, schedule.steps);
  std::vector<std::size_t> idx(batch);
  std::vector<int> ts(batch);

  for (int it = 0; it < config.iterations; ++it) {
    for (auto& i : idx) i = pick(rng);
    for (auto& t : ts) t = pick_t(rng);
    const std::vector<bool> dropped = draw_dropout_mask(batch, config.cond_dropout, rng);

    const MatrixXf x0 = pack_windows(train.windows, idx);
    MatrixXf noise(channels, x0.cols());
    fill_normal(noise, rng);
    MatrixXf xt(channels, x0.cols());
    for (std::size_t n = 0; n < batch; ++n) {
      const Eigen::Index off = static_cast<Eigen::Index>(n) * length;
      xt.middleCols(off, length) =
          forward_diffuse(x0.middleCols(off, length), ts[n], noise.middleCols(off, length), schedule);
    }

    Conditioning<float> cond;
    cond.labels.resize(batch);
    cond.use_feature.resize(batch);
    cond.features = MatrixXf::Zero(arch.feature_dim, static_cast<Eigen::Index>(batch));
    for (std::size_t n = 0; n < batch; ++n) {
      const auto& w = train.windows[idx[n]];
      cond.labels[n] = dropped[n] ? -1 : w.gesture_label;
      cond.use_feature[n] = semantic && !dropped[n];
      if (cond.use_feature[n]) cond.features.col(static_cast<Eigen::Index>(n)) = features[idx[n]].vector.cast<float>();
    }

    nn::Tape<float> tape(true);
    nn::Var pred = model.net.forward(tape, tape.input(xt), ts, cond);
    nn::Var loss = srg_loss(tape, pred, x0, length);
    tape.backward(loss);
    auto grads = model.net.params.zero_gradients();
    tape.accumulate(grads);
    if (config.grad_clip > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads) sq += static_cast<double>(g.squaredNorm());
      const double gnorm = std::sqrt(sq);
      if (!std::isfinite(gnorm)) throw StageError("train_diffusion", "non-finite gradient at iteration " + std::to_string(it));
      if (gnorm > config.grad_clip)
        for (auto& g : grads) g *= static_cast<float>(config.grad_clip / gnorm);
    }
    opt.step(model.net.params, grads);

    if (stats) {
      stats->loss_trace.push_back(static_cast<double>(tape.value(loss)(0, 0)));
      stats->samples += batch;
      stats->dropped += static_cast<std::size_t>(std::count(dropped.begin(), dropped.end(), true));
      stats->semantic_used += model.net.last_semantic_count();
    }
  }
  if (!model.net.params.all_finite()) throw StageError("train_diffusion", "non-finite parameters after training");
  return model;
}

MatrixXf denoise(const DiffusionModel& model, const MatrixXf& x_t, int t, std::optional<int> label,
                 const std::optional<VectorXd>& feature) {
  const auto& a = model.net.arch;
  if (x_t.rows() != a.channels || x_t.cols() != a.length) throw ConfigError("denoise: input shape mismatch");
  if (label && (*label < 0 || *label >= a.classes)) throw ConfigError("denoise: label out of range");
  Conditioning<float> cond;
  cond.labels = {label.value_or(-1)};
  cond.use_feature = {feature.has_value()};
  cond.features = MatrixXf::Zero(a.feature_dim, 1);
  if (feature) {
    if (feature->size() != a.feature_dim) throw ConfigError("denoise: feature dimension mismatch");
    cond.features.col(0) = feature->cast<float>();
  }
  nn::Tape<float> tape(false);
  return tape.value(model.net.forward(tape, tape.input(x_t), {t}, cond));
}

std::vector<int> ddim_timesteps(int total, int steps) {
  if (steps < 1 || steps > total) throw ConfigError("ddim_steps must be in [1, T]");
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i)
    ts[static_cast<std::size_t>(steps - 1 - i)] =
        static_cast<int>((static_cast<long long>(i) + 1) * total / steps);
  return ts;
}

MatrixXf ddim_sample_with(const X0Predictor& predictor, const NoiseSchedule& schedule, Eigen::Index channels,
                          Eigen::Index length, Eigen::Index batch, const SamplerConfig& sampler, Rng& rng) {
  const std::vector<int> ts = ddim_timesteps(schedule.steps, sampler.ddim_steps);
  MatrixXf x(channels, length * batch);
  fill_normal(x, rng);
  MatrixXf x0;
  std::vector<int> tvec(static_cast<std::size_t>(batch));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    std::fill(tvec.begin(), tvec.end(), t);
    x0 = predictor(x, tvec);
    if (x0.rows() != x.rows() || x0.cols() != x.cols()) throw StageError("ddim_sample", "predictor shape mismatch");
    if (i + 1 == ts.size()) break;
    const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
    const double ab_next = schedule.alpha_bar[static_cast<std::size_t>(ts[i + 1])];
    const MatrixXf eps =
        (x - static_cast<float>(std::sqrt(ab)) * x0) / static_cast<float>(std::sqrt(std::max(1.0 - ab, 1e-12)));
    double sigma = 0.0;
    if (sampler.stochasticity > 0.0)
      sigma = sampler.stochasticity * std::sqrt((1.0 - ab_next) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_next);
    const double dir = std::sqrt(std::max(1.0 - ab_next - sigma * sigma, 0.0));
    x = static_cast<float>(std::sqrt(ab_next)) * x0 + static_cast<float>(dir) * eps;
    if (sigma > 0.0) {
      MatrixXf z(x.rows(), x.cols());
      fill_normal(z, rng);
      x += static_cast<float>(sigma) * z;
    }
    if (!x.allFinite()) throw StageError("ddim_sample", "non-finite state at step " + std::to_string(i));
  }
  return x0;
}

std::vector<MatrixXf> ddim_sample(const DiffusionModel& model, const NoiseSchedule& schedule,
                                  std::span<const GenerationRequest> requests, const SamplerConfig& sampler, Rng& rng) {
  if (schedule.steps != model.schedule.steps) throw ConfigError("sampler schedule does not match the model's schedule");
  const auto& a = model.net.arch;
  std::vector<MatrixXf> out;
  out.reserve(requests.size());
  for (std::size_t start = 0; start < requests.size(); start += kSampleBatch) {
    const auto chunk = requests.subspan(start, std::min(kSampleBatch, requests.size() - start));
    Conditioning<float> cond;
    cond.features = MatrixXf::Zero(a.feature_dim, static_cast<Eigen::Index>(chunk.size()));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto& r = chunk[i];
      if (r.label < 0 || r.label >= a.classes) throw ConfigError("generation label out of range");
      cond.labels.push_back(r.label);
      const bool use = r.feature.has_value() && model.semantic;
      cond.use_feature.push_back(use);
      if (use) {
        if (r.feature->size() != a.feature_dim) throw ConfigError("generation feature dimension mismatch");
        cond.features.col(static_cast<Eigen::Index>(i)) = r.feature->cast<float>();
      }
    }
    auto predictor = [&](const MatrixXf& x, const std::vector<int>& ts) {
      nn::Tape<float> tape(false);
      return MatrixXf(tape.value(model.net.forward(tape, tape.input(x), ts, cond)));
    };
    const MatrixXf x0 = ddim_sample_with(predictor, schedule, a.channels, a.length,
                                         static_cast<Eigen::Index>(chunk.size()), sampler, rng);
    for (std::size_t i = 0; i < chunk.size(); ++i)
      out.push_back(x0.middleCols(static_cast<Eigen::Index>(i) * a.length, a.length));
  }
  return out;
}

void save_diffusion(const DiffusionModel& model, const std::filesystem::path& path) {
  io::Writer w;
  w.magic(std::string_view(kDiffusionMagic, 5));
  w.put<std::uint32_t>(kDiffusionVersion);
  w.put<std::int32_t>(model.schedule.steps);
  w.put<double>(model.schedule.offset);
  w.put<double>(model.schedule.max_beta);
  for (double b : model.schedule.beta) w.put<double>(b);
  const auto& a = model.net.arch;
  for (int v : {a.channels, a.length, a.classes, a.feature_dim, a.base_width, a.depth, a.time_dim, a.embed_dim,
                a.heads, a.cond_tokens, a.groups, a.kernel})
    w.put<std::int32_t>(v);
  w.put<std::uint8_t>(model.semantic ? 1 : 0);
  nn::write_parameters(w, model.net.params);
  w.write_file(path);
}

DiffusionModel load_diffusion(const std::filesystem::path& path) {
  auto r = io::Reader::from_file(path);
  r.expect_magic(std::string_view(kDiffusionMagic, 5));
  if (r.get<std::uint32_t>() != kDiffusionVersion)
    throw ParseError(ParseError::Kind::BadVersion, "unsupported diffusion model version");
  const int steps = r.get<std::int32_t>();
  if (steps < 1 || steps > 1000000) throw ParseError(ParseError::Kind::ShapeMismatch, "implausible schedule length");
  const double offset = r.get<double>();
  const double max_beta = r.get<double>();
  NoiseSchedule schedule = cosine_schedule(steps, offset, max_beta);
  for (int t = 0; t <= steps; ++t)
    if (r.get<double>() != schedule.beta[static_cast<std::size_t>(t)])
      throw ParseError(ParseError::Kind::ShapeMismatch, "stored betas do not match the cosine schedule");
  DenoiserArch a;
  for (int* v : {&a.channels, &a.length, &a.classes, &a.feature_dim, &a.base_width, &a.depth, &a.time_dim,
                 &a.embed_dim, &a.heads, &a.cond_tokens, &a.groups, &a.kernel})
    *v = r.get<std::int32_t>();
  const bool semantic = r.get<std::uint8_t>() != 0;
  try {
    a.validate();
  } catch (const ConfigError& e) {
    throw ParseError(ParseError::Kind::ShapeMismatch, std::string("invalid denoiser architecture: ") + e.what());
  }
  DiffusionModel model{Denoiser<float>(a), std::move(schedule), semantic};
  nn::read_parameters(r, model.net.params);
  r.expect_end();
  return model;
}

}  // namespace sasg
