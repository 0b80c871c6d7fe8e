#include "sasg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace sasg {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError("bad value for " + key + ": \"" + text + "\"");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("bad boolean for " + key + ": \"" + text + "\"");
}

std::string format(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
std::string format(int v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(const std::string& v) { return v; }

template <typename Range>
std::string join(const Range& r) {
  std::string out;
  for (const auto& v : r) {
    if (!out.empty()) out += ",";
    out += format(v);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T, typename Access>
Field scalar(std::string key, Access access) {
  Field f;
  f.key = key;
  f.set = [key, access](ExperimentConfig& c, const std::string& v) {
    T& slot = access(c);
    if constexpr (std::is_same_v<T, bool>)
      slot = parse_bool(key, v);
    else if constexpr (std::is_same_v<T, std::string>)
      slot = trim(v);
    else
      slot = parse_number<T>(key, v);
  };
  f.get = [access](const ExperimentConfig& c) { return format(access(const_cast<ExperimentConfig&>(c))); };
  return f;
}

template <typename Access>
Field int_set(std::string key, Access access) {
  Field f;
  f.key = key;
  f.set = [key, access](ExperimentConfig& c, const std::string& v) {
    std::set<int> out;
    for (const auto& item : split_list(v)) out.insert(parse_number<int>(key, item));
    access(c) = std::move(out);
  };
  f.get = [access](const ExperimentConfig& c) { return join(access(const_cast<ExperimentConfig&>(c))); };
  return f;
}

template <typename T, typename Access>
Field list(std::string key, Access access) {
  Field f;
  f.key = key;
  f.set = [key, access](ExperimentConfig& c, const std::string& v) {
    std::vector<T> out;
    for (const auto& item : split_list(v)) out.push_back(parse_number<T>(key, item));
    access(c) = std::move(out);
  };
  f.get = [access](const ExperimentConfig& c) { return join(access(const_cast<ExperimentConfig&>(c))); };
  return f;
}

void add_encoder_fields(std::vector<Field>& fields, const std::string& prefix,
                        EncoderTrainConfig& (*access)(ExperimentConfig&)) {
  fields.push_back(scalar<int>(prefix + ".epochs", [access](ExperimentConfig& c) -> int& { return access(c).epochs; }));
  fields.push_back(
      scalar<int>(prefix + ".batch_size", [access](ExperimentConfig& c) -> int& { return access(c).batch_size; }));
  fields.push_back(scalar<double>(prefix + ".learning_rate",
                                  [access](ExperimentConfig& c) -> double& { return access(c).learning_rate; }));
  fields.push_back(
      scalar<int>(prefix + ".lr_decay_epoch", [access](ExperimentConfig& c) -> int& { return access(c).lr_decay_epoch; }));
  fields.push_back(scalar<double>(prefix + ".lr_decay_factor",
                                  [access](ExperimentConfig& c) -> double& { return access(c).lr_decay_factor; }));
  fields.push_back(
      scalar<double>(prefix + ".momentum", [access](ExperimentConfig& c) -> double& { return access(c).momentum; }));
}

const std::vector<Field>& registry() {
  static const std::vector<Field> fields = [] {
    using C = ExperimentConfig;
    std::vector<Field> f;
    f.push_back(scalar<std::string>("name", [](C& c) -> std::string& { return c.name; }));
    f.push_back(scalar<std::uint64_t>("seed", [](C& c) -> std::uint64_t& { return c.seed; }));
    {
      Field m;
      m.key = "condition_mode";
      m.set = [](C& c, const std::string& v) { c.condition_mode = parse_condition_mode(trim(v)); };
      m.get = [](const C& c) { return std::string(condition_mode_name(c.condition_mode)); };
      f.push_back(m);
    }
    f.push_back(scalar<double>("augmentation_ratio", [](C& c) -> double& { return c.augmentation_ratio; }));

    f.push_back(scalar<std::string>("data.path", [](C& c) -> std::string& { return c.data.path; }));
    f.push_back(scalar<int>("data.csv_channels", [](C& c) -> int& { return c.data.csv_channels; }));
    f.push_back(scalar<int>("data.csv_length", [](C& c) -> int& { return c.data.csv_length; }));
    f.push_back(int_set("data.exclude_labels", [](C& c) -> std::set<int>& { return c.data.exclude_labels; }));
    f.push_back(scalar<std::uint64_t>("synth.seed", [](C& c) -> std::uint64_t& { return c.data.synth.seed; }));
    f.push_back(scalar<int>("synth.classes", [](C& c) -> int& { return c.data.synth.classes; }));
    f.push_back(scalar<int>("synth.trials", [](C& c) -> int& { return c.data.synth.trials; }));
    f.push_back(scalar<int>("synth.windows_per_trial", [](C& c) -> int& { return c.data.synth.windows_per_trial; }));
    f.push_back(scalar<int>("synth.channels", [](C& c) -> int& { return c.data.synth.channels; }));
    f.push_back(scalar<int>("synth.length", [](C& c) -> int& { return c.data.synth.length; }));
    f.push_back(scalar<double>("synth.sample_rate", [](C& c) -> double& { return c.data.synth.sample_rate; }));
    f.push_back(scalar<double>("synth.step_ms", [](C& c) -> double& { return c.data.synth.step_ms; }));
    f.push_back(scalar<double>("synth.noise_std", [](C& c) -> double& { return c.data.synth.noise_std; }));
    f.push_back(scalar<double>("synth.freq_jitter", [](C& c) -> double& { return c.data.synth.freq_jitter; }));
    f.push_back(scalar<double>("synth.gain_jitter", [](C& c) -> double& { return c.data.synth.gain_jitter; }));
    f.push_back(int_set("split.train_trials", [](C& c) -> std::set<int>& { return c.split.train_trials; }));
    f.push_back(int_set("split.test_trials", [](C& c) -> std::set<int>& { return c.split.test_trials; }));

    f.push_back(list<int>("encoder.hidden_channels", [](C& c) -> std::vector<int>& { return c.encoder.hidden_channels; }));
    f.push_back(scalar<int>("encoder.feature_dim", [](C& c) -> int& { return c.encoder.feature_dim; }));
    f.push_back(scalar<int>("encoder.kernel", [](C& c) -> int& { return c.encoder.kernel; }));
    add_encoder_fields(f, "encoder.generation", [](C& c) -> EncoderTrainConfig& { return c.generation_encoder; });
    add_encoder_fields(f, "encoder.evaluation", [](C& c) -> EncoderTrainConfig& { return c.evaluation_encoder; });
    add_encoder_fields(f, "downstream", [](C& c) -> EncoderTrainConfig& { return c.downstream; });

    f.push_back(scalar<int>("gmss.conditions_per_class", [](C& c) -> int& { return c.gmss_conditions_per_class; }));
    f.push_back(scalar<int>("sass.B", [](C& c) -> int& { return c.sass.conditions_per_class; }));
    f.push_back(scalar<int>("sass.oversample_factor", [](C& c) -> int& { return c.sass.oversample_factor; }));
    f.push_back(scalar<int>("sass.rarity_k", [](C& c) -> int& { return c.sass.rarity_k; }));
    f.push_back(scalar<int>("sass.iter", [](C& c) -> int& { return c.sass.iterations; }));
    f.push_back(scalar<double>("sass.eps_radius", [](C& c) -> double& { return c.sass.eps_radius; }));
    f.push_back(scalar<double>("sass.eta", [](C& c) -> double& { return c.sass.eta; }));
    f.push_back(scalar<double>("sass.conf_threshold", [](C& c) -> double& { return c.sass.conf_threshold; }));
    f.push_back(scalar<bool>("sass.relative_scale", [](C& c) -> bool& { return c.sass.relative_scale; }));

    f.push_back(scalar<int>("diffusion.steps", [](C& c) -> int& { return c.diffusion_steps; }));
    f.push_back(scalar<double>("diffusion.learning_rate", [](C& c) -> double& { return c.diffusion.learning_rate; }));
    f.push_back(scalar<int>("diffusion.batch_size", [](C& c) -> int& { return c.diffusion.batch_size; }));
    f.push_back(scalar<int>("diffusion.iterations", [](C& c) -> int& { return c.diffusion.iterations; }));
    f.push_back(scalar<double>("diffusion.cond_dropout", [](C& c) -> double& { return c.diffusion.cond_dropout; }));
    f.push_back(scalar<double>("diffusion.grad_clip", [](C& c) -> double& { return c.diffusion.grad_clip; }));
    f.push_back(scalar<int>("denoiser.base_width", [](C& c) -> int& { return c.denoiser.base_width; }));
    f.push_back(scalar<int>("denoiser.depth", [](C& c) -> int& { return c.denoiser.depth; }));
    f.push_back(scalar<int>("denoiser.time_dim", [](C& c) -> int& { return c.denoiser.time_dim; }));
    f.push_back(scalar<int>("denoiser.embed_dim", [](C& c) -> int& { return c.denoiser.embed_dim; }));
    f.push_back(scalar<int>("denoiser.heads", [](C& c) -> int& { return c.denoiser.heads; }));
    f.push_back(scalar<int>("denoiser.cond_tokens", [](C& c) -> int& { return c.denoiser.cond_tokens; }));
    f.push_back(scalar<int>("denoiser.groups", [](C& c) -> int& { return c.denoiser.groups; }));
    f.push_back(scalar<int>("denoiser.kernel", [](C& c) -> int& { return c.denoiser.kernel; }));
    f.push_back(scalar<int>("sampler.ddim_steps", [](C& c) -> int& { return c.sampler.ddim_steps; }));
    f.push_back(scalar<double>("sampler.stochasticity", [](C& c) -> double& { return c.sampler.stochasticity; }));

    f.push_back(scalar<int>("metrics.knn_k", [](C& c) -> int& { return c.metrics_knn_k; }));
    f.push_back(scalar<int>("metrics.lof_k", [](C& c) -> int& { return c.metrics_lof_k; }));
    f.push_back(scalar<int>("ablation.seeds", [](C& c) -> int& { return c.ablation_seeds; }));
    f.push_back(list<double>("ablation.ratios", [](C& c) -> std::vector<double>& { return c.sweep_ratios; }));
    return f;
  }();
  return fields;
}

const Field& field(const std::string& key) {
  static const std::map<std::string, const Field*> index = [] {
    std::map<std::string, const Field*> m;
    for (const auto& f : registry()) m.emplace(f.key, &f);
    return m;
  }();
  const auto it = index.find(key);
  if (it == index.end()) throw ConfigError("unknown config key: " + key);
  return *it->second;
}

}  // namespace

const char* condition_mode_name(ConditionMode mode) {
  switch (mode) {
    case ConditionMode::LabelOnly: return "label_only";
    case ConditionMode::Gmss: return "gmss";
    case ConditionMode::Sass: return "sass";
    case ConditionMode::All: return "all";
  }
  return "all";
}

ConditionMode parse_condition_mode(const std::string& text) {
  if (text == "label_only") return ConditionMode::LabelOnly;
  if (text == "gmss") return ConditionMode::Gmss;
  if (text == "sass") return ConditionMode::Sass;
  if (text == "all") return ConditionMode::All;
  throw ConfigError("condition_mode must be one of label_only, gmss, sass, all (got \"" + text + "\")");
}

void ExperimentConfig::validate() const {
  if (!(augmentation_ratio >= 0.0)) throw ConfigError("augmentation_ratio must be >= 0");
  for (double r : sweep_ratios)
    if (!(r >= 0.0)) throw ConfigError("ablation.ratios must be >= 0");
  if (ablation_seeds < 1) throw ConfigError("ablation.seeds must be >= 1");
  if (!data.path.empty() && data.path.ends_with(".csv") && (data.csv_channels < 1 || data.csv_length < 1))
    throw ConfigError("CSV input needs data.csv_channels and data.csv_length");
  split.validate();
  if (split.train_trials.empty() || split.test_trials.empty()) throw ConfigError("split needs train and test trials");
  generation_encoder.validate();
  evaluation_encoder.validate();
  downstream.validate();
  if (gmss_conditions_per_class < 0) throw ConfigError("gmss.conditions_per_class must be >= 0");
  sass.validate();
  if (diffusion_steps < 1) throw ConfigError("diffusion.steps must be >= 1");
  diffusion.validate();
  if (sampler.ddim_steps < 1 || sampler.ddim_steps > diffusion_steps)
    throw ConfigError("sampler.ddim_steps must be in [1, diffusion.steps]");
  if (sampler.stochasticity < 0.0) throw ConfigError("sampler.stochasticity must be >= 0");
  if (metrics_knn_k < 1 || metrics_lof_k < 1) throw ConfigError("metric neighbourhood sizes must be >= 1");
}

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.name = "desk";
  for (auto* e : {&c.generation_encoder, &c.evaluation_encoder, &c.downstream}) {
    e->epochs = 30;
    e->batch_size = 16;
    e->learning_rate = 0.01;
    e->lr_decay_epoch = 60;
    e->lr_decay_factor = 0.1;
  }
  c.sass.relative_scale = true;
  c.sass.eps_radius = 1.0;
  c.sass.eta = 0.001;
  c.denoiser.base_width = 16;
  c.diffusion.learning_rate = 1e-3;
  c.diffusion.batch_size = 32;
  c.diffusion.iterations = 4000;
  c.sampler.ddim_steps = 50;
  return c;
}

ExperimentConfig ExperimentConfig::full() {
  ExperimentConfig c;
  c.name = "full";
  for (auto* e : {&c.generation_encoder, &c.evaluation_encoder, &c.downstream}) {
    e->epochs = 100;
    e->batch_size = 256;
    e->learning_rate = 0.01;
    e->lr_decay_epoch = 60;
    e->lr_decay_factor = 0.1;
  }
  c.sass = SassConfig{};
  c.denoiser.base_width = 32;
  c.diffusion.learning_rate = 1e-5;
  c.diffusion.batch_size = 128;
  c.diffusion.iterations = 20000;
  c.diffusion.cond_dropout = 0.05;
  c.sampler.ddim_steps = 500;
  return c;
}

ExperimentConfig ExperimentConfig::preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "full") return full();
  throw ConfigError("unknown preset \"" + name + "\" (expected desk or full)");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : registry()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, value);
}

std::string get_config_value(const ExperimentConfig& config, const std::string& key) { return field(key).get(config); }

void apply_assignment(ExperimentConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got \"" + assignment + "\"");
  const std::string key = trim(std::string_view(assignment).substr(0, eq));
  const std::string value = trim(std::string_view(assignment).substr(eq + 1));
  if (key == "preset") {
    config = ExperimentConfig::preset(value);
    return;
  }
  set_config_value(config, key, value);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config = ExperimentConfig::desk();
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  bool seen_value = false;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const bool is_preset = trim(line.substr(0, line.find('='))) == "preset";
    if (is_preset && seen_value) throw ConfigError("line " + std::to_string(line_no) + ": preset must come first");
    try {
      apply_assignment(config, line);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
    seen_value = seen_value || !is_preset;
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_snapshot(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : registry()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return out;
}

std::string config_hash(const ExperimentConfig& config) { return hex64(fnv1a64(config_snapshot(config))); }

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) {
  // splitmix64 finalizer over the mixed inputs.
  std::uint64_t z = master ^ fnv1a64(stage);
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace sasg
