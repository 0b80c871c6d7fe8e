#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sasg/pipeline.hpp"
#include "sasg/report.hpp"

using namespace sasg;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c = ExperimentConfig::desk();
  c.data.synth.windows_per_trial = 3;
  c.generation_encoder.epochs = 3;
  c.evaluation_encoder.epochs = 3;
  c.downstream.epochs = 3;
  c.diffusion.iterations = 20;
  c.sampler.ddim_steps = 5;
  c.sass.conditions_per_class = 4;
  c.sass.iterations = 10;
  return c;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST_CASE("config snapshot round trip and hash") {
  ExperimentConfig c = ExperimentConfig::desk();
  c.seed = 17;
  c.sass.eta = 0.25;
  const auto text = config_snapshot(c);
  const auto back = parse_config(text);
  CHECK(config_snapshot(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);

  ExperimentConfig d = c;
  apply_assignment(d, "sass.eta = 0.5");
  CHECK(d.sass.eta == 0.5);
  CHECK(config_hash(d) != config_hash(c));
  CHECK(get_config_value(d, "sass.eta") == "0.5");
}

TEST_CASE("config errors") {
  ExperimentConfig c = ExperimentConfig::desk();
  CHECK_THROWS_AS(apply_assignment(c, "no.such.key = 1"), ConfigError);
  CHECK_THROWS_AS(apply_assignment(c, "sass.eta"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "sass.B", "many"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::preset("huge"), ConfigError);
  c.sass.eps_radius = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("presets validate and every key is readable") {
  for (const char* name : {"desk", "full"}) {
    const auto c = ExperimentConfig::preset(name);
    CHECK_NOTHROW(c.validate());
    for (const auto& key : config_keys()) CHECK_NOTHROW(get_config_value(c, key));
  }
  CHECK(ExperimentConfig::full().sampler.ddim_steps == 500);
  CHECK(ExperimentConfig::full().diffusion.cond_dropout == doctest::Approx(0.05));
  CHECK(ExperimentConfig::full().sass.eps_radius == doctest::Approx(3.0));
  CHECK(ExperimentConfig::full().sass.conf_threshold == doctest::Approx(0.15));
}

TEST_CASE("derived seeds are distinct per stage and stable") {
  CHECK(derive_seed(0, "dataset") == derive_seed(0, "dataset"));
  CHECK(derive_seed(0, "dataset") != derive_seed(0, "diffusion"));
  CHECK(derive_seed(0, "dataset") != derive_seed(1, "dataset"));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("generation counts follow the ratio") {
  const auto data = prepare_data(ExperimentConfig::desk());
  const auto base = data.train.class_counts();
  CHECK(generation_counts(data.train, 0.0) == std::vector<std::size_t>(base.size(), 0));
  CHECK(generation_counts(data.train, 1.0) == base);
  const auto twice = generation_counts(data.train, 2.0);
  for (std::size_t k = 0; k < base.size(); ++k) CHECK(twice[k] == 2 * base[k]);
  CHECK(data.train.size() == 160);
  for (auto n : base) CHECK(n == 40);
}

TEST_CASE("arm names round trip") {
  for (Arm a : {Arm::Baseline, Arm::LabelOnly, Arm::Gmss, Arm::Sass}) CHECK(parse_arm(arm_name(a)) == a);
  CHECK(arms_for(ConditionMode::All).size() == 4);
  CHECK(arms_for(ConditionMode::Sass).size() == 2);
}

TEST_CASE("tiny experiment bundle, manifest and report") {
  const auto root = std::filesystem::temp_directory_path() / "sasg_test_pipeline";
  std::filesystem::remove_all(root);
  ExperimentConfig c = tiny_config();
  RunOptions opt;
  opt.bundle = root / "bundle";
  const auto r = run_experiment(c, opt);

  REQUIRE(r.arms.size() == 4);
  CHECK(r.config_hash == config_hash(c));
  const auto& base = r.arm(Arm::Baseline);
  CHECK_FALSE(base.generation.has_value());
  CHECK(base.generated == 0);
  CHECK(base.train_size == r.train_size);
  for (Arm a : {Arm::LabelOnly, Arm::Gmss, Arm::Sass}) {
    const auto& arm = r.arm(a);
    REQUIRE(arm.generation.has_value());
    CHECK(arm.generated == r.train_size);
    CHECK(arm.train_size == 2 * r.train_size);
    CHECK(arm.generation->fid >= 0.0);
    CHECK(arm.generation->cas >= 0.0);
    CHECK(arm.generation->cas <= 1.0);
    CHECK(arm.generation->per_class.size() == 4);
    CHECK(std::filesystem::exists(opt.bundle / arm.generated_file));
    const auto loaded = load_dataset(opt.bundle / arm.generated_file);
    CHECK(dataset_fingerprint(loaded) == arm.generated_hash);
  }
  CHECK(r.semantic_loss.size() == 20);
  CHECK(r.label_loss.size() == 20);
  CHECK(r.sass_summary.size() == 4);

  for (const auto& [rel, hash] : r.artifacts) {
    INFO(rel);
    CHECK(fnv1a64(read_file(opt.bundle / rel)) == hash);
  }
  CHECK(std::filesystem::exists(opt.bundle / "results.json"));
  const auto json = read_file(opt.bundle / "results.json");
  CHECK(json.find(r.config_hash) != std::string::npos);

  const auto files = write_report(opt.bundle, root / "report");
  CHECK(files.size() >= 8);
  CHECK(first_line(root / "report" / "metrics.csv")
            .starts_with("seed,config_hash,arm,ratio,generated,train_size,accuracy,precision,recall,f1,fid"));
  CHECK(first_line(root / "report" / "sparsity.csv").find("rarity") != std::string::npos);
  CHECK(read_file(root / "report" / "curves.svg").starts_with("<svg") == true);
}

TEST_CASE("ratio zero builds only the baseline") {
  ExperimentConfig c = tiny_config();
  c.augmentation_ratio = 0.0;
  const auto r = run_experiment(c);
  for (const auto& arm : r.arms) {
    CHECK(arm.generated == 0);
    CHECK(arm.train_size == r.train_size);
  }
  CHECK(r.semantic_loss.empty());
}
