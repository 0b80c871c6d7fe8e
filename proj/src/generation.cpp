#include "sasg/generation.hpp"

namespace sasg {

namespace {

const ConditionSet* find_set(const std::vector<ConditionSet>& sets, int k) {
  for (const auto& s : sets)
    if (s.class_id == k) return &s;
  return nullptr;
}

}  // namespace

std::vector<GenerationRequest> requests_per_condition(const std::vector<ConditionSet>& sets, int per_condition) {
  if (per_condition < 0) throw ConfigError("per_condition must be >= 0");
  std::vector<GenerationRequest> out;
  for (const auto& s : sets)
    for (const auto& c : s.conditions)
      for (int r = 0; r < per_condition; ++r) out.push_back({s.class_id, c.vector});
  return out;
}

std::vector<GenerationRequest> requests_for_counts(const std::vector<ConditionSet>& sets,
                                                   const std::vector<std::size_t>& counts) {
  std::vector<GenerationRequest> out;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) continue;
    const ConditionSet* s = find_set(sets, static_cast<int>(k));
    if (!s || s->conditions.empty())
      throw ConfigError("no conditions available for class " + std::to_string(k));
    for (std::size_t i = 0; i < counts[k]; ++i)
      out.push_back({static_cast<int>(k), s->conditions[i % s->conditions.size()].vector});
  }
  return out;
}

std::vector<GenerationRequest> label_requests(const std::vector<std::size_t>& counts) {
  std::vector<GenerationRequest> out;
  for (std::size_t k = 0; k < counts.size(); ++k)
    for (std::size_t i = 0; i < counts[k]; ++i) out.push_back({static_cast<int>(k), std::nullopt});
  return out;
}

WindowedDataset generate_windows(const DiffusionModel& model, std::span<const GenerationRequest> requests,
                                 int class_count, const SamplerConfig& sampler, Rng& rng) {
  WindowedDataset out;
  out.split = SplitTag::Generated;
  out.class_count = class_count;
  const auto samples = ddim_sample(model, model.schedule, requests, sampler, rng);
  out.windows.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].allFinite()) throw StageError("generate", "non-finite generated window " + std::to_string(i));
    out.windows.push_back({samples[i], requests[i].label, 0, 0});
  }
  return out;
}

WindowedDataset generate_augmented_set(const DiffusionModel& model, const std::vector<ConditionSet>& sets,
                                       int per_condition, int class_count, const SamplerConfig& sampler, Rng& rng) {
  const auto requests = requests_per_condition(sets, per_condition);
  return generate_windows(model, requests, class_count, sampler, rng);
}

}  // namespace sasg
