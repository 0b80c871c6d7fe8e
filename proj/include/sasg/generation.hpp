#pragma once

#include <vector>

#include "sasg/diffusion.hpp"
#include "sasg/sass.hpp"

namespace sasg {

/// per_condition requests for every condition of every set, in set order.
std::vector<GenerationRequest> requests_per_condition(const std::vector<ConditionSet>& sets, int per_condition);

/// counts[k] requests for class k, cycling through the conditions of S_k.
/// Sets are looked up by class id; a class with a zero count may be absent.
std::vector<GenerationRequest> requests_for_counts(const std::vector<ConditionSet>& sets,
                                                   const std::vector<std::size_t>& counts);

/// counts[k] label-only requests for class k.
std::vector<GenerationRequest> label_requests(const std::vector<std::size_t>& counts);

/// Samples one window per request (split Generated, trial 0). Feature
/// conditions are dropped when the model was trained on labels only.
WindowedDataset generate_windows(const DiffusionModel& model, std::span<const GenerationRequest> requests,
                                 int class_count, const SamplerConfig& sampler, Rng& rng);

WindowedDataset generate_augmented_set(const DiffusionModel& model, const std::vector<ConditionSet>& sets,
                                       int per_condition, int class_count, const SamplerConfig& sampler, Rng& rng);

}  // namespace sasg
