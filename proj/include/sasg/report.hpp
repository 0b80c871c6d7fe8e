#pragma once

#include <filesystem>
#include <vector>

#include "sasg/pipeline.hpp"

namespace sasg {

/// Writes CSV tables and SVG figures for one experiment bundle into
/// `out_dir` (created if needed). Returns the files written.
///
///   metrics.csv           one row per arm, plus sweep.csv when present
///   curves.csv/.svg       downstream train/test accuracy per epoch and arm
///   sparsity.csv          per-class avg_knn, lof, rarity for generated arms
///   sparsity_samples.csv  per-window values; sparsity.svg box plots
///   pca.csv/.svg          real and generated eval features on two axes
///   loss_trace.csv        diffusion training loss
std::vector<std::filesystem::path> write_report(const std::filesystem::path& bundle,
                                                const std::filesystem::path& out_dir);

/// One row per arm and seed at the main augmentation ratio.
void write_ablation_table(const std::vector<ExperimentResult>& runs, const std::filesystem::path& path);

/// One row per sweep ratio and seed.
void write_sweep_table(const std::vector<ExperimentResult>& runs, const std::filesystem::path& path);

}  // namespace sasg
