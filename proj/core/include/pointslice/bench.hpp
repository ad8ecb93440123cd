#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pointslice/blocks.hpp"
#include "pointslice/config.hpp"
#include "pointslice/scene.hpp"
#include "pointslice/weights.hpp"

namespace ps {

struct RepresentationStats {
    std::int64_t param_count = 0;
    double backbone_ms_mean = 0;
    double backbone_ms_median = 0;
    double e2e_ms_mean = 0;
    double e2e_ms_median = 0;
    std::int64_t peak_active_sites = 0;
    std::int64_t peak_feature_bytes = 0;
};

// Efficiency comparison of the three matched network shapes on one scene.
// Memory figures are a CPU-side feature-byte proxy, flagged as such in the
// serialized report.
struct BenchReport {
    RepresentationStats slice;
    RepresentationStats pillar;
    RepresentationStats voxel3d;
    // vs voxel3d; absent when a ratio's operands are missing/zero
    std::optional<double> slice_param_ratio;
    std::optional<double> slice_speedup;       // voxel3d time / slice time
    std::optional<double> slice_memory_ratio;  // slice bytes / voxel3d bytes
    std::optional<double> pillar_param_ratio;
    std::optional<double> pillar_speedup;
    std::string memory_note = "proxy: peak live feature bytes, not device memory";

    std::string to_json() const;
    static BenchReport from_json(const std::string& text);
};

// Forward drivers for the two baselines. Both accept the encoded voxel
// tensor (channels[0] features) and produce a BEV map through the same
// stage sequence as backbone_forward.
SparseTensor voxel3d_forward(const SparseTensor& voxels, const BackboneConfig& cfg,
                             const WeightStore& weights, ForwardObserver* obs = nullptr);
SparseTensor pillar_forward(const SparseTensor& voxels, const BackboneConfig& cfg,
                            const WeightStore& weights, ForwardObserver* obs = nullptr);

// Structural fairness check across the three plans (identical channel
// schedule and downsampling factors); raises ConfigIncompatible.
void check_matched_configs(const BackboneConfig& cfg, const HeadSpec& head);

// Builds the three matched backbones, runs the same scene through each with
// `repetitions` timed passes after one discarded warmup, and reports
// parameters, wall times, and peak sparsity/memory figures.
BenchReport run_bench(const PipelineConfig& cfg, int repetitions, std::uint64_t weight_seed,
                      std::vector<std::string>* trace_lines = nullptr);

} // namespace ps
