#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointslice/sparse_tensor.hpp"
#include "pointslice/voxelize.hpp"

namespace ps {

struct WeightStore; // weights.hpp

// Decoded rotated BEV box.
struct Detection {
    std::int32_t frame_id = 0; // batch row the box was decoded from
    std::int32_t class_id = 0;
    float score = 0.0f;        // sigmoid output, in (0,1)
    float cx = 0.0f, cy = 0.0f, cz = 0.0f; // meters
    float l = 0.0f, w = 0.0f, h = 0.0f;    // meters, > 0 (decoded via exp)
    float yaw = 0.0f;                      // radians in (-pi, pi]
};

struct HeadSpec {
    int num_classes = 3;
    double score_threshold = 0.3;
    double nms_iou = 0.1;
    int max_detections = 500;
    int bev_stride = 8;

    void validate() const;
};

// Width of the hidden 1x1 layer in both head branches.
inline constexpr int kHeadMidChannels = 64;

// Number of regression channels: dx, dy, z, log l, log w, log h, sin yaw,
// cos yaw.
inline constexpr int kRegressionChannels = 8;

struct HeadOutput {
    SparseTensor heatmap; // num_classes channels, sigmoid applied
    SparseTensor regress; // kRegressionChannels channels, raw
};

// Two 1x1 submanifold conv stacks over the BEV tensor; both outputs share
// the BEV active set exactly.
HeadOutput head_forward(const SparseTensor& bev, const WeightStore& weights,
                        const HeadSpec& spec);

// Center decoding: for every active site and class with score above the
// threshold, center = range_min + (cell + 0.5 + offset) * voxel * bev_stride
// in x/y, z taken directly, sizes via exp, yaw via atan2. Result is sorted
// by descending score and truncated to max_detections (ties keep the lower
// site index first).
std::vector<Detection> decode(const HeadOutput& out, const HeadSpec& spec,
                              const VoxelGridSpec& grid);

// Greedy class-wise BEV NMS over rotated boxes; boxes of different frames or
// classes never suppress each other. Input must be sorted by descending
// score; kept order is preserved.
std::vector<Detection> nms_bev(const std::vector<Detection>& dets, double iou_threshold);

// Rotated rectangle in the BEV plane; l extends along the heading axis.
struct BevBox {
    double cx = 0, cy = 0, l = 0, w = 0, yaw = 0;
};

// Intersection-over-union of two rotated rectangles via corner/crossing
// vertex collection and a convex-hull area. Exact for axis-aligned boxes
// with dyadic coordinates.
double rotated_iou(const BevBox& a, const BevBox& b);

// One JSON object per detection, reals at 6 significant digits. Stable byte
// output for identical inputs.
std::string detection_jsonl(const Detection& d);

} // namespace ps
