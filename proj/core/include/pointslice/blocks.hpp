#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pointslice/conv.hpp"
#include "pointslice/sparse_tensor.hpp"

namespace ps {

struct WeightStore; // weights.hpp

struct BackboneConfig {
    int stem_block_count = 8;
    std::vector<int> sin_positions = {2, 4, 8}; // 1-based block indices
    std::vector<int> channels = {32, 64, 128, 256};
    int edb_count = 1;
    int kernel_size = 3; // 3 or 5
    int afd_kernel = 3;
    bool sin_stride_all_axes = true; // false: stride 2 on z only

    void validate() const;
};

// Number of residual blocks at the bottom of each encoder-decoder block.
inline constexpr int kEdbBottomSrbCount = 2;

// Observer for forward passes: per-layer outputs plus a live-byte figure
// (sum of feature bytes of all tensors the pipeline currently holds). Used
// for the benchmark memory proxy, trace mode and tests.
struct ForwardObserver {
    virtual ~ForwardObserver() = default;
    virtual void on_layer(const std::string& name, const SparseTensor& out,
                          std::size_t live_bytes) = 0;
};

// Residual unit: out = ReLU(conv2(ReLU(conv1(t))) + t) on the unchanged
// active set. Both layers must be submanifold with matched channels.
SparseTensor srb_forward(const SparseTensor& t, const ConvLayer& conv1, const ConvLayer& conv2);

// Slice interaction: unfold slices to 3D, run one 3D convolution, fold back.
// Strided layers halve the slice count (and y/x for all-axes stride);
// submanifold layers preserve everything.
SparseTensor sin_forward(const SparseTensor& t, const ConvLayer& layer);

// Encoder-decoder block: optional SIN at entry, stride-2 downsample,
// kEdbBottomSrbCount residual blocks at the bottom, transposed-conv
// upsample restoring the pre-downsample active set, skip add, ReLU.
struct EdbWeights {
    const ConvLayer* sin = nullptr; // optional
    const ConvLayer* down = nullptr;
    std::vector<std::pair<const ConvLayer*, const ConvLayer*>> bottom_srbs;
    const ConvLayer* up = nullptr;
};
SparseTensor edb_forward(const SparseTensor& t, const EdbWeights& w,
                         ForwardObserver* obs = nullptr, const std::string& prefix = "edb");

// Dilates the active set by the (odd) kernel footprint. Original sites keep
// their features bit-exactly; new sites get the mean of their active
// in-footprint neighbors.
SparseTensor afd_diffuse(const SparseTensor& t, int kernel);

// Max-collapse over the vertical axis: accepts a slice tensor (folded batch)
// or a 3D tensor, returns a BEV 2D tensor with batch_size = B.
SparseTensor bev_collapse_max(const SparseTensor& t);

// Full backbone on a 3D voxel tensor: slice -> stem SRBs with SIN at
// cfg.sin_positions (channel step at each SIN) -> EDBs (entry SIN when
// sin_positions is non-empty) -> max z-collapse -> AFD. Weights are looked
// up by layer name; the first missing name raises IncompleteWeights.
SparseTensor backbone_forward(const SparseTensor& voxels, const BackboneConfig& cfg,
                              const WeightStore& weights, ForwardObserver* obs = nullptr);

} // namespace ps
