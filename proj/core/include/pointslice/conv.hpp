#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pointslice/sparse_tensor.hpp"

namespace ps {

enum class ConvKind { submanifold, strided, transposed };

const char* conv_kind_name(ConvKind k) noexcept;

// Named weight tensor + optional bias + geometry. Weight layout is
// offset-major: kernel offsets outermost (row-major over kernel_dims), then
// Cin, then Cout contiguous. Convolution is cross-correlation with
// "same"-style padding pad = kernel/2 on every axis:
//   out[j] = bias + sum_o W[o] * in[j*stride - pad + o]
struct ConvLayer {
    std::string name;
    std::vector<int> kernel_dims; // 2 or 3 entries
    int in_channels = 0;
    int out_channels = 0;
    std::vector<int> stride;            // per axis, same length as kernel_dims
    ConvKind kind = ConvKind::submanifold;
    std::vector<float> weights;         // prod(kernel) * Cin * Cout
    std::vector<float> bias;            // Cout, or empty

    int kernel_volume() const noexcept {
        int k = 1;
        for (int e : kernel_dims) k *= e;
        return k;
    }
    std::int64_t weight_count() const noexcept {
        return static_cast<std::int64_t>(kernel_volume()) * in_channels * out_channels;
    }
    void validate() const;
};

// Gather-scatter plan: per kernel offset, the (input_row, output_row) pairs
// that offset connects, plus the output geometry. Pairs are sorted by
// (output_row, input_row) so scatter order is canonical.
struct Rulebook {
    std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> pairs; // [kernel_volume]
    std::vector<std::int32_t> output_coords;                               // n_out * ndim
    std::vector<std::int32_t> output_shape;
    std::int32_t output_batch_size = 0;
    std::optional<std::int32_t> output_slice_height;
    std::int64_t n_in = 0;
    std::int64_t n_out = 0;
    int ndim = 0;

    std::int64_t pair_count() const noexcept {
        std::int64_t n = 0;
        for (const auto& p : pairs) n += static_cast<std::int64_t>(p.size());
        return n;
    }
};

std::vector<std::int32_t> conv_output_shape(std::span<const std::int32_t> in_shape,
                                            std::span<const int> kernel,
                                            std::span<const int> stride);

// Output coordinate set equals the input set; a pair (i -> j) exists at
// offset o iff coord(i) == coord(j) + o - kernel/2 within the same batch.
// Kernel extents must be odd.
Rulebook build_rulebook_subm(const SparseTensor& t, std::span<const int> kernel_dims);

// Output sites are every strided-grid position whose receptive field touches
// an input site (the densifying "regular" semantics).
Rulebook build_rulebook_strided(const SparseTensor& t, std::span<const int> kernel_dims,
                                std::span<const int> stride);

// Upsampling that restores a previously recorded active set: output rows are
// exactly `paired`'s coordinates, values per transposed-conv arithmetic
// restricted to those sites.
Rulebook build_rulebook_transposed(const SparseTensor& t, std::span<const int> kernel_dims,
                                   std::span<const int> stride, const SparseTensor& paired);

// Executes a rulebook: out[j] = bias + sum over offsets and pairs of
// W[o] * in[i]. Accumulation per output row runs in fixed (offset, input)
// order, in double, so results are bit-identical for any worker count.
SparseTensor conv_forward(const SparseTensor& t, const ConvLayer& layer, const Rulebook& rb);

// Convenience wrappers that build the rulebook internally.
SparseTensor subm_conv(const SparseTensor& t, const ConvLayer& layer);
SparseTensor strided_conv(const SparseTensor& t, const ConvLayer& layer);
// `paired` is the tensor recorded before the matching downsample; passing
// nullptr raises MissingPairedActiveSet.
SparseTensor transposed_conv_forward(const SparseTensor& t, const ConvLayer& layer,
                                     const SparseTensor* paired);

// Per-site linear map for 1x1 kernels (head branches, voxel encoder).
SparseTensor pointwise_conv(const SparseTensor& t, const ConvLayer& layer);

SparseTensor relu(SparseTensor t);

// Row-aligned feature sum; both tensors must share the identical active set.
SparseTensor add(const SparseTensor& a, const SparseTensor& b);

} // namespace ps
