#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pointslice/blocks.hpp"
#include "pointslice/conv.hpp"
#include "pointslice/head.hpp"

namespace ps {

struct WeightTensor {
    std::vector<std::int32_t> dims;
    std::vector<float> values;

    std::int64_t element_count() const noexcept {
        std::int64_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

// Insertion-ordered named tensors; order is part of the serialized format.
struct WeightStore {
    std::vector<std::pair<std::string, WeightTensor>> tensors;
    std::unordered_map<std::string, std::size_t> index;

    void add(const std::string& name, WeightTensor t);
    const WeightTensor* find(const std::string& name) const;
    // raises IncompleteWeights naming the missing tensor
    const WeightTensor& at(const std::string& name) const;
    bool operator==(const WeightStore& o) const {
        if (tensors.size() != o.tensors.size()) return false;
        for (std::size_t i = 0; i < tensors.size(); ++i)
            if (tensors[i].first != o.tensors[i].first ||
                tensors[i].second.dims != o.tensors[i].second.dims ||
                tensors[i].second.values != o.tensors[i].second.values)
                return false;
        return true;
    }
};

// The three benchmarked network shapes. `slice` is the real pipeline; the
// other two are the comparison baselines built from the same config.
enum class Repr { slice, pillar, voxel3d };

const char* repr_name(Repr r) noexcept;

struct LayerSpec {
    std::string name;
    std::vector<int> kernel;
    int cin = 0;
    int cout = 0;
    std::vector<int> stride;
    ConvKind kind = ConvKind::submanifold;
    bool has_bias = true;
};

// Every conv layer of the given network shape, in execution order, including
// the voxel-feature encoder and the detection head branches.
std::vector<LayerSpec> build_layer_plan(const BackboneConfig& cfg, const HeadSpec& head,
                                        Repr repr);

// Uniform [-s, s] with s = 1/sqrt(fan_in), fan_in = prod(kernel) * Cin.
// Each tensor gets its own SplitMix64 stream derived from (seed, name), so
// the result is reproducible across platforms and plan orderings.
WeightStore init_weights(const std::vector<LayerSpec>& plan, std::uint64_t seed);

struct ParamCounts {
    std::vector<std::pair<std::string, std::int64_t>> per_layer; // layer name -> params
    std::int64_t total = 0;
};

ParamCounts count_params(const WeightStore& weights);

// Binary "PSW1" container; see README for the exact byte layout. load(save(w))
// reproduces the store bit-exactly.
void save_weights(const std::string& path, const WeightStore& weights);
WeightStore load_weights(const std::string& path);

// Materializes a ConvLayer from "<name>.weight" / "<name>.bias" entries,
// checking the stored dims against the spec.
ConvLayer make_conv_layer(const WeightStore& weights, const LayerSpec& spec);

} // namespace ps
