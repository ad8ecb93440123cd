#include "pointslice/weights.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "pointslice/rng.hpp"

namespace ps {

void WeightStore::add(const std::string& name, WeightTensor t) {
    if (index.count(name)) raise(Errc::duplicate_tensor_name, name);
    index.emplace(name, tensors.size());
    tensors.emplace_back(name, std::move(t));
}

const WeightTensor* WeightStore::find(const std::string& name) const {
    const auto it = index.find(name);
    return it == index.end() ? nullptr : &tensors[it->second].second;
}

const WeightTensor& WeightStore::at(const std::string& name) const {
    const WeightTensor* t = find(name);
    if (!t) raise(Errc::incomplete_weights, name);
    return *t;
}

const char* repr_name(Repr r) noexcept {
    switch (r) {
        case Repr::slice: return "slice";
        case Repr::pillar: return "pillar";
        case Repr::voxel3d: return "voxel3d";
    }
    return "?";
}

std::vector<LayerSpec> build_layer_plan(const BackboneConfig& cfg, const HeadSpec& head,
                                        Repr repr) {
    cfg.validate();
    head.validate();
    std::vector<LayerSpec> plan;
    const int k = cfg.kernel_size;
    const std::vector<int> k2{k, k}, s2_1{1, 1};
    const std::vector<int> k3{k, k, k}, s3_1{1, 1, 1};
    const std::vector<int> down2{3, 3}, down2_s{2, 2};
    const std::vector<int> down3{3, 3, 3};
    const std::vector<int> down3_s = cfg.sin_stride_all_axes ? std::vector<int>{2, 2, 2}
                                                             : std::vector<int>{2, 1, 1};

    plan.push_back({"encoder", {1, 1, 1}, kRawVoxelChannels, cfg.channels[0], s3_1,
                    ConvKind::submanifold, true});

    const bool planar = repr != Repr::voxel3d; // 2D stem/EDB convs
    const std::vector<int>& srb_k = planar ? k2 : k3;
    const std::vector<int>& srb_s = planar ? s2_1 : s3_1;

    int width = cfg.channels[0];
    int rank = 0;
    for (int b = 1; b <= cfg.stem_block_count; ++b) {
        const std::string base = "stem.srb" + std::to_string(b);
        plan.push_back({base + ".conv1", srb_k, width, width, srb_s, ConvKind::submanifold, true});
        plan.push_back({base + ".conv2", srb_k, width, width, srb_s, ConvKind::submanifold, true});
        if (rank < static_cast<int>(cfg.sin_positions.size()) &&
            cfg.sin_positions[static_cast<std::size_t>(rank)] == b) {
            const int next = cfg.channels[static_cast<std::size_t>(rank) + 1];
            switch (repr) {
                case Repr::slice:
                    plan.push_back({"stem.sin" + std::to_string(rank + 1), down3, width, next,
                                    down3_s, ConvKind::strided, true});
                    break;
                case Repr::voxel3d:
                    plan.push_back({"stem.down" + std::to_string(rank + 1), down3, width, next,
                                    down3_s, ConvKind::strided, true});
                    break;
                case Repr::pillar:
                    plan.push_back({"stem.down" + std::to_string(rank + 1), down2, width, next,
                                    down2_s, ConvKind::strided, true});
                    break;
            }
            width = next;
            ++rank;
        }
    }

    const bool with_sin = !cfg.sin_positions.empty();
    for (int e = 1; e <= cfg.edb_count; ++e) {
        const std::string base = "edb" + std::to_string(e);
        if (with_sin) {
            if (repr == Repr::slice)
                plan.push_back({base + ".sin", {3, 3, 3}, width, width, s3_1,
                                ConvKind::submanifold, true});
            else if (repr == Repr::voxel3d)
                plan.push_back({base + ".entry", {3, 3, 3}, width, width, s3_1,
                                ConvKind::submanifold, true});
            // pillar has no slice interaction layer
        }
        if (planar) {
            plan.push_back({base + ".down", down2, width, width, down2_s, ConvKind::strided, true});
            for (int j = 1; j <= kEdbBottomSrbCount; ++j) {
                const std::string sb = base + ".srb" + std::to_string(j);
                plan.push_back({sb + ".conv1", k2, width, width, s2_1, ConvKind::submanifold, true});
                plan.push_back({sb + ".conv2", k2, width, width, s2_1, ConvKind::submanifold, true});
            }
            plan.push_back({base + ".up", down2, width, width, down2_s, ConvKind::transposed, true});
        } else {
            plan.push_back({base + ".down", down3, width, width, {2, 2, 2}, ConvKind::strided, true});
            for (int j = 1; j <= kEdbBottomSrbCount; ++j) {
                const std::string sb = base + ".srb" + std::to_string(j);
                plan.push_back({sb + ".conv1", k3, width, width, s3_1, ConvKind::submanifold, true});
                plan.push_back({sb + ".conv2", k3, width, width, s3_1, ConvKind::submanifold, true});
            }
            plan.push_back({base + ".up", down3, width, width, {2, 2, 2}, ConvKind::transposed, true});
        }
    }

    // detection head: two 1x1 stacks on the BEV map, shared across reprs
    plan.push_back({"head.heatmap.conv1", {1, 1}, width, kHeadMidChannels, s2_1,
                    ConvKind::submanifold, true});
    plan.push_back({"head.heatmap.conv2", {1, 1}, kHeadMidChannels, head.num_classes, s2_1,
                    ConvKind::submanifold, true});
    plan.push_back({"head.reg.conv1", {1, 1}, width, kHeadMidChannels, s2_1,
                    ConvKind::submanifold, true});
    plan.push_back({"head.reg.conv2", {1, 1}, kHeadMidChannels, kRegressionChannels, s2_1,
                    ConvKind::submanifold, true});
    return plan;
}

WeightStore init_weights(const std::vector<LayerSpec>& plan, std::uint64_t seed) {
    WeightStore store;
    for (const auto& spec : plan) {
        std::int64_t kvol = 1;
        for (int e : spec.kernel) kvol *= e;
        const double fan_in = static_cast<double>(kvol) * spec.cin;
        const double bound = 1.0 / std::sqrt(fan_in);

        WeightTensor w;
        w.dims.assign(spec.kernel.begin(), spec.kernel.end());
        w.dims.push_back(spec.cin);
        w.dims.push_back(spec.cout);
        w.values.resize(static_cast<std::size_t>(kvol) * spec.cin * spec.cout);
        SplitMix64 rng(seed ^ fnv1a64((spec.name + ".weight").c_str()));
        for (float& v : w.values) v = rng.uniform_f(-bound, bound);
        store.add(spec.name + ".weight", std::move(w));

        if (spec.has_bias) {
            WeightTensor b;
            b.dims = {spec.cout};
            b.values.resize(static_cast<std::size_t>(spec.cout));
            SplitMix64 brng(seed ^ fnv1a64((spec.name + ".bias").c_str()));
            for (float& v : b.values) v = brng.uniform_f(-bound, bound);
            store.add(spec.name + ".bias", std::move(b));
        }
    }
    return store;
}

ParamCounts count_params(const WeightStore& weights) {
    ParamCounts counts;
    std::vector<std::pair<std::string, std::int64_t>>& per = counts.per_layer;
    for (const auto& [name, tensor] : weights.tensors) {
        const std::size_t dot = name.rfind('.');
        const std::string layer = dot == std::string::npos ? name : name.substr(0, dot);
        if (per.empty() || per.back().first != layer) per.emplace_back(layer, 0);
        per.back().second += tensor.element_count();
        counts.total += tensor.element_count();
    }
    return counts;
}

namespace {

constexpr char kMagic[4] = {'P', 'S', 'W', '1'};

struct FileCloser {
    std::FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

void write_bytes(std::FILE* f, const void* p, std::size_t n, const std::string& path) {
    if (std::fwrite(p, 1, n, f) != n) raise(Errc::io_error, path + ": short write");
}

void read_bytes(std::FILE* f, void* p, std::size_t n, const std::string& path) {
    if (std::fread(p, 1, n, f) != n) raise(Errc::truncated_file, path);
}

} // namespace

void save_weights(const std::string& path, const WeightStore& weights) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) raise(Errc::io_error, "cannot open " + path + " for writing");
    FileCloser closer{f};
    write_bytes(f, kMagic, 4, path);
    const std::uint32_t count = static_cast<std::uint32_t>(weights.tensors.size());
    write_bytes(f, &count, 4, path);
    for (const auto& [name, tensor] : weights.tensors) {
        const std::uint16_t len = static_cast<std::uint16_t>(name.size());
        write_bytes(f, &len, 2, path);
        write_bytes(f, name.data(), len, path);
        const std::uint8_t ndim = static_cast<std::uint8_t>(tensor.dims.size());
        write_bytes(f, &ndim, 1, path);
        for (std::int32_t d : tensor.dims) {
            const std::uint32_t ud = static_cast<std::uint32_t>(d);
            write_bytes(f, &ud, 4, path);
        }
        write_bytes(f, tensor.values.data(), tensor.values.size() * 4, path);
    }
}

WeightStore load_weights(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) raise(Errc::io_error, "cannot open " + path);
    FileCloser closer{f};
    char magic[4];
    read_bytes(f, magic, 4, path);
    if (std::memcmp(magic, kMagic, 4) != 0) raise(Errc::bad_magic, path);
    std::uint32_t count = 0;
    read_bytes(f, &count, 4, path);
    WeightStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t len = 0;
        read_bytes(f, &len, 2, path);
        std::string name(len, '\0');
        read_bytes(f, name.data(), len, path);
        std::uint8_t ndim = 0;
        read_bytes(f, &ndim, 1, path);
        WeightTensor t;
        t.dims.resize(ndim);
        std::int64_t total = 1;
        for (int d = 0; d < ndim; ++d) {
            std::uint32_t ud = 0;
            read_bytes(f, &ud, 4, path);
            t.dims[static_cast<std::size_t>(d)] = static_cast<std::int32_t>(ud);
            total *= t.dims[static_cast<std::size_t>(d)];
        }
        if (total < 0 || total > (std::int64_t{1} << 34))
            raise(Errc::truncated_file, path + ": implausible tensor size");
        t.values.resize(static_cast<std::size_t>(total));
        read_bytes(f, t.values.data(), t.values.size() * 4, path);
        store.add(name, std::move(t));
    }
    // trailing garbage means the file is not what it claims to be
    char probe;
    if (std::fread(&probe, 1, 1, f) == 1) raise(Errc::truncated_file, path + ": trailing bytes");
    return store;
}

ConvLayer make_conv_layer(const WeightStore& weights, const LayerSpec& spec) {
    ConvLayer layer;
    layer.name = spec.name;
    layer.kernel_dims = spec.kernel;
    layer.in_channels = spec.cin;
    layer.out_channels = spec.cout;
    layer.stride = spec.stride;
    layer.kind = spec.kind;

    const WeightTensor& w = weights.at(spec.name + ".weight");
    std::vector<std::int32_t> expect(spec.kernel.begin(), spec.kernel.end());
    expect.push_back(spec.cin);
    expect.push_back(spec.cout);
    if (w.dims != expect)
        raise(Errc::shape_mismatch, spec.name + ".weight has unexpected dims");
    layer.weights = w.values;
    if (spec.has_bias) {
        const WeightTensor& b = weights.at(spec.name + ".bias");
        if (b.dims != std::vector<std::int32_t>{spec.cout})
            raise(Errc::shape_mismatch, spec.name + ".bias has unexpected dims");
        layer.bias = b.values;
    }
    layer.validate();
    return layer;
}

} // namespace ps
