#include "pointslice/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace ps::oracle {

namespace {

std::vector<int> offset_at(int linear, std::span<const int> kernel) {
    std::vector<int> off(kernel.size());
    for (int a = static_cast<int>(kernel.size()) - 1; a >= 0; --a) {
        off[static_cast<std::size_t>(a)] = linear % kernel[a];
        linear /= kernel[a];
    }
    return off;
}

} // namespace

DenseTensor dense_conv(const DenseTensor& in, const ConvLayer& layer) {
    const int sd = static_cast<int>(layer.kernel_dims.size());
    if (static_cast<int>(in.shape.size()) != sd + 2)
        raise(Errc::shape_mismatch, "dense_conv: rank mismatch");
    const int cin = layer.in_channels;
    const int cout = layer.out_channels;
    if (in.shape.back() != cin) raise(Errc::channel_mismatch, "dense_conv: channel mismatch");

    std::vector<std::int32_t> in_spatial;
    for (int a = 0; a < sd; ++a) in_spatial.push_back(static_cast<std::int32_t>(in.shape[a + 1]));
    const auto out_spatial = conv_output_shape(in_spatial, layer.kernel_dims, layer.stride);

    DenseTensor out;
    out.shape.push_back(in.shape[0]);
    for (auto s : out_spatial) out.shape.push_back(s);
    out.shape.push_back(cout);
    out.data.assign(static_cast<std::size_t>(out.size()), 0.0f);

    const auto in_st = in.strides();
    const auto out_st = out.strides();
    const int kvol = layer.kernel_volume();

    std::vector<std::int64_t> oidx(static_cast<std::size_t>(sd) + 1, 0); // (b, spatial...)
    const std::int64_t out_sites = cout ? out.size() / cout : 0;
    for (std::int64_t s = 0; s < out_sites; ++s) {
        std::int64_t out_off = 0;
        for (int a = 0; a <= sd; ++a) out_off += oidx[static_cast<std::size_t>(a)] * out_st[a];
        std::vector<double> acc(static_cast<std::size_t>(cout), 0.0);
        if (!layer.bias.empty())
            for (int c = 0; c < cout; ++c) acc[static_cast<std::size_t>(c)] = layer.bias[c];
        for (int o = 0; o < kvol; ++o) {
            const auto off = offset_at(o, layer.kernel_dims);
            bool ok = true;
            std::int64_t in_off = oidx[0] * in_st[0];
            for (int a = 0; a < sd; ++a) {
                const std::int64_t pos = oidx[static_cast<std::size_t>(a) + 1] * layer.stride[a] -
                                         layer.kernel_dims[a] / 2 + off[static_cast<std::size_t>(a)];
                if (pos < 0 || pos >= in.shape[a + 1]) {
                    ok = false;
                    break;
                }
                in_off += pos * in_st[a + 1];
            }
            if (!ok) continue;
            const float* row = in.data.data() + in_off;
            const float* wo = layer.weights.data() + static_cast<std::int64_t>(o) * cin * cout;
            for (int ci = 0; ci < cin; ++ci)
                for (int co = 0; co < cout; ++co)
                    acc[static_cast<std::size_t>(co)] +=
                        static_cast<double>(row[ci]) * wo[ci * cout + co];
        }
        for (int c = 0; c < cout; ++c)
            out.data[static_cast<std::size_t>(out_off + c)] =
                static_cast<float>(acc[static_cast<std::size_t>(c)]);
        for (int a = sd; a >= 0; --a) {
            if (++oidx[static_cast<std::size_t>(a)] < out.shape[a]) break;
            oidx[static_cast<std::size_t>(a)] = 0;
        }
    }
    return out;
}

DenseTensor dense_transposed_conv(const DenseTensor& in, const ConvLayer& layer,
                                  std::span<const std::int64_t> out_spatial) {
    const int sd = static_cast<int>(layer.kernel_dims.size());
    if (static_cast<int>(in.shape.size()) != sd + 2)
        raise(Errc::shape_mismatch, "dense_transposed_conv: rank mismatch");
    const int cin = layer.in_channels;
    const int cout = layer.out_channels;

    DenseTensor out;
    out.shape.push_back(in.shape[0]);
    for (auto s : out_spatial) out.shape.push_back(s);
    out.shape.push_back(cout);

    // double accumulation buffer, bias preloaded everywhere
    std::vector<double> acc(static_cast<std::size_t>(out.size()), 0.0);
    if (!layer.bias.empty()) {
        const std::int64_t sites = out.size() / cout;
        for (std::int64_t s = 0; s < sites; ++s)
            for (int c = 0; c < cout; ++c)
                acc[static_cast<std::size_t>(s * cout + c)] = layer.bias[c];
    }

    const auto in_st = in.strides();
    const auto out_st = out.strides();
    const int kvol = layer.kernel_volume();

    std::vector<std::int64_t> iidx(static_cast<std::size_t>(sd) + 1, 0);
    const std::int64_t in_sites = cin ? in.size() / cin : 0;
    for (std::int64_t s = 0; s < in_sites; ++s) {
        std::int64_t in_off = 0;
        for (int a = 0; a <= sd; ++a) in_off += iidx[static_cast<std::size_t>(a)] * in_st[a];
        const float* row = in.data.data() + in_off;
        for (int o = 0; o < kvol; ++o) {
            const auto off = offset_at(o, layer.kernel_dims);
            bool ok = true;
            std::int64_t out_off = iidx[0] * out_st[0];
            for (int a = 0; a < sd; ++a) {
                const std::int64_t pos = iidx[static_cast<std::size_t>(a) + 1] * layer.stride[a] -
                                         layer.kernel_dims[a] / 2 + off[static_cast<std::size_t>(a)];
                if (pos < 0 || pos >= out.shape[a + 1]) {
                    ok = false;
                    break;
                }
                out_off += pos * out_st[a + 1];
            }
            if (!ok) continue;
            const float* wo = layer.weights.data() + static_cast<std::int64_t>(o) * cin * cout;
            for (int ci = 0; ci < cin; ++ci)
                for (int co = 0; co < cout; ++co)
                    acc[static_cast<std::size_t>(out_off + co)] +=
                        static_cast<double>(row[ci]) * wo[ci * cout + co];
        }
        for (int a = sd; a >= 0; --a) {
            if (++iidx[static_cast<std::size_t>(a)] < in.shape[a]) break;
            iidx[static_cast<std::size_t>(a)] = 0;
        }
    }
    out.data.resize(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i]);
    return out;
}

DenseTensor mask_to_sites(const DenseTensor& a, const SparseTensor& sites) {
    DenseTensor out;
    out.shape = a.shape;
    out.data.assign(a.data.size(), 0.0f);
    const int channels = static_cast<int>(a.shape.back());
    const auto st = a.strides();
    const int d = sites.ndim();
    for (std::int64_t i = 0; i < sites.n_active(); ++i) {
        const auto c = sites.coord(i);
        std::int64_t off = 0;
        for (int axis = 0; axis < d; ++axis) off += c[axis] * st[axis];
        std::copy_n(a.data.begin() + off, channels, out.data.begin() + off);
    }
    return out;
}

DenseTensor occupancy(const SparseTensor& t) {
    DenseTensor occ;
    occ.shape.push_back(t.batch_size);
    for (auto s : t.spatial_shape) occ.shape.push_back(s);
    occ.shape.push_back(1);
    occ.data.assign(static_cast<std::size_t>(occ.size()), 0.0f);
    const auto st = occ.strides();
    const int d = t.ndim();
    for (std::int64_t i = 0; i < t.n_active(); ++i) {
        const auto c = t.coord(i);
        std::int64_t off = 0;
        for (int axis = 0; axis < d; ++axis) off += c[axis] * st[axis];
        occ.data[static_cast<std::size_t>(off)] = 1.0f;
    }
    return occ;
}

DenseTensor dilate_occupancy(const DenseTensor& occ, int kernel) {
    if (occ.shape.size() != 4) raise(Errc::shape_mismatch, "dilate_occupancy expects 2D occupancy");
    const int r = kernel / 2;
    DenseTensor out;
    out.shape = occ.shape;
    out.data.assign(occ.data.size(), 0.0f);
    const auto st = occ.strides();
    for (std::int64_t b = 0; b < occ.shape[0]; ++b)
        for (std::int64_t y = 0; y < occ.shape[1]; ++y)
            for (std::int64_t x = 0; x < occ.shape[2]; ++x) {
                bool hit = false;
                for (std::int64_t dy = -r; dy <= r && !hit; ++dy)
                    for (std::int64_t dx = -r; dx <= r && !hit; ++dx) {
                        const std::int64_t ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny >= occ.shape[1] || nx < 0 || nx >= occ.shape[2]) continue;
                        if (occ.data[static_cast<std::size_t>(b * st[0] + ny * st[1] + nx * st[2])] >
                            0.0f)
                            hit = true;
                    }
                if (hit)
                    out.data[static_cast<std::size_t>(b * st[0] + y * st[1] + x * st[2])] = 1.0f;
            }
    return out;
}

namespace {

struct Pt {
    double x, y;
};

void corners_of(const BevBox& b, Pt out[4]) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double ex = c * b.l / 2, ey = s * b.l / 2;
    const double fx = -s * b.w / 2, fy = c * b.w / 2;
    out[0] = {b.cx + ex + fx, b.cy + ey + fy};
    out[1] = {b.cx + ex - fx, b.cy + ey - fy};
    out[2] = {b.cx - ex - fx, b.cy - ey - fy};
    out[3] = {b.cx - ex + fx, b.cy - ey + fy};
}

double signed_area2(const std::vector<Pt>& poly) {
    double a = 0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Pt& p = poly[i];
        const Pt& q = poly[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    return a;
}

// clip `poly` against the half-plane left of directed edge (a -> b)
std::vector<Pt> clip_halfplane(const std::vector<Pt>& poly, const Pt& a, const Pt& b) {
    std::vector<Pt> out;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Pt& cur = poly[i];
        const Pt& nxt = poly[(i + 1) % n];
        const double s1 = (b.x - a.x) * (cur.y - a.y) - (b.y - a.y) * (cur.x - a.x);
        const double s2 = (b.x - a.x) * (nxt.y - a.y) - (b.y - a.y) * (nxt.x - a.x);
        if (s1 >= 0) out.push_back(cur);
        if ((s1 > 0 && s2 < 0) || (s1 < 0 && s2 > 0)) {
            out.push_back({(cur.x * s2 - nxt.x * s1) / (s2 - s1),
                           (cur.y * s2 - nxt.y * s1) / (s2 - s1)});
        }
    }
    return out;
}

} // namespace

double polygon_clip_iou(const BevBox& a, const BevBox& b) {
    Pt ca[4], cb[4];
    corners_of(a, ca);
    corners_of(b, cb);

    std::vector<Pt> poly{ca[0], ca[1], ca[2], ca[3]};
    std::vector<Pt> clip{cb[0], cb[1], cb[2], cb[3]};
    // both rects are CCW when yaw is a rotation in the standard orientation;
    // enforce CCW so "left of edge" means inside
    if (signed_area2(poly) < 0) std::reverse(poly.begin(), poly.end());
    if (signed_area2(clip) < 0) std::reverse(clip.begin(), clip.end());

    const double area_a = std::fabs(signed_area2(poly)) / 2;
    const double area_b = std::fabs(signed_area2(clip)) / 2;

    for (std::size_t e = 0; e < clip.size() && !poly.empty(); ++e)
        poly = clip_halfplane(poly, clip[e], clip[(e + 1) % clip.size()]);
    const double inter = poly.size() < 3 ? 0.0 : std::fabs(signed_area2(poly)) / 2;
    const double uni = area_a + area_b - inter;
    if (!(uni > 0)) return 0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

} // namespace ps::oracle
