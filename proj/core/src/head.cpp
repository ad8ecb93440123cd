#include "pointslice/head.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pointslice/conv.hpp"
#include "pointslice/weights.hpp"

namespace ps {

void HeadSpec::validate() const {
    if (num_classes < 1) raise(Errc::invalid_spec, "num_classes must be >= 1");
    if (!(score_threshold > 0.0 && score_threshold < 1.0))
        raise(Errc::invalid_spec, "score_threshold must lie in (0,1)");
    if (!(nms_iou > 0.0 && nms_iou < 1.0))
        raise(Errc::invalid_spec, "nms_iou must lie in (0,1)");
    if (max_detections < 1) raise(Errc::invalid_spec, "max_detections must be >= 1");
    if (bev_stride < 1) raise(Errc::invalid_spec, "bev_stride must be >= 1");
}

HeadOutput head_forward(const SparseTensor& bev, const WeightStore& weights,
                        const HeadSpec& spec) {
    spec.validate();
    if (!bev.is_2d()) raise(Errc::shape_mismatch, "head input must be a BEV 2D tensor");
    const std::vector<int> one{1, 1};
    const auto branch = [&](const std::string& base, int cout) {
        LayerSpec s1{base + ".conv1", one, bev.channels, kHeadMidChannels, one,
                     ConvKind::submanifold, true};
        LayerSpec s2{base + ".conv2", one, kHeadMidChannels, cout, one,
                     ConvKind::submanifold, true};
        s1.has_bias = weights.find(s1.name + ".bias") != nullptr;
        s2.has_bias = weights.find(s2.name + ".bias") != nullptr;
        SparseTensor h = relu(pointwise_conv(bev, make_conv_layer(weights, s1)));
        return pointwise_conv(h, make_conv_layer(weights, s2));
    };
    HeadOutput out;
    out.heatmap = branch("head.heatmap", spec.num_classes);
    for (float& v : out.heatmap.features) v = 1.0f / (1.0f + std::exp(-v));
    out.regress = branch("head.reg", kRegressionChannels);
    return out;
}

std::vector<Detection> decode(const HeadOutput& out, const HeadSpec& spec,
                              const VoxelGridSpec& grid) {
    spec.validate();
    grid.validate();
    if (out.heatmap.coords != out.regress.coords)
        raise(Errc::geometry_mismatch, "heatmap and regression must share the active set");
    if (out.heatmap.channels != spec.num_classes ||
        out.regress.channels != kRegressionChannels)
        raise(Errc::channel_mismatch, "head output channels do not match the head spec");

    std::vector<Detection> dets;
    const double cell_x = grid.voxel_size[0] * spec.bev_stride;
    const double cell_y = grid.voxel_size[1] * spec.bev_stride;
    for (std::int64_t i = 0; i < out.heatmap.n_active(); ++i) {
        const auto site = out.heatmap.coord(i); // (b, y, x)
        const auto hm = out.heatmap.feature(i);
        const auto rg = out.regress.feature(i);
        for (int c = 0; c < spec.num_classes; ++c) {
            if (!(hm[c] > spec.score_threshold)) continue;
            Detection d;
            d.frame_id = site[0];
            d.class_id = c;
            d.score = hm[c];
            d.cx = static_cast<float>(grid.range_min[0] + (site[2] + 0.5 + rg[0]) * cell_x);
            d.cy = static_cast<float>(grid.range_min[1] + (site[1] + 0.5 + rg[1]) * cell_y);
            d.cz = rg[2];
            d.l = std::exp(rg[3]);
            d.w = std::exp(rg[4]);
            d.h = std::exp(rg[5]);
            d.yaw = std::atan2(rg[6], rg[7]);
            dets.push_back(d);
        }
    }
    // descending score; stable keeps lower (site, class) index first on ties
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (static_cast<int>(dets.size()) > spec.max_detections)
        dets.resize(static_cast<std::size_t>(spec.max_detections));
    return dets;
}

namespace {

struct Pt {
    double x, y;
};

inline double cross3(const Pt& o, const Pt& a, const Pt& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

void box_corners(const BevBox& b, Pt out[4]) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double hx = b.l / 2, hy = b.w / 2;
    const double ex = c * hx, ey = s * hx;   // half-extent along heading
    const double fx = -s * hy, fy = c * hy;  // half-extent lateral
    out[0] = {b.cx + ex + fx, b.cy + ey + fy};
    out[1] = {b.cx + ex - fx, b.cy + ey - fy};
    out[2] = {b.cx - ex - fx, b.cy - ey - fy};
    out[3] = {b.cx - ex + fx, b.cy - ey + fy};
}

bool point_in_box(const Pt& p, const BevBox& b) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double dx = p.x - b.cx, dy = p.y - b.cy;
    const double u = dx * c + dy * s;
    const double v = -dx * s + dy * c;
    // slack keeps corners lying exactly on the boundary of a rotated box
    // inside despite rounding; far below any real coordinate separation
    constexpr double eps = 1e-9;
    return std::fabs(u) <= b.l / 2 + eps && std::fabs(v) <= b.w / 2 + eps;
}

// Area of the convex polygon spanned by `pts`: dedupe, sort angularly
// around the centroid, shoelace. Intersections and box areas both go
// through here so identical boxes produce bit-identical values.
double convex_area(const Pt* pts, int n) {
    Pt uniq[24];
    int m = 0;
    for (int i = 0; i < n; ++i) {
        bool dup = false;
        for (int j = 0; j < m; ++j)
            if (std::fabs(pts[i].x - uniq[j].x) < 1e-9 &&
                std::fabs(pts[i].y - uniq[j].y) < 1e-9) {
                dup = true;
                break;
            }
        if (!dup) uniq[m++] = pts[i];
    }
    if (m < 3) return 0;

    Pt centroid{0, 0};
    for (int i = 0; i < m; ++i) {
        centroid.x += uniq[i].x;
        centroid.y += uniq[i].y;
    }
    centroid.x /= m;
    centroid.y /= m;
    double ang[24];
    for (int i = 0; i < m; ++i) ang[i] = std::atan2(uniq[i].y - centroid.y, uniq[i].x - centroid.x);
    int order[24];
    for (int i = 0; i < m; ++i) order[i] = i;
    std::sort(order, order + m, [&](int i, int j) { return ang[i] < ang[j]; });

    double area2 = 0;
    for (int i = 0; i < m; ++i) {
        const Pt& p = uniq[order[i]];
        const Pt& q = uniq[order[(i + 1) % m]];
        area2 += p.x * q.y - q.x * p.y;
    }
    return std::fabs(area2) / 2;
}

// Vertices of the (convex) intersection: contained corners plus proper edge
// crossings. Crossings use the (c*s2 - d*s1)/(s2 - s1) interpolation so
// axis-aligned boxes with dyadic coordinates come out exact.
int intersection_vertices(const Pt pa[4], const Pt pb[4], const BevBox& ba, const BevBox& bb,
                          Pt out[24]) {
    int n = 0;
    for (int i = 0; i < 4; ++i) {
        if (point_in_box(pa[i], bb)) out[n++] = pa[i];
        if (point_in_box(pb[i], ba)) out[n++] = pb[i];
    }
    for (int i = 0; i < 4; ++i) {
        const Pt& a = pa[i];
        const Pt& b = pa[(i + 1) % 4];
        for (int j = 0; j < 4; ++j) {
            const Pt& c = pb[j];
            const Pt& d = pb[(j + 1) % 4];
            const double s1 = cross3(a, b, c);
            const double s2 = cross3(a, b, d);
            const double s3 = cross3(c, d, a);
            const double s4 = cross3(c, d, b);
            if (s1 * s2 < 0 && s3 * s4 < 0) {
                out[n] = {(c.x * s2 - d.x * s1) / (s2 - s1),
                          (c.y * s2 - d.y * s1) / (s2 - s1)};
                ++n;
            }
        }
    }
    return n;
}

} // namespace

double rotated_iou(const BevBox& a, const BevBox& b) {
    Pt pa[4], pb[4];
    box_corners(a, pa);
    box_corners(b, pb);
    const double area_a = convex_area(pa, 4);
    const double area_b = convex_area(pb, 4);
    Pt verts[24];
    const int n = intersection_vertices(pa, pb, a, b, verts);
    const double inter = convex_area(verts, n);
    const double uni = area_a + area_b - inter;
    if (!(uni > 0)) return 0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<Detection> nms_bev(const std::vector<Detection>& dets, double iou_threshold) {
    std::vector<Detection> kept;
    kept.reserve(dets.size());
    for (const Detection& d : dets) {
        const BevBox box{d.cx, d.cy, d.l, d.w, d.yaw};
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (k.frame_id != d.frame_id || k.class_id != d.class_id) continue;
            if (rotated_iou(box, BevBox{k.cx, k.cy, k.l, k.w, k.yaw}) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

std::string detection_jsonl(const Detection& d) {
    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "{\"frame_id\":%d,\"class_id\":%d,\"score\":%.6g,\"cx\":%.6g,\"cy\":%.6g,"
                  "\"cz\":%.6g,\"l\":%.6g,\"w\":%.6g,\"h\":%.6g,\"yaw\":%.6g}",
                  d.frame_id, d.class_id, static_cast<double>(d.score),
                  static_cast<double>(d.cx), static_cast<double>(d.cy),
                  static_cast<double>(d.cz), static_cast<double>(d.l),
                  static_cast<double>(d.w), static_cast<double>(d.h),
                  static_cast<double>(d.yaw));
    return buf;
}

} // namespace ps
