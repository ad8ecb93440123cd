#include "pointslice/scene.hpp"

#include <cmath>

#include "pointslice/error.hpp"
#include "pointslice/rng.hpp"

namespace ps {

void SceneSpec::validate() const {
    if (n_objects < 0) raise(Errc::invalid_spec, "n_objects must be >= 0");
    if (ground_points < 0) raise(Errc::invalid_spec, "ground_points must be >= 0");
    if (points_per_object_min < 1 || points_per_object_max < points_per_object_min)
        raise(Errc::invalid_spec, "points_per_object range must be ordered and positive");
    for (int a = 0; a < 3; ++a) {
        if (!(object_size_min[a] > 0) || !(object_size_max[a] >= object_size_min[a]))
            raise(Errc::invalid_spec, "object size range must be ordered and positive");
    }
    for (int a = 0; a < 2; ++a)
        if (!(area_max[a] > area_min[a]))
            raise(Errc::invalid_spec, "placement area must be non-empty");
    if (ground_z_noise < 0) raise(Errc::invalid_spec, "ground_z_noise must be >= 0");
}

namespace {

// Picks a face of the unit box [-.5,.5]^3 weighted by area, then a uniform
// point on it, scaled/rotated/translated into world space.
void sample_box_surface(SplitMix64& rng, const SceneBox& box, float* out_xyz) {
    const double sx = box.size[0], sy = box.size[1], sz = box.size[2];
    const double area_xy = sx * sy, area_xz = sx * sz, area_yz = sy * sz;
    const double total = 2 * (area_xy + area_xz + area_yz);
    const double pick = rng.uniform(0.0, total);
    double lx, ly, lz;
    if (pick < 2 * area_xy) { // top/bottom
        lx = rng.uniform(-0.5, 0.5) * sx;
        ly = rng.uniform(-0.5, 0.5) * sy;
        lz = (pick < area_xy ? 0.5 : -0.5) * sz;
    } else if (pick < 2 * area_xy + 2 * area_xz) { // front/back
        lx = rng.uniform(-0.5, 0.5) * sx;
        ly = ((pick - 2 * area_xy) < area_xz ? 0.5 : -0.5) * sy;
        lz = rng.uniform(-0.5, 0.5) * sz;
    } else { // left/right
        lx = ((pick - 2 * area_xy - 2 * area_xz) < area_yz ? 0.5 : -0.5) * sx;
        ly = rng.uniform(-0.5, 0.5) * sy;
        lz = rng.uniform(-0.5, 0.5) * sz;
    }
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    out_xyz[0] = static_cast<float>(box.center[0] + c * lx - s * ly);
    out_xyz[1] = static_cast<float>(box.center[1] + s * lx + c * ly);
    out_xyz[2] = static_cast<float>(box.center[2] + lz);
}

} // namespace

Scene gen_scene(const SceneSpec& spec) {
    spec.validate();
    Scene scene;
    SplitMix64 rng(spec.seed);

    scene.cloud.points.reserve(static_cast<std::size_t>(spec.ground_points) * 4);
    for (std::int64_t i = 0; i < spec.ground_points; ++i) {
        const float x = rng.uniform_f(spec.area_min[0], spec.area_max[0]);
        const float y = rng.uniform_f(spec.area_min[1], spec.area_max[1]);
        const float z = rng.uniform_f(-spec.ground_z_noise, spec.ground_z_noise);
        const float inten = rng.uniform_f(0.0, 1.0);
        scene.cloud.points.insert(scene.cloud.points.end(), {x, y, z, inten});
    }

    // keep whole objects inside the area
    const double margin = spec.object_size_max[0] + spec.object_size_max[1];
    for (int o = 0; o < spec.n_objects; ++o) {
        SceneBox box;
        for (int a = 0; a < 3; ++a)
            box.size[a] = rng.uniform(spec.object_size_min[a], spec.object_size_max[a]);
        box.center[0] = rng.uniform(spec.area_min[0] + margin, spec.area_max[0] - margin);
        box.center[1] = rng.uniform(spec.area_min[1] + margin, spec.area_max[1] - margin);
        box.center[2] = box.size[2] / 2;
        box.yaw = rng.uniform(-3.14159265358979323846, 3.14159265358979323846);
        const int npts = static_cast<int>(
            rng.uniform_int(spec.points_per_object_min, spec.points_per_object_max));
        box.first_point = static_cast<std::int64_t>(scene.cloud.points.size()) / 4;
        box.point_count = npts;
        for (int i = 0; i < npts; ++i) {
            float xyz[3];
            sample_box_surface(rng, box, xyz);
            const float inten = rng.uniform_f(0.0, 1.0);
            scene.cloud.points.insert(scene.cloud.points.end(), {xyz[0], xyz[1], xyz[2], inten});
        }
        scene.objects.push_back(box);
    }
    return scene;
}

} // namespace ps
