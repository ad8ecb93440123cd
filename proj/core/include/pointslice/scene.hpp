#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pointslice/voxelize.hpp"

namespace ps {

// Seeded synthetic-scene description: a noisy ground plane plus boxes with
// points sampled on their surfaces. Stands in for real LiDAR frames in the
// benchmark harness.
struct SceneSpec {
    std::uint64_t seed = 42;
    int n_objects = 20;
    std::array<double, 3> object_size_min{3.8, 1.6, 1.4};
    std::array<double, 3> object_size_max{5.2, 2.2, 1.9};
    int points_per_object_min = 200;
    int points_per_object_max = 600;
    std::int64_t ground_points = 20000;
    double ground_z_noise = 0.05;
    std::array<double, 2> area_min{-75.52, -75.52}; // x/y placement bounds
    std::array<double, 2> area_max{75.52, 75.52};

    void validate() const;
};

struct SceneBox {
    std::array<double, 3> center;
    std::array<double, 3> size;
    double yaw;
    std::int64_t first_point = 0; // row range of this box's points in the cloud
    std::int64_t point_count = 0;
};

struct Scene {
    PointCloud cloud;
    std::vector<SceneBox> objects;
};

// Deterministic per spec: identical specs give byte-identical point arrays.
Scene gen_scene(const SceneSpec& spec);

} // namespace ps
