#include "pointslice/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ps {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

} // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io_error, "cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), path);
}

Config Config::parse_text(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            raise(Errc::config_error,
                  origin + ":" + std::to_string(lineno) + ": expected `key = value`");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            raise(Errc::config_error, origin + ":" + std::to_string(lineno) + ": empty key");
        if (cfg.values_.count(key))
            raise(Errc::config_error,
                  origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
        cfg.values_[key] = value;
    }
    return cfg;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(it->second.data(),
                                         it->second.data() + it->second.size(), v);
    if (ec != std::errc() || p != it->second.data() + it->second.size())
        raise(Errc::config_error, key + ": not an integer: " + it->second);
    return v;
}

double Config::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size())
            raise(Errc::config_error, key + ": not a number: " + it->second);
        return v;
    } catch (const Error&) {
        throw;
    } catch (...) {
        raise(Errc::config_error, key + ": not a number: " + it->second);
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    raise(Errc::config_error, key + ": expected true/false: " + it->second);
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        std::vector<double> fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const auto& item : split_commas(it->second)) {
        try {
            out.push_back(std::stod(item));
        } catch (...) {
            raise(Errc::config_error, key + ": not a number: " + item);
        }
    }
    return out;
}

std::vector<int> Config::get_ints(const std::string& key, std::vector<int> fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    const std::string& raw = it->second;
    if (trim(raw).empty()) return out; // explicit empty list
    for (const auto& item : split_commas(raw)) {
        int v = 0;
        const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || p != item.data() + item.size())
            raise(Errc::config_error, key + ": not an integer: " + item);
        out.push_back(v);
    }
    return out;
}

void Config::require_known(const std::vector<std::string>& known) const {
    for (const auto& [key, value] : values_) {
        bool ok = false;
        for (const auto& k : known)
            if (k == key) {
                ok = true;
                break;
            }
        if (!ok) raise(Errc::config_error, origin_ + ": unknown key " + key);
    }
}

PipelineConfig default_pipeline_config() { return PipelineConfig{}; }

namespace {

const std::vector<std::string> kKnownKeys = {
    "grid.range_min", "grid.range_max", "grid.voxel_size",
    "backbone.stem_block_count", "backbone.sin_positions", "backbone.channels",
    "backbone.edb_count", "backbone.kernel_size", "backbone.afd_kernel",
    "backbone.sin_stride_all_axes",
    "head.num_classes", "head.score_threshold", "head.nms_iou", "head.max_detections",
    "head.bev_stride",
    "scene.seed", "scene.n_objects", "scene.object_size_min", "scene.object_size_max",
    "scene.points_per_object_min", "scene.points_per_object_max", "scene.ground_points",
    "scene.ground_z_noise",
};

std::array<double, 3> as_vec3(const std::vector<double>& v, const std::string& key) {
    if (v.size() != 3) raise(Errc::config_error, key + ": expected 3 comma-separated values");
    return {v[0], v[1], v[2]};
}

} // namespace

PipelineConfig load_pipeline_config(const Config& cfg) {
    cfg.require_known(kKnownKeys);
    PipelineConfig pc;

    pc.grid.range_min = as_vec3(
        cfg.get_doubles("grid.range_min",
                        {pc.grid.range_min.begin(), pc.grid.range_min.end()}),
        "grid.range_min");
    pc.grid.range_max = as_vec3(
        cfg.get_doubles("grid.range_max",
                        {pc.grid.range_max.begin(), pc.grid.range_max.end()}),
        "grid.range_max");
    pc.grid.voxel_size = as_vec3(
        cfg.get_doubles("grid.voxel_size",
                        {pc.grid.voxel_size.begin(), pc.grid.voxel_size.end()}),
        "grid.voxel_size");
    pc.grid.validate();

    pc.backbone.stem_block_count =
        static_cast<int>(cfg.get_int("backbone.stem_block_count", pc.backbone.stem_block_count));
    pc.backbone.sin_positions = cfg.get_ints("backbone.sin_positions", pc.backbone.sin_positions);
    pc.backbone.channels = cfg.get_ints("backbone.channels", pc.backbone.channels);
    pc.backbone.edb_count = static_cast<int>(cfg.get_int("backbone.edb_count", pc.backbone.edb_count));
    pc.backbone.kernel_size =
        static_cast<int>(cfg.get_int("backbone.kernel_size", pc.backbone.kernel_size));
    pc.backbone.afd_kernel =
        static_cast<int>(cfg.get_int("backbone.afd_kernel", pc.backbone.afd_kernel));
    pc.backbone.sin_stride_all_axes =
        cfg.get_bool("backbone.sin_stride_all_axes", pc.backbone.sin_stride_all_axes);
    pc.backbone.validate();

    pc.head.num_classes = static_cast<int>(cfg.get_int("head.num_classes", pc.head.num_classes));
    pc.head.score_threshold = cfg.get_double("head.score_threshold", pc.head.score_threshold);
    pc.head.nms_iou = cfg.get_double("head.nms_iou", pc.head.nms_iou);
    pc.head.max_detections =
        static_cast<int>(cfg.get_int("head.max_detections", pc.head.max_detections));
    pc.head.bev_stride = static_cast<int>(cfg.get_int("head.bev_stride", pc.head.bev_stride));
    pc.head.validate();

    pc.scene.seed = static_cast<std::uint64_t>(cfg.get_int("scene.seed", static_cast<std::int64_t>(pc.scene.seed)));
    pc.scene.n_objects = static_cast<int>(cfg.get_int("scene.n_objects", pc.scene.n_objects));
    pc.scene.object_size_min = as_vec3(
        cfg.get_doubles("scene.object_size_min",
                        {pc.scene.object_size_min.begin(), pc.scene.object_size_min.end()}),
        "scene.object_size_min");
    pc.scene.object_size_max = as_vec3(
        cfg.get_doubles("scene.object_size_max",
                        {pc.scene.object_size_max.begin(), pc.scene.object_size_max.end()}),
        "scene.object_size_max");
    pc.scene.points_per_object_min = static_cast<int>(
        cfg.get_int("scene.points_per_object_min", pc.scene.points_per_object_min));
    pc.scene.points_per_object_max = static_cast<int>(
        cfg.get_int("scene.points_per_object_max", pc.scene.points_per_object_max));
    pc.scene.ground_points = cfg.get_int("scene.ground_points", pc.scene.ground_points);
    pc.scene.ground_z_noise = cfg.get_double("scene.ground_z_noise", pc.scene.ground_z_noise);
    pc.scene.area_min = {pc.grid.range_min[0], pc.grid.range_min[1]};
    pc.scene.area_max = {pc.grid.range_max[0], pc.grid.range_max[1]};
    pc.scene.validate();

    return pc;
}

} // namespace ps
