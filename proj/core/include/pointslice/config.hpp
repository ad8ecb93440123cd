#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "pointslice/blocks.hpp"
#include "pointslice/head.hpp"
#include "pointslice/scene.hpp"
#include "pointslice/voxelize.hpp"

namespace ps {

// Flat `key = value` file, '#' starts a comment. Unknown keys are rejected
// so typos surface instead of silently using defaults.
class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_text(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
    std::vector<int> get_ints(const std::string& key, std::vector<int> fallback) const;

    // raises ConfigError when the file contains keys outside `known`
    void require_known(const std::vector<std::string>& known) const;

    const std::unordered_map<std::string, std::string>& raw() const { return values_; }

private:
    std::unordered_map<std::string, std::string> values_;
    std::string origin_;
};

struct PipelineConfig {
    VoxelGridSpec grid;
    BackboneConfig backbone;
    HeadSpec head;
    SceneSpec scene;
};

// Applies every recognized key on top of the built-in defaults and
// validates the result.
PipelineConfig load_pipeline_config(const Config& cfg);
PipelineConfig default_pipeline_config();

} // namespace ps
