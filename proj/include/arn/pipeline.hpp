#pragma once

#include <cstdint>
#include <iosfwd>
#include <json.hpp>
#include <string>

#include "arn/kernel.hpp"
#include "arn/matrices.hpp"
#include "arn/metrics.hpp"
#include "arn/network.hpp"
#include "arn/scene.hpp"

namespace arn {

struct RunConfig {
    std::string scene_path;
    Design design = Design::householder;
    int K = 1;
    bool spread = false;
    double max_edge = 2.0;
    double sample_spacing = 0.5;
    std::size_t n_rays = 100000;
    double fs = 48000.0;
    std::uint64_t seed = 1;
    double length_s = 0.0;  // 0 selects 2 x Eyring T60, at least 1 s
    bool air = true;
    bool band_air = false;
    double ned_window_ms = 25.0;
    std::string out_dir = ".";
    std::string name;  // output stem; defaults to the scene file stem
};

// Per-stage seeds, all derived from RunConfig::seed.
struct StageSeeds {
    std::uint64_t unilossless;
    std::uint64_t tracing;
};
StageSeeds stage_seeds(std::uint64_t seed);

nlohmann::json to_json(const RunConfig& cfg);
// Applies the keys present in `j` on top of `cfg`.
void apply_json(RunConfig& cfg, const nlohmann::json& j);

// Sabine-Eyring estimate with area-weighted mean absorption at 1 kHz,
// optionally including air absorption. Returns 10 s when nothing absorbs.
double eyring_t60(const Scene& scene, bool air);

struct RunResult {
    Scene scene;
    PatchSet patches;
    PathTable paths;
    KernelMatrix kernel;
    Network network;
    Rir rir;
    nlohmann::json manifest;
};

// scene -> kernel -> feedback matrix -> tracing -> render.
RunResult run_pipeline(const RunConfig& cfg);
RunResult run_pipeline(const RunConfig& cfg, const Scene& scene);

struct MetricsKey {
    std::string scene;
    std::string design;
    int K = 0;
    bool spread = false;
    std::size_t M = 0;
};

void write_metrics_header(std::ostream& os);
void write_metrics_rows(std::ostream& os, const MetricsKey& key, const MetricsReport& rep);
void write_trace_csv(std::ostream& os, const std::vector<double>& time_s, const std::vector<double>& value);

std::string format_number(double v);

}  // namespace arn
