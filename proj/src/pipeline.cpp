#include "arn/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <ostream>

#include "arn/error.hpp"
#include "arn/rng.hpp"

namespace arn {

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

}  // namespace

StageSeeds stage_seeds(std::uint64_t seed) {
    return {derive_seed(seed, 0x756e69), derive_seed(seed, 0x747263)};
}

nlohmann::json to_json(const RunConfig& c) {
    return {{"scene", c.scene_path},       {"design", to_string(c.design)},
            {"K", c.K},                    {"spread", c.spread},
            {"max_edge", c.max_edge},      {"sample_spacing", c.sample_spacing},
            {"n_rays", c.n_rays},          {"fs", c.fs},
            {"seed", c.seed},              {"length_s", c.length_s},
            {"air", c.air},                {"band_air", c.band_air},
            {"ned_window_ms", c.ned_window_ms}, {"out_dir", c.out_dir},
            {"name", c.name}};
}

void apply_json(RunConfig& c, const nlohmann::json& j) {
    try {
        if (j.contains("scene")) c.scene_path = j["scene"].get<std::string>();
        if (j.contains("design")) c.design = parse_design(j["design"].get<std::string>());
        if (j.contains("K")) c.K = j["K"].get<int>();
        if (j.contains("spread")) c.spread = j["spread"].get<bool>();
        if (j.contains("max_edge")) c.max_edge = j["max_edge"].get<double>();
        if (j.contains("sample_spacing")) c.sample_spacing = j["sample_spacing"].get<double>();
        if (j.contains("n_rays")) c.n_rays = j["n_rays"].get<std::size_t>();
        if (j.contains("fs")) c.fs = j["fs"].get<double>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("length_s")) c.length_s = j["length_s"].get<double>();
        if (j.contains("air")) c.air = j["air"].get<bool>();
        if (j.contains("band_air")) c.band_air = j["band_air"].get<bool>();
        if (j.contains("ned_window_ms")) c.ned_window_ms = j["ned_window_ms"].get<double>();
        if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
        if (j.contains("name")) c.name = j["name"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error("cli", std::string("bad config value: ") + e.what());
    }
}

double eyring_t60(const Scene& scene, bool air) {
    const double v = room_volume(scene);
    const double s = surface_area(scene);
    double absorbed = 0.0;
    for (std::size_t k = 0; k < scene.polygons.size(); ++k)
        absorbed += scene.polygons[k].area * (1.0 - scene.material_of(static_cast<int>(k)).broadband());
    const double alpha = std::min(absorbed / s, 1.0 - 1e-12);
    double denom = -s * std::log(1.0 - alpha);
    if (air) denom += 4.0 * v * air_attenuation_db_per_m(1000.0) / (10.0 * std::log10(std::exp(1.0)));
    if (denom <= 0.0) return 10.0;
    return 0.161 * v / denom;
}

RunResult run_pipeline(const RunConfig& cfg) {
    if (cfg.scene_path.empty()) throw Error("cli", "no scene given");
    return run_pipeline(cfg, load_scene(cfg.scene_path));
}

RunResult run_pipeline(const RunConfig& cfg, const Scene& scene) {
    if (cfg.K < 0) throw Error("cli", "K must be >= 0");
    if (!(cfg.fs > 0)) throw Error("cli", "fs must be positive");
    if (cfg.n_rays == 0) throw Error("cli", "n_rays must be at least 1");
    RunResult r;
    r.scene = scene;
    const auto seeds = stage_seeds(cfg.seed);
    nlohmann::json timing;

    auto t0 = clock_type::now();
    r.patches = discretize(r.scene, cfg.max_edge, cfg.sample_spacing);
    r.paths = enumerate_paths(r.patches, r.scene, cfg.fs);
    timing["paths_s"] = seconds_since(t0);

    t0 = clock_type::now();
    KernelConfig kc;
    kc.sample_spacing = cfg.sample_spacing;
    kc.fs = cfg.fs;
    r.kernel = compute_kernel(r.patches, r.paths, r.scene, kc);
    timing["kernel_s"] = seconds_since(t0);

    t0 = clock_type::now();
    NetworkConfig nc;
    nc.design = cfg.design;
    nc.K = cfg.K;
    nc.spread = cfg.spread;
    nc.air = cfg.air;
    nc.band_air = cfg.band_air;
    nc.fs = cfg.fs;
    nc.trace.n_rays = cfg.n_rays;
    nc.trace.seed = seeds.tracing;
    nc.unilossless.seed = seeds.unilossless;
    r.network = build_network(r.scene, r.patches, r.paths, r.kernel, nc);
    timing["build_s"] = seconds_since(t0);
    if (r.network.injection_escaped * 1000 > cfg.n_rays)
        std::cerr << "warning: " << r.network.injection_escaped << " of " << cfg.n_rays
                  << " injection rays escaped the scene\n";

    const double t60 = eyring_t60(r.scene, cfg.air);
    const double length_s = cfg.length_s > 0 ? cfg.length_s : std::max(1.0, 2.0 * t60);
    t0 = clock_type::now();
    r.rir = render(r.network, static_cast<std::size_t>(std::lround(length_s * cfg.fs)));
    timing["render_s"] = seconds_since(t0);

    double max_residual = 0.0;
    for (const auto& b : r.network.A.blocks) max_residual = std::max(max_residual, b.residual);
    r.manifest = {{"config", to_json(cfg)},
                  {"N", r.patches.size()},
                  {"M", r.paths.size()},
                  {"length_samples", r.rir.samples.size()},
                  {"eyring_t60_s", t60},
                  {"seeds", {{"top", cfg.seed}, {"unilossless", seeds.unilossless}, {"tracing", seeds.tracing}}},
                  {"matrix", {{"max_orthogonality_error", r.network.A.max_orthogonality_error()},
                              {"max_residual", max_residual}}},
                  {"tracing", {{"escaped", r.network.injection_escaped},
                               {"unassigned", r.network.injection_unassigned},
                               {"detector_solid_angle", r.network.detector_solid_angle}}},
                  {"timings", timing}};
    return r;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_metrics_header(std::ostream& os) { os << "scene,design,K,spread,M,band_Hz,metric,value\n"; }

void write_metrics_rows(std::ostream& os, const MetricsKey& k, const MetricsReport& rep) {
    const std::string prefix =
        k.scene + "," + k.design + "," + std::to_string(k.K) + "," + (k.spread ? "1" : "0") + "," + std::to_string(k.M) + ",";
    os << prefix << "broadband,T30_s," << format_number(rep.t30_broadband) << '\n';
    os << prefix << "broadband,EDT_ms," << format_number(rep.edt_broadband) << '\n';
    for (int b = 0; b < kBands; ++b) {
        const std::string band = format_number(kBandCenters[b]);
        os << prefix << band << ",T30_s," << format_number(rep.t30[b]) << '\n';
        os << prefix << band << ",EDT_ms," << format_number(rep.edt[b]) << '\n';
    }
}

void write_trace_csv(std::ostream& os, const std::vector<double>& time_s, const std::vector<double>& value) {
    os << "time_s,value\n";
    for (std::size_t k = 0; k < time_s.size(); ++k) os << format_number(time_s[k]) << ',' << format_number(value[k]) << '\n';
}

}  // namespace arn
