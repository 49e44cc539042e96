// Command-line front end: render, metrics, validate, sweep.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <mutex>
#include <sstream>

#include "arn/error.hpp"
#include "arn/parallel.hpp"
#include "arn/pipeline.hpp"
#include "arn/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kPipeline = 2, kValidation = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flag values are parsed into these holders and only override the config
// when the flag was actually given.
struct RunFlags {
    std::string config;
    std::string scene, design, out_dir, name;
    int K = 0;
    bool spread = false, no_air = false, band_air = false;
    double max_edge = 0, spacing = 0, fs = 0, length = 0, window = 0;
    std::size_t rays = 0;
    std::uint64_t seed = 0;
    std::map<std::string, CLI::Option*> opts;

    void add(CLI::App* app, bool with_scene = true) {
        opts["config"] = app->add_option("--config", config, "JSON run config (flags take precedence)");
        if (with_scene) opts["scene"] = app->add_option("--scene", scene, "scene JSON file");
        opts["design"] = app->add_option("--design", design, "householder | sinkhorn | uniform");
        opts["K"] = app->add_option("-K,--order", K, "injection order");
        opts["spread"] = app->add_flag("--spread", spread, "time-spread injectors");
        opts["max_edge"] = app->add_option("--max-edge", max_edge, "patch edge limit (m)");
        opts["sample_spacing"] = app->add_option("--sample-spacing", spacing, "sample point spacing (m)");
        opts["n_rays"] = app->add_option("--rays", rays, "rays per trace");
        opts["fs"] = app->add_option("--fs", fs, "sample rate (Hz)");
        opts["seed"] = app->add_option("--seed", seed, "top-level seed");
        opts["length_s"] = app->add_option("--length", length, "render length (s), 0 = auto");
        opts["no_air"] = app->add_flag("--no-air", no_air, "disable air absorption");
        opts["band_air"] = app->add_flag("--band-air", band_air, "per-band air absorption filters");
        opts["ned_window_ms"] = app->add_option("--window", window, "NED window (ms)");
        opts["out_dir"] = app->add_option("-o,--out", out_dir, "output directory");
        opts["name"] = app->add_option("--name", name, "output file stem");
    }

    bool given(const std::string& k) const {
        auto it = opts.find(k);
        return it != opts.end() && it->second->count() > 0;
    }

    arn::RunConfig resolve() const {
        arn::RunConfig cfg;
        if (given("config")) {
            std::ifstream in(config);
            if (!in) throw UsageError("cannot open config file '" + config + "'");
            json j;
            try {
                in >> j;
            } catch (const json::exception& e) {
                throw UsageError("config file '" + config + "': " + e.what());
            }
            arn::apply_json(cfg, j);
        }
        if (given("scene")) cfg.scene_path = scene;
        if (given("design")) cfg.design = arn::parse_design(design);
        if (given("K")) cfg.K = K;
        if (given("spread")) cfg.spread = spread;
        if (given("max_edge")) cfg.max_edge = max_edge;
        if (given("sample_spacing")) cfg.sample_spacing = spacing;
        if (given("n_rays")) cfg.n_rays = rays;
        if (given("fs")) cfg.fs = fs;
        if (given("seed")) cfg.seed = seed;
        if (given("length_s")) cfg.length_s = length;
        if (given("no_air")) cfg.air = !no_air;
        if (given("band_air")) cfg.band_air = band_air;
        if (given("ned_window_ms")) cfg.ned_window_ms = window;
        if (given("out_dir")) cfg.out_dir = out_dir;
        if (given("name")) cfg.name = name;
        return cfg;
    }
};

void require_scene(const arn::RunConfig& cfg) {
    if (cfg.scene_path.empty()) throw UsageError("no scene given (--scene or config \"scene\")");
    if (!fs::exists(cfg.scene_path)) throw UsageError("scene file '" + cfg.scene_path + "' not found");
}

std::string stem_of(const arn::RunConfig& cfg) {
    if (!cfg.name.empty()) return cfg.name;
    return fs::path(cfg.scene_path).stem().string() + "_" + arn::to_string(cfg.design) + "_K" +
           std::to_string(cfg.K) + (cfg.spread ? "_spread" : "");
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw arn::Error("cli", "cannot write '" + p.string() + "'");
    os << text;
}

arn::MetricsKey key_for(const arn::RunConfig& cfg, std::size_t M) {
    return {fs::path(cfg.scene_path).stem().string(), arn::to_string(cfg.design), cfg.K, cfg.spread, M};
}

// Renders one configuration; writes <stem>.wav and <stem>.manifest.json and
// returns the metrics rows.
std::string render_one(const arn::RunConfig& cfg, bool with_metrics) {
    auto res = arn::run_pipeline(cfg);
    fs::create_directories(cfg.out_dir);
    const std::string stem = stem_of(cfg);
    const fs::path dir(cfg.out_dir);
    arn::write_wav((dir / (stem + ".wav")).string(), res.rir.samples, cfg.fs);
    json manifest = res.manifest;
    manifest["outputs"] = {{"wav", stem + ".wav"}};
    std::ostringstream rows;
    if (with_metrics) {
        // Metrics of the float32 file so they match `metrics` on the WAV.
        auto wav = arn::read_wav((dir / (stem + ".wav")).string());
        auto rep = arn::compute_metrics(wav.samples, wav.fs, cfg.ned_window_ms);
        arn::write_metrics_rows(rows, key_for(cfg, res.paths.size()), rep);
        std::ostringstream ned;
        arn::write_trace_csv(ned, rep.ned.time_s, rep.ned.value);
        write_text(dir / (stem + ".ned.csv"), ned.str());
        manifest["outputs"]["ned"] = stem + ".ned.csv";
    }
    write_text(dir / (stem + ".manifest.json"), manifest.dump(2) + "\n");
    return rows.str();
}

int cmd_render(const RunFlags& flags, bool with_metrics) {
    auto cfg = flags.resolve();
    require_scene(cfg);
    std::string rows = render_one(cfg, with_metrics);
    if (with_metrics) {
        std::ostringstream csv;
        arn::write_metrics_header(csv);
        csv << rows;
        write_text(fs::path(cfg.out_dir) / (stem_of(cfg) + ".metrics.csv"), csv.str());
    }
    std::cout << "wrote " << (fs::path(cfg.out_dir) / (stem_of(cfg) + ".wav")).string() << "\n";
    return kOk;
}

int cmd_metrics(const std::vector<std::string>& wavs, double window, const std::string& out_dir, bool bands) {
    fs::create_directories(out_dir);
    std::ostringstream csv;
    arn::write_metrics_header(csv);
    int failures = 0;
    for (const auto& path : wavs) {
        const std::string stem = fs::path(path).stem().string();
        arn::MetricsKey key{stem, "-", 0, false, 0};
        // Pick up run parameters from a sibling manifest when present.
        fs::path man = fs::path(path).replace_extension(".manifest.json");
        if (fs::exists(man)) {
            try {
                std::ifstream in(man);
                json j;
                in >> j;
                key.scene = fs::path(j["config"]["scene"].get<std::string>()).stem().string();
                key.design = j["config"]["design"].get<std::string>();
                key.K = j["config"]["K"].get<int>();
                key.spread = j["config"]["spread"].get<bool>();
                key.M = j["M"].get<std::size_t>();
            } catch (const std::exception&) {
            }
        }
        try {
            auto wav = arn::read_wav(path);
            auto rep = arn::compute_metrics(wav.samples, wav.fs, window);
            std::ostringstream rows;
            arn::write_metrics_rows(rows, key, rep);
            if (bands) {
                csv << rows.str();
            } else {
                // broadband rows only
                std::istringstream in(rows.str());
                std::string line;
                while (std::getline(in, line))
                    if (line.find(",broadband,") != std::string::npos) csv << line << '\n';
            }
            std::ostringstream ned;
            arn::write_trace_csv(ned, rep.ned.time_s, rep.ned.value);
            write_text(fs::path(out_dir) / (stem + ".ned.csv"), ned.str());
            auto curve = arn::edc(arn::highpass20(wav.samples, wav.fs), wav.fs);
            std::vector<double> t(curve.values.size()), v(curve.values.size());
            for (std::size_t k = 0; k < t.size(); ++k) {
                t[k] = static_cast<double>(k) / wav.fs;
                v[k] = curve.values[k];
            }
            std::ostringstream edc;
            arn::write_trace_csv(edc, t, v);
            write_text(fs::path(out_dir) / (stem + ".edc.csv"), edc.str());
        } catch (const std::exception& e) {
            ++failures;
            std::string msg = e.what();
            for (char& ch : msg)
                if (ch == ',' || ch == '\n') ch = ';';
            csv << key.scene << ',' << key.design << ',' << key.K << ',' << (key.spread ? 1 : 0) << ',' << key.M
                << ",broadband,error," << msg << '\n';
        }
    }
    write_text(fs::path(out_dir) / "metrics.csv", csv.str());
    std::cout << "wrote " << (fs::path(out_dir) / "metrics.csv").string() << "\n";
    return failures == 0 ? kOk : kPipeline;
}

int cmd_validate(const RunFlags& flags, const std::vector<std::string>& designs, const std::string& kernel_csv) {
    auto cfg = flags.resolve();
    require_scene(cfg);
    auto scene = arn::load_scene(cfg.scene_path);
    auto patches = arn::discretize(scene, cfg.max_edge, cfg.sample_spacing);
    auto paths = arn::enumerate_paths(patches, scene, cfg.fs);
    arn::KernelMatrix kernel;
    if (!kernel_csv.empty()) {
        std::ifstream in(kernel_csv);
        if (!in) throw UsageError("cannot open kernel file '" + kernel_csv + "'");
        kernel = arn::read_kernel_csv(in, paths);
    } else {
        arn::KernelConfig kc;
        kc.sample_spacing = cfg.sample_spacing;
        kc.fs = cfg.fs;
        kernel = arn::compute_kernel(patches, paths, scene, kc);
    }
    bool ok = true;
    auto energy = arn::validate_energy(kernel, paths);
    json report;
    report["scene"] = cfg.scene_path;
    report["N"] = patches.size();
    report["M"] = paths.size();
    report["kernel"] = {{"pass", energy.pass},
                        {"max_column_sum", energy.max_column_sum},
                        {"worst_block", energy.worst_block},
                        {"worst_column", energy.worst_column},
                        {"message", energy.message}};
    std::cout << "kernel: " << (energy.pass ? "PASS" : "FAIL") << " max column sum "
              << arn::format_number(energy.max_column_sum) << " (" << energy.message << ")\n";
    ok = ok && energy.pass;

    std::vector<double> sigma;
    for (const auto& p : patches.patches) sigma.push_back(scene.materials[p.material].scattering);
    const auto seeds = arn::stage_seeds(cfg.seed);
    std::ostringstream blocks_csv;
    blocks_csv << "design,patch,size,orthogonality_error,residual,sinkhorn_iterations\n";
    for (const auto& dname : designs) {
        auto design = arn::parse_design(dname);
        json d;
        try {
            arn::UnilosslessConfig uc;
            uc.seed = seeds.unilossless;
            auto fm = arn::assemble_feedback(kernel, paths, design, sigma, uc);
            double ortho = fm.max_orthogonality_error(), resid = 0.0;
            for (std::size_t i = 0; i < fm.blocks.size(); ++i) {
                const auto& b = fm.blocks[i];
                resid = std::max(resid, b.residual);
                blocks_csv << dname << ',' << i << ',' << b.A.rows() << ',' << arn::format_number(b.orthogonality) << ','
                           << arn::format_number(b.residual) << ',' << b.sinkhorn_iterations << '\n';
            }
            bool pass = ortho < 1e-9;
            d = {{"pass", pass}, {"max_orthogonality_error", ortho}, {"max_residual", resid}};
            std::cout << dname << ": " << (pass ? "PASS" : "FAIL") << " orthogonality " << arn::format_number(ortho)
                      << " residual " << arn::format_number(resid) << "\n";
            ok = ok && pass;
        } catch (const arn::Error& e) {
            d = {{"pass", false}, {"error", e.what()}};
            std::cout << dname << ": FAIL " << e.what() << "\n";
            ok = false;
        }
        report["designs"][dname] = d;
    }
    fs::create_directories(cfg.out_dir);
    const std::string stem = fs::path(cfg.scene_path).stem().string();
    write_text(fs::path(cfg.out_dir) / (stem + ".validate.json"), report.dump(2) + "\n");
    write_text(fs::path(cfg.out_dir) / (stem + ".blocks.csv"), blocks_csv.str());
    return ok ? kOk : kValidation;
}

template <class T>
std::vector<T> or_default(const std::vector<T>& v, T fallback) {
    return v.empty() ? std::vector<T>{fallback} : v;
}

int cmd_sweep(const RunFlags& flags, const std::vector<std::string>& scenes, const std::vector<std::string>& designs,
              const std::vector<int>& orders, const std::vector<int>& spreads, const std::vector<double>& edges,
              unsigned jobs) {
    auto base = flags.resolve();
    std::vector<arn::RunConfig> grid;
    for (const auto& s : or_default(scenes, base.scene_path))
        for (double e : or_default(edges, base.max_edge))
            for (const auto& d : or_default(designs, arn::to_string(base.design)))
                for (int k : or_default(orders, base.K))
                    for (int sp : or_default(spreads, base.spread ? 1 : 0)) {
                        arn::RunConfig c = base;
                        c.scene_path = s;
                        c.max_edge = e;
                        c.design = arn::parse_design(d);
                        c.K = k;
                        c.spread = sp != 0;
                        c.name = fs::path(s).stem().string() + "_e" + arn::format_number(e) + "_" + d + "_K" +
                                 std::to_string(k) + (c.spread ? "_spread" : "");
                        require_scene(c);
                        grid.push_back(c);
                    }
    std::vector<std::string> rows(grid.size());
    std::vector<std::string> errors(grid.size());
    std::mutex log_mu;
    arn::parallel_for(
        grid.size(),
        [&](std::size_t k) {
            try {
                rows[k] = render_one(grid[k], true);
            } catch (const std::exception& e) {
                errors[k] = e.what();
            }
            std::lock_guard lock(log_mu);
            std::cout << "[" << k + 1 << "/" << grid.size() << "] " << grid[k].name
                      << (errors[k].empty() ? "" : " FAILED: " + errors[k]) << "\n";
        },
        jobs);
    std::ostringstream csv;
    arn::write_metrics_header(csv);
    int failed = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        csv << rows[k];
        if (!errors[k].empty()) ++failed;
    }
    fs::create_directories(base.out_dir);
    write_text(fs::path(base.out_dir) / "sweep_metrics.csv", csv.str());
    return failed == 0 ? kOk : kPipeline;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Room impulse responses from a recursive delay network"};
    app.require_subcommand(1);

    RunFlags render_flags;
    bool render_metrics = false;
    auto* render = app.add_subcommand("render", "render one impulse response");
    render_flags.add(render);
    render->add_flag("--metrics", render_metrics, "also write metrics CSV and NED trace");

    std::vector<std::string> wavs;
    double window = 25.0;
    std::string metrics_out = ".";
    bool no_bands = false;
    auto* metrics = app.add_subcommand("metrics", "T30/EDT/NED of WAV files");
    metrics->add_option("wavs", wavs, "input WAV files")->required();
    metrics->add_option("--window", window, "NED window (ms)");
    metrics->add_option("-o,--out", metrics_out, "output directory");
    metrics->add_flag("--no-bands", no_bands, "broadband rows only");

    RunFlags validate_flags;
    std::vector<std::string> validate_designs = {"householder", "sinkhorn", "uniform"};
    std::string kernel_csv;
    auto* validate = app.add_subcommand("validate", "check kernel energy and matrix orthogonality");
    validate_flags.add(validate);
    validate->add_option("--designs", validate_designs, "designs to check");
    validate->add_option("--kernel", kernel_csv, "validate this kernel CSV instead of computing one");

    RunFlags sweep_flags;
    std::vector<std::string> sweep_scenes, sweep_designs;
    std::vector<int> sweep_orders, sweep_spreads;
    std::vector<double> sweep_edges;
    unsigned jobs = 0;
    auto* sweep = app.add_subcommand("sweep", "render and measure a grid of configurations");
    sweep_flags.add(sweep, false);
    sweep->add_option("--scenes", sweep_scenes, "scene files");
    sweep->add_option("--designs", sweep_designs, "designs");
    sweep->add_option("--orders", sweep_orders, "injection orders");
    sweep->add_option("--spreads", sweep_spreads, "0 and/or 1");
    sweep->add_option("--max-edges", sweep_edges, "discretization levels (m)");
    sweep->add_option("-j,--jobs", jobs, "parallel runs (0 = hardware threads)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*render) return cmd_render(render_flags, render_metrics);
        if (*metrics) return cmd_metrics(wavs, window, metrics_out, !no_bands);
        if (*validate) return cmd_validate(validate_flags, validate_designs, kernel_csv);
        if (*sweep) return cmd_sweep(sweep_flags, sweep_scenes, sweep_designs, sweep_orders, sweep_spreads, sweep_edges, jobs);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const arn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kPipeline;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kPipeline;
    }
    return kUsage;
}
