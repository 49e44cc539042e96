#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "arn/air.hpp"
#include "arn/error.hpp"
#include "arn/kernel.hpp"
#include "arn/tracing.hpp"
#include "helpers.hpp"

using arn::Vec3;

namespace {

int patch_near(const arn::PatchSet& ps, const Vec3& c) {
    for (const auto& p : ps.patches)
        if ((p.centroid - c).norm() < 1e-6) return p.id;
    return -1;
}

arn::Scene specular_hallway() {
    auto s = test::scene("hallway.json");
    for (auto& m : s.materials) m.scattering = 0.0;
    return s;
}

}  // namespace

TEST_CASE("air absorption against the standard formula") {
    // tests/oracles/air_iso9613.py, dB/km at 20 C / 50 %
    const double oracle[arn::kBands] = {0.439790, 1.309750, 2.728134, 4.664732,
                                        9.887016, 29.665528, 105.290926, 364.541021};
    for (int b = 0; b < arn::kBands; ++b)
        CHECK(arn::air_attenuation_db_per_m(arn::kBandCenters[b]) * 1000.0 == doctest::Approx(oracle[b]).epsilon(1e-5));
    // published table value 4.66 dB/km at 1 kHz
    const double db100 = -20.0 * std::log10(arn::air_broadband_gain(100.0));
    CHECK(std::abs(db100 - 0.466) < 0.0466);
    CHECK(arn::air_broadband_gain(0.0) == 1.0);
    auto g = arn::air_band_gains(10.0);
    CHECK(g[7] < g[3]);
    CHECK(g[3] < g[0]);
    for (int b = 1; b < arn::kBands; ++b) CHECK(g[b] < g[b - 1]);
}

TEST_CASE("air FIR is linear phase and tracks the band gains") {
    auto g = arn::air_band_gains(30.0);
    auto h = arn::air_fir(g, 48000.0);
    REQUIRE(static_cast<int>(h.size()) == arn::kAirFirTaps);
    for (std::size_t k = 0; k < h.size(); ++k) CHECK(h[k] == doctest::Approx(h[h.size() - 1 - k]));
    double dc = 0.0;
    for (double v : h) dc += v;
    CHECK(dc == doctest::Approx(g[0]).epsilon(0.01));
}

TEST_CASE("injection, K=0, symmetric facing pair") {
    auto s = test::facing_pair(1.0, 2.0);
    auto ps = arn::discretize(s, 2.0);
    auto paths = arn::enumerate_paths(ps, s, 48000.0);
    auto et = arn::line_etendue(ps, paths, s);
    CHECK(et[0] == doctest::Approx(et[1]));
    arn::TraceConfig cfg;
    cfg.n_rays = 200000;
    cfg.air = false;
    auto inj = arn::trace_injection(s, ps, paths, 0, et, cfg);
    REQUIRE(inj.filters.size() == 2);
    CHECK(inj.filters[0].delay == inj.filters[1].delay);
    CHECK(inj.filters[0].gain == doctest::Approx(inj.filters[1].gain).epsilon(0.02));
    CHECK(inj.filters[0].gain > 0.0);
    CHECK(inj.escaped > 0);  // the pair is open
}

TEST_CASE("injection, K=0: a patch hidden from the source injects nothing") {
    auto s = test::scene("nonconvex.json");
    auto ps = arn::discretize(s, 6.0);
    auto paths = arn::enumerate_paths(ps, s, 48000.0);
    auto et = arn::line_etendue(ps, paths, s);
    arn::TraceConfig cfg;
    cfg.n_rays = 50000;
    auto inj = arn::trace_injection(s, ps, paths, 0, et, cfg);
    const int hidden = patch_near(ps, Vec3(3, 4, 1));  // inner wall of the receiver prong
    REQUIRE(hidden >= 0);
    for (int l : paths.outgoing[hidden]) CHECK(inj.filters[l].zero());
    int live = 0;
    for (const auto& f : inj.filters) live += !f.zero();
    CHECK(live > 0);
}

TEST_CASE("injection, K=1: floor to ceiling delay matches the specular oracle") {
    auto s = specular_hallway();
    auto ps = arn::discretize(s, 6.0);
    auto paths = arn::enumerate_paths(ps, s, 48000.0);
    auto et = arn::line_etendue(ps, paths, s);
    arn::TraceConfig cfg;
    cfg.n_rays = 400000;
    cfg.air = false;
    auto inj = arn::trace_injection(s, ps, paths, 1, et, cfg);
    const int floor = patch_near(ps, Vec3(1, 3, 0)), ceiling = patch_near(ps, Vec3(1, 3, 2));
    const int line = paths.id(floor, ceiling);
    REQUIRE(line >= 0);
    // tests/oracles/injection_k1.py
    CHECK(std::abs(inj.filters[line].delay - 335) <= 2);
    CHECK(inj.escaped == 0);
}

TEST_CASE("injection is deterministic for a fixed seed") {
    auto s = test::scene("hallway.json");
    auto ps = arn::discretize(s, 6.0);
    auto paths = arn::enumerate_paths(ps, s, 48000.0);
    auto et = arn::line_etendue(ps, paths, s);
    arn::TraceConfig cfg;
    cfg.n_rays = 20000;
    cfg.spread = true;
    auto a = arn::trace_injection(s, ps, paths, 2, et, cfg);
    auto b = arn::trace_injection(s, ps, paths, 2, et, cfg);
    for (std::size_t l = 0; l < a.filters.size(); ++l) {
        CHECK(a.filters[l].delay == b.filters[l].delay);
        CHECK(a.filters[l].gain == b.filters[l].gain);
        CHECK(a.filters[l].fir == b.filters[l].fir);
        CHECK(a.echograms[l].bins == b.echograms[l].bins);
    }
    cfg.seed = 2;
    auto c = arn::trace_injection(s, ps, paths, 2, et, cfg);
    bool differs = false;
    for (std::size_t l = 0; l < a.filters.size(); ++l) differs |= a.filters[l].fir != c.filters[l].fir;
    CHECK(differs);
}

TEST_CASE("echogram totals") {
    auto s = test::scene("hallway.json");
    auto ps = arn::discretize(s, 6.0);
    auto paths = arn::enumerate_paths(ps, s, 48000.0);
    auto et = arn::line_etendue(ps, paths, s);
    arn::TraceConfig cfg;
    cfg.n_rays = 20000;
    auto inj = arn::trace_injection(s, ps, paths, 1, et, cfg);
    for (const auto& e : inj.echograms) {
        double sum = 0.0;
        for (double v : e.bins) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(e.total_energy).epsilon(1e-9));
    }
}

TEST_CASE("spread FIR") {
    arn::Echogram one;
    one.first = 40;
    one.bins = {2.0};
    one.total_energy = 2.0;
    auto f = arn::spread_fir(one, 0.5, 9);
    REQUIRE(f.fir.size() == 1);
    CHECK(f.delay == 40);
    CHECK(std::abs(f.fir[0]) == doctest::Approx(std::sqrt(2.0 / 0.5)));

    arn::Echogram two;
    two.first = 10;
    two.bins.assign(11, 0.0);
    two.bins.front() = two.bins.back() = 1.0;
    two.total_energy = 2.0;
    auto g = arn::spread_fir(two, 1.0, 9);
    REQUIRE(g.fir.size() == 11);
    CHECK(g.delay == 10);
    CHECK(std::abs(g.fir[0]) == doctest::Approx(std::abs(g.fir[10])));
    CHECK(std::abs(g.fir[0]) == doctest::Approx(1.0));
    for (int k = 1; k < 10; ++k) CHECK(g.fir[k] == 0.0);
    CHECK(g.energy() == doctest::Approx(2.0));
}

TEST_CASE("distinct first-order bundles into one line stay separate when spread") {
    auto s = specular_hallway();
    auto ps = arn::discretize(s, 1.0);
    auto paths = arn::enumerate_paths(ps, s, 48000.0);
    auto et = arn::line_etendue(ps, paths, s);
    arn::TraceConfig cfg;
    cfg.n_rays = 400000;
    cfg.air = false;
    cfg.spread = true;
    auto spread = arn::trace_injection(s, ps, paths, 1, et, cfg);
    cfg.spread = false;
    auto simple = arn::trace_injection(s, ps, paths, 1, et, cfg);
    // clusters of non-zero taps separated by at least 20 empty samples
    auto clusters = [](const std::vector<double>& fir) {
        int n = 0, gap = 1000;
        for (double v : fir) {
            if (v != 0.0) {
                if (gap >= 20) ++n;
                gap = 0;
            } else {
                ++gap;
            }
        }
        return n;
    };
    int split = 0;
    for (std::size_t l = 0; l < spread.filters.size(); ++l) {
        if (clusters(spread.filters[l].fir) < 2) continue;
        ++split;
        CHECK_FALSE(simple.filters[l].is_fir());
        CHECK(spread.filters[l].energy() == doctest::Approx(simple.filters[l].energy()).epsilon(1e-6));
    }
    CHECK(split > 0);
}

TEST_CASE("detection on a small patch pair") {
    auto s = test::facing_pair(0.1, 2.0);
    s.receiver.pos = Vec3(0.05, 0.05, 0.5);
    auto ps = arn::discretize(s, 1.0);
    auto paths = arn::enumerate_paths(ps, s, 48000.0);
    arn::TraceConfig cfg;
    cfg.n_rays = 2000000;
    cfg.air = false;
    auto det = arn::trace_detection(s, ps, paths, cfg);
    const int bottom = patch_near(ps, Vec3(0.05, 0.05, 0));
    const int line = paths.id(bottom, 1 - bottom);
    CHECK(det.filters[line].delay == static_cast<int>(std::lround(0.5 / 343.0 * 48000.0)));
    CHECK(det.filters[line].gain > 0.0);
    const int back = paths.id(1 - bottom, bottom);
    CHECK(det.filters[back].delay == static_cast<int>(std::lround(1.5 / 343.0 * 48000.0)));
}

TEST_CASE("detection: hidden patch has zero detectors, solid angle sums to the sphere") {
    auto s = test::scene("nonconvex.json");
    auto ps = arn::discretize(s, 6.0);
    auto paths = arn::enumerate_paths(ps, s, 48000.0);
    arn::TraceConfig cfg;
    cfg.n_rays = 100000;
    cfg.air = false;
    auto det = arn::trace_detection(s, ps, paths, cfg);
    const int hidden = patch_near(ps, Vec3(1, 4, 1));  // inner wall of the source prong
    REQUIRE(hidden >= 0);
    for (int l : paths.outgoing[hidden]) CHECK(det.filters[l].zero());
    CHECK(det.total_solid_angle + 4 * M_PI * det.unassigned / cfg.n_rays == doctest::Approx(4 * M_PI).epsilon(1e-9));

    // Unit radiance on every line: sum of gain^2 equals the reflected share
    // of the receiver's solid angle.
    double sum = 0.0, weight = 0.0;
    for (std::size_t l = 0; l < det.filters.size(); ++l) {
        sum += det.filters[l].gain * det.filters[l].gain;
        weight += det.solid_angle[l] * s.material_of(ps.patches[paths.lines[l].from].polygon).broadband();
    }
    CHECK(sum == doctest::Approx(weight).epsilon(1e-9));
    CHECK(sum == doctest::Approx(0.9 * det.total_solid_angle).epsilon(1e-9));
}

TEST_CASE("ISM: direct path in the hallway") {
    auto s = test::scene("hallway.json");
    auto imgs = arn::ism_images(s, 0, {});
    REQUIRE(imgs.size() == 1);
    const double d = std::sqrt(23.54);
    CHECK(imgs[0].distance == doctest::Approx(d));
    CHECK(imgs[0].delay == 679);
    CHECK(imgs[0].amplitude == doctest::Approx(1.0 / d));
    auto b = arn::ism_bypass(s, 0, {});
    CHECK(b.delay == 0);
    REQUIRE(b.fir.size() == 680);
    CHECK(b.fir[679] == doctest::Approx(1.0 / d));
    double rest = 0.0;
    for (std::size_t k = 0; k < 679; ++k) rest += std::abs(b.fir[k]);
    CHECK(rest == 0.0);
}

TEST_CASE("ISM: hallway orders up to two match the image lattice") {
    auto s = test::scene("hallway.json");
    auto imgs = arn::ism_images(s, 2, {});
    std::ifstream in(std::string(ARN_TESTS_DIR) + "/oracles/hallway_ism_k2.csv");
    REQUIRE(in);
    std::string line;
    std::getline(in, line);
    struct Row {
        int order, delay;
        double amp;
    };
    std::vector<Row> oracle;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        Row r;
        char c;
        ss >> r.order >> c >> r.delay >> c >> r.amp;
        oracle.push_back(r);
    }
    REQUIRE(oracle.size() == 25);
    REQUIRE(imgs.size() == 25);
    std::vector<bool> used(imgs.size(), false);
    for (const auto& r : oracle) {
        bool found = false;
        for (std::size_t k = 0; k < imgs.size() && !found; ++k) {
            if (used[k] || imgs[k].delay != r.delay || static_cast<int>(imgs[k].walls.size()) != r.order) continue;
            if (std::abs(imgs[k].amplitude - r.amp) <= 1e-9 * r.amp) used[k] = found = true;
        }
        CHECK_MESSAGE(found, "order " << r.order << " delay " << r.delay);
    }
}

TEST_CASE("ISM respects occlusion in the non-convex room") {
    auto s = test::scene("nonconvex.json");
    auto imgs = arn::ism_images(s, 1, {});
    // source and receiver sit in different prongs: no direct path
    for (const auto& im : imgs) CHECK_FALSE(im.walls.empty());
    for (const auto& im : imgs) {
        CHECK(im.amplitude > 0.0);
        CHECK(im.delay == static_cast<int>(std::lround(im.distance / 343.0 * 48000.0)));
    }
}
