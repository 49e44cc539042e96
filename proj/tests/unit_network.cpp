#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "arn/error.hpp"
#include "arn/network.hpp"
#include "helpers.hpp"

namespace {

struct Built {
    arn::Scene scene;
    arn::PatchSet patches;
    arn::PathTable paths;
    arn::KernelMatrix kernel;
    arn::Network net;
};

Built build(arn::Scene s, double max_edge, arn::NetworkConfig nc) {
    Built b;
    b.scene = std::move(s);
    b.patches = arn::discretize(b.scene, max_edge);
    b.paths = arn::enumerate_paths(b.patches, b.scene, nc.fs);
    b.kernel = arn::compute_kernel(b.patches, b.paths, b.scene, {});
    b.net = arn::build_network(b.scene, b.patches, b.paths, b.kernel, nc);
    return b;
}

arn::NetworkConfig quick(arn::Design d) {
    arn::NetworkConfig nc;
    nc.design = d;
    nc.trace.n_rays = 20000;
    return nc;
}

arn::Scene lossless(const std::string& name) {
    auto s = test::scene(name);
    for (auto& m : s.materials) m.reflection.fill(1.0);
    return s;
}

}  // namespace

TEST_CASE("hallway network has one line per ordered patch pair") {
    auto b = build(test::scene("hallway.json"), 6.0, quick(arn::Design::householder));
    CHECK(b.net.paths.size() == 30);
    CHECK(b.net.A.blocks.size() == 6);
    CHECK(b.net.delay_ops.size() == 30);
    CHECK(b.net.injectors.size() == 30);
    CHECK(b.net.detectors.size() == 30);
    for (std::size_t l = 0; l < 30; ++l) CHECK(b.net.delay_ops[l].delay == b.paths.delays[l]);
}

TEST_CASE("lossless walls without air give unit line gains") {
    auto nc = quick(arn::Design::uniform);
    nc.air = false;
    auto b = build(lossless("hallway.json"), 6.0, nc);
    for (const auto& op : b.net.delay_ops) {
        CHECK(op.fir.empty());
        CHECK(op.gain == 1.0);
    }
}

TEST_CASE("line gain is the root reflection of the departure patch") {
    auto nc = quick(arn::Design::householder);
    nc.air = false;
    auto b = build(test::scene("uneven.json"), 6.0, nc);
    for (std::size_t l = 0; l < b.paths.size(); ++l) {
        const auto& mat = b.scene.materials[b.patches.patches[b.paths.lines[l].from].material];
        CHECK(b.net.delay_ops[l].gain == doctest::Approx(std::sqrt(mat.broadband())).epsilon(1e-12));
    }
    nc.air = true;
    auto c = build(test::scene("uneven.json"), 6.0, nc);
    for (std::size_t l = 0; l < c.paths.size(); ++l)
        CHECK(c.net.delay_ops[l].gain < b.net.delay_ops[l].gain);
}

TEST_CASE("band air switches every line to an FIR") {
    auto nc = quick(arn::Design::householder);
    nc.band_air = true;
    auto b = build(test::scene("hallway.json"), 6.0, nc);
    for (const auto& op : b.net.delay_ops) CHECK(op.fir.size() == static_cast<std::size_t>(arn::kAirFirTaps));
    auto rir = arn::render(b.net, 4800);
    for (double v : rir.samples) CHECK(std::isfinite(v));
}

TEST_CASE("zero injectors and bypass give silence") {
    auto b = build(test::scene("hallway.json"), 6.0, quick(arn::Design::householder));
    for (auto& f : b.net.injectors) f.scale(0.0);
    b.net.bypass = {};
    auto rir = arn::render(b.net, 9600);
    for (double v : rir.samples) CHECK(v == 0.0);
}

TEST_CASE("without mixing the output is bypass plus injector-detector products") {
    for (bool spread : {false, true}) {
        auto nc = quick(arn::Design::householder);
        nc.spread = spread;
        nc.K = 1;
        auto b = build(test::scene("hallway.json"), 6.0, nc);
        const std::size_t len = 9600;
        arn::RenderOptions opt;
        opt.skip_mixing = true;
        auto rir = arn::render(b.net, len, opt);

        std::vector<double> ref(len, 0.0);
        for (std::size_t k = 0; k < b.net.bypass.fir.size() && k < len; ++k) ref[k] += b.net.bypass.fir[k];
        for (std::size_t l = 0; l < b.paths.size(); ++l) {
            const auto& in = b.net.injectors[l];
            const auto& out = b.net.detectors[l];
            std::vector<double> taps = in.is_fir() ? in.fir : std::vector<double>{in.gain};
            for (std::size_t k = 0; k < taps.size(); ++k) {
                std::size_t n = static_cast<std::size_t>(in.delay + out.delay) + k;
                if (n < len) ref[n] += taps[k] * out.gain;
            }
        }
        double err = 0.0, norm = 0.0;
        for (std::size_t n = 0; n < len; ++n) {
            err = std::max(err, std::abs(rir.samples[n] - ref[n]));
            norm = std::max(norm, std::abs(ref[n]));
        }
        CHECK(norm > 0.0);
        CHECK(err <= 1e-12 * norm);
    }
}

TEST_CASE("the first recursive arrival follows the direct sound") {
    // Whole-wall patches average delays over metres and can arrive early;
    // at 2 m and below the recursion starts after the direct path.
    for (double edge : {2.0, 1.0}) {
        auto b = build(test::scene("hallway.json"), edge, quick(arn::Design::householder));
        int first = 1 << 30;
        for (std::size_t l = 0; l < b.paths.size(); ++l)
            if (!b.net.injectors[l].zero() && !b.net.detectors[l].zero())
                first = std::min(first, b.net.injectors[l].delay + b.net.detectors[l].delay);
        CHECK(first > 679);
        CHECK(b.net.earliest_recursive_arrival() <= first);
    }
}

TEST_CASE("lossless renders neither blow up nor decay") {
    for (auto d : {arn::Design::householder, arn::Design::uniform, arn::Design::sinkhorn}) {
        auto nc = quick(d);
        nc.air = false;
        auto s = lossless("hallway.json");
        if (d == arn::Design::sinkhorn)
            for (auto& m : s.materials) m.scattering = 0.5;
        auto b = build(s, 6.0, nc);
        auto rir = arn::render(b.net, 48000 * 10);
        auto rms = [&](double t0, double t1) {
            double acc = 0.0;
            std::size_t a = static_cast<std::size_t>(t0 * 48000), e = static_cast<std::size_t>(t1 * 48000);
            for (std::size_t k = a; k < e; ++k) acc += rir.samples[k] * rir.samples[k];
            return std::sqrt(acc / static_cast<double>(e - a));
        };
        for (double v : rir.samples) REQUIRE(std::isfinite(v));
        const double early = rms(0.5, 1.5), late = rms(9.0, 10.0);
        CHECK(early > 0.0);
        CHECK(late / early > 0.3);
        CHECK(late / early < 3.0);
    }
}

TEST_CASE("render rejects a zero length") {
    auto b = build(test::scene("hallway.json"), 6.0, quick(arn::Design::householder));
    CHECK_THROWS_AS(arn::render(b.net, 0), arn::Error);
}

TEST_CASE("an unstable loop is reported") {
    auto nc = quick(arn::Design::householder);
    nc.air = false;
    auto b = build(test::scene("hallway.json"), 6.0, nc);
    for (auto& op : b.net.delay_ops) op.gain = 1.5;
    try {
        arn::render(b.net, 48000 * 5);
        FAIL("expected instability");
    } catch (const arn::Error& e) {
        CHECK(std::string(e.what()).find("instability") != std::string::npos);
    }
}

namespace {

// Straightforward dense-matrix loop for scalar delay ops and scalar filters.
std::vector<double> dense_render(const arn::Network& net, std::size_t len) {
    const Eigen::MatrixXd At = net.A.dense(net.paths).transpose();
    const std::size_t m = net.paths.size();
    std::vector<std::vector<double>> u(m, std::vector<double>(len, 0.0));
    std::vector<double> out(len, 0.0);
    Eigen::VectorXd y(static_cast<Eigen::Index>(m));
    for (std::size_t n = 0; n < len; ++n) {
        for (std::size_t l = 0; l < m; ++l) {
            const auto& op = net.delay_ops[l];
            const long k = static_cast<long>(n) - op.delay;
            y(static_cast<Eigen::Index>(l)) = k >= 0 ? op.gain * u[l][static_cast<std::size_t>(k)] : 0.0;
        }
        Eigen::VectorXd mixed = At * y;
        for (std::size_t l = 0; l < m; ++l) {
            double v = mixed(static_cast<Eigen::Index>(l));
            if (net.injectors[l].delay == static_cast<int>(n)) v += net.injectors[l].gain;
            u[l][n] = v;
            const std::size_t t = n + static_cast<std::size_t>(net.detectors[l].delay);
            if (t < len) out[t] += net.detectors[l].gain * v;
        }
    }
    for (std::size_t k = 0; k < net.bypass.fir.size() && k < len; ++k) out[k] += net.bypass.fir[k];
    return out;
}

}  // namespace

TEST_CASE("block mixing equals the dense matrix loop") {
    for (auto d : {arn::Design::householder, arn::Design::uniform, arn::Design::sinkhorn}) {
        auto b = build(test::scene("hallway.json"), 6.0, quick(d));
        const std::size_t len = 4800;
        auto rir = arn::render(b.net, len);
        auto ref = dense_render(b.net, len);
        double err = 0.0, norm = 0.0;
        for (std::size_t n = 0; n < len; ++n) {
            err = std::max(err, std::abs(rir.samples[n] - ref[n]));
            norm = std::max(norm, std::abs(ref[n]));
        }
        CHECK(err <= 1e-12 * norm);
    }
}

TEST_CASE("the network is linear in its injectors") {
    auto b = build(test::scene("hallway.json"), 2.0, quick(arn::Design::uniform));
    b.net.bypass = {};
    auto one = b.net, two = b.net, both = b.net;
    for (std::size_t l = 0; l < b.paths.size(); ++l) {
        (l % 2 ? one : two).injectors[l].scale(0.0);
        if (l % 3 == 0) both.injectors[l].scale(1.0);
    }
    const std::size_t len = 9600;
    auto a = arn::render(one, len), c = arn::render(two, len), s = arn::render(both, len);
    for (std::size_t n = 0; n < len; ++n) CHECK(s.samples[n] == doctest::Approx(a.samples[n] + c.samples[n]).epsilon(1e-9).scale(1.0));
}

TEST_CASE("before the first recursive arrival only the bypass sounds") {
    auto b = build(test::scene("hallway.json"), 2.0, quick(arn::Design::householder));
    const int first = b.net.earliest_recursive_arrival();
    auto rir = arn::render(b.net, static_cast<std::size_t>(first) + 100);
    for (int n = 0; n < first; ++n) {
        const double bp = static_cast<std::size_t>(n) < b.net.bypass.fir.size() ? b.net.bypass.fir[n] : 0.0;
        CHECK(rir.samples[n] == bp);
    }
}
