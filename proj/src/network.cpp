#include "arn/network.hpp"

#include <algorithm>
#include <cmath>

#include "arn/error.hpp"

namespace arn {

int Network::earliest_recursive_arrival() const {
    int inj = 1 << 30, det = 1 << 30;
    for (const auto& f : injectors)
        if (!f.zero()) inj = std::min(inj, f.delay);
    for (const auto& f : detectors)
        if (!f.zero()) det = std::min(det, f.delay);
    if (inj == (1 << 30) || det == (1 << 30)) return 1 << 30;
    return inj + det;
}

Network build_network(const Scene& scene, const PatchSet& patches, const PathTable& paths,
                      const KernelMatrix& kernel, const NetworkConfig& cfg) {
    if (cfg.K < 0) throw Error("network", "injection order must be >= 0");
    Network net;
    net.paths = paths;
    net.fs = cfg.fs;

    std::vector<double> sigma;
    for (const auto& p : patches.patches) sigma.push_back(scene.materials[p.material].scattering);
    net.A = assemble_feedback(kernel, paths, cfg.design, sigma, cfg.unilossless);
    const Eigen::VectorXd similarity = sinkhorn_similarity(net.A, paths);

    net.delay_ops.resize(paths.size());
    for (std::size_t l = 0; l < paths.size(); ++l) {
        const Material& mat = scene.materials[patches.patches[paths.lines[l].from].material];
        DelayOp& op = net.delay_ops[l];
        op.delay = paths.delays[l];
        const double d = paths.distances[l];
        if (cfg.band_air || !mat.flat()) {
            std::array<double, kBands> g;
            g.fill(1.0);
            if (cfg.air) g = air_band_gains(d, cfg.atmosphere);
            for (int b = 0; b < kBands; ++b) g[b] *= std::sqrt(mat.reflection[b]);
            op.fir = air_fir(g, cfg.fs);
            if (op.delay < kAirFirTaps / 2 + 1)
                throw Error("network", "line " + std::to_string(l) + " is too short for the air filter");
        } else {
            op.gain = std::sqrt(mat.broadband()) * (cfg.air ? air_broadband_gain(d, cfg.atmosphere) : 1.0);
        }
    }

    TraceConfig tc = cfg.trace;
    tc.fs = cfg.fs;
    tc.air = cfg.air;
    tc.atmosphere = cfg.atmosphere;
    tc.spread = cfg.spread;
    const auto etendue = line_etendue(patches, paths, scene);
    auto inj = trace_injection(scene, patches, paths, cfg.K, etendue, tc);
    auto det = trace_detection(scene, patches, paths, tc);
    net.injectors = std::move(inj.filters);
    net.detectors = std::move(det.filters);
    net.injection_escaped = inj.escaped;
    net.injection_unassigned = inj.unassigned;
    net.detector_solid_angle = det.total_solid_angle;
    for (std::size_t l = 0; l < paths.size(); ++l) {
        const double e = similarity(static_cast<Eigen::Index>(l));
        net.injectors[l].scale(1.0 / std::sqrt(e));
        net.detectors[l].scale(std::sqrt(e));
    }

    IsmConfig ic;
    ic.fs = cfg.fs;
    ic.air = cfg.air;
    ic.atmosphere = cfg.atmosphere;
    net.bypass = ism_bypass(scene, cfg.K, ic);
    return net;
}

namespace {

struct Event {
    int n;
    int line;
    double value;
};

}  // namespace

Rir render(const Network& net, std::size_t length, const RenderOptions& opt) {
    if (length == 0) throw Error("network", "render length must be at least 1 sample");
    const auto& paths = net.paths;
    const std::size_t m = paths.size();
    Rir rir;
    rir.fs = net.fs;
    rir.samples.assign(length, 0.0);
    const long len = static_cast<long>(length);

    // Ring buffers of departure signals, one power-of-two slot per line.
    int span = 2;
    for (std::size_t l = 0; l < m; ++l) {
        int need = net.delay_ops[l].delay + static_cast<int>(net.delay_ops[l].fir.size()) + 1;
        while (span < need) span <<= 1;
    }
    const std::size_t mask = static_cast<std::size_t>(span - 1);
    std::vector<double> buf(m * static_cast<std::size_t>(span), 0.0);

    std::vector<Event> events;
    for (std::size_t l = 0; l < m; ++l) {
        const LineFilter& f = net.injectors[l];
        if (f.is_fir()) {
            for (std::size_t k = 0; k < f.fir.size(); ++k)
                if (f.fir[k] != 0.0) events.push_back({f.delay + static_cast<int>(k), static_cast<int>(l), f.fir[k]});
        } else if (f.gain != 0.0) {
            events.push_back({f.delay, static_cast<int>(l), f.gain});
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.n < b.n; });

    struct Tap {
        int line;
        int delay;
        double gain;
    };
    std::vector<Tap> taps;
    for (std::size_t l = 0; l < m; ++l) {
        const LineFilter& f = net.detectors[l];
        if (f.is_fir()) throw Error("network", "FIR detectors are not supported");
        if (f.gain != 0.0) taps.push_back({static_cast<int>(l), f.delay, f.gain});
    }

    // Householder blocks need only the permutation.
    struct Block {
        std::vector<int> in, out;
        bool householder = false;
        std::vector<int> inv;  // column -> row of its specular entry
        Eigen::MatrixXd At;    // A^T
    };
    std::vector<Block> blocks(static_cast<std::size_t>(paths.patch_count));
    std::size_t max_block = 0;
    for (int i = 0; i < paths.patch_count; ++i) {
        Block& b = blocks[i];
        b.in = paths.incoming[i];
        b.out = paths.outgoing[i];
        max_block = std::max(max_block, b.in.size());
        if (b.in.empty()) continue;
        const FeedbackBlock& fb = net.A.blocks[i];
        b.householder = net.A.design == Design::householder && fb.perm.size() == b.in.size();
        if (b.householder) {
            b.inv.assign(b.in.size(), 0);
            for (std::size_t r = 0; r < fb.perm.size(); ++r) b.inv[fb.perm[r]] = static_cast<int>(r);
        } else {
            b.At = fb.A.transpose();
        }
    }

    std::vector<double> y(m, 0.0), u(m, 0.0);
    Eigen::VectorXd yin(static_cast<Eigen::Index>(max_block)), yout(static_cast<Eigen::Index>(max_block));
    std::size_t next_event = 0;

    for (long n = 0; n < len; ++n) {
        const std::size_t slot = static_cast<std::size_t>(n);
        for (std::size_t l = 0; l < m; ++l) {
            const DelayOp& op = net.delay_ops[l];
            const double* line = &buf[l * static_cast<std::size_t>(span)];
            if (op.fir.empty()) {
                y[l] = op.gain * line[(slot - static_cast<std::size_t>(op.delay)) & mask];
            } else {
                const long half = static_cast<long>(op.fir.size() / 2);
                double acc = 0.0;
                for (std::size_t k = 0; k < op.fir.size(); ++k)
                    acc += op.fir[k] * line[static_cast<std::size_t>(n - op.delay + half - static_cast<long>(k)) & mask];
                y[l] = acc;
            }
        }
        // Reads at n - delay before n were never written, so the zeroed
        // buffer gives silence for the first pass of each line.

        if (opt.skip_mixing) {
            std::fill(u.begin(), u.end(), 0.0);
        } else {
            for (const Block& b : blocks) {
                const std::size_t mi = b.in.size();
                if (mi == 0) continue;
                if (b.householder) {
                    double sum = 0.0;
                    for (int li : b.in) sum += y[li];
                    const double s = 2.0 / static_cast<double>(mi) * sum;
                    for (std::size_t c = 0; c < mi; ++c) u[b.out[c]] = s - y[b.in[b.inv[c]]];
                } else {
                    for (std::size_t r = 0; r < mi; ++r) yin(static_cast<Eigen::Index>(r)) = y[b.in[r]];
                    auto yi = yin.head(static_cast<Eigen::Index>(mi));
                    auto yo = yout.head(static_cast<Eigen::Index>(mi));
                    yo.noalias() = b.At * yi;
                    for (std::size_t c = 0; c < mi; ++c) u[b.out[c]] = yo(static_cast<Eigen::Index>(c));
                }
            }
        }
        while (next_event < events.size() && events[next_event].n == n) {
            u[events[next_event].line] += events[next_event].value;
            ++next_event;
        }
        while (next_event < events.size() && events[next_event].n < n) ++next_event;

        double peak = 0.0;
        for (std::size_t l = 0; l < m; ++l) {
            buf[l * static_cast<std::size_t>(span) + (slot & mask)] = u[l];
            peak = std::max(peak, std::abs(u[l]));
        }
        if (!(peak <= opt.guard))
            throw Error("network", "instability detected at sample " + std::to_string(n));
        for (const Tap& t : taps) {
            long k = n + t.delay;
            if (k < len) rir.samples[static_cast<std::size_t>(k)] += t.gain * u[t.line];
        }
    }

    const auto& bp = net.bypass.fir;
    for (std::size_t k = 0; k < bp.size() && k < length; ++k) rir.samples[k] += bp[k];
    if (net.bypass.fir.empty() && net.bypass.gain != 0.0 && static_cast<std::size_t>(net.bypass.delay) < length)
        rir.samples[static_cast<std::size_t>(net.bypass.delay)] += net.bypass.gain;
    for (double v : rir.samples)
        if (!std::isfinite(v)) throw Error("network", "instability detected (non-finite output)");
    return rir;
}

}  // namespace arn
