#pragma once

#include <cstdint>
#include <vector>

#include "arn/air.hpp"
#include "arn/kernel.hpp"
#include "arn/matrices.hpp"
#include "arn/tracing.hpp"

namespace arn {

// Per-line propagation: wall loss of the departure patch and air loss over
// the line length. A non-empty fir replaces `gain` and is centred on
// `delay`.
struct DelayOp {
    int delay = 1;
    double gain = 1.0;
    std::vector<double> fir;
};

struct NetworkConfig {
    Design design = Design::householder;
    int K = 1;
    bool spread = false;
    bool air = true;
    bool band_air = false;  // FIR air filters instead of the 1 kHz gain
    Atmosphere atmosphere;
    double fs = 48000.0;
    TraceConfig trace;         // n_rays, seed; fs/air/spread are overwritten
    UnilosslessConfig unilossless;
};

struct Network {
    PathTable paths;
    FeedbackMatrix A;
    std::vector<DelayOp> delay_ops;
    std::vector<LineFilter> injectors;
    std::vector<LineFilter> detectors;
    LineFilter bypass;
    double fs = 48000.0;

    // diagnostics from the build
    std::size_t injection_escaped = 0;
    std::size_t injection_unassigned = 0;
    double detector_solid_angle = 0.0;

    // Earliest sample at which anything from the recursion can reach the
    // receiver.
    int earliest_recursive_arrival() const;
};

Network build_network(const Scene& scene, const PatchSet& patches, const PathTable& paths,
                      const KernelMatrix& kernel, const NetworkConfig& cfg);

struct Rir {
    std::vector<double> samples;
    double fs = 48000.0;
};

struct RenderOptions {
    bool skip_mixing = false;  // test hook: A = 0
    double guard = 1e6;        // |signal| above this aborts
};

Rir render(const Network& net, std::size_t length, const RenderOptions& opt = {});

}  // namespace arn
