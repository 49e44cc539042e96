#pragma once

#include <cstdint>
#include <vector>

#include "arn/air.hpp"
#include "arn/kernel.hpp"
#include "arn/scene.hpp"

namespace arn {

// Either a single gain at `delay`, or an FIR whose first tap sits at
// `delay`. Values are root-radiance (pressure-like) quantities.
struct LineFilter {
    double gain = 0.0;
    int delay = 0;
    std::vector<double> fir;

    bool is_fir() const { return !fir.empty(); }
    double energy() const;
    bool zero() const { return energy() == 0.0; }
    void scale(double g);
};

// Energy per sample index; bins[k] holds arrivals at sample first + k.
struct Echogram {
    int first = 0;
    std::vector<double> bins;
    double total_energy = 0.0;
    std::size_t ray_count = 0;
};

struct TraceConfig {
    std::size_t n_rays = 100000;
    std::uint64_t seed = 1;
    double fs = 48000.0;
    bool air = true;
    Atmosphere atmosphere;
    bool spread = false;
    std::size_t batch = 4096;  // rays per independently seeded batch
};

// Etendue of each line: the double area integral of G*V between its patches
// (m^2), evaluated on the patch sample points. Converts line power to
// radiance.
std::vector<double> line_etendue(const PatchSet& patches, const PathTable& paths, const Scene& scene);

struct InjectionResult {
    std::vector<LineFilter> filters;
    std::vector<Echogram> echograms;
    std::size_t escaped = 0;      // rays lost through cracks
    std::size_t unassigned = 0;   // rays whose last two hits form no line
};

// Source power is normalised to 4*pi so that the free-field pressure is 1/d.
// Rays reflect K times (wall and air losses applied), then the (K+1)-th and
// (K+2)-th hits name the line i->j that receives the energy.
InjectionResult trace_injection(const Scene& scene, const PatchSet& patches, const PathTable& paths, int K,
                                const std::vector<double>& etendue, const TraceConfig& cfg);

// Spread injector: one tap per echogram bin, magnitude sqrt(bin / etendue),
// random sign.
LineFilter spread_fir(const Echogram& echogram, double etendue, std::uint64_t seed);

struct DetectionResult {
    std::vector<LineFilter> filters;
    std::vector<double> solid_angle;  // per-line receiver solid angle (sr), directivity weighted
    double total_solid_angle = 0.0;
    std::size_t unassigned = 0;
};

// Rays from the receiver: direction w hits patch i, -w hits patch j, so the
// receiver sits on line i->j. Detectors tap the signal leaving patch i and
// carry its reflection loss, the air loss to the receiver and that delay.
DetectionResult trace_detection(const Scene& scene, const PatchSet& patches, const PathTable& paths,
                                const TraceConfig& cfg);

struct ImageSource {
    std::vector<int> walls;  // polygon ids in reflection order
    Vec3 position = Vec3::Zero();
    double distance = 0.0;
    double amplitude = 0.0;
    int delay = 0;
};

struct IsmConfig {
    double fs = 48000.0;
    bool air = false;
    Atmosphere atmosphere;
};

// Valid, visible image sources of order <= K, the direct path first.
std::vector<ImageSource> ism_images(const Scene& scene, int K, const IsmConfig& cfg);

// Bypass FIR starting at sample 0.
LineFilter ism_bypass(const Scene& scene, int K, const IsmConfig& cfg);

}  // namespace arn
