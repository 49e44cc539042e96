#pragma once

#include <array>
#include <vector>

#include "arn/scene.hpp"

namespace arn {

// Normalised backward-integrated energy, 1 at n = 0.
struct DecayCurve {
    std::vector<double> values;
    double fs = 48000.0;
};

DecayCurve edc(const std::vector<double>& x, double fs);

// Reverberation time from the least-squares line through the EDC (dB)
// between its first -5 dB and -35 dB crossings (s).
double t30(const DecayCurve& curve);

// Instant at which the EDC first passes -10 dB, interpolated in dB (ms).
// This is the literal crossing time, not the conventional 6x extrapolation.
double edt_ms(const DecayCurve& curve);

struct NedTrace {
    std::vector<double> time_s;  // window centres
    std::vector<double> value;
};

// Normalised echo density: share of samples more than one standard
// deviation from the window mean, over the Gaussian share erfc(1/sqrt 2).
NedTrace ned(const std::vector<double>& x, double fs, double window_ms = 25.0, double hop_ms = 1.0);

struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

std::vector<double> filter(const std::vector<Biquad>& sos, const std::vector<double>& x);
// Forward-backward (zero-phase) application with zero padding at both ends.
std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x);

// Second-order Butterworth high-pass at fc.
Biquad highpass(double fc, double fs);
std::vector<double> highpass20(const std::vector<double>& x, double fs);

// Three-section Butterworth band-pass for the octave centred on fc. The
// bandwidth is widened so that the forward-backward response is -3 dB at
// the nominal octave edges.
std::vector<Biquad> octave_band(double fc, double fs);
std::array<std::vector<double>, kBands> octave_filterbank(const std::vector<double>& x, double fs);

struct MetricsReport {
    std::array<double, kBands> t30{};    // s, NaN where the decay is too short
    std::array<double, kBands> edt{};    // ms, NaN where undefined
    double t30_broadband = 0.0;
    double edt_broadband = 0.0;
    NedTrace ned;
};

// 20 Hz high-pass, then broadband and per-octave T30/EDT plus the NED trace.
MetricsReport compute_metrics(const std::vector<double>& x, double fs, double ned_window_ms = 25.0);

}  // namespace arn
