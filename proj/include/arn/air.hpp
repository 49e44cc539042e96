#pragma once

#include <array>
#include <vector>

#include "arn/scene.hpp"

namespace arn {

struct Atmosphere {
    double temperature_c = 20.0;
    double humidity_pct = 50.0;
    double pressure_kpa = 101.325;
};

// Atmospheric absorption coefficient in dB/m (ISO 9613-1 formula).
double air_attenuation_db_per_m(double freq_hz, const Atmosphere& atm = {});

std::array<double, kBands> air_band_gains(double distance, const Atmosphere& atm = {});

// Pressure gain at 1 kHz over `distance`.
double air_broadband_gain(double distance, const Atmosphere& atm = {});

// Linear-phase FIR (odd length, centre tap at length/2) whose magnitude is
// least-squares fitted to the octave-band gains.
inline constexpr int kAirFirTaps = 9;
std::vector<double> air_fir(const std::array<double, kBands>& band_gains, double fs);

}  // namespace arn
