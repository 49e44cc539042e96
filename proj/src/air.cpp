#include "arn/air.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace arn {

double air_attenuation_db_per_m(double f, const Atmosphere& atm) {
    const double T = atm.temperature_c + 273.15;
    const double T0 = 293.15;
    const double T01 = 273.16;
    const double pr = atm.pressure_kpa / 101.325;
    const double psat = std::pow(10.0, -6.8346 * std::pow(T01 / T, 1.261) + 4.6151);
    const double h = atm.humidity_pct * psat / pr;
    const double fro = pr * (24.0 + 4.04e4 * h * (0.02 + h) / (0.391 + h));
    const double frn = pr * std::pow(T / T0, -0.5) * (9.0 + 280.0 * h * std::exp(-4.170 * (std::pow(T / T0, -1.0 / 3.0) - 1.0)));
    const double f2 = f * f;
    return 8.686 * f2 *
           (1.84e-11 / pr * std::sqrt(T / T0) +
            std::pow(T / T0, -2.5) * (0.01275 * std::exp(-2239.1 / T) / (fro + f2 / fro) +
                                      0.1068 * std::exp(-3352.0 / T) / (frn + f2 / frn)));
}

std::array<double, kBands> air_band_gains(double distance, const Atmosphere& atm) {
    std::array<double, kBands> g{};
    for (int b = 0; b < kBands; ++b)
        g[b] = std::pow(10.0, -air_attenuation_db_per_m(kBandCenters[b], atm) * distance / 20.0);
    return g;
}

double air_broadband_gain(double distance, const Atmosphere& atm) {
    return std::pow(10.0, -air_attenuation_db_per_m(kBandCenters[kBroadbandIndex], atm) * distance / 20.0);
}

std::vector<double> air_fir(const std::array<double, kBands>& band_gains, double fs) {
    // Type I zero-phase prototype: H(w) = a0 + 2 sum_k a_k cos(k w), fitted
    // on a log-spaced grid with the band gains interpolated in log frequency.
    const int half = kAirFirTaps / 2;
    const int grid = 256;
    const double nyq = fs / 2.0;
    Eigen::MatrixXd A(grid, half + 1);
    Eigen::VectorXd b(grid);
    for (int k = 0; k < grid; ++k) {
        double f = 20.0 * std::pow(nyq / 20.0, (k + 0.5) / grid);
        double lf = std::log2(f / kBandCenters[0]);
        double g;
        if (lf <= 0) {
            g = band_gains[0];
        } else if (lf >= kBands - 1) {
            g = band_gains[kBands - 1];
        } else {
            int i = static_cast<int>(lf);
            double t = lf - i;
            g = band_gains[i] * (1 - t) + band_gains[i + 1] * t;
        }
        double w = 2.0 * M_PI * f / fs;
        A(k, 0) = 1.0;
        for (int n = 1; n <= half; ++n) A(k, n) = 2.0 * std::cos(n * w);
        b(k) = g;
    }
    Eigen::VectorXd a = A.colPivHouseholderQr().solve(b);
    std::vector<double> h(kAirFirTaps);
    h[half] = a(0);
    for (int n = 1; n <= half; ++n) h[half - n] = h[half + n] = a(n);
    return h;
}

}  // namespace arn
