#include "arn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include "arn/error.hpp"

namespace arn {

namespace {

using cd = std::complex<double>;

double to_db(double v) { return 10.0 * std::log10(v); }

}  // namespace

DecayCurve edc(const std::vector<double>& x, double fs) {
    if (x.empty()) throw Error("metrics", "empty impulse response");
    DecayCurve c;
    c.fs = fs;
    c.values.resize(x.size());
    double acc = 0.0;
    for (std::size_t k = x.size(); k-- > 0;) {
        acc += x[k] * x[k];
        c.values[k] = acc;
    }
    if (acc <= 0.0) throw Error("metrics", "all-zero impulse response");
    for (double& v : c.values) v /= acc;
    return c;
}

double t30(const DecayCurve& curve) {
    const auto& v = curve.values;
    std::size_t n5 = v.size(), n35 = v.size();
    for (std::size_t k = 0; k < v.size(); ++k) {
        double db = to_db(v[k]);
        if (n5 == v.size() && db <= -5.0) n5 = k;
        if (db <= -35.0) {
            n35 = k;
            break;
        }
    }
    if (n35 == v.size() || n35 <= n5) throw Error("metrics", "insufficient decay: EDC never reaches -35 dB");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double cnt = static_cast<double>(n35 - n5 + 1);
    for (std::size_t k = n5; k <= n35; ++k) {
        double t = static_cast<double>(k - n5) / curve.fs;
        double y = to_db(v[k]);
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
    }
    double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    if (!(slope < 0)) throw Error("metrics", "non-decaying EDC");
    return -60.0 / slope;
}

double edt_ms(const DecayCurve& curve) {
    const auto& v = curve.values;
    for (std::size_t k = 1; k < v.size(); ++k) {
        double db = to_db(v[k]);
        if (db <= -10.0) {
            double prev = to_db(v[k - 1]);
            double frac = (prev + 10.0) / (prev - db);
            if (!std::isfinite(frac)) frac = 0.0;
            return (static_cast<double>(k - 1) + frac) / curve.fs * 1000.0;
        }
    }
    throw Error("metrics", "EDC never reaches -10 dB");
}

NedTrace ned(const std::vector<double>& x, double fs, double window_ms, double hop_ms) {
    if (window_ms < 1.0) throw Error("metrics", "NED window must be at least 1 ms");
    const std::size_t w = static_cast<std::size_t>(std::lround(window_ms * fs / 1000.0));
    const std::size_t hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(hop_ms * fs / 1000.0)));
    if (x.size() < w) throw Error("metrics", "impulse response shorter than one NED window");
    const double expected = std::erfc(1.0 / std::sqrt(2.0));
    NedTrace tr;
    for (std::size_t s = 0; s + w <= x.size(); s += hop) {
        double mean = 0.0;
        for (std::size_t k = s; k < s + w; ++k) mean += x[k];
        mean /= static_cast<double>(w);
        double var = 0.0;
        for (std::size_t k = s; k < s + w; ++k) var += (x[k] - mean) * (x[k] - mean);
        double sd = std::sqrt(var / static_cast<double>(w));
        std::size_t out = 0;
        for (std::size_t k = s; k < s + w; ++k)
            if (std::abs(x[k] - mean) > sd) ++out;
        tr.time_s.push_back((static_cast<double>(s) + 0.5 * static_cast<double>(w)) / fs);
        tr.value.push_back(static_cast<double>(out) / static_cast<double>(w) / expected);
    }
    return tr;
}

std::vector<double> filter(const std::vector<Biquad>& sos, const std::vector<double>& x) {
    std::vector<double> y = x;
    for (const Biquad& q : sos) {
        double z1 = 0.0, z2 = 0.0;  // transposed direct form II
        for (double& v : y) {
            double in = v;
            double out = q.b0 * in + z1;
            z1 = q.b1 * in - q.a1 * out + z2;
            z2 = q.b2 * in - q.a2 * out;
            v = out;
        }
    }
    return y;
}

std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x) {
    const std::size_t pad = std::min<std::size_t>(x.size() + 1, 48000);
    std::vector<double> y(pad, 0.0);
    y.insert(y.end(), x.begin(), x.end());
    y.insert(y.end(), pad, 0.0);
    y = filter(sos, y);
    std::reverse(y.begin(), y.end());
    y = filter(sos, y);
    std::reverse(y.begin(), y.end());
    return {y.begin() + static_cast<long>(pad), y.begin() + static_cast<long>(pad + x.size())};
}

Biquad highpass(double fc, double fs) {
    const double k = std::tan(M_PI * fc / fs);
    const double q = 1.0 / std::sqrt(2.0);
    const double norm = 1.0 / (1.0 + k / q + k * k);
    Biquad b;
    b.b0 = norm;
    b.b1 = -2.0 * norm;
    b.b2 = norm;
    b.a1 = 2.0 * (k * k - 1.0) * norm;
    b.a2 = (1.0 - k / q + k * k) * norm;
    return b;
}

std::vector<double> highpass20(const std::vector<double>& x, double fs) { return filter({highpass(20.0, fs)}, x); }

std::vector<Biquad> octave_band(double fc, double fs) {
    if (fc * std::sqrt(2.0) >= fs / 2.0) throw Error("metrics", "octave band above Nyquist");
    const double c2 = 2.0 * fs;
    const double lo = c2 * std::tan(M_PI * fc / std::sqrt(2.0) / fs);
    const double hi = c2 * std::tan(M_PI * fc * std::sqrt(2.0) / fs);
    const double w0 = std::sqrt(lo * hi);
    // Each pass reaches |H|^2 = 1/sqrt(2) at the edges: Omega^6 = sqrt(2) - 1.
    const double bw = (hi - lo) / std::pow(std::sqrt(2.0) - 1.0, 1.0 / 6.0);

    // Low-pass to band-pass doubles the poles; map all six to z and pair
    // conjugates (or two real poles) into sections with zeros at z = +-1.
    std::vector<cd> zp;
    for (int k = 0; k < 3; ++k) {
        cd pb = std::polar(1.0, M_PI * (k + 2.0) / 3.0) * bw;
        cd disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
        for (cd s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) zp.push_back((1.0 + s / c2) / (1.0 - s / c2));
    }
    std::vector<cd> upper, real;
    for (const cd& z : zp) {
        if (std::abs(z.imag()) < 1e-12 * std::abs(z)) real.push_back(z.real());
        else if (z.imag() > 0) upper.push_back(z);
    }
    if (upper.size() * 2 + real.size() != 6 || real.size() % 2 != 0) throw Error("metrics", "band-pass design failed");

    std::vector<Biquad> sos;
    const double wd = 2.0 * M_PI * fc / fs;
    const cd zc = std::polar(1.0, -wd);
    cd total = 1.0;
    auto add = [&](double a1, double a2) {
        Biquad q;
        q.b0 = 1.0;
        q.b1 = 0.0;
        q.b2 = -1.0;
        q.a1 = a1;
        q.a2 = a2;
        total *= (q.b0 + q.b2 * zc * zc) / (1.0 + q.a1 * zc + q.a2 * zc * zc);
        sos.push_back(q);
    };
    for (const cd& z : upper) add(-2.0 * z.real(), std::norm(z));
    for (std::size_t k = 0; k + 1 < real.size(); k += 2) add(-(real[k].real() + real[k + 1].real()), (real[k] * real[k + 1]).real());
    const double g = std::pow(1.0 / std::abs(total), 1.0 / 3.0);
    for (Biquad& q : sos) {
        q.b0 *= g;
        q.b2 *= g;
    }
    return sos;
}

std::array<std::vector<double>, kBands> octave_filterbank(const std::vector<double>& x, double fs) {
    std::array<std::vector<double>, kBands> out;
    for (int b = 0; b < kBands; ++b) out[b] = filtfilt(octave_band(kBandCenters[b], fs), x);
    return out;
}

MetricsReport compute_metrics(const std::vector<double>& x, double fs, double ned_window_ms) {
    const auto hp = highpass20(x, fs);
    MetricsReport rep;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto decay = [&](const std::vector<double>& sig, double& t, double& e) {
        t = e = nan;
        DecayCurve c;
        try {
            c = edc(sig, fs);
        } catch (const Error&) {
            return;
        }
        try {
            t = t30(c);
        } catch (const Error&) {
        }
        try {
            e = edt_ms(c);
        } catch (const Error&) {
        }
    };
    decay(hp, rep.t30_broadband, rep.edt_broadband);
    const auto bands = octave_filterbank(hp, fs);
    for (int b = 0; b < kBands; ++b) decay(bands[b], rep.t30[b], rep.edt[b]);
    rep.ned = ned(hp, fs, ned_window_ms);
    return rep;
}

}  // namespace arn
