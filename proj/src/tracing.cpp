#include "arn/tracing.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "arn/error.hpp"
#include "arn/parallel.hpp"
#include "arn/rng.hpp"

namespace arn {

namespace {

constexpr std::uint64_t kStageInjection = 0x696e6a;
constexpr std::uint64_t kStageDetection = 0x646574;
constexpr std::uint64_t kStageSpread = 0x737072;

Vec3 uniform_sphere(Rng& rng) {
    double z = 1.0 - 2.0 * rng.uniform();
    double phi = 2.0 * M_PI * rng.uniform();
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

// Cosine-weighted direction about the unit vector n.
Vec3 cosine_hemisphere(Rng& rng, const Vec3& n) {
    Vec3 t1 = std::abs(n.x()) < 0.9 ? n.cross(Vec3::UnitX()).normalized() : n.cross(Vec3::UnitY()).normalized();
    Vec3 t2 = n.cross(t1);
    double u1 = rng.uniform(), u2 = rng.uniform();
    double r = std::sqrt(u1);
    double phi = 2.0 * M_PI * u2;
    return (r * std::cos(phi) * t1 + r * std::sin(phi) * t2 + std::sqrt(std::max(0.0, 1.0 - u1)) * n).normalized();
}

std::size_t batch_count(const TraceConfig& cfg) {
    if (cfg.n_rays == 0) throw Error("tracing", "ray count must be at least 1");
    std::size_t b = std::max<std::size_t>(1, cfg.batch);
    return (cfg.n_rays + b - 1) / b;
}

std::size_t batch_size(const TraceConfig& cfg, std::size_t k) {
    std::size_t b = std::max<std::size_t>(1, cfg.batch);
    return std::min(b, cfg.n_rays - k * b);
}

double air_energy(const TraceConfig& cfg, double distance) {
    if (!cfg.air) return 1.0;
    double g = air_broadband_gain(distance, cfg.atmosphere);
    return g * g;
}

}  // namespace

double LineFilter::energy() const {
    if (!fir.empty()) {
        double e = 0.0;
        for (double v : fir) e += v * v;
        return e;
    }
    return gain * gain;
}

void LineFilter::scale(double g) {
    gain *= g;
    for (double& v : fir) v *= g;
}

std::vector<double> line_etendue(const PatchSet& ps, const PathTable& paths, const Scene& scene) {
    std::vector<double> t(paths.size(), 0.0);
    parallel_for(paths.size(), [&](std::size_t l) {
        const Line& ln = paths.lines[l];
        // Symmetric, so compute once per unordered pair.
        if (ln.from > ln.to) return;
        const Patch& a = ps.patches[ln.from];
        const Patch& b = ps.patches[ln.to];
        const double da = a.area / static_cast<double>(a.samples.size());
        const double db = b.area / static_cast<double>(b.samples.size());
        double sum = 0.0;
        for (const auto& x : a.samples)
            for (const auto& y : b.samples) {
                double g = geometry_term(x, -a.normal, y, -b.normal);
                if (g > 0.0 && scene.visible(x, y)) sum += g;
            }
        t[l] = sum * da * db;
    });
    for (std::size_t l = 0; l < paths.size(); ++l) {
        const Line& ln = paths.lines[l];
        if (ln.from > ln.to) t[l] = t[static_cast<std::size_t>(paths.id(ln.to, ln.from))];
    }
    return t;
}

InjectionResult trace_injection(const Scene& scene, const PatchSet& ps, const PathTable& paths, int K,
                                const std::vector<double>& etendue, const TraceConfig& cfg) {
    if (K < 0) throw Error("tracing", "injection order must be >= 0");
    if (etendue.size() != paths.size()) throw Error("tracing", "etendue does not match path table");
    const std::size_t nb = batch_count(cfg);
    const double ray_power = 4.0 * M_PI / static_cast<double>(cfg.n_rays);
    const double c = scene.speed_of_sound;

    struct Record {
        int line;
        int bin;
        double time;
        double energy;
    };
    struct Batch {
        std::vector<Record> recs;
        std::size_t escaped = 0;
        std::size_t unassigned = 0;
    };
    std::vector<Batch> batches(nb);

    parallel_for(nb, [&](std::size_t bi) {
        Rng rng(derive_seed(cfg.seed, kStageInjection, bi));
        Batch& out = batches[bi];
        const std::size_t count = batch_size(cfg, bi);
        for (std::size_t k = 0; k < count; ++k) {
            Vec3 dir = uniform_sphere(rng);
            double energy = ray_power * scene.source.gain(dir);
            Vec3 pos = scene.source.pos;
            double travelled = 0.0;
            double arrival = 0.0;
            int patch_i = -1;
            bool lost = false;
            for (int hit = 1; hit <= K + 2; ++hit) {
                auto h = ray_intersect(scene, ps, pos, dir);
                if (!h) {
                    lost = true;
                    break;
                }
                travelled += h->distance;
                const Patch& p = ps.patches[h->patch];
                if (hit == K + 2) {
                    int line = paths.id(patch_i, h->patch);
                    if (line < 0) {
                        ++out.unassigned;
                    } else if (energy > 0.0) {
                        out.recs.push_back({line, static_cast<int>(std::lround(arrival * cfg.fs)), arrival, energy});
                    }
                    break;
                }
                const Material& mat = scene.materials[p.material];
                if (hit <= K) energy *= mat.broadband();
                if (hit == K + 1) {
                    patch_i = h->patch;
                    arrival = travelled / c;
                    energy *= air_energy(cfg, travelled);
                }
                const Vec3 n = -p.normal;  // into the room
                if (rng.uniform() < mat.scattering) {
                    dir = cosine_hemisphere(rng, n);
                } else {
                    dir = dir - 2.0 * dir.dot(n) * n;
                }
                pos = h->point + kEps * n;
            }
            if (lost) ++out.escaped;
        }
    });

    InjectionResult res;
    const std::size_t m = paths.size();
    std::vector<double> power(m, 0.0), tsum(m, 0.0);
    std::vector<int> lo(m, 1 << 30), hi(m, -1);
    for (const auto& b : batches) {
        res.escaped += b.escaped;
        res.unassigned += b.unassigned;
        for (const auto& r : b.recs) {
            power[r.line] += r.energy;
            tsum[r.line] += r.energy * r.time;
            lo[r.line] = std::min(lo[r.line], r.bin);
            hi[r.line] = std::max(hi[r.line], r.bin);
        }
    }
    res.echograms.resize(m);
    for (std::size_t l = 0; l < m; ++l) {
        Echogram& e = res.echograms[l];
        if (hi[l] >= 0) {
            e.first = lo[l];
            e.bins.assign(static_cast<std::size_t>(hi[l] - lo[l] + 1), 0.0);
        }
    }
    for (const auto& b : batches)
        for (const auto& r : b.recs) {
            Echogram& e = res.echograms[r.line];
            e.bins[static_cast<std::size_t>(r.bin - e.first)] += r.energy;
            e.ray_count += 1;
        }
    res.filters.resize(m);
    for (std::size_t l = 0; l < m; ++l) {
        Echogram& e = res.echograms[l];
        e.total_energy = power[l];
        LineFilter& f = res.filters[l];
        if (power[l] <= 0.0 || etendue[l] <= 0.0) continue;
        if (cfg.spread) {
            f = spread_fir(e, etendue[l], derive_seed(cfg.seed, kStageSpread, l));
        } else {
            f.gain = std::sqrt(power[l] / etendue[l]);
            f.delay = static_cast<int>(std::lround(tsum[l] / power[l] * cfg.fs));
        }
    }
    return res;
}

LineFilter spread_fir(const Echogram& e, double etendue, std::uint64_t seed) {
    LineFilter f;
    if (e.bins.empty() || e.total_energy <= 0.0 || etendue <= 0.0) return f;
    Rng rng(seed);
    f.delay = e.first;
    f.fir.resize(e.bins.size());
    for (std::size_t k = 0; k < e.bins.size(); ++k) f.fir[k] = rng.sign() * std::sqrt(e.bins[k] / etendue);
    return f;
}

DetectionResult trace_detection(const Scene& scene, const PatchSet& ps, const PathTable& paths,
                                const TraceConfig& cfg) {
    const std::size_t nb = batch_count(cfg);
    const double dw = 4.0 * M_PI / static_cast<double>(cfg.n_rays);
    const double c = scene.speed_of_sound;
    const Vec3 xr = scene.receiver.pos;

    struct Record {
        int line;
        double weight;
        double weight_air;
        double distance;
    };
    struct Batch {
        std::vector<Record> recs;
        std::size_t unassigned = 0;
    };
    std::vector<Batch> batches(nb);
    parallel_for(nb, [&](std::size_t bi) {
        Rng rng(derive_seed(cfg.seed, kStageDetection, bi));
        Batch& out = batches[bi];
        const std::size_t count = batch_size(cfg, bi);
        for (std::size_t k = 0; k < count; ++k) {
            Vec3 w = uniform_sphere(rng);
            auto hi = ray_intersect(scene, ps, xr, w);
            auto hj = ray_intersect(scene, ps, xr, -w);
            if (!hi || !hj) {
                ++out.unassigned;
                continue;
            }
            int line = paths.id(hi->patch, hj->patch);
            if (line < 0) {
                ++out.unassigned;
                continue;
            }
            double weight = dw * scene.receiver.gain(w);
            out.recs.push_back({line, weight, weight * air_energy(cfg, hi->distance), hi->distance});
        }
    });

    DetectionResult res;
    const std::size_t m = paths.size();
    std::vector<double> wsum(m, 0.0), wair(m, 0.0), dsum(m, 0.0);
    for (const auto& b : batches) {
        res.unassigned += b.unassigned;
        for (const auto& r : b.recs) {
            wsum[r.line] += r.weight;
            wair[r.line] += r.weight_air;
            dsum[r.line] += r.weight * r.distance;
        }
    }
    res.filters.resize(m);
    res.solid_angle = wsum;
    for (std::size_t l = 0; l < m; ++l) {
        res.total_solid_angle += wsum[l];
        if (wsum[l] <= 0.0) continue;
        const Patch& pi = ps.patches[paths.lines[l].from];
        double r = scene.materials[pi.material].broadband();
        res.filters[l].gain = std::sqrt(wair[l] * r);
        res.filters[l].delay = static_cast<int>(std::lround(dsum[l] / wsum[l] / c * cfg.fs));
    }
    if (res.total_solid_angle <= 0.0) throw Error("tracing", "receiver occluded everywhere");
    return res;
}

std::vector<ImageSource> ism_images(const Scene& scene, int K, const IsmConfig& cfg) {
    if (K < 0) throw Error("tracing", "bypass order must be >= 0");
    const Vec3 xs = scene.source.pos;
    const Vec3 xr = scene.receiver.pos;
    const double c = scene.speed_of_sound;
    std::vector<ImageSource> out;

    // Walks back from the receiver through the reflection points; returns
    // the emission direction at the source or nothing if the path is
    // invalid or occluded.
    auto trace_back = [&](const std::vector<int>& walls, const std::vector<Vec3>& images) -> std::optional<Vec3> {
        Vec3 cur = xr;
        for (int m = static_cast<int>(walls.size()) - 1; m >= 0; --m) {
            const Polygon& p = scene.polygons[walls[m]];
            Vec3 seg = images[m + 1] - cur;
            double denom = p.normal.dot(seg);
            if (std::abs(denom) < 1e-15) return std::nullopt;
            double t = (p.offset - p.normal.dot(cur)) / denom;
            // t = 0: the previous reflection point lies on this plane too,
            // i.e. the path hits the edge between both walls.
            if (std::abs(t) <= 1e-12) t = 0.0;
            if (t < 0.0 || t >= 1.0 - 1e-12) return std::nullopt;
            if (t == 0.0 && m + 1 == static_cast<int>(walls.size())) return std::nullopt;
            Vec3 q = cur + t * seg;
            if (!p.contains(q)) return std::nullopt;
            if (t > 0.0 && !scene.visible(cur, q)) return std::nullopt;
            cur = q;
        }
        if (!scene.visible(cur, xs)) return std::nullopt;
        return (cur - xs).normalized();
    };

    std::vector<int> walls;
    std::vector<Vec3> images = {xs};
    std::function<void()> recurse = [&] {
        const Vec3 img = images.back();
        // An edge hit is reached by both wall orders; keep one image.
        auto seen = [&] {
            for (const auto& o : out)
                if ((o.position - img).norm() < 1e-9) return true;
            return false;
        };
        if (auto emit = trace_back(walls, images); emit && !seen()) {
            ImageSource s;
            s.walls = walls;
            s.position = img;
            s.distance = (xr - img).norm();
            double amp = 1.0 / s.distance;
            for (int w : walls) amp *= std::sqrt(scene.material_of(w).broadband());
            if (cfg.air) amp *= air_broadband_gain(s.distance, cfg.atmosphere);
            amp *= std::sqrt(scene.source.gain(*emit) * scene.receiver.gain((img - xr).normalized()));
            s.amplitude = amp;
            s.delay = static_cast<int>(std::lround(s.distance / c * cfg.fs));
            out.push_back(std::move(s));
        }
        if (static_cast<int>(walls.size()) == K) return;
        for (std::size_t p = 0; p < scene.polygons.size(); ++p) {
            const Polygon& poly = scene.polygons[p];
            double side = poly.offset - poly.normal.dot(img);
            if (side <= kEps) continue;  // image behind this plane
            walls.push_back(static_cast<int>(p));
            images.push_back(img + 2.0 * side * poly.normal);
            recurse();
            images.pop_back();
            walls.pop_back();
        }
    };
    recurse();
    return out;
}

LineFilter ism_bypass(const Scene& scene, int K, const IsmConfig& cfg) {
    auto images = ism_images(scene, K, cfg);
    LineFilter f;
    int len = 1;
    for (const auto& s : images) len = std::max(len, s.delay + 1);
    f.fir.assign(static_cast<std::size_t>(len), 0.0);
    for (const auto& s : images) f.fir[static_cast<std::size_t>(s.delay)] += s.amplitude;
    return f;
}

}  // namespace arn
