#include "arn/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "arn/error.hpp"
#include "arn/parallel.hpp"

namespace arn {

namespace {

bool coplanar(const Patch& a, const Patch& b) {
    return a.normal.dot(b.normal) > 1.0 - 1e-9 && std::abs(a.normal.dot(b.centroid - a.centroid)) < kEps;
}

// d^100 by repeated squaring; the lobe exponent is fixed.
inline double lobe_pow(double d) {
    double d2 = d * d, d4 = d2 * d2, d8 = d4 * d4, d16 = d8 * d8, d32 = d16 * d16, d64 = d32 * d32;
    return d64 * d32 * d4;
}

inline double lobe_norm() { return (kLobeExponent + 2.0) / (2.0 * M_PI); }

}  // namespace

double geometry_term(const Vec3& x, const Vec3& n_x, const Vec3& x2, const Vec3& n_x2) {
    Vec3 d = x2 - x;
    double r2 = d.squaredNorm();
    if (r2 <= 0.0) return 0.0;
    double r = std::sqrt(r2);
    double c1 = std::max(0.0, n_x.dot(d) / r);
    double c2 = std::max(0.0, -n_x2.dot(d) / r);
    return c1 * c2 / r2;
}

double brdf_eval(double sigma, const Vec3& v_in, const Vec3& v_out, const Vec3& n) {
    Vec3 mirror = 2.0 * n.dot(v_in) * n - v_in;
    double c = std::max(0.0, v_out.dot(mirror));
    return sigma / M_PI + (1.0 - sigma) * lobe_norm() * std::pow(c, kLobeExponent);
}

PathTable enumerate_paths(const PatchSet& ps, const Scene& scene, double fs) {
    if (!(fs > 0)) throw Error("kernel", "sample rate must be positive");
    const int n = static_cast<int>(ps.size());
    const double c = scene.speed_of_sound;
    // Room normals point outwards; radiance leaves a patch along -normal.
    std::vector<double> mean(static_cast<std::size_t>(n) * n, -1.0);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t a) {
        const Patch& pa = ps.patches[a];
        for (int b = static_cast<int>(a) + 1; b < n; ++b) {
            const Patch& pb = ps.patches[b];
            if (coplanar(pa, pb)) continue;
            double sum = 0.0;
            int count = 0;
            for (const auto& x : pa.samples) {
                for (const auto& y : pb.samples) {
                    if (geometry_term(x, -pa.normal, y, -pb.normal) <= 0.0) continue;
                    if (!scene.visible(x, y)) continue;
                    sum += (y - x).norm();
                    ++count;
                }
            }
            if (count > 0) mean[a * n + b] = sum / count;
        }
    });

    PathTable t;
    t.patch_count = n;
    t.index.assign(static_cast<std::size_t>(n) * n, -1);
    t.incoming.resize(n);
    t.outgoing.resize(n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            double d = a < b ? mean[a * n + b] : mean[b * n + a];
            if (a == b || d < 0) continue;
            int id = static_cast<int>(t.lines.size());
            t.lines.push_back({a, b});
            t.distances.push_back(d);
            t.delays.push_back(std::max(1, static_cast<int>(std::lround(d / c * fs))));
            t.index[static_cast<std::size_t>(a * n + b)] = id;
            t.outgoing[a].push_back(id);
            t.incoming[b].push_back(id);
        }
    }
    if (t.lines.empty()) throw Error("kernel", "degenerate scene: no visible patch pairs");
    return t;
}

Eigen::MatrixXd KernelMatrix::dense(const PathTable& paths) const {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(lines), static_cast<Eigen::Index>(lines));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& in = paths.incoming[i];
        const auto& out = paths.outgoing[i];
        for (std::size_t r = 0; r < in.size(); ++r)
            for (std::size_t c = 0; c < out.size(); ++c) s(in[r], out[c]) = blocks[i](r, c);
    }
    return s;
}

KernelMatrix compute_kernel(const PatchSet& ps, const PathTable& paths, const Scene& scene,
                            const KernelConfig& cfg) {
    if (!(cfg.sample_spacing > 0)) throw Error("kernel", "sample spacing must be positive");
    const int n = static_cast<int>(ps.size());
    if (paths.patch_count != n) throw Error("kernel", "path table does not match patch set");

    // Sample points at the requested spacing (may differ from the set's own).
    std::vector<std::vector<Vec3>> samples(n);
    for (int i = 0; i < n; ++i)
        samples[i] = cfg.sample_spacing == ps.sample_spacing ? ps.patches[i].samples
                                                             : sample_points(ps.patches[i], cfg.sample_spacing);

    KernelMatrix k;
    k.lines = paths.size();
    k.blocks.resize(n);
    const double lobe_k = lobe_norm();

    parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
        const int i = static_cast<int>(ii);
        const Patch& pi = ps.patches[i];
        const Vec3 ni = -pi.normal;  // into the room
        const double sigma = scene.materials[pi.material].scattering;
        const auto& in = paths.incoming[i];
        const auto& out = paths.outgoing[i];
        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(in.size()),
                                                      static_cast<Eigen::Index>(out.size()));
        const auto& xi = samples[i];

        struct Incident {
            double w;
            Vec3 mirror;
        };
        std::vector<std::vector<Incident>> inc(in.size());
        std::vector<double> diffuse(in.size());
        std::vector<Vec3> vout;

        for (const Vec3& xp : xi) {
            for (std::size_t r = 0; r < in.size(); ++r) {
                const int h = paths.lines[in[r]].from;
                const Patch& ph = ps.patches[h];
                const double dA = ph.area / static_cast<double>(samples[h].size());
                inc[r].clear();
                double wsum = 0.0;
                for (const Vec3& x : samples[h]) {
                    double g = geometry_term(x, -ph.normal, xp, ni);
                    if (g <= 0.0 || !scene.visible(x, xp)) continue;
                    Vec3 vin = (x - xp).normalized();
                    double w = g * dA;
                    inc[r].push_back({w, 2.0 * ni.dot(vin) * ni - vin});
                    wsum += w;
                }
                diffuse[r] = wsum;
            }
            for (std::size_t c = 0; c < out.size(); ++c) {
                const int j = paths.lines[out[c]].to;
                vout.clear();
                for (const Vec3& x2 : samples[j]) vout.push_back((x2 - xp).normalized());
                const double scale = 1.0 / (static_cast<double>(xi.size()) * static_cast<double>(vout.size()));
                for (std::size_t r = 0; r < in.size(); ++r) {
                    double spec = 0.0;
                    for (const auto& e : inc[r]) {
                        double acc = 0.0;
                        for (const Vec3& vo : vout) {
                            double d = vo.dot(e.mirror);
                            if (d > 0.0) acc += lobe_pow(d);
                        }
                        spec += e.w * acc;
                    }
                    // The diffuse term is the same for every x'' on patch j.
                    double val = sigma / M_PI * diffuse[r] * static_cast<double>(vout.size()) +
                                 (1.0 - sigma) * lobe_k * spec;
                    block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) += scale * val;
                }
            }
        }

        for (Eigen::Index r = 0; r < block.rows(); ++r)
            if (block.row(r).maxCoeff() <= 0.0)
                throw Error("kernel", "isolated patch " + std::to_string(i) + ": incoming line " +
                                          std::to_string(in[r]) + " reflects nowhere");
        if (cfg.normalize) {
            for (Eigen::Index c = 0; c < block.cols(); ++c) {
                double s = block.col(c).sum();
                if (s <= 0.0)
                    throw Error("kernel", "isolated patch " + std::to_string(i) + ": outgoing line " +
                                              std::to_string(out[c]) + " receives nothing");
                block.col(c) /= s;
            }
        }
        k.blocks[i] = std::move(block);
    });
    return k;
}

EnergyReport validate_energy(const KernelMatrix& kernel, const PathTable& paths) {
    EnergyReport rep;
    if (kernel.lines == 0 || kernel.blocks.empty()) {
        rep.pass = false;
        rep.message = "no paths";
        return rep;
    }
    rep.pass = true;
    for (std::size_t i = 0; i < kernel.blocks.size(); ++i) {
        const auto& b = kernel.blocks[i];
        BlockEnergy be;
        be.patch = static_cast<int>(i);
        if (b.size() > 0) {
            be.min_entry = b.minCoeff();
            be.max_entry = b.maxCoeff();
        }
        for (Eigen::Index c = 0; c < b.cols(); ++c) {
            double s = b.col(c).sum();
            if (s > be.max_column_sum || be.worst_column < 0) {
                be.max_column_sum = s;
                be.worst_column = paths.outgoing[i][static_cast<std::size_t>(c)];
            }
            if (b.col(c).cwiseAbs().maxCoeff() == 0.0) ++be.zero_cols;
        }
        for (Eigen::Index r = 0; r < b.rows(); ++r)
            if (b.row(r).cwiseAbs().maxCoeff() == 0.0) ++be.zero_rows;
        if (be.max_column_sum > rep.max_column_sum || rep.worst_block < 0) {
            rep.max_column_sum = be.max_column_sum;
            rep.worst_block = be.patch;
            rep.worst_column = be.worst_column;
        }
        if (be.min_entry < 0.0) {
            rep.pass = false;
            rep.message = "negative entry in block " + std::to_string(i);
        }
        rep.blocks.push_back(be);
    }
    if (rep.max_column_sum > 1.0 + 1e-9) {
        rep.pass = false;
        rep.message = "column sum " + std::to_string(rep.max_column_sum) + " exceeds 1 at line " +
                      std::to_string(rep.worst_column) + " (patch " + std::to_string(rep.worst_block) + ")";
    }
    if (rep.pass) rep.message = "ok";
    return rep;
}

void write_kernel_csv(std::ostream& os, const KernelMatrix& kernel, const PathTable& paths) {
    os << "from_line,to_line,value\n";
    os.precision(17);
    for (std::size_t i = 0; i < kernel.blocks.size(); ++i) {
        const auto& b = kernel.blocks[i];
        for (Eigen::Index r = 0; r < b.rows(); ++r)
            for (Eigen::Index c = 0; c < b.cols(); ++c)
                os << paths.incoming[i][r] << ',' << paths.outgoing[i][c] << ',' << b(r, c) << '\n';
    }
}

KernelMatrix read_kernel_csv(std::istream& is, const PathTable& paths) {
    KernelMatrix k;
    k.lines = paths.size();
    k.blocks.resize(static_cast<std::size_t>(paths.patch_count));
    for (int i = 0; i < paths.patch_count; ++i)
        k.blocks[i] = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(paths.incoming[i].size()),
                                            static_cast<Eigen::Index>(paths.outgoing[i].size()));
    std::string row;
    std::getline(is, row);  // header
    int lineno = 1;
    while (std::getline(is, row)) {
        ++lineno;
        if (row.empty()) continue;
        std::stringstream ss(row);
        int from = 0, to = 0;
        double v = 0.0;
        char c1 = 0, c2 = 0;
        if (!(ss >> from >> c1 >> to >> c2 >> v) || c1 != ',' || c2 != ',')
            throw Error("kernel", "bad kernel csv row " + std::to_string(lineno));
        if (from < 0 || to < 0 || from >= static_cast<int>(paths.size()) || to >= static_cast<int>(paths.size()))
            throw Error("kernel", "kernel csv row " + std::to_string(lineno) + " references unknown line");
        int i = paths.lines[from].to;
        if (paths.lines[to].from != i)
            throw Error("kernel", "kernel csv row " + std::to_string(lineno) + " breaks block structure");
        auto r = std::find(paths.incoming[i].begin(), paths.incoming[i].end(), from) - paths.incoming[i].begin();
        auto c = std::find(paths.outgoing[i].begin(), paths.outgoing[i].end(), to) - paths.outgoing[i].begin();
        k.blocks[i](r, c) = v;
    }
    return k;
}

}  // namespace arn
