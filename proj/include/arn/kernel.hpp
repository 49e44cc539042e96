#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "arn/scene.hpp"

namespace arn {

struct Line {
    int from = 0;
    int to = 0;
};

// Directed visible patch pairs. Line ids ascend with (from, to).
struct PathTable {
    int patch_count = 0;
    std::vector<Line> lines;
    std::vector<int> delays;         // samples, >= 1
    std::vector<double> distances;   // mean sample-pair distance (m)
    std::vector<std::vector<int>> incoming;  // per patch: lines h->i, ascending h
    std::vector<std::vector<int>> outgoing;  // per patch: lines i->j, ascending j
    std::vector<int> index;          // from * patch_count + to -> line id or -1

    std::size_t size() const { return lines.size(); }
    int id(int from, int to) const { return index[static_cast<std::size_t>(from * patch_count + to)]; }
};

PathTable enumerate_paths(const PatchSet& patches, const Scene& scene, double fs);

// Point-to-point form factor kernel (1/m^2).
double geometry_term(const Vec3& x, const Vec3& n_x, const Vec3& x2, const Vec3& n_x2);

// Pseudospecular BRDF: sigma/pi plus a cosine-power lobe around the mirror
// direction, normalised so each part integrates to one over the
// cosine-weighted hemisphere. v_in points from the surface towards where the
// energy came from.
inline constexpr double kLobeExponent = 100.0;
double brdf_eval(double scattering, const Vec3& v_in, const Vec3& v_out, const Vec3& n);
inline double brdf_eval(const Material& m, const Vec3& v_in, const Vec3& v_out, const Vec3& n) {
    return brdf_eval(m.scattering, v_in, v_out, n);
}

struct KernelConfig {
    double sample_spacing = 0.5;
    std::uint64_t seed = 0;  // kept for interface stability; quadrature is exhaustive
    double fs = 48000.0;
    bool normalize = true;   // scale each column to unit sum
};

// One dense block per patch i: rows are incoming lines h->i in
// paths.incoming[i] order, columns are outgoing lines i->j in
// paths.outgoing[i] order. Entry (h, j) is the share of radiance leaving
// along i->j that arrived along h->i, so columns sum to one.
struct KernelMatrix {
    std::vector<Eigen::MatrixXd> blocks;
    std::size_t lines = 0;

    Eigen::MatrixXd dense(const PathTable& paths) const;
};

KernelMatrix compute_kernel(const PatchSet& patches, const PathTable& paths, const Scene& scene,
                            const KernelConfig& cfg);

struct BlockEnergy {
    int patch = 0;
    double max_column_sum = 0.0;
    int worst_column = -1;  // global line id
    double min_entry = 0.0;
    double max_entry = 0.0;
    int zero_rows = 0;
    int zero_cols = 0;
};

struct EnergyReport {
    bool pass = false;
    double max_column_sum = 0.0;
    int worst_block = -1;
    int worst_column = -1;  // global line id
    std::string message;
    std::vector<BlockEnergy> blocks;
};

EnergyReport validate_energy(const KernelMatrix& kernel, const PathTable& paths);

// CSV of (from_line, to_line, value) with from_line the incoming line.
void write_kernel_csv(std::ostream& os, const KernelMatrix& kernel, const PathTable& paths);
KernelMatrix read_kernel_csv(std::istream& is, const PathTable& paths);

}  // namespace arn
