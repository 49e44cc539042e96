#include "arn/matrices.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "arn/error.hpp"
#include "arn/parallel.hpp"
#include "arn/rng.hpp"

namespace arn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(Design d) {
    switch (d) {
        case Design::householder: return "householder";
        case Design::sinkhorn: return "sinkhorn";
        case Design::uniform: return "uniform";
    }
    return "?";
}

Design parse_design(const std::string& s) {
    if (s == "householder") return Design::householder;
    if (s == "sinkhorn") return Design::sinkhorn;
    if (s == "uniform") return Design::uniform;
    throw Error("matrices", "unknown design '" + s + "' (expected householder, sinkhorn or uniform)");
}

Permutation specular_permutation(const MatrixXd& block) {
    const Index m = block.rows();
    if (block.cols() != m) throw Error("matrices", "specular permutation needs a square block");
    Permutation perm(static_cast<std::size_t>(m), -1);
    std::vector<char> row_used(m, 0), col_used(m, 0);
    for (Index step = 0; step < m; ++step) {
        Index br = -1, bc = -1;
        double best = -1.0;
        for (Index r = 0; r < m; ++r) {
            if (row_used[r]) continue;
            for (Index c = 0; c < m; ++c) {
                if (col_used[c]) continue;
                if (br < 0 || block(r, c) > best) {
                    best = block(r, c);
                    br = r;
                    bc = c;
                }
            }
        }
        perm[br] = static_cast<int>(bc);
        row_used[br] = 1;
        col_used[bc] = 1;
    }
    return perm;
}

bool is_bijection(const Permutation& p) {
    std::vector<char> seen(p.size(), 0);
    for (int c : p) {
        if (c < 0 || c >= static_cast<int>(p.size()) || seen[c]) return false;
        seen[c] = 1;
    }
    return true;
}

MatrixXd householder_block(const Permutation& perm) {
    const Index m = static_cast<Index>(perm.size());
    if (m < 1) throw Error("matrices", "empty block");
    MatrixXd a = MatrixXd::Constant(m, m, 2.0 / m);
    for (Index r = 0; r < m; ++r) a(r, perm[r]) -= 1.0;
    return a;
}

MatrixXd uniform_block(const Permutation& perm, double sigma) {
    const Index m = static_cast<Index>(perm.size());
    if (m < 1) throw Error("matrices", "empty block");
    if (!(sigma >= 0.0 && sigma <= 1.0)) throw Error("matrices", "scattering outside [0,1]");
    if (m == 1) return MatrixXd::Ones(1, 1);
    MatrixXd a = MatrixXd::Constant(m, m, sigma / static_cast<double>(m - 1));
    for (Index r = 0; r < m; ++r) a(r, perm[r]) = 1.0 - sigma;
    return a;
}

SinkhornResult sinkhorn_balance(const MatrixXd& block, double tol, int max_iter) {
    const Index m = block.rows();
    if (block.cols() != m) throw Error("matrices", "sinkhorn needs a square block");
    if (block.size() > 0 && block.minCoeff() < 0.0) throw Error("matrices", "sinkhorn needs a nonnegative block");
    VectorXd x = VectorXd::Ones(m), y = VectorXd::Ones(m);
    auto deviation = [&] {
        double d = 0.0;
        VectorXd rs = x.asDiagonal() * block * y;
        VectorXd cs = (x.asDiagonal() * block * y.asDiagonal()).colwise().sum().transpose();
        for (Index k = 0; k < m; ++k) d = std::max({d, std::abs(rs(k) - 1.0), std::abs(cs(k) - 1.0)});
        return d;
    };
    SinkhornResult res;
    double dev = deviation();
    int it = 0;
    while (dev >= tol && it < max_iter) {
        VectorXd r = block * y;
        for (Index k = 0; k < m; ++k) x(k) = 1.0 / r(k);
        VectorXd c = block.transpose() * x;
        for (Index k = 0; k < m; ++k) y(k) = 1.0 / c(k);
        ++it;
        double big = std::max(x.cwiseAbs().maxCoeff(), y.cwiseAbs().maxCoeff());
        if (!std::isfinite(big) || big > 1e12)
            throw Error("matrices", "no total support (scaling exceeded 1e12 after " + std::to_string(it) + " iterations)");
        dev = deviation();
    }
    if (dev > 1e-6)
        throw Error("matrices", "no total support (deviation " + std::to_string(dev) + " after " +
                                    std::to_string(it) + " iterations)");
    double g = std::exp(y.array().log().mean());
    y /= g;
    x *= g;
    res.row_scale = x;
    res.col_scale = y;
    res.balanced = x.asDiagonal() * block * y.asDiagonal();
    res.iterations = it;
    res.deviation = dev;
    return res;
}

MatrixXd polar(const MatrixXd& m) {
    if (m.rows() <= 16) {
        Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
        return svd.matrixU() * svd.matrixV().transpose();
    }
    Eigen::BDCSVD<MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

double orthogonality_error(const MatrixXd& b) {
    return (b.transpose() * b - MatrixXd::Identity(b.cols(), b.cols())).cwiseAbs().maxCoeff();
}

namespace {

double residual(const MatrixXd& b, const MatrixXd& t) { return (b.cwiseProduct(b) - t).norm(); }

MatrixXd sign_of(const MatrixXd& b, const MatrixXd& prev) {
    MatrixXd s = prev;
    for (Index k = 0; k < b.size(); ++k) {
        if (b(k) > 0) s(k) = 1.0;
        else if (b(k) < 0) s(k) = -1.0;
    }
    return s;
}

struct Candidate {
    MatrixXd b;
    double res;
    int iterations;
};

// Alternate polar projection and re-signing; keep the best iterate.
Candidate fixed_point(MatrixXd s, const MatrixXd& mag, const MatrixXd& t, int max_iter) {
    Candidate best{MatrixXd(), 1e300, 0};
    for (int it = 0; it < max_iter; ++it) {
        MatrixXd b = polar(s.cwiseProduct(mag));
        double r = residual(b, t);
        if (r < best.res) best = {b, r, it + 1};
        MatrixXd next = sign_of(b, s);
        if (next == s) break;
        s = std::move(next);
    }
    return best;
}

// Gradient descent of ||B o B - T||_F^2 on the orthogonal group with a
// Cayley retraction, Barzilai-Borwein steps and backtracking.
void polish(Candidate& c, const MatrixXd& t, int iters) {
    const Index m = t.rows();
    const MatrixXd eye = MatrixXd::Identity(m, m);
    MatrixXd b = c.b;
    double f = std::pow(residual(b, t), 2);
    auto skew_grad = [&](const MatrixXd& x) {
        MatrixXd g = 4.0 * (x.cwiseProduct(x) - t).cwiseProduct(x);
        return MatrixXd(x.transpose() * g - g.transpose() * x);
    };
    MatrixXd omega = skew_grad(b), prev_omega;
    double eta = 0.5, prev_eta = 0.0;
    for (int it = 0; it < iters && f > 1e-30; ++it) {
        if (omega.norm() < 1e-14) break;
        if (it > 0) {
            // step s = -prev_eta * prev_omega, gradient change y = omega - prev_omega
            const MatrixXd y = omega - prev_omega;
            const double sy = -prev_eta * (prev_omega.cwiseProduct(y)).sum();
            const double ss = prev_eta * prev_eta * prev_omega.squaredNorm();
            if (sy > 1e-300) eta = std::clamp(ss / sy, 1e-8, 1e8);
        }
        bool moved = false;
        const double before = f;
        for (int ls = 0; ls < 40; ++ls) {
            const MatrixXd x = -eta * omega;
            const MatrixXd cay = (eye - 0.5 * x).partialPivLu().solve(eye + 0.5 * x);
            MatrixXd nb = b * cay;
            const double nf = std::pow(residual(nb, t), 2);
            if (nf < f) {
                b = std::move(nb);
                f = nf;
                moved = true;
                break;
            }
            eta *= 0.5;
        }
        if (!moved || before - f < 1e-6 * before) break;
        prev_omega = std::move(omega);
        prev_eta = eta;
        omega = skew_grad(b);
    }
    b = polar(b);  // scrub accumulated rounding
    const double r = residual(b, t);
    if (r < c.res) {
        c.b = std::move(b);
        c.res = r;
    }
}

}  // namespace

UnilosslessResult closest_unilossless(const MatrixXd& target, const UnilosslessConfig& cfg) {
    const Index m = target.rows();
    if (target.cols() != m || m == 0) throw Error("matrices", "closest_unilossless needs a square block");
    if (target.minCoeff() < -1e-12) throw Error("matrices", "target has negative entries");
    const double ds = std::max((target.rowwise().sum().array() - 1.0).abs().maxCoeff(),
                               (target.colwise().sum().array() - 1.0).abs().maxCoeff());
    if (ds > 1e-8) throw Error("matrices", "target is not doubly stochastic (deviation " + std::to_string(ds) + ")");
    if (m == 1) return {MatrixXd::Ones(1, 1), std::abs(1.0 - target(0, 0)), 0};

    const MatrixXd mag = target.cwiseMax(0.0).cwiseSqrt();
    const Permutation perm = specular_permutation(target);
    std::vector<int> inv(static_cast<std::size_t>(m));
    for (Index r = 0; r < m; ++r) inv[perm[r]] = static_cast<int>(r);

    // Heuristic start: +1 on specular entries, antisymmetric elsewhere in the
    // permuted frame so that S o sqrt(T) is close to I + skew.
    std::vector<MatrixXd> starts;
    MatrixXd s0(m, m);
    for (Index r = 0; r < m; ++r)
        for (Index c = 0; c < m; ++c) s0(r, c) = (perm[r] == c) ? 1.0 : (inv[c] > r ? 1.0 : -1.0);
    starts.push_back(s0);

    if (m <= 4) {
        // All sign classes up to row/column flips: first row and column +1.
        const int free = static_cast<int>((m - 1) * (m - 1));
        for (long code = 0; code < (1L << free); ++code) {
            MatrixXd s = MatrixXd::Ones(m, m);
            for (int k = 0; k < free; ++k)
                if (code >> k & 1) s(1 + k / (m - 1), 1 + k % (m - 1)) = -1.0;
            starts.push_back(s);
        }
    } else {
        Rng rng(cfg.seed);
        for (int k = 0; k < cfg.restarts; ++k) {
            MatrixXd s(m, m);
            for (Index r = 0; r < m; ++r)
                for (Index c = 0; c < m; ++c) s(r, c) = perm[r] == c ? 1.0 : rng.sign();
            starts.push_back(s);
        }
    }

    std::vector<Candidate> cands;
    for (auto& s : starts) cands.push_back(fixed_point(s, mag, target, cfg.max_iter));
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.res < b.res; });
    // Polish the three best candidates with distinct sign patterns.
    std::vector<Candidate> picked;
    std::vector<MatrixXd> patterns;
    for (auto& c : cands) {
        if (picked.size() == 3) break;
        MatrixXd sp = c.b.cwiseSign();
        if (std::find(patterns.begin(), patterns.end(), sp) != patterns.end()) continue;
        patterns.push_back(std::move(sp));
        polish(c, target, cfg.polish_iter);
        picked.push_back(std::move(c));
    }
    auto best = std::min_element(picked.begin(), picked.end(),
                                 [](const Candidate& a, const Candidate& b) { return a.res < b.res; });
    if (orthogonality_error(best->b) > 1e-9)
        throw Error("matrices", "closest_unilossless failed to converge (residual " + std::to_string(best->res) + ")");
    return {best->b, best->res, best->iterations};
}

MatrixXd FeedbackMatrix::dense(const PathTable& paths) const {
    MatrixXd a = MatrixXd::Zero(static_cast<Index>(paths.size()), static_cast<Index>(paths.size()));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& in = paths.incoming[i];
        const auto& out = paths.outgoing[i];
        for (std::size_t r = 0; r < in.size(); ++r)
            for (std::size_t c = 0; c < out.size(); ++c) a(in[r], out[c]) = blocks[i].A(r, c);
    }
    return a;
}

double FeedbackMatrix::max_orthogonality_error() const {
    double e = 0.0;
    for (const auto& b : blocks) e = std::max(e, b.orthogonality);
    return e;
}

FeedbackMatrix assemble_feedback(const KernelMatrix& kernel, const PathTable& paths, Design design,
                                 const std::vector<double>& patch_sigma, const UnilosslessConfig& cfg) {
    if (kernel.blocks.size() != static_cast<std::size_t>(paths.patch_count))
        throw Error("matrices", "kernel does not match path table");
    FeedbackMatrix fm;
    fm.design = design;
    fm.blocks.resize(kernel.blocks.size());
    parallel_for(kernel.blocks.size(), [&](std::size_t i) {
        const MatrixXd& s = kernel.blocks[i];
        FeedbackBlock fb;
        const Index m = s.rows();
        fb.row_scale = VectorXd::Ones(m);
        fb.col_scale = VectorXd::Ones(m);
        if (m == 0) {
            fm.blocks[i] = std::move(fb);
            return;
        }
        fb.perm = specular_permutation(s);
        UnilosslessConfig local = cfg;
        local.seed = derive_seed(cfg.seed, 0x6d6174, i);
        try {
            switch (design) {
                case Design::householder:
                    fb.A = householder_block(fb.perm);
                    break;
                case Design::uniform: {
                    auto u = closest_unilossless(uniform_block(fb.perm, patch_sigma.at(i)), local);
                    fb.A = std::move(u.B);
                    fb.residual = u.residual;
                    break;
                }
                case Design::sinkhorn: {
                    auto sk = sinkhorn_balance(s);
                    auto u = closest_unilossless(sk.balanced, local);
                    fb.A = std::move(u.B);
                    fb.residual = u.residual;
                    fb.row_scale = sk.row_scale;
                    fb.col_scale = sk.col_scale;
                    fb.sinkhorn_iterations = sk.iterations;
                    break;
                }
            }
        } catch (const Error& e) {
            throw Error(e.module(), "patch " + std::to_string(i) + ": " + e.detail());
        }
        fb.orthogonality = orthogonality_error(fb.A);
        fm.blocks[i] = std::move(fb);
    });
    return fm;
}

VectorXd sinkhorn_similarity(const FeedbackMatrix& fm, const PathTable& paths) {
    VectorXd e = VectorXd::Ones(static_cast<Index>(paths.size()));
    if (fm.design != Design::sinkhorn) return e;
    for (std::size_t l = 0; l < paths.size(); ++l) {
        const Line& ln = paths.lines[l];
        const auto& in = paths.incoming[ln.to];
        const auto& out = paths.outgoing[ln.from];
        auto r = std::find(in.begin(), in.end(), static_cast<int>(l)) - in.begin();
        auto c = std::find(out.begin(), out.end(), static_cast<int>(l)) - out.begin();
        double e1 = fm.blocks[ln.to].row_scale(r);
        double e2 = fm.blocks[ln.from].col_scale(c);
        e(static_cast<Index>(l)) = std::sqrt(e1 / e2);
    }
    return e;
}

}  // namespace arn
