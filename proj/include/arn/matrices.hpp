#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "arn/kernel.hpp"

namespace arn {

enum class Design { householder, sinkhorn, uniform };

std::string to_string(Design d);
Design parse_design(const std::string& s);

// perm[r] = selected column of row r.
using Permutation = std::vector<int>;

// Greedy: repeatedly take the largest remaining entry, ties to the smallest
// row then column, and retire its row and column.
Permutation specular_permutation(const Eigen::MatrixXd& block);
bool is_bijection(const Permutation& p);

// (2-M)/M on the selected entries, 2/M elsewhere.
Eigen::MatrixXd householder_block(const Permutation& perm);

// 1-sigma on the selected entries, sigma/(M-1) elsewhere.
Eigen::MatrixXd uniform_block(const Permutation& perm, double sigma);

struct SinkhornResult {
    Eigen::MatrixXd balanced;  // diag(row_scale) * block * diag(col_scale)
    Eigen::VectorXd row_scale;
    Eigen::VectorXd col_scale;
    int iterations = 0;
    double deviation = 0.0;
};

// The scalings are fixed up to a constant; they are normalised so that the
// column scalings have unit geometric mean.
SinkhornResult sinkhorn_balance(const Eigen::MatrixXd& block, double tol = 1e-10, int max_iter = 10000);

struct UnilosslessResult {
    Eigen::MatrixXd B;
    double residual = 0.0;  // ||B o B - T||_F
    int iterations = 0;
};

struct UnilosslessConfig {
    int max_iter = 500;
    int restarts = 8;            // random sign restarts for blocks larger than 4
    int polish_iter = 200;       // gradient steps on the orthogonal group
    std::uint64_t seed = 0x5eed;
};

// Signed orthogonal B whose element-wise square is as close as possible to
// the doubly stochastic target T.
UnilosslessResult closest_unilossless(const Eigen::MatrixXd& target, const UnilosslessConfig& cfg = {});

// Nearest orthogonal matrix (polar factor) via SVD.
Eigen::MatrixXd polar(const Eigen::MatrixXd& m);

struct FeedbackBlock {
    Eigen::MatrixXd A;  // rows incoming, columns outgoing; y_out = A^T y_in
    Permutation perm;
    double residual = 0.0;         // ||A o A - target||_F for optimised designs
    double orthogonality = 0.0;    // max |A^T A - I|
    Eigen::VectorXd row_scale;     // Sinkhorn E1 (energy), ones otherwise
    Eigen::VectorXd col_scale;     // Sinkhorn E2
    int sinkhorn_iterations = 0;
};

struct FeedbackMatrix {
    Design design = Design::householder;
    std::vector<FeedbackBlock> blocks;

    Eigen::MatrixXd dense(const PathTable& paths) const;
    double max_orthogonality_error() const;
};

FeedbackMatrix assemble_feedback(const KernelMatrix& kernel, const PathTable& paths, Design design,
                                 const std::vector<double>& patch_sigma, const UnilosslessConfig& cfg = {});

// Per-line energy factor E_l = sqrt(E1_l / E2_l) of the diagonal similarity
// that best maps the balanced blocks back onto the kernel. The loop stays
// orthogonal; injectors are scaled by E_l^-1/2 and detectors by E_l^1/2 (in
// pressure). Ones for the other designs.
Eigen::VectorXd sinkhorn_similarity(const FeedbackMatrix& fm, const PathTable& paths);

double orthogonality_error(const Eigen::MatrixXd& B);

}  // namespace arn
