#include <doctest.h>

#include <cmath>

#include "arn/error.hpp"
#include "arn/kernel.hpp"
#include "arn/matrices.hpp"
#include "helpers.hpp"

using Eigen::MatrixXd;

namespace {

MatrixXd mat(std::initializer_list<std::initializer_list<double>> rows) {
    MatrixXd m(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
    int r = 0;
    for (const auto& row : rows) {
        int c = 0;
        for (double v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

double max_abs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("specular permutation is greedy on the largest entries") {
    CHECK(arn::specular_permutation(mat({{0.9, 0.1}, {0.2, 0.8}})) == arn::Permutation{0, 1});
    CHECK(arn::specular_permutation(mat({{0.9, 0.8}, {0.85, 0.1}})) == arn::Permutation{0, 1});
    CHECK(arn::specular_permutation(mat({{0.3}})) == arn::Permutation{0});
    CHECK(arn::specular_permutation(mat({{0.1, 0.7}, {0.7, 0.1}})) == arn::Permutation{1, 0});
    // ties go to the first entry in row-major order
    CHECK(arn::specular_permutation(mat({{0.5, 0.5}, {0.5, 0.5}})) == arn::Permutation{0, 1});
    CHECK(arn::is_bijection({2, 0, 1}));
    CHECK_FALSE(arn::is_bijection({0, 0, 1}));
}

TEST_CASE("householder blocks") {
    MatrixXd h4 = arn::householder_block({0, 1, 2, 3});
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) CHECK(h4(r, c) == doctest::Approx(r == c ? -0.5 : 0.5));
    MatrixXd h2 = arn::householder_block({0, 1});
    CHECK(max_abs(h2 - mat({{0, 1}, {1, 0}})) < 1e-15);
    CHECK(arn::householder_block({0})(0, 0) == 1.0);
    MatrixXd hp = arn::householder_block({2, 0, 3, 1, 4});
    CHECK(arn::orthogonality_error(hp) < 1e-15);
    CHECK(hp(0, 2) == doctest::Approx(-0.6));
    CHECK(hp(0, 0) == doctest::Approx(0.4));
}

TEST_CASE("uniform blocks") {
    MatrixXd u = arn::uniform_block({0, 1, 2, 3, 4}, 0.25);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) CHECK(u(r, c) == doctest::Approx(r == c ? 0.75 : 0.0625));
    MatrixXd p = arn::uniform_block({1, 2, 0}, 0.0);
    CHECK(max_abs(p - mat({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}})) == 0.0);
    MatrixXd d = arn::uniform_block({0, 1, 2}, 1.0);
    CHECK(max_abs(d - mat({{0, 0.5, 0.5}, {0.5, 0, 0.5}, {0.5, 0.5, 0}})) < 1e-15);
    CHECK(max_abs(d.rowwise().sum() - Eigen::VectorXd::Ones(3)) < 1e-15);
    CHECK(max_abs(d.colwise().sum() - Eigen::RowVectorXd::Ones(3)) < 1e-15);
}

TEST_CASE("sinkhorn 2x2 closed form") {
    auto r = arn::sinkhorn_balance(mat({{1, 2}, {3, 4}}));
    // tests/oracles/sinkhorn_2x2.py
    const double x = 0.449489742783178;
    CHECK(max_abs(r.balanced - mat({{x, 1 - x}, {1 - x, x}})) < 1e-9);
    CHECK(r.deviation < 1e-10);
    MatrixXd rebuilt = r.row_scale.asDiagonal() * mat({{1, 2}, {3, 4}}) * r.col_scale.asDiagonal();
    CHECK(max_abs(rebuilt - r.balanced) < 1e-12);
}

TEST_CASE("sinkhorn keeps a doubly stochastic block") {
    MatrixXd ds = arn::uniform_block({0, 1, 2, 3}, 0.3);
    auto r = arn::sinkhorn_balance(ds);
    CHECK(r.iterations == 0);
    CHECK(r.deviation < 1e-15);
    CHECK(max_abs(r.balanced - ds) < 1e-15);
}

TEST_CASE("sinkhorn reports missing total support") {
    CHECK_THROWS_WITH_AS(arn::sinkhorn_balance(mat({{0.5, 0.5}, {1, 0}})), doctest::Contains("no total support"),
                         arn::Error);
}

TEST_CASE("closest unilossless: exact cases") {
    auto id = arn::closest_unilossless(MatrixXd::Identity(3, 3));
    CHECK(max_abs(id.B - MatrixXd::Identity(3, 3)) < 1e-12);
    CHECK(id.residual < 1e-12);

    auto half = arn::closest_unilossless(mat({{0.5, 0.5}, {0.5, 0.5}}));
    CHECK(max_abs(half.B.cwiseAbs() - MatrixXd::Constant(2, 2, std::sqrt(0.5))) < 1e-9);
    int negatives = 0;
    for (int k = 0; k < 4; ++k) negatives += half.B(k / 2, k % 2) < 0;
    CHECK(negatives == 1);
    CHECK(half.residual < 1e-9);

    MatrixXd perm = arn::uniform_block({2, 0, 3, 1}, 0.0);
    auto p = arn::closest_unilossless(perm);
    CHECK(max_abs(p.B.cwiseAbs() - perm) < 1e-9);
    CHECK(p.residual < 1e-9);

    CHECK(arn::closest_unilossless(mat({{1.0}})).B(0, 0) == 1.0);
    CHECK_THROWS_AS(arn::closest_unilossless(mat({{1, 2}, {3, 4}})), arn::Error);
}

TEST_CASE("closest unilossless output is orthogonal") {
    MatrixXd t = arn::uniform_block({3, 1, 0, 5, 2, 4}, 0.4);
    auto r = arn::closest_unilossless(t);
    CHECK(arn::orthogonality_error(r.B) < 1e-9);
    CHECK(r.residual == doctest::Approx(((r.B.cwiseProduct(r.B)) - t).norm()));
    CHECK(arn::orthogonality_error(arn::polar(mat({{1, 2}, {3, 4}}))) < 1e-14);
}

TEST_CASE("uniform target with M=5 has no exact signed orthogonal square root") {
    // Rows 0 and 1 of sqrt(uniform_block(identity, 0.25)): any signed version
    // has inner product +-a +-a +-b +-b +-b with a = sqrt(.75)*.25, b = .0625,
    // which is never zero. The residual of the closest solution is therefore
    // bounded away from zero.
    const double a = std::sqrt(0.75) * 0.25, b = 0.0625;
    double best = 1e9;
    for (int s = 0; s < 32; ++s) {
        double v = 0.0;
        for (int k = 0; k < 5; ++k) v += ((s >> k) & 1 ? -1.0 : 1.0) * (k < 2 ? a : b);
        best = std::min(best, std::abs(v));
    }
    CHECK(best == doctest::Approx(b));
    auto r = arn::closest_unilossless(arn::uniform_block({0, 1, 2, 3, 4}, 0.25));
    CHECK(r.residual > 1e-3);
    CHECK(arn::orthogonality_error(r.B) < 1e-9);
}

TEST_CASE("assembled hallway feedback matrices") {
    auto s = test::scene("hallway.json");
    auto ps = arn::discretize(s, 6.0);
    auto paths = arn::enumerate_paths(ps, s, 48000.0);
    auto k = arn::compute_kernel(ps, paths, s, {});
    std::vector<double> sigma(ps.size(), 0.25);

    auto hh = arn::assemble_feedback(k, paths, arn::Design::householder, sigma);
    REQUIRE(hh.blocks.size() == 6);
    for (const auto& b : hh.blocks) {
        CHECK(b.A.rows() == 5);
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 5; ++c)
                CHECK(std::abs(b.A(r, c)) == doctest::Approx(c == b.perm[r] ? 0.6 : 0.4));
        CHECK(b.orthogonality < 1e-9);
    }

    auto un = arn::assemble_feedback(k, paths, arn::Design::uniform, sigma);
    CHECK(un.max_orthogonality_error() < 1e-9);
    for (const auto& b : un.blocks) {
        MatrixXd target = arn::uniform_block(b.perm, 0.25);
        CHECK(b.residual == doctest::Approx((b.A.cwiseProduct(b.A) - target).norm()).epsilon(1e-9));
        CHECK(b.residual < 0.2);
    }

    auto sk = arn::assemble_feedback(k, paths, arn::Design::sinkhorn, sigma);
    CHECK(sk.max_orthogonality_error() < 1e-9);
    auto e = arn::sinkhorn_similarity(sk, paths);
    CHECK(e.size() == 30);
    CHECK(e.minCoeff() > 0.0);
    CHECK(arn::sinkhorn_similarity(hh, paths).isOnes());

    MatrixXd dense = hh.dense(paths);
    CHECK(arn::orthogonality_error(dense) < 1e-9);
}

TEST_CASE("uneven room: every sinkhorn block converges") {
    auto s = test::scene("uneven.json");
    auto ps = arn::discretize(s, 2.0);
    auto paths = arn::enumerate_paths(ps, s, 48000.0);
    auto k = arn::compute_kernel(ps, paths, s, {});
    std::vector<double> sigma;
    for (const auto& p : ps.patches) sigma.push_back(s.materials[p.material].scattering);
    auto sk = arn::assemble_feedback(k, paths, arn::Design::sinkhorn, sigma);
    CHECK(sk.max_orthogonality_error() < 1e-9);
    for (const auto& b : sk.blocks) CHECK(b.sinkhorn_iterations < 10000);
}

TEST_CASE("design names") {
    CHECK(arn::parse_design("householder") == arn::Design::householder);
    CHECK(arn::parse_design("sinkhorn") == arn::Design::sinkhorn);
    CHECK(arn::parse_design("uniform") == arn::Design::uniform);
    CHECK(arn::to_string(arn::Design::uniform) == "uniform");
    CHECK_THROWS_AS(arn::parse_design("fdn"), arn::Error);
}
