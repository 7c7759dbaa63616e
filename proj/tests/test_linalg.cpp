#include <catch2/catch.hpp>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "volterra/linalg.hpp"

using namespace volterra;

namespace {

GramMatrix brownian_gram(const std::vector<double>& grid) {
    return gram_from_cov([](double t, double s) { return std::min(t, s); }, grid);
}

std::vector<double> uniform_grid(int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = static_cast<double>(i + 1) / n;
    return g;
}

}  // namespace

TEST_CASE("spd_factor identity needs no jitter") {
    auto f = spd_factor(Eigen::MatrixXd::Identity(3, 3), 0.0);
    REQUIRE(f.jitter_used == 0.0);
    Eigen::VectorXd b(3);
    b << 1, 2, 3;
    REQUIRE((f.solve(b) - b).norm() == Approx(0.0).margin(1e-14));
}

TEST_CASE("spd_factor Brownian gram is SPD without jitter") {
    auto g = brownian_gram({0.25, 0.5, 0.75, 1.0});
    auto f = spd_factor(g);
    REQUIRE(f.jitter_used == 0.0);
}

TEST_CASE("spd_factor rank-1 needs jitter and records it") {
    Eigen::VectorXd v(3);
    v << 1.0, 2.0, 3.0;
    Eigen::MatrixXd m = v * v.transpose();
    auto f = spd_factor(m, 1e-12);
    REQUIRE(f.jitter_used > 0.0);
}

TEST_CASE("spd_factor rejects an indefinite matrix") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -1.0;
    REQUIRE_THROWS_AS(spd_factor(m, 1e-12), not_positive_semidefinite);
}

TEST_CASE("pinv quadratic form: Cameron-Martin norm of h(t)=t is 1") {
    auto grid = uniform_grid(8);
    auto g = brownian_gram(grid);
    auto r = pinv_quadratic_form(g, grid, 1e-10);
    REQUIRE(r.value == Approx(0.5).margin(1e-10));
    REQUIRE(r.residual <= 1e-10);
}

TEST_CASE("pinv quadratic form: zero vector") {
    auto g = brownian_gram(uniform_grid(5));
    std::vector<double> h(5, 0.0);
    auto r = pinv_quadratic_form(g, h, 1e-10);
    REQUIRE(r.value == 0.0);
    REQUIRE(r.residual == 0.0);
}

TEST_CASE("pinv quadratic form: rank-1 kernel st, h = 2t") {
    // RKHS of st is {c t} with ||c t||^2 = c^2, so the form is 0.5 * 4 = 2
    auto grid = uniform_grid(6);
    auto g = gram_from_cov([](double t, double s) { return t * s; }, grid);
    std::vector<double> h(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) h[i] = 2.0 * grid[i];
    auto r = pinv_quadratic_form(g, h, 1e-10);
    REQUIRE(r.value == Approx(2.0).margin(1e-9));
    REQUIRE(r.residual <= 1e-8);
}

TEST_CASE("pinv quadratic form is permutation invariant") {
    auto grid = uniform_grid(7);
    auto g = brownian_gram(grid);
    std::vector<double> h(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) h[i] = std::sin(3.0 * grid[i]);
    const double base = pinv_quadratic_form(g, h, 1e-10).value;

    std::vector<int> perm(grid.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937 rng(123);
    for (int rep = 0; rep < 5; ++rep) {
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> pg(grid.size()), ph(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            pg[i] = grid[perm[i]];
            ph[i] = h[perm[i]];
        }
        auto gp = brownian_gram(pg);
        const double v = pinv_quadratic_form(gp, ph, 1e-10).value;
        REQUIRE(v == Approx(base).epsilon(1e-8));
    }
}

TEST_CASE("pinv quadratic form grows under grid refinement") {
    // restriction of a fixed function to nested grids
    auto f = [](double t) { return t * t; };
    double prev = 0.0;
    for (int n : {8, 16, 32}) {
        auto grid = uniform_grid(n);
        std::vector<double> h(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) h[i] = f(grid[i]);
        const double v = pinv_quadratic_form(brownian_gram(grid), h, 1e-10).value;
        REQUIRE(v >= prev - 1e-8);
        prev = v;
    }
}

TEST_CASE("symmetry checker") {
    Eigen::MatrixXd m(2, 2);
    m << 1.0, 2.0, 2.0 + 1e-6, 1.0;
    REQUIRE_FALSE(is_symmetric(m));
    m(1, 0) = 2.0;
    REQUIRE(is_symmetric(m));
}
