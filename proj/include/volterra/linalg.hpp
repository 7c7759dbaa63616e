#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace volterra {

struct not_positive_semidefinite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Covariance matrix on a time grid plus the regularization actually applied to it.
struct GramMatrix {
    std::vector<double> grid;
    Eigen::MatrixXd entries;
    double jitter_used = 0.0;
    double eig_cutoff = 0.0;
};

inline GramMatrix gram_from_cov(const std::function<double(double, double)>& cov,
                                std::span<const double> grid) {
    const Eigen::Index n = static_cast<Eigen::Index>(grid.size());
    GramMatrix g;
    g.grid.assign(grid.begin(), grid.end());
    g.entries.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = cov(grid[i], grid[j]);
            g.entries(i, j) = v;
            g.entries(j, i) = v;
        }
    return g;
}

inline bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol = 1e-12) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

inline double default_jitter_base(const Eigen::MatrixXd& m) {
    const double tr = m.trace() / static_cast<double>(m.rows());
    if (tr > 0.0) return 1e-12 * tr;
    return 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
}

struct SpdFactor {
    Eigen::MatrixXd chol_lower;  // L with L L^T = M + jitter_used * I
    double jitter_used = 0.0;

    template <class Derived>
    typename Derived::PlainObject solve(const Eigen::MatrixBase<Derived>& rhs) const {
        typename Derived::PlainObject y =
            chol_lower.triangularView<Eigen::Lower>().solve(rhs.derived());
        return chol_lower.transpose().triangularView<Eigen::Upper>().solve(y);
    }
};

// Cholesky of M + jI for the smallest j in {0, b, 10b, ..., 1e6 b} that succeeds.
inline SpdFactor spd_factor(const Eigen::MatrixXd& m, double base_jitter) {
    if (m.rows() != m.cols()) throw std::invalid_argument("spd_factor: matrix must be square");
    if (!is_symmetric(m, 1e-10))
        throw std::invalid_argument("spd_factor: matrix must be symmetric");
    if (base_jitter <= 0.0) base_jitter = default_jitter_base(m);

    for (int k = -1; k <= 6; ++k) {
        const double jitter = (k < 0) ? 0.0 : base_jitter * std::pow(10.0, k);
        Eigen::MatrixXd shifted = m;
        shifted.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success)
            return SpdFactor{llt.matrixL(), jitter};
    }
    throw not_positive_semidefinite(
        "spd_factor: not positive semidefinite after jitter up to " +
        std::to_string(base_jitter * 1e6));
}

inline SpdFactor spd_factor(const GramMatrix& g, double base_jitter = 0.0) {
    return spd_factor(g.entries, base_jitter);
}

struct QuadraticFormResult {
    double value = 0.0;
    double residual = 0.0;  // relative norm of the component outside the retained range
};

// 1/2 h^T G^+ h through the eigendecomposition of G, dropping eigenvalues below
// rel_cutoff * lambda_max. The residual tells callers how much of h falls
// outside the retained range (large residual: h is not representable at this
// resolution, i.e. effectively outside the RKHS).
inline QuadraticFormResult pinv_quadratic_form(const GramMatrix& g,
                                               std::span<const double> h,
                                               double rel_cutoff = 1e-10) {
    const Eigen::Index n = g.entries.rows();
    if (static_cast<Eigen::Index>(h.size()) != n)
        throw std::invalid_argument("pinv_quadratic_form: h length must match grid");
    Eigen::VectorXd hv = Eigen::Map<const Eigen::VectorXd>(h.data(), n);
    const double hnorm = hv.norm();
    if (hnorm == 0.0) return {};

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.entries);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("pinv_quadratic_form: eigendecomposition failed");
    const Eigen::VectorXd& lam = eig.eigenvalues();
    const double lam_max = std::max(0.0, lam(n - 1));
    const double cutoff = rel_cutoff * lam_max;

    double value = 0.0;
    Eigen::VectorXd proj = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (lam(i) <= cutoff) continue;
        const double c = eig.eigenvectors().col(i).dot(hv);
        value += 0.5 * c * c / lam(i);
        proj += c * eig.eigenvectors().col(i);
    }
    return {value, (hv - proj).norm() / hnorm};
}

// Condition number of a symmetric matrix; +inf when the smallest eigenvalue
// is not strictly positive.
inline double condition_number_sym(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

}  // namespace volterra
