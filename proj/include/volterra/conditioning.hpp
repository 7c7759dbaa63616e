#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "volterra/linalg.hpp"
#include "volterra/models.hpp"
#include "volterra/quadrature.hpp"

namespace volterra {

struct near_singular_gram : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

// int_0^upper K(t,u) w(u) du with the family-appropriate endpoint taming.
inline double integrate_kernel_weighted(const ProcessModel& model, double t,
                                        const std::function<double(double)>& weight,
                                        double upper, std::vector<double> splits,
                                        const quad::Options& opts) {
    if (upper <= 0.0) return 0.0;
    auto f = [&](double u) { return kernel_eval(model.kernel, t, u, opts) * weight(u); };
    quad::Options o = opts;
    o.splits = std::move(splits);
    if (model.kernel.type() == KernelFamily::Type::fbm ||
        kernel_singular_at_origin(model.kernel)) {
        const double mid = 0.5 * upper;
        const double left = quad::value_or_throw(
            quad::integrate_left_power(f, 0.0, mid, 4.0, o), "cross_cov (left)");
        // the integrand kinks at u = upper only when upper == t
        const double right =
            (upper == t)
                ? quad::value_or_throw(quad::integrate_right_power(f, mid, upper, 2.0, o),
                                       "cross_cov (right)")
                : quad::value_or_throw(quad::integrate(f, mid, upper, o), "cross_cov (right)");
        return left + right;
    }
    return quad::value_or_throw(quad::integrate(f, 0.0, upper, o), "cross_cov");
}

}  // namespace detail

// C^g[i][j] = (alpha^2 + alpha_tilde^2) int_0^T g_i g_j dt, with a condition
// number check standing in for the linear-independence assumption.
inline Eigen::MatrixXd functional_gram(const ProcessModel& model, const ConditioningSet& gset,
                                       double cond_bound = 1e8, const quad::Options& opts = {}) {
    const double T = model.horizon;
    const auto n = static_cast<Eigen::Index>(gset.size());
    Eigen::MatrixXd c(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            quad::Options o = opts;
            auto bi = gset.functions[i].breakpoints(T);
            auto bj = gset.functions[j].breakpoints(T);
            o.splits.insert(o.splits.end(), bi.begin(), bi.end());
            o.splits.insert(o.splits.end(), bj.begin(), bj.end());
            auto f = [&](double u) {
                return conditioning_fn_eval(gset.functions[i], u, T) *
                       conditioning_fn_eval(gset.functions[j], u, T);
            };
            const double v =
                model.weight_sq() * quad::value_or_throw(quad::integrate(f, 0.0, T, o), "C^g");
            c(i, j) = v;
            c(j, i) = v;
        }
    }
    const double cond = condition_number_sym(c);
    if (!(cond < cond_bound))
        throw near_singular_gram("functional_gram: condition number " + std::to_string(cond) +
                                 " exceeds bound " + std::to_string(cond_bound) +
                                 "; conditioning functions are numerically dependent");
    return c;
}

// r_i(t) = alpha int_0^{t^T} K(t,u) g_i(u) du
inline double cross_cov(const ProcessModel& model, const ConditioningFunction& g, double t,
                        const quad::Options& opts = {}) {
    if (t < 0.0) throw std::invalid_argument("cross_cov: t must be nonnegative");
    if (model.alpha == 0.0) return 0.0;
    const double T = model.horizon;
    const double upper = std::min(t, T);
    auto w = [&](double u) { return conditioning_fn_eval(g, u, T); };
    return model.alpha * detail::integrate_kernel_weighted(model, t, w, upper,
                                                           g.breakpoints(T), opts);
}

// Law of X conditioned on the n observed functionals: mean r(t)^T (C^g)^{-1} x,
// covariance k(t,s) - r(t)^T (C^g)^{-1} r(s). Immutable after construction.
class FunctionalConditionalLaw {
  public:
    FunctionalConditionalLaw(ProcessModel model, ConditioningSet gset, double cond_bound = 1e8,
                             quad::Options opts = {})
        : model_(std::move(model)), gset_(std::move(gset)), opts_(std::move(opts)) {
        gram_ = functional_gram(model_, gset_, cond_bound, opts_);
        factor_ = spd_factor(gram_, 0.0);
        const auto n = gram_.rows();
        if (n <= 8)
            inverse_ = factor_.solve(Eigen::MatrixXd::Identity(n, n));
        weights_ = factor_.solve(Eigen::Map<const Eigen::VectorXd>(gset_.x.data(), n));
    }

    const ProcessModel& model() const { return model_; }
    const ConditioningSet& gset() const { return gset_; }
    const Eigen::MatrixXd& gram() const { return gram_; }

    Eigen::VectorXd r_vector(double t) const {
        const auto n = static_cast<Eigen::Index>(gset_.size());
        Eigen::VectorXd r(n);
        for (Eigen::Index i = 0; i < n; ++i)
            r(i) = cross_cov(model_, gset_.functions[i], t, opts_);
        return r;
    }

    // m^{g;x}(t); linear in x by construction
    double mean(double t) const { return r_vector(t).dot(weights_); }

    // k^g(t,s); independent of x
    double covariance(double t, double s) const {
        const Eigen::VectorXd rt = r_vector(t);
        const Eigen::VectorXd rs = (t == s) ? rt : r_vector(s);
        return volterra::covariance(model_, t, s, opts_) - rt.dot(apply_inverse(rs));
    }

    // covariance Gram on a grid through one SPD solve per batch
    Eigen::MatrixXd covariance_matrix(std::span<const double> grid) const {
        const auto m = static_cast<Eigen::Index>(grid.size());
        const auto n = static_cast<Eigen::Index>(gset_.size());
        Eigen::MatrixXd r(n, m);
        for (Eigen::Index j = 0; j < m; ++j) r.col(j) = r_vector(grid[j]);
        Eigen::MatrixXd kg(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) {
                kg(i, j) = volterra::covariance(model_, grid[i], grid[j], opts_);
                kg(j, i) = kg(i, j);
            }
        kg.noalias() -= r.transpose() * factor_.solve(r);
        return 0.5 * (kg + kg.transpose());
    }

  private:
    Eigen::VectorXd apply_inverse(const Eigen::VectorXd& v) const {
        if (inverse_.size() > 0) return inverse_ * v;
        return factor_.solve(v);
    }

    ProcessModel model_;
    ConditioningSet gset_;
    quad::Options opts_;
    Eigen::MatrixXd gram_;      // C^g
    SpdFactor factor_;
    Eigen::MatrixXd inverse_;   // cached (C^g)^{-1}, only for n <= 8
    Eigen::VectorXd weights_;   // (C^g)^{-1} x
};

// Law of X conditioned on the whole noisy path up to T: random mean
// Psi_t = alpha^2/(alpha^2+alpha_tilde^2) int_0^T K(t,u) dW_u evaluated on the
// observed path psi, deterministic covariance Upsilon.
class PathConditionalLaw {
  public:
    PathConditionalLaw(ProcessModel model, std::vector<double> psi_grid,
                       std::vector<double> psi_values, quad::Options opts = {})
        : model_(std::move(model)),
          psi_grid_(std::move(psi_grid)),
          psi_values_(std::move(psi_values)),
          opts_(std::move(opts)) {
        if (psi_grid_.size() < 2 || psi_grid_.size() != psi_values_.size())
            throw std::invalid_argument("PathConditionalLaw: psi grid/values mismatch");
        if (psi_grid_.front() != 0.0)
            throw std::invalid_argument("PathConditionalLaw: psi grid must start at 0");
        if (psi_values_.front() != 0.0)
            throw std::invalid_argument("PathConditionalLaw: psi(0) must be 0");
        if (std::abs(psi_grid_.back() - model_.horizon) > 1e-12 * model_.horizon)
            throw std::invalid_argument("PathConditionalLaw: psi grid must end at T");
        for (std::size_t i = 0; i + 1 < psi_grid_.size(); ++i)
            if (!(psi_grid_[i] < psi_grid_[i + 1]))
                throw std::invalid_argument("PathConditionalLaw: psi grid must be increasing");
    }

    const ProcessModel& model() const { return model_; }

    // m^psi(t): left-point Riemann-Stieltjes sum on psi's own grid. Kernels
    // singular at u=0 (fBm, H>1/2) use the right endpoint on the first cell.
    double mean(double t) const {
        if (model_.alpha == 0.0) return 0.0;
        double sum = 0.0;
        for (std::size_t j = 0; j + 1 < psi_grid_.size(); ++j) {
            double kj = kernel_eval(model_.kernel, t, psi_grid_[j], opts_);
            if (!std::isfinite(kj)) kj = kernel_eval(model_.kernel, t, psi_grid_[j + 1], opts_);
            sum += kj * (psi_values_[j + 1] - psi_values_[j]);
        }
        return model_.signal_fraction() * sum;
    }

    // Upsilon(t,s); routes to the after-horizon form when min(t,s) >= T
    double covariance(double t, double s) const {
        if (std::min(t, s) >= model_.horizon) return covariance_after_horizon(t, s);
        return covariance_general(t, s);
    }

    // the always-valid form of Upsilon
    double covariance_general(double t, double s) const {
        const double m = std::min(t, s);
        if (m <= 0.0) return 0.0;
        const double T = model_.horizon;
        const double rho = model_.signal_fraction();
        auto shrink = [&](double v) {
            const double w = (v <= T) ? (1.0 - rho) : 1.0;
            return w * w;
        };
        const double first = integrate_kernel_product(t, s, 0.0, m, shrink);
        auto one = [](double) { return 1.0; };
        const double second = (model_.alpha_tilde == 0.0 || model_.alpha == 0.0)
                                  ? 0.0
                                  : integrate_kernel_product(t, s, 0.0, std::min(m, T), one);
        return first + rho * model_.noise_fraction() * second;
    }

    // Upsilon for min(t,s) >= T:
    //   alpha^2/(a^2+at^2) int_T^{t^s} K(t,v)K(s,v) dv + at^2/(a^2+at^2) k(t,s)
    double covariance_after_horizon(double t, double s) const {
        const double T = model_.horizon;
        if (std::min(t, s) < T)
            throw std::invalid_argument("covariance_after_horizon: requires min(t,s) >= T");
        auto one = [](double) { return 1.0; };
        const double tail = integrate_kernel_product(t, s, T, std::min(t, s), one);
        return model_.signal_fraction() * tail +
               model_.noise_fraction() * volterra::covariance(model_, t, s, opts_);
    }

  private:
    // int_a^b w(v) K(t,v) K(s,v) dv, cut at the horizon where w may jump, with
    // fBm endpoint taming at v=0 and at the diagonal v=min(t,s)
    double integrate_kernel_product(double t, double s, double a, double b,
                                    const std::function<double(double)>& w) const {
        if (b <= a) return 0.0;
        auto f = [&](double v) {
            return w(v) * kernel_eval(model_.kernel, t, v, opts_) *
                   kernel_eval(model_.kernel, s, v, opts_);
        };
        const double m = std::min(t, s);
        const double T = model_.horizon;
        const bool fbm = model_.kernel.type() == KernelFamily::Type::fbm;
        const bool origin_singular = fbm || kernel_singular_at_origin(model_.kernel);
        std::vector<double> cuts{a};
        if (T > a && T < b) cuts.push_back(T);
        cuts.push_back(b);
        quad::Options o = opts_;
        o.splits.clear();
        double total = 0.0;
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            double lo = cuts[i];
            const double hi = cuts[i + 1];
            if (origin_singular && lo == 0.0) {
                const double mid = 0.5 * hi;
                total += quad::value_or_throw(quad::integrate_left_power(f, 0.0, mid, 4.0, o),
                                              "Upsilon (origin)");
                lo = mid;
            }
            if (fbm && hi == m)
                total += quad::value_or_throw(quad::integrate_right_power(f, lo, hi, 2.0, o),
                                              "Upsilon (diagonal)");
            else
                total += quad::value_or_throw(quad::integrate(f, lo, hi, o), "Upsilon");
        }
        return total;
    }

    ProcessModel model_;
    std::vector<double> psi_grid_;
    std::vector<double> psi_values_;
    quad::Options opts_;
};

}  // namespace volterra
