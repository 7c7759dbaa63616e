#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "volterra/conditioning.hpp"
#include "volterra/models.hpp"
#include "volterra/quadrature.hpp"

namespace volterra {

// Decreasing epsilon values used to probe the small-time limits after T.
struct EpsilonLadder {
    std::vector<double> values;

    explicit EpsilonLadder(std::vector<double> v) : values(std::move(v)) { validate(); }

    static EpsilonLadder geometric(double start = 1e-1, double stop = 1e-4,
                                   double ratio = 0.31622776601683794) {
        if (!(ratio > 0.0 && ratio < 1.0))
            throw std::invalid_argument("EpsilonLadder: ratio must be in (0,1)");
        if (!(0.0 < stop && stop <= start))
            throw std::invalid_argument("EpsilonLadder: requires 0 < stop <= start");
        std::vector<double> v;
        for (double e = start; e >= stop * (1.0 - 1e-12); e *= ratio) v.push_back(e);
        return EpsilonLadder(std::move(v));
    }

    void validate() const {
        if (values.empty()) throw std::invalid_argument("EpsilonLadder: empty");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!(values[i] > 0.0)) throw std::invalid_argument("EpsilonLadder: values must be > 0");
            if (i > 0 && !(values[i] < values[i - 1]))
                throw std::invalid_argument("EpsilonLadder: values must be strictly decreasing");
        }
    }
};

// A limit is reported as the whole ratio sequence plus an extrapolation and a
// convergence flag, never as a bare number.
struct LadderEstimate {
    std::vector<double> eps;
    std::vector<double> ratios;
    double extrapolation = 0.0;
    bool converged = false;
};

enum class CovPath { closed_form, quadrature };

namespace detail {

inline LadderEstimate finish_estimate(std::vector<double> eps, std::vector<double> ratios,
                                      double rel_tol, double abs_tol = 1e-12) {
    LadderEstimate out;
    out.eps = std::move(eps);
    out.ratios = std::move(ratios);
    out.extrapolation = out.ratios.back();
    if (out.ratios.size() >= 2) {
        const double last = out.ratios[out.ratios.size() - 1];
        const double prev = out.ratios[out.ratios.size() - 2];
        out.converged = std::abs(last - prev) <= std::max(rel_tol * std::abs(last), abs_tol);
    }
    return out;
}

inline void check_ladder(const EpsilonLadder& ladder, double T) {
    ladder.validate();
    if (ladder.values.front() >= T)
        throw std::invalid_argument("ladder: values must stay below the horizon T");
}

}  // namespace detail

// [k(T+eps t, T+eps s) - k(T+eps t, T) - k(T+eps s, T) + k(T,T)] / eps^{2 gamma}
inline LadderEstimate limit_cov_estimate(const ProcessModel& model, double gamma_exp, double t,
                                         double s, const EpsilonLadder& ladder,
                                         double rel_tol = 5e-3,
                                         CovPath path = CovPath::closed_form,
                                         const quad::Options& opts = {}) {
    if (!(gamma_exp > 0.0)) throw std::invalid_argument("limit_cov_estimate: gamma_exp > 0");
    detail::check_ladder(ladder, model.horizon);
    auto k = [&](double a, double b) {
        return path == CovPath::quadrature ? covariance_quadrature(model, a, b, opts)
                                           : covariance(model, a, b, opts);
    };
    const double T = model.horizon;
    std::vector<double> ratios;
    const double kTT = k(T, T);
    for (double eps : ladder.values) {
        const double num =
            k(T + eps * t, T + eps * s) - k(T + eps * t, T) - k(T + eps * s, T) + kTT;
        ratios.push_back(num / std::pow(eps, 2.0 * gamma_exp));
    }
    return detail::finish_estimate(ladder.values, std::move(ratios), rel_tol);
}

// [r(T+eps t) - r(T)] / eps^{gamma}
inline LadderEstimate limit_cross_estimate(const ProcessModel& model,
                                           const ConditioningFunction& g, double gamma_exp,
                                           double t, const EpsilonLadder& ladder,
                                           double rel_tol = 5e-3, const quad::Options& opts = {}) {
    if (!(gamma_exp > 0.0)) throw std::invalid_argument("limit_cross_estimate: gamma_exp > 0");
    detail::check_ladder(ladder, model.horizon);
    const double T = model.horizon;
    const double rT = cross_cov(model, g, T, opts);
    std::vector<double> ratios;
    for (double eps : ladder.values)
        ratios.push_back((cross_cov(model, g, T + eps * t, opts) - rT) / std::pow(eps, gamma_exp));
    return detail::finish_estimate(ladder.values, std::move(ratios), rel_tol);
}

// sqrt(eps) K(T+eps t, T+eps s) / eps^{gamma}
inline LadderEstimate limit_kernel_estimate(const ProcessModel& model, double gamma_exp, double t,
                                            double s, const EpsilonLadder& ladder,
                                            double rel_tol = 5e-3,
                                            const quad::Options& opts = {}) {
    if (!(0.0 <= s && s <= t && t <= 1.0))
        throw std::invalid_argument("limit_kernel_estimate: requires 0 <= s <= t <= 1");
    detail::check_ladder(ladder, model.horizon);
    const double T = model.horizon;
    std::vector<double> ratios;
    for (double eps : ladder.values)
        ratios.push_back(std::sqrt(eps) * kernel_eval(model.kernel, T + eps * t, T + eps * s, opts) /
                         std::pow(eps, gamma_exp));
    return detail::finish_estimate(ladder.values, std::move(ratios), rel_tol);
}

// second difference of the functionally conditioned covariance, over eps^{2 gamma}
inline LadderEstimate limit_cov_cond_estimate(const FunctionalConditionalLaw& law,
                                              double gamma_exp, double t, double s,
                                              const EpsilonLadder& ladder, double rel_tol = 5e-3) {
    if (!(gamma_exp > 0.0)) throw std::invalid_argument("limit_cov_cond_estimate: gamma_exp > 0");
    detail::check_ladder(ladder, law.model().horizon);
    const double T = law.model().horizon;
    std::vector<double> ratios;
    const double kTT = law.covariance(T, T);
    for (double eps : ladder.values) {
        const double num = law.covariance(T + eps * t, T + eps * s) -
                           law.covariance(T + eps * t, T) - law.covariance(T + eps * s, T) + kTT;
        ratios.push_back(num / std::pow(eps, 2.0 * gamma_exp));
    }
    return detail::finish_estimate(ladder.values, std::move(ratios), rel_tol);
}

// second difference of the path-conditioned covariance, over eps^{2 gamma}
inline LadderEstimate limit_cov_path_estimate(const PathConditionalLaw& law, double gamma_exp,
                                              double t, double s, const EpsilonLadder& ladder,
                                              double rel_tol = 5e-3) {
    if (!(gamma_exp > 0.0)) throw std::invalid_argument("limit_cov_path_estimate: gamma_exp > 0");
    detail::check_ladder(ladder, law.model().horizon);
    const double T = law.model().horizon;
    std::vector<double> ratios;
    const double uTT = law.covariance(T, T);
    for (double eps : ladder.values) {
        const double num = law.covariance(T + eps * t, T + eps * s) -
                           law.covariance(T + eps * t, T) - law.covariance(T + eps * s, T) + uTT;
        ratios.push_back(num / std::pow(eps, 2.0 * gamma_exp));
    }
    return detail::finish_estimate(ladder.values, std::move(ratios), rel_tol);
}

// kbar^g(t,s) = kbar(t,s) - rbar(t)^T (C^g)^{-1} rbar(s)
inline double limit_cov_functional(const std::function<double(double, double)>& kbar,
                                   const std::function<Eigen::VectorXd(double)>& rbar,
                                   const Eigen::MatrixXd& gram, double t, double s) {
    const Eigen::VectorXd rt = rbar(t);
    const Eigen::VectorXd rs = rbar(s);
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw near_singular_gram("limit_cov_functional: C^g not positive definite");
    return kbar(t, s) - rt.dot(llt.solve(rs));
}

// Upsilon-bar(t,s). The coefficient on the Kbar-product term follows the
// variance decomposition (signal fraction); paper_literal switches it to the
// noise fraction so the printed variant can be reproduced side by side.
inline double limit_cov_path(const ProcessModel& model,
                             const std::function<double(double, double)>& kbar,
                             const std::function<double(double, double)>& Kbar, double t, double s,
                             bool paper_literal = false, const quad::Options& opts = {}) {
    const double m = std::min(t, s);
    double kk = 0.0;
    if (Kbar && m > 0.0) {
        auto f = [&](double u) { return Kbar(t, u) * Kbar(s, u); };
        kk = quad::value_or_throw(quad::integrate_right_power(f, 0.0, m, 2.0, opts),
                                  "limit_cov_path");
    }
    const double coeff = paper_literal ? model.noise_fraction() : model.signal_fraction();
    return coeff * kk + model.noise_fraction() * kbar(t, s);
}

enum class LimitKind { base, functional, path };
enum class Provenance { closed_form, ladder_extrapolated };
enum class ExampleFamily { fbm, mfold, integrated };

// Scaling exponent plus the limit covariance on [0,1]^2 (kbar, kbar^g or
// Upsilon-bar depending on kind), with the example's auxiliary objects.
struct LimitLaw {
    double gamma_exp = 0.0;
    LimitKind kind = LimitKind::base;
    Provenance provenance = Provenance::closed_form;
    std::function<double(double, double)> kbar;            // the governing covariance
    std::function<double(double, double)> limit_kernel;    // Kbar; null when identically 0
    std::function<Eigen::VectorXd(double)> rbar;           // null when not applicable
    double rank1_constant = std::numeric_limits<double>::quiet_NaN();  // a, when kbar = a*st
};

namespace detail {

inline Eigen::VectorXd closed_form_rbar_coeffs(const ProcessModel& model,
                                               const ConditioningSet& gset,
                                               ExampleFamily family,
                                               const quad::Options& opts) {
    const double T = model.horizon;
    Eigen::VectorXd b(static_cast<Eigen::Index>(gset.size()));
    for (std::size_t i = 0; i < gset.size(); ++i) {
        const auto type = gset.functions[i].type();
        if (type == ConditioningFunction::Type::tabulated)
            throw unsupported_parameter(
                "closed_form_limits: tabulated conditioning functions have no closed form");
        double v = 0.0;
        switch (family) {
            case ExampleFamily::fbm:
                v = 0.0;
                break;
            case ExampleFamily::mfold: {
                const int m = model.kernel.m();
                const double base = model.alpha / factorial(m) * std::pow(T, m);
                v = (type == ConditioningFunction::Type::indicator)
                        ? base
                        : base * m / (m + 1.0);
                break;
            }
            case ExampleFamily::integrated: {
                const auto& inner = model.kernel.inner();
                if (type == ConditioningFunction::Type::indicator) {
                    auto f = [&](double u) { return kernel_eval(inner, T, u, opts); };
                    v = model.alpha *
                        quad::value_or_throw(quad::integrate(f, 0.0, T, opts), "rbar");
                } else {
                    auto f = [&](double u) {
                        return kernel_eval(inner, T, u, opts) * (T - u);
                    };
                    v = model.alpha / T *
                        quad::value_or_throw(quad::integrate(f, 0.0, T, opts), "rbar");
                }
                break;
            }
        }
        b(static_cast<Eigen::Index>(i)) = v;
    }
    return b;
}

}  // namespace detail

// The worked example families: explicit kbar, rbar, Kbar, kbar^g and
// Upsilon-bar with the right scaling exponent (H for fBm, 1 otherwise).
inline LimitLaw closed_form_limits(ExampleFamily family, const ProcessModel& model,
                                   const ConditioningSet* gset, LimitKind kind,
                                   bool paper_literal = false, double cond_bound = 1e8,
                                   const quad::Options& opts = {}) {
    LimitLaw law;
    law.kind = kind;
    law.provenance = Provenance::closed_form;
    const double T = model.horizon;

    std::function<double(double, double)> base_kbar;
    switch (family) {
        case ExampleFamily::fbm: {
            if (model.kernel.type() != KernelFamily::Type::fbm)
                throw unsupported_parameter("closed_form_limits: model is not fbm");
            const double H = model.kernel.hurst();
            if (!(H > 0.5))
                throw unsupported_parameter(
                    "closed_form_limits: fbm closed forms require H > 1/2");
            law.gamma_exp = H;
            base_kbar = [H](double t, double s) {
                return 0.5 * (std::pow(t, 2.0 * H) + std::pow(s, 2.0 * H) -
                              std::pow(std::abs(t - s), 2.0 * H));
            };
            const double ch = model.kernel.c_h();
            law.limit_kernel = [ch, H](double t, double s) {
                return (s < t) ? ch * std::pow(t - s, H - 0.5) : 0.0;
            };
            break;
        }
        case ExampleFamily::mfold: {
            if (model.kernel.type() != KernelFamily::Type::mfold_ibm)
                throw unsupported_parameter("closed_form_limits: model is not mfold_ibm");
            const int m = model.kernel.m();
            const double c = 1.0 / (detail::factorial(m) * detail::factorial(m)) * m * m /
                             (2.0 * m - 1.0) * std::pow(T, 2 * m - 1);
            law.gamma_exp = 1.0;
            base_kbar = [c](double t, double s) { return c * t * s; };
            law.rank1_constant = c;
            break;
        }
        case ExampleFamily::integrated: {
            if (model.kernel.type() != KernelFamily::Type::integrated)
                throw unsupported_parameter("closed_form_limits: model is not integrated");
            const auto& inner = model.kernel.inner();
            auto f = [&](double u) {
                const double k = kernel_eval(inner, T, u, opts);
                return k * k;
            };
            const double c = quad::value_or_throw(quad::integrate(f, 0.0, T, opts),
                                                  "closed_form_limits: int K^2");
            law.gamma_exp = 1.0;
            base_kbar = [c](double t, double s) { return c * t * s; };
            law.rank1_constant = c;
            break;
        }
    }

    switch (kind) {
        case LimitKind::base:
            law.kbar = base_kbar;
            break;
        case LimitKind::functional: {
            if (gset == nullptr)
                throw std::invalid_argument("closed_form_limits: functional kind needs a gset");
            const Eigen::VectorXd b =
                detail::closed_form_rbar_coeffs(model, *gset, family, opts);
            law.rbar = [b](double t) -> Eigen::VectorXd { return b * t; };
            const Eigen::MatrixXd gram = functional_gram(model, *gset, cond_bound, opts);
            if (family == ExampleFamily::fbm) {
                law.kbar = base_kbar;  // rbar vanishes, so kbar^g = kbar = k
            } else {
                Eigen::LLT<Eigen::MatrixXd> llt(gram);
                const double a = law.rank1_constant - b.dot(llt.solve(b));
                law.rank1_constant = a;
                law.kbar = [a](double t, double s) { return a * t * s; };
            }
            break;
        }
        case LimitKind::path: {
            const double noise = model.noise_fraction();
            if (family == ExampleFamily::fbm) {
                auto Kb = law.limit_kernel;
                const ProcessModel m2 = model;
                quad::Options o = opts;
                law.kbar = [m2, base_kbar, Kb, paper_literal, o](double t, double s) {
                    return limit_cov_path(m2, base_kbar, Kb, t, s, paper_literal, o);
                };
            } else {
                // Kbar == 0 for the integrated families
                const double a = law.rank1_constant * noise;
                law.rank1_constant = a;
                law.kbar = [a](double t, double s) { return a * t * s; };
            }
            break;
        }
    }
    return law;
}

struct SlopeFit {
    double slope = 0.0;
    double r2 = 0.0;
};

inline SlopeFit fit_log_log(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_log_log: need two or more points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0))
            throw std::invalid_argument("fit_log_log: values must be positive");
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly; syy += ly * ly;
    }
    const double vxx = sxx - sx * sx / n;
    const double vxy = sxy - sx * sy / n;
    const double vyy = syy - sy * sy / n;
    SlopeFit fit;
    fit.slope = vxy / vxx;
    fit.r2 = (vyy > 0.0) ? (vxy * vxy) / (vxx * vyy) : 1.0;
    return fit;
}

struct degenerate_variance : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// least-squares slope of log Var(X_{T+eps} - X_T) against log eps
inline SlopeFit speed_exponent_fit(const ProcessModel& model, const EpsilonLadder& ladder,
                                   const quad::Options& opts = {}) {
    if (ladder.values.size() < 3)
        throw std::invalid_argument("speed_exponent_fit: ladder length must be >= 3");
    detail::check_ladder(ladder, model.horizon);
    const double T = model.horizon;
    const double kTT = covariance(model, T, T, opts);
    std::vector<double> vars;
    for (double eps : ladder.values) {
        const double v =
            covariance(model, T + eps, T + eps, opts) - 2.0 * covariance(model, T + eps, T, opts) +
            kTT;
        if (!(v > 0.0))
            throw degenerate_variance("speed_exponent_fit: nonpositive variance at eps=" +
                                      std::to_string(eps));
        vars.push_back(v);
    }
    return fit_log_log(ladder.values, vars);
}

// Per-family scaling and Holder exponents used by the tightness diagnostics.
struct HolderExponents {
    double gamma_exp;
    double tau;
    double tau_hat;
};

inline HolderExponents family_exponents(const ProcessModel& model) {
    switch (model.kernel.type()) {
        case KernelFamily::Type::brownian: return {0.5, 0.5, 1.0};
        case KernelFamily::Type::fbm: {
            const double h = model.kernel.hurst();
            return {h, h, 1.0};
        }
        default: return {1.0, 1.0, 1.0};
    }
}

// sup over grid pairs of the increment-variance ratio of the base process
inline double tightness_base_sup(const ProcessModel& model, double eps,
                                 std::span<const double> grid, double gamma_exp, double tau,
                                 const quad::Options& opts = {}) {
    const double T = model.horizon;
    double sup = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double t = grid[i], s = grid[j];
            const double var = covariance(model, T + eps * t, T + eps * t, opts) -
                               2.0 * covariance(model, T + eps * t, T + eps * s, opts) +
                               covariance(model, T + eps * s, T + eps * s, opts);
            const double ratio = var / (std::pow(eps, 2.0 * gamma_exp) *
                                        std::pow(std::abs(t - s), 2.0 * tau));
            sup = std::max(sup, ratio);
        }
    return sup;
}

// sup over grid pairs of |r(T+eps t) - r(T+eps s)| / (eps^gamma |t-s|^tau_hat)
inline double tightness_cond1_sup(const ProcessModel& model, const ConditioningFunction& g,
                                  double eps, std::span<const double> grid, double gamma_exp,
                                  double tau_hat, const quad::Options& opts = {}) {
    const double T = model.horizon;
    std::vector<double> r(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        r[i] = cross_cov(model, g, T + eps * grid[i], opts);
    double sup = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double ratio =
                std::abs(r[i] - r[j]) /
                (std::pow(eps, gamma_exp) * std::pow(std::abs(grid[i] - grid[j]), tau_hat));
            sup = std::max(sup, ratio);
        }
    return sup;
}

// sup over grid pairs of eps int_0^t (K(T+eps t, T+eps u) - K(T+eps s, T+eps u))^2 du
// over (eps^gamma |t-s|^tau_hat)^2. The eps prefactor is the one the conditioned
// variance decomposition actually carries in front of this integral.
inline double tightness_cond2_sup(const ProcessModel& model, double eps,
                                  std::span<const double> grid, double gamma_exp, double tau_hat,
                                  const quad::Options& opts = {}) {
    const double T = model.horizon;
    double sup = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double t = grid[i], s = grid[j];
            auto f = [&](double u) {
                const double d = kernel_eval(model.kernel, T + eps * t, T + eps * u, opts) -
                                 kernel_eval(model.kernel, T + eps * s, T + eps * u, opts);
                return d * d;
            };
            quad::Options o = opts;
            o.splits.push_back(s);
            const double integral =
                quad::value_or_throw(quad::integrate_right_power(f, 0.0, t, 2.0, o),
                                     "tightness_cond2");
            const double ratio = eps * integral / (std::pow(eps, 2.0 * gamma_exp) *
                                                   std::pow(std::abs(t - s), 2.0 * tau_hat));
            sup = std::max(sup, ratio);
        }
    return sup;
}

}  // namespace volterra
