#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "volterra/asymptotics.hpp"
#include "volterra/conditioning.hpp"
#include "volterra/linalg.hpp"
#include "volterra/models.hpp"
#include "volterra/rng.hpp"

namespace volterra {

// log Phi-bar(x) for the standard normal upper tail, stable for any x. Uses
// erfc up to the point where it would underflow, the Mills asymptotic series
// beyond.
inline double log_normal_upper(double x) {
    if (x < 30.0) return std::log(0.5 * std::erfc(x / std::sqrt(2.0)));
    const double x2 = x * x;
    const double series =
        1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) + 105.0 / (x2 * x2 * x2 * x2);
    return -0.5 * x2 - std::log(x) - 0.5 * std::log(2.0 * M_PI) + std::log(series);
}

// log P(sup_{t <= t_max} W_{eps t} >= delta) = log(2 Phi-bar(delta / sqrt(eps t_max)))
// by the reflection principle; the independent oracle for the Brownian probe.
inline double bm_exit_exact(double delta, double eps, double t_max = 1.0) {
    if (!(eps > 0.0 && t_max > 0.0))
        throw std::invalid_argument("bm_exit_exact: eps and t_max must be positive");
    if (delta < 0.0) throw std::invalid_argument("bm_exit_exact: delta must be >= 0");
    return std::log(2.0) + log_normal_upper(delta / std::sqrt(eps * t_max));
}

// Target path h on a grid in (0,1] against a limit covariance.
struct RateQuery {
    std::function<double(double, double)> kbar;
    std::vector<double> grid;
    std::vector<double> h;

    RateQuery(std::function<double(double, double)> k, std::vector<double> g,
              std::vector<double> values)
        : kbar(std::move(k)), grid(std::move(g)), h(std::move(values)) {
        if (grid.size() != h.size() || grid.empty())
            throw std::invalid_argument("RateQuery: grid and h must match, nonempty");
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (!(grid[i] > 0.0 && grid[i] <= 1.0))
                throw std::invalid_argument("RateQuery: grid must lie in (0,1]");
            if (i > 0 && !(grid[i] > grid[i - 1]))
                throw std::invalid_argument("RateQuery: grid must be strictly increasing");
        }
    }
};

struct RateResult {
    double value = 0.0;
    double residual = 0.0;
    bool in_rkhs = false;  // false reads as J(h) = +infinity at this resolution
};

// J(h) = 1/2 ||h||^2 in the RKHS of kbar, evaluated through the pseudo-inverse
// quadratic form of the Gram matrix on the query grid.
inline RateResult rate_functional(const RateQuery& q, double rel_cutoff = 1e-10,
                                  double residual_threshold = 1e-6) {
    GramMatrix gram = gram_from_cov(q.kbar, q.grid);
    gram.eig_cutoff = rel_cutoff;
    const auto qf = pinv_quadratic_form(gram, q.h, rel_cutoff);
    return RateResult{qf.value, qf.residual, qf.residual < residual_threshold};
}

// Lambda(lambda) for the discrete measure lambda = sum_i w_i delta_{t_i}:
// 1/2 sum_ij w_i w_j kbar(t_i, t_j).
inline double log_mgf_discrete(const std::function<double(double, double)>& kbar,
                               std::span<const double> points, std::span<const double> weights) {
    if (points.size() != weights.size())
        throw std::invalid_argument("log_mgf_discrete: points/weights mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = 0; j < points.size(); ++j)
            acc += weights[i] * weights[j] * kbar(points[i], points[j]);
    return 0.5 * acc;
}

struct degenerate_limit : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// min over grid points of delta^2 / (2 kbar(t,t)): the cheapest single-point
// pin. An upper bound on the closed-set infimum over symmetric exits, exact
// for the one-sided sup functional over {h : max h(t_i) >= delta}.
inline double exit_rate(const std::function<double(double, double)>& kbar,
                        std::span<const double> grid, double delta) {
    if (!(delta >= 0.0)) throw std::invalid_argument("exit_rate: delta must be >= 0");
    double best = std::numeric_limits<double>::infinity();
    double max_var = 0.0;
    for (double t : grid) {
        const double v = kbar(t, t);
        max_var = std::max(max_var, v);
        if (v > 0.0) best = std::min(best, delta * delta / (2.0 * v));
    }
    if (!(max_var > 0.0)) throw degenerate_limit("exit_rate: kbar(t,t) <= 0 on the whole grid");
    return best;
}

// Finite-dimensional law of (X_{T+eps t} - X_T) on a scaled grid: mean and
// increment covariance as functions of eps, assembled from k, k^g or Upsilon.
struct IncrementLaw {
    std::function<double(double, double, double)> cov;  // (eps, t, s)
    std::function<double(double, double)> mean;         // (eps, t); null means centered
    std::string descriptor;
};

inline IncrementLaw increment_law(const ProcessModel& model, const quad::Options& opts = {}) {
    const ProcessModel m = model;
    IncrementLaw law;
    law.descriptor = "base:" + model.kernel.name();
    law.cov = [m, opts](double eps, double t, double s) {
        const double T = m.horizon;
        return covariance(m, T + eps * t, T + eps * s, opts) -
               covariance(m, T + eps * t, T, opts) - covariance(m, T + eps * s, T, opts) +
               covariance(m, T, T, opts);
    };
    return law;
}

inline IncrementLaw increment_law(const FunctionalConditionalLaw& law_in) {
    IncrementLaw out;
    out.descriptor = "functional:" + law_in.model().kernel.name();
    out.cov = [law = law_in](double eps, double t, double s) {
        const double T = law.model().horizon;
        return law.covariance(T + eps * t, T + eps * s) - law.covariance(T + eps * t, T) -
               law.covariance(T + eps * s, T) + law.covariance(T, T);
    };
    out.mean = [law = law_in](double eps, double t) {
        const double T = law.model().horizon;
        return law.mean(T + eps * t) - law.mean(T);
    };
    return out;
}

inline IncrementLaw increment_law(const PathConditionalLaw& law_in) {
    IncrementLaw out;
    out.descriptor = "path:" + law_in.model().kernel.name();
    out.cov = [law = law_in](double eps, double t, double s) {
        const double T = law.model().horizon;
        return law.covariance(T + eps * t, T + eps * s) - law.covariance(T + eps * t, T) -
               law.covariance(T + eps * s, T) + law.covariance(T, T);
    };
    out.mean = [law = law_in](double eps, double t) {
        const double T = law.model().horizon;
        return law.mean(T + eps * t) - law.mean(T);
    };
    return out;
}

struct ProbeRow {
    double eps = 0.0;
    double p_hat = 0.0;
    double mc_stderr = 0.0;          // stderr of p_hat
    double gamma_sq_log_p = 0.0;     // eps^{2 gamma} log p_hat; -inf flags zero hits
    double predicted_rate_bound = 0.0;
    bool zero_hits = false;
};

struct ProbeReport {
    std::vector<ProbeRow> rows;
};

// Monte Carlo exit probe: for each eps draws N paths of the exact
// finite-dimensional law on the grid, estimates p_hat = P(max_i path_i >= delta)
// and reports eps^{2 gamma} log p_hat next to -exit_rate of the limit law.
// Replicate r of rung e uses the stream (seed, "ldp_probe", e*2^40 + r), so
// results are reproducible regardless of evaluation order or worker count.
inline ProbeReport ldp_probe(const IncrementLaw& law,
                             const std::function<double(double, double)>& limit_kbar,
                             double gamma_exp, const EpsilonLadder& ladder, double delta,
                             std::span<const double> grid, std::int64_t n_samples,
                             std::uint64_t seed) {
    if (n_samples < 1000) throw std::invalid_argument("ldp_probe: N must be >= 1000");
    for (double t : grid)
        if (!(t > 0.0 && t <= 1.0))
            throw std::invalid_argument("ldp_probe: grid must lie in (0,1]");
    const double bound =
        limit_kbar ? -exit_rate(limit_kbar, grid, delta) : std::numeric_limits<double>::quiet_NaN();

    ProbeReport report;
    const auto n = static_cast<Eigen::Index>(grid.size());
    for (std::size_t e = 0; e < ladder.values.size(); ++e) {
        const double eps = ladder.values[e];
        Eigen::MatrixXd sigma(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j <= i; ++j) {
                sigma(i, j) = law.cov(eps, grid[i], grid[j]);
                sigma(j, i) = sigma(i, j);
            }
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
        if (law.mean)
            for (Eigen::Index i = 0; i < n; ++i) mean(i) = law.mean(eps, grid[i]);
        const SpdFactor factor = spd_factor(sigma, 0.0);

        std::int64_t hits = 0;
        Eigen::VectorXd z(n);
        for (std::int64_t r = 0; r < n_samples; ++r) {
            CounterRng rng(seed, "ldp_probe",
                           (static_cast<std::uint64_t>(e) << 40) + static_cast<std::uint64_t>(r));
            for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.normal();
            const Eigen::VectorXd path =
                mean + factor.chol_lower.triangularView<Eigen::Lower>() * z;
            // the path starts at 0 at t=0, which is part of the sup functional
            if (std::max(path.maxCoeff(), 0.0) >= delta) ++hits;
        }
        ProbeRow row;
        row.eps = eps;
        row.p_hat = static_cast<double>(hits) / static_cast<double>(n_samples);
        row.mc_stderr = std::sqrt(row.p_hat * (1.0 - row.p_hat) / static_cast<double>(n_samples));
        row.zero_hits = (hits == 0);
        row.gamma_sq_log_p = row.zero_hits
                                 ? -std::numeric_limits<double>::infinity()
                                 : std::pow(eps, 2.0 * gamma_exp) * std::log(row.p_hat);
        row.predicted_rate_bound = bound;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace volterra
