#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <vector>

// Adaptive Gauss-Kronrod 7/15 quadrature with interior split points and
// power substitutions for integrable endpoint singularities.
namespace volterra::quad {

enum class Status { ok, tolerance_not_met, max_evaluations };

struct Result {
    double value = 0.0;
    double error_estimate = 0.0;
    std::int64_t evaluations = 0;
    Status status = Status::ok;

    bool ok() const { return status == Status::ok; }
};

struct quadrature_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Demands success; used by operations that promise to propagate quadrature failure.
inline double value_or_throw(const Result& r, const char* what) {
    if (!r.ok())
        throw quadrature_error(std::string(what) + ": quadrature did not reach tolerance");
    return r.value;
}

struct Options {
    double tol_abs = 1e-9;
    double tol_rel = 1e-9;
    std::int64_t max_evaluations = 1'000'000;
    double min_interval = 1e-14;    // relative to b-a; intervals below this are not refined
    std::vector<double> splits;     // interior points forced as initial segment boundaries
};

namespace detail {

// QUADPACK dqk15 nodes and weights.
inline constexpr double kKronrodNodes[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0};
inline constexpr double kKronrodWeights[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline constexpr double kGaussWeights[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

struct Segment {
    double a, b;
    double value;
    double error;

    bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment gk15(const F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double resk = kKronrodWeights[7] * fc;
    double resg = kGaussWeights[3] * fc;
    double fv[7][2];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kKronrodNodes[j];
        fv[j][0] = f(c - dx);
        fv[j][1] = f(c + dx);
        const double sum = fv[j][0] + fv[j][1];
        resk += kKronrodWeights[j] * sum;
        if (j % 2 == 1) resg += kGaussWeights[(j - 1) / 2] * sum;
    }
    const double reskh = 0.5 * resk;
    double resasc = kKronrodWeights[7] * std::abs(fc - reskh);
    for (int j = 0; j < 7; ++j)
        resasc += kKronrodWeights[j] *
                  (std::abs(fv[j][0] - reskh) + std::abs(fv[j][1] - reskh));
    resasc *= std::abs(h);
    double err = std::abs((resk - resg) * h);
    if (resasc != 0.0 && err != 0.0)
        err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    return Segment{a, b, resk * h, err};
}

}  // namespace detail

inline Result integrate(const std::function<double(double)>& f, double a, double b,
                        const Options& opts = {}) {
    if (!(a <= b)) throw std::invalid_argument("integrate: requires a <= b");
    Result res;
    if (a == b) return res;

    std::vector<double> bounds{a};
    for (double s : opts.splits)
        if (s > a && s < b) bounds.push_back(s);
    bounds.push_back(b);
    std::sort(bounds.begin(), bounds.end());
    bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());

    std::priority_queue<detail::Segment> heap;
    double total = 0.0, total_err = 0.0;
    for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
        auto seg = detail::gk15(f, bounds[i], bounds[i + 1]);
        res.evaluations += 15;
        total += seg.value;
        total_err += seg.error;
        heap.push(seg);
    }

    const double min_width = opts.min_interval * (b - a);
    while (total_err > std::max(opts.tol_abs, opts.tol_rel * std::abs(total))) {
        if (res.evaluations + 30 > opts.max_evaluations) {
            res.status = Status::max_evaluations;
            break;
        }
        detail::Segment top = heap.top();
        if (top.b - top.a <= min_width) {
            res.status = Status::tolerance_not_met;
            break;
        }
        heap.pop();
        const double mid = 0.5 * (top.a + top.b);
        auto left = detail::gk15(f, top.a, mid);
        auto right = detail::gk15(f, mid, top.b);
        res.evaluations += 30;
        total += left.value + right.value - top.value;
        total_err += left.error + right.error - top.error;
        heap.push(left);
        heap.push(right);
    }

    res.value = total;
    res.error_estimate = total_err;
    if (!std::isfinite(res.value)) res.status = Status::tolerance_not_met;
    return res;
}

// Integral with the substitution u = a + (b-a) v^p, which tames an integrable
// singularity of f at the lower endpoint a. Split points are mapped through
// the substitution.
inline Result integrate_left_power(const std::function<double(double)>& f, double a, double b,
                                   double p, const Options& opts = {}) {
    if (!(a <= b)) throw std::invalid_argument("integrate_left_power: requires a <= b");
    if (a == b) return {};
    const double w = b - a;
    auto g = [&](double v) { return f(a + w * std::pow(v, p)) * p * std::pow(v, p - 1.0) * w; };
    Options o = opts;
    o.splits.clear();
    for (double s : opts.splits)
        if (s > a && s < b) o.splits.push_back(std::pow((s - a) / w, 1.0 / p));
    return integrate(g, 0.0, 1.0, o);
}

// Same idea at the upper endpoint: u = b - (b-a) v^p.
inline Result integrate_right_power(const std::function<double(double)>& f, double a, double b,
                                    double p, const Options& opts = {}) {
    if (!(a <= b)) throw std::invalid_argument("integrate_right_power: requires a <= b");
    if (a == b) return {};
    const double w = b - a;
    auto g = [&](double v) { return f(b - w * std::pow(v, p)) * p * std::pow(v, p - 1.0) * w; };
    Options o = opts;
    o.splits.clear();
    for (double s : opts.splits)
        if (s > a && s < b) o.splits.push_back(std::pow((b - s) / w, 1.0 / p));
    return integrate(g, 0.0, 1.0, o);
}

}  // namespace volterra::quad
