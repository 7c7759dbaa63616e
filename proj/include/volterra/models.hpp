#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "volterra/quadrature.hpp"

namespace volterra {

struct unsupported_parameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Volterra kernel families: Brownian indicator kernel, fractional Brownian
// motion, m-fold integrated Brownian motion and a once- or twice-integrated
// Volterra kernel h(t,s) = int_s^t K_inner(u,s) du.
class KernelFamily {
  public:
    enum class Type { brownian, fbm, mfold_ibm, integrated };

    static KernelFamily brownian() { return KernelFamily(Type::brownian); }

    static KernelFamily fbm(double hurst) {
        if (!(hurst > 0.0 && hurst < 1.0))
            throw unsupported_parameter("fbm: H must be in (0,1), got " + std::to_string(hurst));
        KernelFamily k(Type::fbm);
        k.hurst_ = hurst;
        k.c_h_ = std::sqrt(2.0 * hurst * std::tgamma(1.5 - hurst) /
                           (std::tgamma(hurst + 0.5) * std::tgamma(2.0 - 2.0 * hurst)));
        return k;
    }

    static KernelFamily mfold_ibm(int m) {
        if (m < 1) throw unsupported_parameter("mfold_ibm: m must be a positive integer");
        KernelFamily k(Type::mfold_ibm);
        k.m_ = m;
        return k;
    }

    static KernelFamily integrated(KernelFamily inner) {
        if (inner.integrated_depth() >= 2)
            throw unsupported_parameter("integrated: nesting depth above 2 is not supported");
        KernelFamily k(Type::integrated);
        k.inner_ = std::make_shared<KernelFamily>(std::move(inner));
        return k;
    }

    Type type() const { return type_; }
    double hurst() const { return hurst_; }
    // c_H from its Gamma-function expression, computed once at construction
    double c_h() const { return c_h_; }
    int m() const { return m_; }
    const KernelFamily& inner() const { return *inner_; }

    int integrated_depth() const {
        int d = 0;
        const KernelFamily* k = this;
        while (k->type_ == Type::integrated) {
            ++d;
            k = k->inner_.get();
        }
        return d;
    }

    std::string name() const {
        switch (type_) {
            case Type::brownian: return "brownian";
            case Type::fbm: return "fbm(H=" + std::to_string(hurst_) + ")";
            case Type::mfold_ibm: return "mfold_ibm(m=" + std::to_string(m_) + ")";
            case Type::integrated: return "integrated(" + inner_->name() + ")";
        }
        return "?";
    }

  private:
    explicit KernelFamily(Type t) : type_(t) {}

    Type type_;
    double hurst_ = 0.0;
    double c_h_ = 0.0;
    int m_ = 0;
    std::shared_ptr<const KernelFamily> inner_;
};

// The process under study plus its observation channel W = alpha B + alpha_tilde B_tilde.
struct ProcessModel {
    KernelFamily kernel;
    double horizon;      // T
    double alpha;        // signal weight
    double alpha_tilde;  // noise weight

    ProcessModel(KernelFamily k, double T, double a, double a_tilde)
        : kernel(std::move(k)), horizon(T), alpha(a), alpha_tilde(a_tilde) {
        if (!(T > 0.0)) throw std::invalid_argument("ProcessModel: horizon must be positive");
        if (!(a * a + a_tilde * a_tilde > 0.0))
            throw std::invalid_argument("ProcessModel: alpha^2 + alpha_tilde^2 must be positive");
    }

    double weight_sq() const { return alpha * alpha + alpha_tilde * alpha_tilde; }
    double signal_fraction() const { return alpha * alpha / weight_sq(); }
    double noise_fraction() const { return alpha_tilde * alpha_tilde / weight_sq(); }
};

namespace detail {

inline double factorial(int m) {
    double f = 1.0;
    for (int i = 2; i <= m; ++i) f *= i;
    return f;
}

}  // namespace detail

// K(., s) blows up like s^{1/2-H} as s -> 0 for fBm with H > 1/2, and
// integration preserves that behavior.
inline bool kernel_singular_at_origin(const KernelFamily& k) {
    switch (k.type()) {
        case KernelFamily::Type::fbm: return k.hurst() > 0.5;
        case KernelFamily::Type::integrated: return kernel_singular_at_origin(k.inner());
        default: return false;
    }
}

// K(t,s). Zero for s > t for every family. The fBm kernel inner integral is
// evaluated with the substitution u = s + v^2, which removes the (u-s)^{H-1/2}
// endpoint derivative blow-up.
inline double kernel_eval(const KernelFamily& k, double t, double s,
                          const quad::Options& opts = {}) {
    if (!(std::isfinite(t) && std::isfinite(s)))
        throw std::invalid_argument("kernel_eval: t and s must be finite");
    if (s > t || s < 0.0) return 0.0;
    switch (k.type()) {
        case KernelFamily::Type::brownian:
            return 1.0;
        case KernelFamily::Type::fbm: {
            const double H = k.hurst();
            if (s == 0.0) {
                if (H > 0.5) return std::numeric_limits<double>::infinity();
                return (H == 0.5) ? 1.0 : 0.0;
            }
            if (s == t) {
                if (H >= 0.5) return (H == 0.5) ? 1.0 : 0.0;
                return std::numeric_limits<double>::infinity();
            }
            const double first = std::pow((t / s) * (t - s), H - 0.5);
            const double w = std::sqrt(t - s);
            auto g = [&](double v) {
                return 2.0 * std::pow(s + v * v, H - 1.5) * std::pow(v, 2.0 * H);
            };
            quad::Options inner_opts = opts;
            inner_opts.splits.clear();
            const auto inner = quad::integrate(g, 0.0, w, inner_opts);
            return k.c_h() * (first - (H - 0.5) * std::pow(s, 0.5 - H) *
                                          quad::value_or_throw(inner, "fbm kernel"));
        }
        case KernelFamily::Type::mfold_ibm:
            return std::pow(t - s, k.m()) / detail::factorial(k.m());
        case KernelFamily::Type::integrated: {
            if (s == t) return 0.0;
            if (s == 0.0 && kernel_singular_at_origin(k))
                return std::numeric_limits<double>::infinity();
            auto f = [&](double u) { return kernel_eval(k.inner(), u, s, opts); };
            quad::Options o = opts;
            o.splits.clear();
            return quad::value_or_throw(quad::integrate_left_power(f, s, t, 2.0, o),
                                        "integrated kernel");
        }
    }
    return 0.0;
}

inline double kernel_eval(const ProcessModel& model, double t, double s,
                          const quad::Options& opts = {}) {
    return kernel_eval(model.kernel, t, s, opts);
}

inline bool has_closed_form_covariance(const KernelFamily& k) {
    return k.type() == KernelFamily::Type::brownian || k.type() == KernelFamily::Type::fbm;
}

// k(t,s) = int_0^{s^t} K(t,u) K(s,u) du evaluated by quadrature. For fBm the
// integrand behaves like u^{1-2H} at 0 and has a kink at the upper endpoint,
// so both ends get power substitutions.
inline double covariance_quadrature(const ProcessModel& model, double t, double s,
                                    const quad::Options& opts = {}) {
    const double m = std::min(t, s);
    if (m <= 0.0) return 0.0;
    auto f = [&](double u) {
        return kernel_eval(model.kernel, t, u, opts) * kernel_eval(model.kernel, s, u, opts);
    };
    const bool fbm = model.kernel.type() == KernelFamily::Type::fbm;
    if (fbm || kernel_singular_at_origin(model.kernel)) {
        quad::Options o = opts;
        o.splits.clear();
        const double mid = 0.5 * m;
        const auto left = quad::integrate_left_power(f, 0.0, mid, 4.0, o);
        // the diagonal kink is sharp only for the plain fBm kernel
        const auto right = fbm ? quad::integrate_right_power(f, mid, m, 2.0, o)
                               : quad::integrate(f, mid, m, o);
        return quad::value_or_throw(left, "covariance (left)") +
               quad::value_or_throw(right, "covariance (right)");
    }
    return quad::value_or_throw(quad::integrate(f, 0.0, m, opts), "covariance");
}

// Covariance of the process: closed form for Brownian and fBm, quadrature otherwise.
inline double covariance(const ProcessModel& model, double t, double s,
                         const quad::Options& opts = {}) {
    switch (model.kernel.type()) {
        case KernelFamily::Type::brownian:
            return std::min(t, s);
        case KernelFamily::Type::fbm: {
            const double H = model.kernel.hurst();
            return 0.5 * (std::pow(t, 2.0 * H) + std::pow(s, 2.0 * H) -
                          std::pow(std::abs(t - s), 2.0 * H));
        }
        default:
            return covariance_quadrature(model, t, s, opts);
    }
}

// Conditioning functions g on [0,T): the observed functionals are int_0^T g dW.
class ConditioningFunction {
  public:
    enum class Type { indicator, linear_decay, tabulated };

    static ConditioningFunction indicator() { return ConditioningFunction(Type::indicator); }
    static ConditioningFunction linear_decay() { return ConditioningFunction(Type::linear_decay); }

    // piecewise-constant-left values on a strictly increasing grid from 0 to T
    static ConditioningFunction tabulated(std::vector<double> grid, std::vector<double> values) {
        if (grid.size() < 2 || grid.size() != values.size())
            throw std::invalid_argument("tabulated: grid and values must match, length >= 2");
        if (grid.front() != 0.0)
            throw std::invalid_argument("tabulated: grid must start at 0");
        for (std::size_t i = 0; i + 1 < grid.size(); ++i)
            if (!(grid[i] < grid[i + 1]))
                throw std::invalid_argument("tabulated: grid must be strictly increasing");
        for (double v : values)
            if (!std::isfinite(v)) throw std::invalid_argument("tabulated: values must be finite");
        ConditioningFunction g(Type::tabulated);
        g.grid_ = std::move(grid);
        g.values_ = std::move(values);
        return g;
    }

    Type type() const { return type_; }
    const std::vector<double>& grid() const { return grid_; }
    const std::vector<double>& values() const { return values_; }

    // break points inside (0,T) where the integrand may kink or jump
    std::vector<double> breakpoints(double T) const {
        if (type_ != Type::tabulated) return {};
        std::vector<double> b;
        for (double u : grid_)
            if (u > 0.0 && u < T) b.push_back(u);
        return b;
    }

    std::string name() const {
        switch (type_) {
            case Type::indicator: return "indicator";
            case Type::linear_decay: return "linear_decay";
            case Type::tabulated: return "tabulated";
        }
        return "?";
    }

  private:
    explicit ConditioningFunction(Type t) : type_(t) {}

    Type type_;
    std::vector<double> grid_;
    std::vector<double> values_;
};

inline double conditioning_fn_eval(const ConditioningFunction& g, double t, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("conditioning_fn_eval: T must be positive");
    if (t < 0.0 || t >= T) return 0.0;
    switch (g.type()) {
        case ConditioningFunction::Type::indicator:
            return 1.0;
        case ConditioningFunction::Type::linear_decay:
            return (T - t) / T;
        case ConditioningFunction::Type::tabulated: {
            if (g.grid().back() != T)
                throw std::invalid_argument("tabulated: grid must end at T");
            // left-constant interpolation, matching the Ito convention
            auto it = std::upper_bound(g.grid().begin(), g.grid().end(), t);
            const std::size_t idx = static_cast<std::size_t>(it - g.grid().begin());
            return g.values()[idx == 0 ? 0 : idx - 1];
        }
    }
    return 0.0;
}

// Ordered conditioning functions with their observed values x.
struct ConditioningSet {
    std::vector<ConditioningFunction> functions;
    std::vector<double> x;

    ConditioningSet(std::vector<ConditioningFunction> fs, std::vector<double> obs)
        : functions(std::move(fs)), x(std::move(obs)) {
        if (functions.empty()) throw std::invalid_argument("ConditioningSet: needs n >= 1");
        if (functions.size() != x.size())
            throw std::invalid_argument("ConditioningSet: x length must match functions");
    }

    std::size_t size() const { return functions.size(); }
};

struct HolderModulus {
    double value = 0.0;
    double delta = 0.0;
    int resolution = 0;
    double argmax_t = 0.0;  // left point of the maximizing pair (t, t+delta)
};

// M(delta) = sup over pairs |t1-t2| <= delta of int_0^T (K(t1,u)-K(t2,u))^2 du,
// the sup taken over a uniform grid of pairs (t, t+delta).
inline HolderModulus holder_modulus(const ProcessModel& model, double delta, int resolution,
                                    const quad::Options& opts = {}) {
    const double T = model.horizon;
    if (!(delta > 0.0 && delta <= T))
        throw std::invalid_argument("holder_modulus: delta must be in (0, T]");
    if (resolution < 1) throw std::invalid_argument("holder_modulus: resolution must be >= 1");

    HolderModulus out;
    out.delta = delta;
    out.resolution = resolution;
    const bool fbm = model.kernel.type() == KernelFamily::Type::fbm ||
                     kernel_singular_at_origin(model.kernel);
    for (int i = 0; i < resolution; ++i) {
        const double t1 =
            (resolution == 1) ? 0.0 : (T - delta) * static_cast<double>(i) / (resolution - 1);
        const double t2 = t1 + delta;
        auto f = [&](double u) {
            const double d =
                kernel_eval(model.kernel, t1, u, opts) - kernel_eval(model.kernel, t2, u, opts);
            return d * d;
        };
        double v;
        if (fbm) {
            quad::Options o = opts;
            o.splits.clear();
            if (t1 > 0.0) {
                const double mid = 0.5 * t1;
                v = quad::value_or_throw(quad::integrate_left_power(f, 0.0, mid, 4.0, o),
                                         "holder") +
                    quad::value_or_throw(quad::integrate_right_power(f, mid, t1, 2.0, o),
                                         "holder") +
                    quad::value_or_throw(quad::integrate_right_power(f, t1, t2, 2.0, o), "holder");
            } else {
                const double mid = 0.5 * t2;
                v = quad::value_or_throw(quad::integrate_left_power(f, 0.0, mid, 4.0, o),
                                         "holder") +
                    quad::value_or_throw(quad::integrate_right_power(f, mid, t2, 2.0, o),
                                         "holder");
            }
        } else {
            quad::Options o = opts;
            o.splits.push_back(t1);
            o.splits.push_back(t2);
            v = quad::value_or_throw(quad::integrate(f, 0.0, std::min(t2, T), o), "holder");
        }
        if (v > out.value) {
            out.value = v;
            out.argmax_t = t1;
        }
    }
    return out;
}

}  // namespace volterra
