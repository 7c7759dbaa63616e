#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "volterra/asymptotics.hpp"
#include "volterra/models.hpp"
#include "volterra/quadrature.hpp"

namespace volterra {

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Run configuration: one JSON file drives every CLI command. Every field has
// a default (listed in the README); unknown keys are rejected.
struct RunConfig {
    // model
    KernelFamily kernel = KernelFamily::brownian();
    double horizon = 1.0;
    double alpha = 1.0;
    double alpha_tilde = 1.0;

    // conditioning
    enum class Mode { none, functional, path };
    Mode mode = Mode::none;
    std::vector<ConditioningFunction> g;
    std::vector<double> x;
    std::string psi_csv;

    // ladder
    std::vector<double> ladder_eps;

    // grids
    std::vector<double> time_grid;   // evaluation times for cov
    std::vector<double> limit_grid;  // (0,1] grid for limits and rates
    int probe_points = 64;

    // tolerances
    double quadrature_abs = 1e-9;
    double quadrature_rel = 1e-9;
    std::int64_t max_evaluations = 1'000'000;
    double pinv_cutoff = 1e-10;
    double rkhs_residual = 1e-6;
    double convergence = 5e-3;
    double cond_bound = 1e8;

    // probe
    double probe_delta = 1.0;
    std::int64_t probe_n = 100'000;

    // rate
    LimitKind rate_kind = LimitKind::base;

    std::optional<double> gamma_exp;  // default: the family exponent
    std::uint64_t seed = 42;
    std::string output_dir = ".";
    bool paper_literal_coefficients = false;

    ProcessModel model() const { return ProcessModel(kernel, horizon, alpha, alpha_tilde); }

    ConditioningSet gset() const {
        if (g.empty()) throw config_error("conditioning.g: needed for functional mode");
        std::vector<double> obs = x;
        if (obs.empty()) obs.assign(g.size(), 0.0);
        return ConditioningSet(g, std::move(obs));
    }

    quad::Options quad_options() const {
        quad::Options o;
        o.tol_abs = quadrature_abs;
        o.tol_rel = quadrature_rel;
        o.max_evaluations = max_evaluations;
        return o;
    }

    EpsilonLadder ladder() const { return EpsilonLadder(ladder_eps); }

    double gamma_or_default() const {
        if (gamma_exp) return *gamma_exp;
        return family_exponents(model()).gamma_exp;
    }

    std::optional<ExampleFamily> example_family() const {
        switch (kernel.type()) {
            case KernelFamily::Type::fbm:
                return (kernel.hurst() > 0.5) ? std::optional(ExampleFamily::fbm) : std::nullopt;
            case KernelFamily::Type::mfold_ibm: return ExampleFamily::mfold;
            case KernelFamily::Type::integrated: return ExampleFamily::integrated;
            default: return std::nullopt;
        }
    }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw config_error(where + ": unknown key '" + it.key() + "'");
}

template <class T>
T get_or(const json& obj, const std::string& key, T fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error(where + "." + key + ": wrong type");
    }
}

inline KernelFamily parse_kernel(const json& k, const std::string& where) {
    if (!k.is_object()) throw config_error(where + ": must be an object");
    reject_unknown(k, {"family", "H", "m", "inner"}, where);
    const auto family = get_or<std::string>(k, "family", "", where);
    if (family == "brownian") return KernelFamily::brownian();
    if (family == "fbm") {
        if (!k.contains("H")) throw config_error(where + ": fbm needs H");
        return KernelFamily::fbm(k.at("H").get<double>());
    }
    if (family == "mfold") {
        if (!k.contains("m")) throw config_error(where + ": mfold needs m");
        return KernelFamily::mfold_ibm(k.at("m").get<int>());
    }
    if (family == "integrated") {
        if (!k.contains("inner")) throw config_error(where + ": integrated needs inner");
        return KernelFamily::integrated(parse_kernel(k.at("inner"), where + ".inner"));
    }
    throw config_error(where + ".family: expected brownian|fbm|mfold|integrated, got '" +
                       family + "'");
}

inline ConditioningFunction parse_g(const json& g, const std::string& where) {
    if (!g.is_object()) throw config_error(where + ": must be an object");
    reject_unknown(g, {"type", "grid", "values"}, where);
    const auto type = get_or<std::string>(g, "type", "", where);
    if (type == "indicator") return ConditioningFunction::indicator();
    if (type == "linear_decay") return ConditioningFunction::linear_decay();
    if (type == "tabulated") {
        if (!g.contains("grid") || !g.contains("values"))
            throw config_error(where + ": tabulated needs grid and values");
        return ConditioningFunction::tabulated(g.at("grid").get<std::vector<double>>(),
                                               g.at("values").get<std::vector<double>>());
    }
    throw config_error(where + ".type: expected indicator|linear_decay|tabulated, got '" + type +
                       "'");
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& root) {
    using detail::get_or;
    using detail::reject_unknown;
    if (!root.is_object()) throw config_error("config: root must be an object");
    reject_unknown(root,
                   {"model", "conditioning", "ladder", "grids", "tolerances", "probe", "rate",
                    "asymptotics", "seed", "output_dir", "paper_literal_coefficients"},
                   "config");
    RunConfig cfg;

    if (root.contains("model")) {
        const auto& m = root.at("model");
        reject_unknown(m, {"kernel", "T", "alpha", "alpha_tilde"}, "model");
        if (m.contains("kernel")) cfg.kernel = detail::parse_kernel(m.at("kernel"), "model.kernel");
        cfg.horizon = get_or<double>(m, "T", cfg.horizon, "model");
        cfg.alpha = get_or<double>(m, "alpha", cfg.alpha, "model");
        cfg.alpha_tilde = get_or<double>(m, "alpha_tilde", cfg.alpha_tilde, "model");
        if (!(cfg.horizon > 0.0)) throw config_error("model.T: must be positive");
        if (!(cfg.alpha * cfg.alpha + cfg.alpha_tilde * cfg.alpha_tilde > 0.0))
            throw config_error("model: alpha^2 + alpha_tilde^2 must be positive");
    }

    if (root.contains("conditioning")) {
        const auto& c = root.at("conditioning");
        reject_unknown(c, {"mode", "g", "x", "psi_csv"}, "conditioning");
        const auto mode = get_or<std::string>(c, "mode", "none", "conditioning");
        if (mode == "none") cfg.mode = RunConfig::Mode::none;
        else if (mode == "functional") cfg.mode = RunConfig::Mode::functional;
        else if (mode == "path") cfg.mode = RunConfig::Mode::path;
        else throw config_error("conditioning.mode: expected none|functional|path");
        if (c.contains("g")) {
            if (!c.at("g").is_array()) throw config_error("conditioning.g: must be an array");
            int i = 0;
            for (const auto& gj : c.at("g"))
                cfg.g.push_back(detail::parse_g(gj, "conditioning.g[" + std::to_string(i++) + "]"));
        }
        cfg.x = get_or<std::vector<double>>(c, "x", {}, "conditioning");
        cfg.psi_csv = get_or<std::string>(c, "psi_csv", "", "conditioning");
        if (!cfg.x.empty() && cfg.x.size() != cfg.g.size())
            throw config_error("conditioning.x: length must match g");
    }

    if (root.contains("ladder")) {
        const auto& l = root.at("ladder");
        reject_unknown(l, {"eps", "start", "stop", "ratio"}, "ladder");
        if (l.contains("eps")) {
            cfg.ladder_eps = l.at("eps").get<std::vector<double>>();
        } else {
            const double start = get_or<double>(l, "start", 1e-1, "ladder");
            const double stop = get_or<double>(l, "stop", 1e-4, "ladder");
            const double ratio = get_or<double>(l, "ratio", 0.31622776601683794, "ladder");
            try {
                cfg.ladder_eps = EpsilonLadder::geometric(start, stop, ratio).values;
            } catch (const std::invalid_argument& e) {
                throw config_error(std::string("ladder: ") + e.what());
            }
        }
    } else {
        cfg.ladder_eps = EpsilonLadder::geometric().values;
    }

    if (root.contains("grids")) {
        const auto& g = root.at("grids");
        reject_unknown(g, {"time", "limit", "probe_points"}, "grids");
        cfg.time_grid = get_or<std::vector<double>>(g, "time", {}, "grids");
        cfg.limit_grid = get_or<std::vector<double>>(g, "limit", {}, "grids");
        cfg.probe_points = get_or<int>(g, "probe_points", 64, "grids");
        if (cfg.probe_points < 1 || cfg.probe_points > 1000000)
            throw config_error("grids.probe_points: must be in [1, 1e6]");
    }
    if (cfg.time_grid.empty())
        for (int i = 1; i <= 6; ++i) cfg.time_grid.push_back(0.2 * i * cfg.horizon);
    if (cfg.limit_grid.empty())
        for (int i = 1; i <= 5; ++i) cfg.limit_grid.push_back(0.2 * i);
    for (double t : cfg.limit_grid)
        if (!(t > 0.0 && t <= 1.0)) throw config_error("grids.limit: values must be in (0,1]");

    if (root.contains("tolerances")) {
        const auto& t = root.at("tolerances");
        reject_unknown(t,
                       {"quadrature_abs", "quadrature_rel", "max_evaluations", "pinv_cutoff",
                        "rkhs_residual", "convergence", "cond_bound"},
                       "tolerances");
        cfg.quadrature_abs = get_or<double>(t, "quadrature_abs", cfg.quadrature_abs, "tolerances");
        cfg.quadrature_rel = get_or<double>(t, "quadrature_rel", cfg.quadrature_rel, "tolerances");
        cfg.max_evaluations =
            get_or<std::int64_t>(t, "max_evaluations", cfg.max_evaluations, "tolerances");
        cfg.pinv_cutoff = get_or<double>(t, "pinv_cutoff", cfg.pinv_cutoff, "tolerances");
        cfg.rkhs_residual = get_or<double>(t, "rkhs_residual", cfg.rkhs_residual, "tolerances");
        cfg.convergence = get_or<double>(t, "convergence", cfg.convergence, "tolerances");
        cfg.cond_bound = get_or<double>(t, "cond_bound", cfg.cond_bound, "tolerances");
    }

    if (root.contains("probe")) {
        const auto& p = root.at("probe");
        reject_unknown(p, {"delta", "n_samples"}, "probe");
        cfg.probe_delta = get_or<double>(p, "delta", cfg.probe_delta, "probe");
        cfg.probe_n = get_or<std::int64_t>(p, "n_samples", cfg.probe_n, "probe");
    }

    if (root.contains("rate")) {
        const auto& r = root.at("rate");
        reject_unknown(r, {"kind"}, "rate");
        const auto kind = get_or<std::string>(r, "kind", "base", "rate");
        if (kind == "base") cfg.rate_kind = LimitKind::base;
        else if (kind == "functional") cfg.rate_kind = LimitKind::functional;
        else if (kind == "path") cfg.rate_kind = LimitKind::path;
        else throw config_error("rate.kind: expected base|functional|path");
    }

    if (root.contains("asymptotics")) {
        const auto& a = root.at("asymptotics");
        reject_unknown(a, {"gamma_exp"}, "asymptotics");
        if (a.contains("gamma_exp") && !a.at("gamma_exp").is_null())
            cfg.gamma_exp = a.at("gamma_exp").get<double>();
    }

    cfg.seed = get_or<std::uint64_t>(root, "seed", cfg.seed, "config");
    cfg.output_dir = get_or<std::string>(root, "output_dir", cfg.output_dir, "config");
    cfg.paper_literal_coefficients =
        get_or<bool>(root, "paper_literal_coefficients", false, "config");
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path);
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("config: JSON parse error in " + path + ": " + e.what());
    }
    return parse_config(root);
}

}  // namespace volterra
