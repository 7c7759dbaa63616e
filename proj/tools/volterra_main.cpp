// volterra: batch CLI for conditional Volterra laws, small-time limit
// covariances and large-deviation rate diagnostics. Every command is a pure
// function of (config file, referenced CSVs, seed); reruns are byte-identical.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "volterra/asymptotics.hpp"
#include "volterra/conditioning.hpp"
#include "volterra/config.hpp"
#include "volterra/csv.hpp"
#include "volterra/ldp.hpp"
#include "volterra/models.hpp"
#include "volterra/sim.hpp"

namespace {

namespace fs = std::filesystem;
using volterra::RunConfig;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string out_path(const RunConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.output_dir);
    return (fs::path(cfg.output_dir) / name).string();
}

void write_raw_csv(const std::string& path, const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
}

volterra::PathConditionalLaw path_law(const RunConfig& cfg) {
    std::vector<double> grid{0.0, cfg.horizon};
    std::vector<double> values{0.0, 0.0};
    if (!cfg.psi_csv.empty()) {
        const auto table = volterra::csv::read(cfg.psi_csv);
        const int cu = table.column("u");
        const int cpsi = table.column("psi");
        grid.clear();
        values.clear();
        for (const auto& row : table.rows) {
            grid.push_back(row[cu]);
            values.push_back(row[cpsi]);
        }
    }
    return volterra::PathConditionalLaw(cfg.model(), std::move(grid), std::move(values),
                                        cfg.quad_options());
}

// Limit law governing the rate functional / probe bound for the configured
// model. Brownian is its own (trivial) limit; the three worked families have
// closed forms; anything else has none.
volterra::LimitLaw limit_law_for(const RunConfig& cfg, volterra::LimitKind kind) {
    using volterra::LimitKind;
    const auto model = cfg.model();
    if (cfg.kernel.type() == volterra::KernelFamily::Type::brownian) {
        volterra::LimitLaw law;
        law.gamma_exp = 0.5;
        law.kind = kind;
        law.kbar = [](double t, double s) { return std::min(t, s); };
        if (kind == LimitKind::path)
            law.limit_kernel = [](double, double) { return 1.0; };
        return law;
    }
    const auto family = cfg.example_family();
    if (!family)
        throw volterra::unsupported_parameter(
            "no closed-form limit law for this model (need brownian, fbm with H>1/2, mfold or "
            "integrated)");
    const volterra::ConditioningSet gs =
        (kind == LimitKind::functional) ? cfg.gset()
                                        : volterra::ConditioningSet(
                                              {volterra::ConditioningFunction::indicator()}, {0.0});
    return volterra::closed_form_limits(*family, model, &gs, kind,
                                        cfg.paper_literal_coefficients, cfg.cond_bound,
                                        cfg.quad_options());
}

int cmd_cov(const RunConfig& cfg) {
    const auto model = cfg.model();
    const auto opts = cfg.quad_options();
    std::function<double(double, double)> cov;
    std::optional<volterra::FunctionalConditionalLaw> flaw;
    std::optional<volterra::PathConditionalLaw> plaw;
    switch (cfg.mode) {
        case RunConfig::Mode::none:
            cov = [&](double t, double s) { return volterra::covariance(model, t, s, opts); };
            break;
        case RunConfig::Mode::functional:
            flaw.emplace(model, cfg.gset(), cfg.cond_bound, opts);
            cov = [&](double t, double s) { return flaw->covariance(t, s); };
            break;
        case RunConfig::Mode::path:
            plaw.emplace(path_law(cfg));
            cov = [&](double t, double s) { return plaw->covariance(t, s); };
            break;
    }
    volterra::csv::Table table;
    table.header = {"t", "s", "value"};
    for (std::size_t i = 0; i < cfg.time_grid.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j)
            table.rows.push_back(
                {cfg.time_grid[i], cfg.time_grid[j], cov(cfg.time_grid[i], cfg.time_grid[j])});
    volterra::csv::write(out_path(cfg, "cov.csv"), table);
    return kExitOk;
}

int cmd_limits(const RunConfig& cfg) {
    using volterra::csv::format_double;
    const auto model = cfg.model();
    const auto opts = cfg.quad_options();
    const auto ladder = cfg.ladder();
    const double gamma = cfg.gamma_or_default();
    const auto family = cfg.example_family();
    const bool brownian = cfg.kernel.type() == volterra::KernelFamily::Type::brownian;

    std::optional<volterra::LimitLaw> base_cf, cond_cf, path_cf;
    if (brownian || family) {
        // no closed form (e.g. tabulated g): the closed_form column stays nan
        try {
            base_cf = limit_law_for(cfg, volterra::LimitKind::base);
            if (cfg.mode == RunConfig::Mode::functional)
                cond_cf = limit_law_for(cfg, volterra::LimitKind::functional);
            if (cfg.mode == RunConfig::Mode::path)
                path_cf = limit_law_for(cfg, volterra::LimitKind::path);
        } catch (const volterra::unsupported_parameter&) {
        }
    }

    std::vector<std::vector<std::string>> rows;
    auto emit = [&](const std::string& quantity, double t, double s,
                    const volterra::LadderEstimate& est, double closed) {
        for (std::size_t i = 0; i < est.eps.size(); ++i)
            rows.push_back({format_double(est.eps[i]), quantity, format_double(t),
                            format_double(s), format_double(est.ratios[i]),
                            format_double(closed), est.converged ? "1" : "0"});
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();

    for (std::size_t i = 0; i < cfg.limit_grid.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double t = cfg.limit_grid[i], s = cfg.limit_grid[j];
            const auto est = volterra::limit_cov_estimate(model, gamma, t, s, ladder,
                                                          cfg.convergence,
                                                          volterra::CovPath::closed_form, opts);
            emit("kbar", t, s, est, base_cf ? base_cf->kbar(t, s) : nan);
        }

    if (cfg.mode == RunConfig::Mode::functional) {
        const auto gs = cfg.gset();
        for (std::size_t gi = 0; gi < gs.size(); ++gi) {
            for (double t : cfg.limit_grid) {
                const auto est = volterra::limit_cross_estimate(model, gs.functions[gi], gamma, t,
                                                                ladder, cfg.convergence, opts);
                double closed = nan;
                if (cond_cf && cond_cf->rbar)
                    closed = cond_cf->rbar(t)(static_cast<Eigen::Index>(gi));
                if (brownian) closed = 0.0;
                emit("rbar_" + std::to_string(gi + 1), t, nan, est, closed);
            }
        }
        volterra::FunctionalConditionalLaw law(model, gs, cfg.cond_bound, opts);
        for (std::size_t i = 0; i < cfg.limit_grid.size(); ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                const double t = cfg.limit_grid[i], s = cfg.limit_grid[j];
                const auto est = volterra::limit_cov_cond_estimate(law, gamma, t, s, ladder,
                                                                   cfg.convergence);
                emit("kbar_g", t, s, est, cond_cf ? cond_cf->kbar(t, s) : nan);
            }
    }

    if (cfg.mode == RunConfig::Mode::path) {
        for (std::size_t i = 0; i < cfg.limit_grid.size(); ++i)
            for (std::size_t j = 0; j < i; ++j) {
                const double t = cfg.limit_grid[i], s = cfg.limit_grid[j];
                const auto est =
                    volterra::limit_kernel_estimate(model, gamma, t, s, ladder, cfg.convergence,
                                                    opts);
                double closed = nan;
                if (path_cf && path_cf->limit_kernel) closed = path_cf->limit_kernel(t, s);
                if (family && *family != volterra::ExampleFamily::fbm) closed = 0.0;
                emit("Kbar", t, s, est, closed);
            }
        const auto plaw = path_law(cfg);
        for (std::size_t i = 0; i < cfg.limit_grid.size(); ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                const double t = cfg.limit_grid[i], s = cfg.limit_grid[j];
                const auto est = volterra::limit_cov_path_estimate(plaw, gamma, t, s, ladder,
                                                                   cfg.convergence);
                emit("upsilon_bar", t, s, est, path_cf ? path_cf->kbar(t, s) : nan);
            }
    }

    write_raw_csv(out_path(cfg, "limits.csv"),
                  {"eps", "quantity", "t", "s", "ratio", "closed_form", "converged"}, rows);
    return kExitOk;
}

int cmd_rate(const RunConfig& cfg, const std::string& h_csv) {
    const auto table = volterra::csv::read(h_csv);
    const int ct = table.column("t");
    const int ch = table.column("h");
    std::vector<double> grid, h;
    for (const auto& row : table.rows) {
        grid.push_back(row[ct]);
        h.push_back(row[ch]);
    }
    const auto law = limit_law_for(cfg, cfg.rate_kind);
    const auto result = volterra::rate_functional(
        volterra::RateQuery(law.kbar, std::move(grid), std::move(h)), cfg.pinv_cutoff,
        cfg.rkhs_residual);
    nlohmann::ordered_json j;
    j["value"] = result.value;
    j["residual"] = result.residual;
    j["in_rkhs"] = result.in_rkhs;
    std::ofstream out(out_path(cfg, "rate.json"), std::ios::binary);
    out << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_probe(const RunConfig& cfg) {
    const auto model = cfg.model();
    const auto opts = cfg.quad_options();
    volterra::IncrementLaw law;
    volterra::LimitKind kind = volterra::LimitKind::base;
    std::optional<volterra::FunctionalConditionalLaw> flaw;
    std::optional<volterra::PathConditionalLaw> plaw;
    switch (cfg.mode) {
        case RunConfig::Mode::none:
            law = volterra::increment_law(model, opts);
            break;
        case RunConfig::Mode::functional:
            flaw.emplace(model, cfg.gset(), cfg.cond_bound, opts);
            law = volterra::increment_law(*flaw);
            kind = volterra::LimitKind::functional;
            break;
        case RunConfig::Mode::path:
            plaw.emplace(path_law(cfg));
            law = volterra::increment_law(*plaw);
            kind = volterra::LimitKind::path;
            break;
    }
    std::function<double(double, double)> limit_kbar;
    try {
        limit_kbar = limit_law_for(cfg, kind).kbar;
    } catch (const volterra::unsupported_parameter&) {
        // no closed-form limit: the bound column degrades to nan
    }
    std::vector<double> grid;
    for (int i = 1; i <= cfg.probe_points; ++i)
        grid.push_back(static_cast<double>(i) / cfg.probe_points);
    const auto report =
        volterra::ldp_probe(law, limit_kbar, cfg.gamma_or_default(), cfg.ladder(),
                            cfg.probe_delta, grid, cfg.probe_n, cfg.seed);
    volterra::csv::Table table;
    table.header = {"eps", "p_hat", "mc_stderr", "gamma_sq_log_p", "predicted_rate_bound"};
    for (const auto& row : report.rows)
        table.rows.push_back(
            {row.eps, row.p_hat, row.mc_stderr, row.gamma_sq_log_p, row.predicted_rate_bound});
    volterra::csv::write(out_path(cfg, "probe.csv"), table);
    return kExitOk;
}

int cmd_fit_speed(const RunConfig& cfg) {
    const auto fit = volterra::speed_exponent_fit(cfg.model(), cfg.ladder(), cfg.quad_options());
    nlohmann::ordered_json j;
    j["slope"] = fit.slope;
    j["r2"] = fit.r2;
    std::ofstream out(out_path(cfg, "fit_speed.json"), std::ios::binary);
    out << j.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditional Volterra process laws, small-time limits and LDP diagnostics"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string h_csv;
    std::optional<std::uint64_t> seed_override;
    bool paper_literal = false;

    app.add_option("--config", config_path, "path to the JSON run configuration")->required();
    app.add_option("--out", out_dir, "output directory (overrides config)");
    app.add_option("--seed", seed_override, "seed (overrides config)");
    app.add_flag("--paper-literal-coefficients", paper_literal,
                 "use the literal printed coefficient variant of the path limit covariance");

    auto* cov = app.add_subcommand("cov", "covariance table of k, k^g or Upsilon");
    auto* limits = app.add_subcommand("limits", "ladder report for the limit quantities");
    auto* rate = app.add_subcommand("rate", "RKHS rate functional of a target path");
    rate->add_option("--h-csv", h_csv, "CSV with columns t,h: the target path")->required();
    auto* probe = app.add_subcommand("probe", "Monte Carlo exit-probability probe");
    auto* fit = app.add_subcommand("fit-speed", "log-log slope of the increment variance");

    CLI11_PARSE(app, argc, argv);

    RunConfig cfg;
    try {
        cfg = volterra::load_config(config_path);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (seed_override) cfg.seed = *seed_override;
        if (paper_literal) cfg.paper_literal_coefficients = true;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (cov->parsed()) return cmd_cov(cfg);
        if (limits->parsed()) return cmd_limits(cfg);
        if (rate->parsed()) return cmd_rate(cfg, h_csv);
        if (probe->parsed()) return cmd_probe(cfg);
        if (fit->parsed()) return cmd_fit_speed(cfg);
    } catch (const volterra::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}
