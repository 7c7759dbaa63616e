#include <catch2/catch.hpp>
#include <cmath>

#include "volterra/asymptotics.hpp"
#include "volterra/conditioning.hpp"
#include "volterra/models.hpp"

using namespace volterra;

namespace {

quad::Options tight() {
    quad::Options o;
    o.tol_abs = 1e-12;
    o.tol_rel = 1e-12;
    return o;
}

ConditioningSet standard_gset() {
    return ConditioningSet(
        {ConditioningFunction::indicator(), ConditioningFunction::linear_decay()}, {0.0, 0.0});
}

}  // namespace

TEST_CASE("ladder construction and validation") {
    auto ladder = EpsilonLadder::geometric();
    REQUIRE(ladder.values.size() == 7);
    REQUIRE(ladder.values.front() == Approx(1e-1));
    REQUIRE(ladder.values.back() == Approx(1e-4));
    REQUIRE_THROWS_AS(EpsilonLadder({0.1, 0.2}), std::invalid_argument);
    REQUIRE_THROWS_AS(EpsilonLadder({0.1, -0.01}), std::invalid_argument);
}

// ============================================================================
// limit covariance ratios
// ============================================================================

TEST_CASE("fBm self-similarity makes the ratio exactly the covariance") {
    for (double H : {0.6, 0.75}) {
        ProcessModel model(KernelFamily::fbm(H), 1.0, 1.0, 1.0);
        auto ladder = EpsilonLadder::geometric();
        for (auto [t, s] : {std::pair{1.0, 0.5}, {0.8, 0.8}, {0.2, 0.6}}) {
            auto est = limit_cov_estimate(model, H, t, s, ladder);
            const double k = covariance(model, t, s);
            for (double r : est.ratios) REQUIRE(r == Approx(k).margin(1e-9));
            REQUIRE(est.converged);
        }
    }
}

TEST_CASE("m-fold limit covariance converges to the closed form") {
    ProcessModel model(KernelFamily::mfold_ibm(1), 1.0, 1.0, 1.0);
    auto est = limit_cov_estimate(model, 1.0, 1.0, 1.0, EpsilonLadder::geometric(), 5e-3,
                                  CovPath::closed_form, tight());
    REQUIRE(est.converged);
    REQUIRE(est.extrapolation == Approx(1.0).epsilon(1e-3));
}

TEST_CASE("wrong scaling exponent raises the non-convergence flag") {
    ProcessModel model(KernelFamily::fbm(0.75), 1.0, 1.0, 1.0);
    auto est = limit_cov_estimate(model, 0.25, 1.0, 1.0, EpsilonLadder::geometric());
    REQUIRE_FALSE(est.converged);
}

// ============================================================================
// limit cross covariance
// ============================================================================

TEST_CASE("m-fold cross limits match the closed forms") {
    ProcessModel model(KernelFamily::mfold_ibm(1), 1.0, 1.0, 1.0);
    auto ladder = EpsilonLadder::geometric(1e-1, 1e-3);
    auto e1 = limit_cross_estimate(model, ConditioningFunction::indicator(), 1.0, 1.0, ladder,
                                   5e-3, tight());
    REQUIRE(e1.converged);
    REQUIRE(e1.extrapolation == Approx(1.0).epsilon(1e-6));  // exact for m=1
    auto e2 = limit_cross_estimate(model, ConditioningFunction::linear_decay(), 1.0, 1.0, ladder,
                                   5e-3, tight());
    REQUIRE(e2.extrapolation == Approx(0.5).epsilon(1e-3));

    ProcessModel m2(KernelFamily::mfold_ibm(2), 1.0, 1.0, 1.0);
    auto e3 = limit_cross_estimate(m2, ConditioningFunction::indicator(), 1.0, 1.0, ladder, 5e-3,
                                   tight());
    REQUIRE(e3.extrapolation == Approx(0.5).epsilon(1e-3));  // (alpha/m!) T^m = 1/2
    auto e4 = limit_cross_estimate(m2, ConditioningFunction::linear_decay(), 1.0, 1.0, ladder,
                                   5e-3, tight());
    REQUIRE(e4.extrapolation == Approx(1.0 / 3.0).epsilon(1e-3));  // (1/2)(2/3)
}

TEST_CASE("fBm cross ratios decay toward zero") {
    ProcessModel model(KernelFamily::fbm(0.75), 1.0, 1.0, 1.0);
    auto est = limit_cross_estimate(model, ConditioningFunction::indicator(), 0.75, 1.0,
                                    EpsilonLadder::geometric(1e-1, 1e-3));
    for (std::size_t i = 1; i < est.ratios.size(); ++i)
        REQUIRE(std::abs(est.ratios[i]) < std::abs(est.ratios[i - 1]));
}

// ============================================================================
// conditioned limit covariance
// ============================================================================

TEST_CASE("kbar^g assembly from components") {
    // m-fold m=1, T=1, alpha=alpha_tilde=1: (C^g)^{-1} = [[2,-3],[-3,6]],
    // b = (1, 1/2), a = 1 - b' C^{-1} b = 1/2
    ProcessModel model(KernelFamily::mfold_ibm(1), 1.0, 1.0, 1.0);
    auto gs = standard_gset();
    const Eigen::MatrixXd gram = functional_gram(model, gs, 1e8, tight());
    auto kbar = [](double t, double s) { return t * s; };
    auto rbar = [](double t) {
        Eigen::VectorXd v(2);
        v << t, 0.5 * t;
        return v;
    };
    REQUIRE(limit_cov_functional(kbar, rbar, gram, 1.0, 1.0) == Approx(0.5).margin(1e-10));
    REQUIRE(limit_cov_functional(kbar, rbar, gram, 0.5, 0.8) ==
            Approx(0.5 * 0.5 * 0.8).margin(1e-10));

    // alpha = 0 keeps kbar untouched (rbar is proportional to alpha)
    auto rzero = [](double t) { return Eigen::VectorXd::Zero(2).eval(); };
    REQUIRE(limit_cov_functional(kbar, rzero, gram, 0.7, 0.9) == Approx(0.7 * 0.9));
}

TEST_CASE("conditioned covariance ratio converges to a st") {
    ProcessModel model(KernelFamily::mfold_ibm(1), 1.0, 1.0, 1.0);
    FunctionalConditionalLaw law(model, standard_gset(), 1e8, tight());
    auto est = limit_cov_cond_estimate(law, 1.0, 1.0, 1.0, EpsilonLadder::geometric(1e-1, 1e-3));
    REQUIRE(est.extrapolation == Approx(0.5).epsilon(2e-2));
}

// ============================================================================
// limit kernel
// ============================================================================

TEST_CASE("m-fold limit kernel ratios decay like sqrt(eps)") {
    ProcessModel model(KernelFamily::mfold_ibm(1), 1.0, 1.0, 1.0);
    auto ladder = EpsilonLadder::geometric(1e-1, 1e-3);
    auto est = limit_kernel_estimate(model, 1.0, 1.0, 0.5, ladder, 5e-3, tight());
    for (std::size_t i = 0; i < ladder.values.size(); ++i)
        REQUIRE(est.ratios[i] == Approx(0.5 * std::sqrt(ladder.values[i])).margin(1e-12));
    auto diag = limit_kernel_estimate(model, 1.0, 0.5, 0.5, ladder, 5e-3, tight());
    for (double r : diag.ratios) REQUIRE(r == 0.0);
}

TEST_CASE("fBm limit kernel tends to c_H (t-s)^{H-1/2}") {
    const double H = 0.75;
    ProcessModel model(KernelFamily::fbm(H), 1.0, 1.0, 1.0);
    const double ch = model.kernel.c_h();
    auto ladder = EpsilonLadder::geometric(1e-2, 1e-4);
    for (auto [t, s] : {std::pair{1.0, 0.0}, {1.0, 0.5}, {0.75, 0.25}}) {
        auto est = limit_kernel_estimate(model, H, t, s, ladder, 5e-3, tight());
        REQUIRE(est.extrapolation == Approx(ch * std::pow(t - s, H - 0.5)).epsilon(1e-2));
    }
}

// ============================================================================
// limit covariance for path conditioning
// ============================================================================

TEST_CASE("path limit covariance of the worked families") {
    // m-fold: Kbar = 0, Upsilon-bar = noise_fraction * kbar
    ProcessModel model(KernelFamily::mfold_ibm(1), 1.0, 1.0, 1.0);
    auto kbar = [](double t, double s) { return t * s; };
    REQUIRE(limit_cov_path(model, kbar, nullptr, 0.8, 0.6) == Approx(0.5 * 0.48).margin(1e-12));

    // alpha_tilde = 0 with vanishing limit kernel: both terms die
    ProcessModel clean(KernelFamily::mfold_ibm(1), 1.0, 1.0, 0.0);
    REQUIRE(limit_cov_path(clean, kbar, nullptr, 1.0, 1.0) == 0.0);
}

TEST_CASE("fBm path limit covariance matches its quadrature form") {
    const double H = 0.75;
    ProcessModel model(KernelFamily::fbm(H), 1.0, 1.0, 1.0);
    const double ch = model.kernel.c_h();
    auto kbar = [&](double t, double s) { return covariance(model, t, s); };
    auto Kbar = [&](double t, double s) {
        return (s < t) ? ch * std::pow(t - s, H - 0.5) : 0.0;
    };
    // independent evaluation of the convolution term at (1, 0.6)
    const double t = 1.0, s = 0.6;
    quad::Options o = tight();
    const double conv = quad::integrate_right_power(
                            [&](double u) { return Kbar(t, u) * Kbar(s, u); }, 0.0, s, 2.0, o)
                            .value;
    REQUIRE(limit_cov_path(model, kbar, Kbar, t, s, false, tight()) ==
            Approx(0.5 * conv + 0.5 * kbar(t, s)).margin(1e-10));
}

TEST_CASE("paper-literal coefficient switch changes only the kernel term") {
    ProcessModel model(KernelFamily::fbm(0.75), 1.0, 2.0, 1.0);  // asymmetric weights
    const double ch = model.kernel.c_h();
    auto kbar = [&](double t, double s) { return covariance(model, t, s); };
    auto Kbar = [&](double t, double s) {
        return (s < t) ? ch * std::pow(t - s, 0.25) : 0.0;
    };
    const double derivation = limit_cov_path(model, kbar, Kbar, 1.0, 0.5, false, tight());
    const double literal = limit_cov_path(model, kbar, Kbar, 1.0, 0.5, true, tight());
    const double kk = (derivation - model.noise_fraction() * kbar(1.0, 0.5)) /
                      model.signal_fraction();
    REQUIRE(literal ==
            Approx(model.noise_fraction() * kk + model.noise_fraction() * kbar(1.0, 0.5))
                .margin(1e-10));
}

// ============================================================================
// closed-form limit laws
// ============================================================================

TEST_CASE("closed-form limits: fBm") {
    ProcessModel model(KernelFamily::fbm(0.75), 1.0, 1.0, 1.0);
    auto gs = standard_gset();
    auto law = closed_form_limits(ExampleFamily::fbm, model, &gs, LimitKind::functional, false,
                                  1e8, tight());
    REQUIRE(law.gamma_exp == Approx(0.75));
    // rbar vanishes, so the conditioned limit equals the plain covariance
    REQUIRE(law.kbar(0.7, 0.4) == Approx(covariance(model, 0.7, 0.4)).margin(1e-12));
    REQUIRE(law.rbar(0.9).norm() == 0.0);

    ProcessModel half(KernelFamily::fbm(0.5), 1.0, 1.0, 1.0);
    REQUIRE_THROWS_AS(
        closed_form_limits(ExampleFamily::fbm, half, &gs, LimitKind::base, false, 1e8, tight()),
        unsupported_parameter);
}

TEST_CASE("closed-form limits: m-fold functional constant a") {
    ProcessModel model(KernelFamily::mfold_ibm(1), 1.0, 1.0, 1.0);
    auto gs = standard_gset();
    auto law = closed_form_limits(ExampleFamily::mfold, model, &gs, LimitKind::functional, false,
                                  1e8, tight());
    REQUIRE(law.gamma_exp == 1.0);
    REQUIRE(law.rank1_constant == Approx(0.5).margin(1e-12));
    REQUIRE(law.kbar(1.0, 1.0) == Approx(0.5).margin(1e-12));
    REQUIRE(law.rbar(1.0)(0) == Approx(1.0).margin(1e-12));
    REQUIRE(law.rbar(1.0)(1) == Approx(0.5).margin(1e-12));

    auto base = closed_form_limits(ExampleFamily::mfold, model, nullptr, LimitKind::base, false,
                                   1e8, tight());
    REQUIRE(base.kbar(1.0, 1.0) == Approx(1.0).margin(1e-12));

    auto path = closed_form_limits(ExampleFamily::mfold, model, nullptr, LimitKind::path, false,
                                   1e8, tight());
    REQUIRE(path.kbar(1.0, 1.0) == Approx(0.5).margin(1e-12));
}

TEST_CASE("closed-form limits: integrated with inner Brownian equals m-fold m=1") {
    ProcessModel model(KernelFamily::integrated(KernelFamily::brownian()), 1.0, 1.0, 1.0);
    auto gs = standard_gset();
    auto law = closed_form_limits(ExampleFamily::integrated, model, &gs, LimitKind::functional,
                                  false, 1e8, tight());
    REQUIRE(law.rank1_constant == Approx(0.5).margin(1e-10));
    REQUIRE(law.rbar(1.0)(0) == Approx(1.0).margin(1e-10));   // int_0^1 K(1,u) du
    REQUIRE(law.rbar(1.0)(1) == Approx(0.5).margin(1e-10));   // int_0^1 K(1,u)(1-u) du
}

TEST_CASE("closed-form limits reject mismatched models and tabulated g") {
    ProcessModel model(KernelFamily::brownian(), 1.0, 1.0, 1.0);
    REQUIRE_THROWS_AS(
        closed_form_limits(ExampleFamily::mfold, model, nullptr, LimitKind::base, false, 1e8),
        unsupported_parameter);
    ProcessModel m1(KernelFamily::mfold_ibm(1), 1.0, 1.0, 1.0);
    ConditioningSet tab({ConditioningFunction::tabulated({0.0, 1.0}, {1.0, 1.0}),
                         ConditioningFunction::linear_decay()},
                        {0.0, 0.0});
    REQUIRE_THROWS_AS(closed_form_limits(ExampleFamily::mfold, m1, &tab, LimitKind::functional,
                                         false, 1e8),
                      unsupported_parameter);
}

// ============================================================================
// speed exponent fits
// ============================================================================

TEST_CASE("speed exponent fits recover the family scalings") {
    auto ladder = EpsilonLadder::geometric();
    ProcessModel fbm06(KernelFamily::fbm(0.6), 1.0, 1.0, 1.0);
    REQUIRE(speed_exponent_fit(fbm06, ladder).slope == Approx(1.2).margin(0.02));
    ProcessModel fbm075(KernelFamily::fbm(0.75), 1.0, 1.0, 1.0);
    REQUIRE(speed_exponent_fit(fbm075, ladder).slope == Approx(1.5).margin(0.02));
    ProcessModel bm(KernelFamily::brownian(), 1.0, 1.0, 1.0);
    REQUIRE(speed_exponent_fit(bm, ladder).slope == Approx(1.0).margin(0.02));
    ProcessModel m1(KernelFamily::mfold_ibm(1), 1.0, 1.0, 1.0);
    auto fit = speed_exponent_fit(m1, ladder, tight());
    REQUIRE(fit.slope == Approx(2.0).margin(0.05));
    REQUIRE(fit.r2 > 0.999);
}

TEST_CASE("speed exponent fit needs a usable ladder") {
    ProcessModel bm(KernelFamily::brownian(), 1.0, 1.0, 1.0);
    REQUIRE_THROWS_AS(speed_exponent_fit(bm, EpsilonLadder({0.1, 0.05})), std::invalid_argument);
    REQUIRE_THROWS_AS(speed_exponent_fit(bm, EpsilonLadder({2.0, 1.5, 1.2})),
                      std::invalid_argument);
}

TEST_CASE("log-log fit on an exact power law") {
    std::vector<double> x{0.1, 0.05, 0.01, 0.005};
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 * std::pow(v, 1.7));
    auto fit = fit_log_log(x, y);
    REQUIRE(fit.slope == Approx(1.7).margin(1e-12));
    REQUIRE(fit.r2 == Approx(1.0).margin(1e-12));
}

// ============================================================================
// exponential tightness ratios
// ============================================================================

TEST_CASE("tightness ratios are flat across the ladder") {
    std::vector<double> grid;
    for (int i = 1; i <= 10; ++i) grid.push_back(i / 10.0);
    auto ladder = EpsilonLadder::geometric(1e-1, 1e-3);

    SECTION("fBm base ratio is exactly one") {
        ProcessModel model(KernelFamily::fbm(0.75), 1.0, 1.0, 1.0);
        auto ex = family_exponents(model);
        for (double eps : ladder.values)
            REQUIRE(tightness_base_sup(model, eps, grid, ex.gamma_exp, ex.tau) ==
                    Approx(1.0).margin(1e-8));
    }

    SECTION("cond1 and cond2 ratios show no growth trend") {
        for (auto family : {KernelFamily::fbm(0.75), KernelFamily::mfold_ibm(1)}) {
            ProcessModel model(family, 1.0, 1.0, 1.0);
            auto ex = family_exponents(model);
            std::vector<double> sup1, sup2;
            for (double eps : ladder.values) {
                sup1.push_back(tightness_cond1_sup(model, ConditioningFunction::indicator(), eps,
                                                   grid, ex.gamma_exp, ex.tau_hat, tight()));
                sup2.push_back(tightness_cond2_sup(model, eps, grid, ex.gamma_exp, ex.tau_hat,
                                                   tight()));
            }
            REQUIRE(fit_log_log(ladder.values, sup1).slope >= -0.05);
            REQUIRE(fit_log_log(ladder.values, sup2).slope >= -0.05);
        }
    }
}

TEST_CASE("integrated-family ladder agrees with its closed form on a grid") {
    ProcessModel model(KernelFamily::integrated(KernelFamily::brownian()), 1.0, 1.0, 1.0);
    auto law = closed_form_limits(ExampleFamily::integrated, model, nullptr, LimitKind::base,
                                  false, 1e8, tight());
    const EpsilonLadder ladder({1e-2, 1e-3});
    for (double t : {0.2, 0.4, 0.6, 0.8, 1.0})
        for (double s : {0.2, 0.4, 0.6, 0.8, 1.0}) {
            const auto est = limit_cov_estimate(model, 1.0, t, s, ladder, 5e-3,
                                                CovPath::closed_form, tight());
            const double closed = law.kbar(t, s);
            REQUIRE(std::abs(est.ratios.back() - closed) / (std::abs(closed) + 1e-12) <= 1e-2);
        }
}

TEST_CASE("geometric ladder rejects non-contracting ratios") {
    REQUIRE_THROWS_AS(EpsilonLadder::geometric(0.1, 0.01, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(EpsilonLadder::geometric(0.1, 0.01, 1.5), std::invalid_argument);
    REQUIRE_THROWS_AS(EpsilonLadder::geometric(0.01, 0.1, 0.5), std::invalid_argument);
    REQUIRE(EpsilonLadder::geometric(0.1, 0.01, 0.5).values.size() == 4);
}
