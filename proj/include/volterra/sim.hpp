#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "volterra/conditioning.hpp"
#include "volterra/csv.hpp"
#include "volterra/linalg.hpp"
#include "volterra/models.hpp"
#include "volterra/rng.hpp"

namespace volterra {

// N i.i.d. draws from one declared finite-dimensional Gaussian law.
struct SampleBatch {
    std::vector<double> grid;
    Eigen::MatrixXd samples;  // N x dim, one draw per row
    std::uint64_t seed = 0;
    std::string law_descriptor;
};

// mean + L z with z standard normal; draw r comes from the stream
// (seed, tag, r), so batches are identical for identical (seed, N, law)
// regardless of evaluation order.
inline SampleBatch sample_gaussian(const Eigen::VectorXd& mean, const GramMatrix& gram,
                                   std::int64_t n_draws, std::uint64_t seed,
                                   std::string_view tag = "sample_gaussian") {
    const auto dim = gram.entries.rows();
    if (mean.size() != dim) throw std::invalid_argument("sample_gaussian: mean/gram mismatch");
    const SpdFactor factor = spd_factor(gram, 0.0);

    SampleBatch batch;
    batch.grid = gram.grid;
    batch.seed = seed;
    batch.law_descriptor = std::string(tag) + " (jitter " + csv::format_double(factor.jitter_used) + ")";
    batch.samples.resize(n_draws, dim);
    Eigen::VectorXd z(dim);
    for (std::int64_t r = 0; r < n_draws; ++r) {
        CounterRng rng(seed, tag, static_cast<std::uint64_t>(r));
        for (Eigen::Index i = 0; i < dim; ++i) z(i) = rng.normal();
        batch.samples.row(r) =
            (mean + factor.chol_lower.triangularView<Eigen::Lower>() * z).transpose();
    }
    return batch;
}

// Joint covariance of (X_{t_1..t_m}, G_1..G_n): process block k(t_i,t_j),
// cross block r_j(t_i), functional block C^g.
inline GramMatrix joint_model_cov(const ProcessModel& model, const ConditioningSet& gset,
                                  std::span<const double> grid, double cond_bound = 1e8,
                                  const quad::Options& opts = {}) {
    const auto m = static_cast<Eigen::Index>(grid.size());
    const auto n = static_cast<Eigen::Index>(gset.size());
    for (double t : grid)
        if (!(t > 0.0)) throw std::invalid_argument("joint_model_cov: grid must be positive");

    GramMatrix g;
    g.grid.assign(grid.begin(), grid.end());
    g.entries.resize(m + n, m + n);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            g.entries(i, j) = covariance(model, grid[i], grid[j], opts);
            g.entries(j, i) = g.entries(i, j);
        }
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            g.entries(i, m + j) = cross_cov(model, gset.functions[j], grid[i], opts);
            g.entries(m + j, i) = g.entries(i, m + j);
        }
    g.entries.block(m, m, n, n) = functional_gram(model, gset, cond_bound, opts);
    return g;
}

struct ConditionalEstimate {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Exact linear-Gaussian conditioning of a joint covariance whose trailing
// n_cond coordinates are observed at x: the Schur-complement oracle.
inline ConditionalEstimate schur_conditional(const Eigen::MatrixXd& joint, int n_cond,
                                             const Eigen::VectorXd& x) {
    const auto total = joint.rows();
    const auto m = total - n_cond;
    if (m <= 0 || x.size() != n_cond)
        throw std::invalid_argument("schur_conditional: block sizes do not match");
    const Eigen::MatrixXd sxx = joint.topLeftCorner(m, m);
    const Eigen::MatrixXd sxg = joint.topRightCorner(m, n_cond);
    const Eigen::MatrixXd sgg = joint.bottomRightCorner(n_cond, n_cond);
    Eigen::LLT<Eigen::MatrixXd> llt(sgg);
    if (llt.info() != Eigen::Success)
        throw not_positive_semidefinite("schur_conditional: singular functional block");
    ConditionalEstimate est;
    est.mean = sxg * llt.solve(x);
    est.cov = sxx - sxg * llt.solve(sxg.transpose());
    est.cov = 0.5 * (est.cov + est.cov.transpose());
    return est;
}

// Empirical covariance of the rows of a batch (with mean subtraction).
inline Eigen::MatrixXd empirical_covariance(const Eigen::MatrixXd& rows) {
    const auto n = rows.rows();
    if (n < 2) throw std::invalid_argument("empirical_covariance: need at least two rows");
    const Eigen::RowVectorXd mu = rows.colwise().mean();
    Eigen::MatrixXd centered = rows.rowwise() - mu;
    return centered.transpose() * centered / static_cast<double>(n - 1);
}

// Conditioning of the EMPIRICAL joint covariance of a batch drawn from
// joint_model_cov: a consistent estimator of (m^{g;x}, k^g) as N grows.
inline ConditionalEstimate empirical_conditional(const SampleBatch& batch, int n_cond,
                                                 const Eigen::VectorXd& x) {
    return schur_conditional(empirical_covariance(batch.samples), n_cond, x);
}

// Batch rows as a CSV table, one column per grid point and one per trailing
// functional coordinate.
inline csv::Table batch_to_csv(const SampleBatch& batch) {
    csv::Table table;
    const auto dim = static_cast<std::size_t>(batch.samples.cols());
    for (std::size_t i = 0; i < dim; ++i) {
        if (i < batch.grid.size())
            table.header.push_back("x_" + csv::format_double(batch.grid[i]));
        else
            table.header.push_back("g_" + std::to_string(i - batch.grid.size() + 1));
    }
    table.rows.reserve(static_cast<std::size_t>(batch.samples.rows()));
    for (Eigen::Index r = 0; r < batch.samples.rows(); ++r) {
        std::vector<double> row(dim);
        for (std::size_t i = 0; i < dim; ++i) row[i] = batch.samples(r, static_cast<Eigen::Index>(i));
        table.rows.push_back(std::move(row));
    }
    return table;
}

// Entrywise bootstrap stderr (resampling batch rows) of empirical_conditional.
inline ConditionalEstimate bootstrap_conditional_stderr(const SampleBatch& batch, int n_cond,
                                                        const Eigen::VectorXd& x, int n_resamples,
                                                        std::uint64_t seed) {
    const auto n = batch.samples.rows();
    const auto dim = batch.samples.cols();
    const auto m = dim - n_cond;
    Eigen::MatrixXd mean_acc = Eigen::MatrixXd::Zero(m, 2);
    Eigen::MatrixXd cov_acc1 = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd cov_acc2 = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd resampled(n, dim);
    for (int b = 0; b < n_resamples; ++b) {
        CounterRng rng(seed, "bootstrap", static_cast<std::uint64_t>(b));
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto pick = static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(n));
            resampled.row(i) = batch.samples.row(pick);
        }
        const auto est = schur_conditional(empirical_covariance(resampled), n_cond, x);
        mean_acc.col(0) += est.mean;
        mean_acc.col(1) += est.mean.cwiseProduct(est.mean);
        cov_acc1 += est.cov;
        cov_acc2 += est.cov.cwiseProduct(est.cov);
    }
    const double nb = static_cast<double>(n_resamples);
    ConditionalEstimate stderr_est;
    stderr_est.mean =
        ((mean_acc.col(1) / nb - (mean_acc.col(0) / nb).cwiseAbs2()).cwiseMax(0.0)).cwiseSqrt();
    stderr_est.cov = ((cov_acc2 / nb - (cov_acc1 / nb).cwiseAbs2()).cwiseMax(0.0)).cwiseSqrt();
    return stderr_est;
}

}  // namespace volterra
