#pragma once

/**
 * Monte Carlo validation of the exact EWMA moments.
 *
 * Each replication draws k * t_max in-control indicators, forms column totals,
 * cumulative counts, the standardized statistic and the EWMA path. Across
 * replications the per-t sample mean and (n - 1 divisor) sample variance are
 * compared with exact_mean() / the incremental variance engine.
 *
 * Replication m is seeded with replication_seed(seed, m). Replications are
 * grouped into fixed blocks of `replication_block` and block results are merged
 * in block order, so reports do not depend on the number of worker threads.
 */

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "chart.hpp"
#include "errors.hpp"
#include "moments.hpp"
#include "rng.hpp"
#include "version.hpp"

namespace csb_ewma {

struct SimConfig {
    std::uint32_t k = 10;
    double p0 = 0.5;
    double lambda = 0.2;
    double r0 = 0.0;
    std::uint64_t t_max = 1000;
    std::uint64_t n_reps = 10000;
    std::uint64_t seed = 123;
    std::optional<double> shift_p; // out-of-control generation probability

    [[nodiscard]] MomentParams moment_params() const { return {lambda, r0}; }

    void validate() const {
        if (k == 0) throw config_error("k must be >= 1");
        if (!std::isfinite(p0) || !(p0 > 0.0 && p0 < 1.0)) throw config_error("p0 must lie in (0, 1)");
        moment_params().validate();
        if (t_max == 0) throw config_error("t_max must be >= 1");
        if (n_reps == 0) throw config_error("n_reps must be >= 1");
        if (shift_p && (!std::isfinite(*shift_p) || !(*shift_p > 0.0 && *shift_p < 1.0)))
            throw config_error("shift_p must lie in (0, 1)");
    }

    /// Chart configuration matching this simulation, for limits evaluation.
    [[nodiscard]] ChartConfig chart_config(double L = 3.0) const {
        ChartConfig cfg;
        cfg.k = k;
        cfg.p0 = p0;
        cfg.lambda = lambda;
        cfg.r0 = r0;
        cfg.L = L;
        cfg.mode = InputMode::recoded;
        return cfg;
    }

    friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

struct ReplicationPath {
    std::vector<std::uint32_t> c;
    std::vector<double> w;
    std::vector<double> r;
};

namespace detail {

// generation_p may be 0 or 1 here (degenerate test paths); standardization
// always uses the in-control p0.
inline ReplicationPath simulate_path(const SimConfig& cfg, double generation_p, std::uint64_t rep_seed) {
    BernoulliSource draw(rep_seed);
    ReplicationPath path;
    path.c.resize(cfg.t_max);
    path.w.resize(cfg.t_max);
    path.r.resize(cfg.t_max);
    const double mu = cfg.k * cfg.p0;
    const double sigma2 = cfg.k * cfg.p0 * (1.0 - cfg.p0);
    std::uint64_t q = 0;
    double r = cfg.r0;
    for (std::uint64_t t = 1; t <= cfg.t_max; ++t) {
        std::uint32_t c = 0;
        for (std::uint32_t i = 0; i < cfg.k; ++i) c += draw(generation_p) ? 1u : 0u;
        q += c;
        const auto tt = static_cast<double>(t);
        const double w = (static_cast<double>(q) - mu * tt) / std::sqrt(sigma2 * tt);
        r = cfg.lambda * w + (1.0 - cfg.lambda) * r;
        path.c[t - 1] = c;
        path.w[t - 1] = w;
        path.r[t - 1] = r;
    }
    return path;
}

inline unsigned resolve_threads(unsigned requested) {
    if (requested != 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Runs body(block_index) for every block on up to `threads` workers.
template <class Body>
void parallel_blocks(std::uint64_t n_blocks, unsigned threads, Body&& body) {
    const auto workers = static_cast<unsigned>(std::min<std::uint64_t>(resolve_threads(threads), n_blocks));
    if (workers <= 1) {
        for (std::uint64_t b = 0; b < n_blocks; ++b) body(b);
        return;
    }
    std::atomic<std::uint64_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::uint64_t b = next++; b < n_blocks; b = next++) body(b);
        });
}

} // namespace detail

/// Full (C_t, W_t, r_t) path of one replication.
[[nodiscard]] inline ReplicationPath simulate_replication_path(const SimConfig& cfg, std::uint64_t rep_seed) {
    cfg.validate();
    return detail::simulate_path(cfg, cfg.shift_p.value_or(cfg.p0), rep_seed);
}

/// r_1 .. r_{t_max} of one replication; deterministic in rep_seed.
[[nodiscard]] inline std::vector<double> simulate_replication(const SimConfig& cfg, std::uint64_t rep_seed) {
    return simulate_replication_path(cfg, rep_seed).r;
}

/// Welford running mean / M2 with pairwise merge.
struct RunningMoments {
    std::uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void push(double x) {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }

    void merge(const RunningMoments& other) {
        if (other.n == 0) return;
        if (n == 0) {
            *this = other;
            return;
        }
        const auto na = static_cast<double>(n);
        const auto nb = static_cast<double>(other.n);
        const double total = na + nb;
        const double delta = other.mean - mean;
        mean += delta * nb / total;
        m2 += other.m2 + delta * delta * na * nb / total;
        n += other.n;
    }

    [[nodiscard]] double sample_variance() const {
        return n < 2 ? std::nan("") : m2 / static_cast<double>(n - 1);
    }
};

inline constexpr std::uint64_t replication_block = 256;

struct ValidationRow {
    std::uint64_t t = 0;
    double theoretical_mean = 0.0;
    double simulated_mean = 0.0;
    double theoretical_var = 0.0;
    double simulated_var = 0.0;
    double relative_bias_var = 0.0; // (simulated - theoretical) / theoretical

    friend bool operator==(const ValidationRow&, const ValidationRow&) = default;
};

struct Diagnostics {
    double max_abs_bias_mean = 0.0;
    double rms_bias_mean = 0.0;
    double max_abs_bias_var = 0.0;
    double rms_bias_var = 0.0;

    friend bool operator==(const Diagnostics&, const Diagnostics&) = default;
};

struct ValidationReport {
    std::string tool_version = csb_ewma::version;
    SimConfig config;
    std::vector<ValidationRow> rows;   // checkpoints, ascending t
    Diagnostics diagnostics;           // over every t in 1..t_max
    std::uint64_t convergence_t_99 = 0;
    std::vector<ValidationRow> series; // every t in 1..t_max (plot data)

    friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

struct ValidationTolerances {
    double max_abs_mean_bias = 0.03;
    double max_abs_relative_var_bias = 0.03;
};

[[nodiscard]] inline bool row_within(const ValidationRow& row, const ValidationTolerances& tol = {}) {
    return std::abs(row.simulated_mean - row.theoretical_mean) <= tol.max_abs_mean_bias &&
           std::abs(row.relative_bias_var) <= tol.max_abs_relative_var_bias;
}

[[nodiscard]] inline bool passes(const ValidationReport& report, const ValidationTolerances& tol = {}) {
    return std::all_of(report.rows.begin(), report.rows.end(),
                       [&](const ValidationRow& row) { return row_within(row, tol); });
}

/**
 * Run n_reps replications and compare per-t empirical moments with the exact
 * ones. Requires n_reps >= 2 (sample variance) and checkpoints within
 * [1, t_max]; checkpoints are sorted and deduplicated.
 */
[[nodiscard]] inline ValidationReport run_validation(const SimConfig& cfg, std::vector<std::uint64_t> checkpoints,
                                                     unsigned threads = 0) {
    cfg.validate();
    if (checkpoints.empty()) throw config_error("run_validation: no checkpoints given");
    if (cfg.n_reps < 2) throw config_error("run_validation: n_reps must be >= 2 for a sample variance");
    std::sort(checkpoints.begin(), checkpoints.end());
    checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
    if (checkpoints.front() == 0 || checkpoints.back() > cfg.t_max)
        throw config_error("run_validation: checkpoints must lie in [1, t_max]");

    const double generation_p = cfg.shift_p.value_or(cfg.p0);
    const std::uint64_t n_blocks = (cfg.n_reps + replication_block - 1) / replication_block;

    // One wave of blocks is held in memory at a time; merged in block order.
    const std::uint64_t wave = std::max<std::uint64_t>(1, detail::resolve_threads(threads));
    std::vector<RunningMoments> total(cfg.t_max);
    for (std::uint64_t first = 0; first < n_blocks; first += wave) {
        const std::uint64_t count = std::min(wave, n_blocks - first);
        std::vector<std::vector<RunningMoments>> partial(count, std::vector<RunningMoments>(cfg.t_max));
        detail::parallel_blocks(count, threads, [&](std::uint64_t local) {
            const std::uint64_t block = first + local;
            const std::uint64_t begin = block * replication_block;
            const std::uint64_t end = std::min(cfg.n_reps, begin + replication_block);
            auto& acc = partial[local];
            for (std::uint64_t m = begin; m < end; ++m) {
                const auto path = detail::simulate_path(cfg, generation_p, replication_seed(cfg.seed, m));
                for (std::uint64_t t = 0; t < cfg.t_max; ++t) acc[t].push(path.r[t]);
            }
        });
        for (const auto& block : partial)
            for (std::uint64_t t = 0; t < cfg.t_max; ++t) total[t].merge(block[t]);
    }

    ValidationReport report;
    report.config = cfg;
    report.series.reserve(cfg.t_max);
    const auto params = cfg.moment_params();
    VarianceAccumulator acc(cfg.lambda);
    double sum_sq_mean = 0.0;
    double sum_sq_var = 0.0;
    for (std::uint64_t t = 1; t <= cfg.t_max; ++t) {
        const auto step = variance_step(acc, params);
        acc = step.acc;
        ValidationRow row;
        row.t = t;
        row.theoretical_mean = exact_mean(params, t);
        row.simulated_mean = total[t - 1].mean;
        row.theoretical_var = step.variance;
        row.simulated_var = total[t - 1].sample_variance();
        row.relative_bias_var = (row.simulated_var - row.theoretical_var) / row.theoretical_var;
        const double bias_mean = row.simulated_mean - row.theoretical_mean;
        const double bias_var = row.simulated_var - row.theoretical_var;
        auto& d = report.diagnostics;
        d.max_abs_bias_mean = std::max(d.max_abs_bias_mean, std::abs(bias_mean));
        d.max_abs_bias_var = std::max(d.max_abs_bias_var, std::abs(bias_var));
        sum_sq_mean += bias_mean * bias_mean;
        sum_sq_var += bias_var * bias_var;
        report.series.push_back(row);
    }
    const auto tt = static_cast<double>(cfg.t_max);
    report.diagnostics.rms_bias_mean = std::sqrt(sum_sq_mean / tt);
    report.diagnostics.rms_bias_var = std::sqrt(sum_sq_var / tt);
    for (auto t : checkpoints) report.rows.push_back(report.series[t - 1]);
    report.convergence_t_99 = variance_convergence_time(params, 0.99);
    return report;
}

struct CovarianceEstimate {
    double value = 0.0;
    double standard_error = 0.0;
};

/**
 * Cross-replication sample covariance of W_i and W_j over cfg.n_reps
 * replications, with the delta-method standard error
 * sqrt((m22 - cov^2) / n), m22 = mean of squared centred products.
 */
[[nodiscard]] inline CovarianceEstimate empirical_w_covariance(const SimConfig& cfg, std::uint64_t i,
                                                               std::uint64_t j, unsigned threads = 0) {
    cfg.validate();
    if (i == 0 || j == 0 || i > cfg.t_max || j > cfg.t_max)
        throw config_error("empirical_w_covariance: indices must lie in [1, t_max]");
    if (cfg.n_reps < 2) throw config_error("empirical_w_covariance: n_reps must be >= 2");
    SimConfig trimmed = cfg;
    trimmed.t_max = std::max(i, j);
    const double generation_p = cfg.shift_p.value_or(cfg.p0);

    std::vector<double> wi(cfg.n_reps);
    std::vector<double> wj(cfg.n_reps);
    const std::uint64_t n_blocks = (cfg.n_reps + replication_block - 1) / replication_block;
    detail::parallel_blocks(n_blocks, threads, [&](std::uint64_t block) {
        const std::uint64_t begin = block * replication_block;
        const std::uint64_t end = std::min(cfg.n_reps, begin + replication_block);
        for (std::uint64_t m = begin; m < end; ++m) {
            const auto path = detail::simulate_path(trimmed, generation_p, replication_seed(cfg.seed, m));
            wi[m] = path.w[i - 1];
            wj[m] = path.w[j - 1];
        }
    });

    const auto n = static_cast<double>(cfg.n_reps);
    double mean_i = 0.0;
    double mean_j = 0.0;
    for (std::uint64_t m = 0; m < cfg.n_reps; ++m) {
        mean_i += wi[m];
        mean_j += wj[m];
    }
    mean_i /= n;
    mean_j /= n;
    double cross = 0.0;
    double cross_sq = 0.0;
    for (std::uint64_t m = 0; m < cfg.n_reps; ++m) {
        const double prod = (wi[m] - mean_i) * (wj[m] - mean_j);
        cross += prod;
        cross_sq += prod * prod;
    }
    CovarianceEstimate est;
    est.value = cross / (n - 1.0);
    const double biased = cross / n;
    est.standard_error = std::sqrt(std::max(0.0, cross_sq / n - biased * biased) / n);
    return est;
}

} // namespace csb_ewma
