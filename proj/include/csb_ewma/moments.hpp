#pragma once

/**
 * Exact moments of the cumulative standardized binomial EWMA statistic.
 *
 * The statistic is r_t = lambda * W_t + (1 - lambda) * r_{t-1}, where W_t is the
 * cumulative count standardized by its exact binomial mean and variance. The
 * W_t are correlated, Cov(W_i, W_j) = sqrt(min(i,j) / max(i,j)), so the
 * variance of r_t is time-varying and only tends to 1 as t grows.
 *
 * Two routes to Var(r_t) are provided:
 *   - exact_variance_bruteforce(): the closed-form double sum, O(t^2).
 *   - VarianceAccumulator / variance_step(): an O(1)-per-step recurrence
 *       B_t = (1 - lambda) * (B_{t-1} + sqrt(t - 1)),      B_1 = 0
 *       S_t = (1 - lambda)^2 * S_{t-1} + 2 B_t / sqrt(t) + 1, S_1 = 1
 *       Var(r_t) = lambda^2 * S_t
 */

#include <cmath>
#include <cstdint>
#include <string>

#include "errors.hpp"

namespace csb_ewma {

struct MomentParams {
    double lambda = 0.2;
    double r0 = 0.0;

    void validate() const {
        if (!std::isfinite(lambda) || !(lambda > 0.0 && lambda <= 1.0))
            throw config_error("lambda must satisfy 0 < lambda <= 1, got " + std::to_string(lambda));
        if (!std::isfinite(r0))
            throw config_error("r0 must be finite");
    }
};

/// E[r_t] = (1 - lambda)^t * r0.
[[nodiscard]] inline double exact_mean(const MomentParams& params, std::uint64_t t) {
    params.validate();
    if (t == 0) throw config_error("exact_mean: t must be >= 1");
    if (params.r0 == 0.0) return 0.0;
    return std::pow(1.0 - params.lambda, static_cast<double>(t)) * params.r0;
}

/// Cov(W_i, W_j) = sqrt(min(i,j)) / sqrt(max(i,j)).
[[nodiscard]] inline double covariance_w(std::uint64_t i, std::uint64_t j) {
    if (i == 0 || j == 0) throw config_error("covariance_w: indices must be >= 1");
    if (i == j) return 1.0;
    const auto lo = static_cast<double>(i < j ? i : j);
    const auto hi = static_cast<double>(i < j ? j : i);
    return std::sqrt(lo) / std::sqrt(hi);
}

/**
 * Var(r_t) by direct evaluation of the double sum, with the off-diagonal
 * half doubled:
 *
 *   lambda^2 * [ 2 sum_{j<i} (1-lambda)^(2t-i-j) sqrt(j)/sqrt(i)
 *                + sum_i (1-lambda)^(2t-2i) ]
 *
 * O(t^2). Used as the reference for the incremental engine.
 */
[[nodiscard]] inline double exact_variance_bruteforce(const MomentParams& params, std::uint64_t t) {
    params.validate();
    if (t == 0) throw config_error("exact_variance_bruteforce: t must be >= 1");
    const double decay = 1.0 - params.lambda;
    const auto tt = static_cast<double>(t);
    double off_diagonal = 0.0;
    for (std::uint64_t j = 1; j < t; ++j) {
        const double sqrt_j = std::sqrt(static_cast<double>(j));
        for (std::uint64_t i = j + 1; i <= t; ++i) {
            // std::pow(0, 0) == 1, so lambda == 1 keeps only the i == j == t term.
            const double weight = std::pow(decay, 2.0 * tt - static_cast<double>(i) - static_cast<double>(j));
            off_diagonal += weight * sqrt_j / std::sqrt(static_cast<double>(i));
        }
    }
    double diagonal = 0.0;
    for (std::uint64_t i = 1; i <= t; ++i)
        diagonal += std::pow(decay, 2.0 * tt - 2.0 * static_cast<double>(i));
    return params.lambda * params.lambda * (2.0 * off_diagonal + diagonal);
}

/// Running state of the variance recurrence; bound to one lambda for its lifetime.
struct VarianceAccumulator {
    std::uint64_t t = 0;
    double s = 0.0; // S_t, so that Var(r_t) = lambda^2 * S_t
    double b = 0.0; // B_t = sum_{j<t} (1-lambda)^(t-j) sqrt(j)
    double lambda = 0.0;

    VarianceAccumulator() = default;
    explicit VarianceAccumulator(double lambda_) : lambda(lambda_) {}

    [[nodiscard]] double variance() const {
        if (t == 0) throw config_error("VarianceAccumulator: variance undefined at t = 0");
        return lambda * lambda * s;
    }

    friend bool operator==(const VarianceAccumulator&, const VarianceAccumulator&) = default;
};

struct VarianceStep {
    VarianceAccumulator acc;
    double variance;
};

/// Advance the accumulator from t to t+1 and return Var(r_{t+1}).
[[nodiscard]] inline VarianceStep variance_step(VarianceAccumulator acc, const MomentParams& params) {
    params.validate();
    if (acc.t == 0 && acc.lambda == 0.0) acc.lambda = params.lambda;
    if (acc.lambda != params.lambda)
        throw config_error("variance_step: accumulator was built for a different lambda");
    const double decay = 1.0 - params.lambda;
    const std::uint64_t next = acc.t + 1;
    if (next == 1) {
        acc.b = 0.0;
        acc.s = 1.0;
    } else {
        acc.b = decay * (acc.b + std::sqrt(static_cast<double>(acc.t)));
        acc.s = decay * decay * acc.s + 2.0 * acc.b / std::sqrt(static_cast<double>(next)) + 1.0;
    }
    acc.t = next;
    return {acc, acc.variance()};
}

/// lim_{t -> inf} Var(r_t).
[[nodiscard]] constexpr double asymptotic_variance() noexcept { return 1.0; }

/// Smallest t with Var(r_t) >= threshold * asymptotic_variance().
/// For lambda == 1 the variance is already 1 at t = 1, so 1 is returned.
[[nodiscard]] inline std::uint64_t variance_convergence_time(const MomentParams& params, double threshold) {
    params.validate();
    if (!(threshold > 0.0 && threshold < 1.0))
        throw config_error("variance_convergence_time: threshold must lie in (0, 1)");
    if (params.lambda == 1.0) return 1;
    const double target = threshold * asymptotic_variance();
    VarianceAccumulator acc(params.lambda);
    // Var(r_t) approaches 1 only as O(1/t); thresholds within rounding of 1 never get there.
    constexpr std::uint64_t max_steps = std::uint64_t{1} << 32;
    while (acc.t < max_steps) {
        const auto step = variance_step(acc, params);
        acc = step.acc;
        if (step.variance >= target) return acc.t;
    }
    throw config_error("variance_convergence_time: threshold not reached within 2^32 steps");
}

} // namespace csb_ewma
