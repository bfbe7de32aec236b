#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "csb_ewma/chart.hpp"
#include "oracles.hpp"

using namespace csb_ewma;

namespace {

ChartConfig raw_config(std::uint32_t k = 10, double lambda = 0.2, double L = 3.0) {
    ChartConfig cfg;
    cfg.k = k;
    cfg.lambda = lambda;
    cfg.L = L;
    cfg.medians.assign(k, 10.0);
    return cfg;
}

ChartConfig recoded_config(std::uint32_t k = 10, double lambda = 0.2, double L = 3.0) {
    ChartConfig cfg;
    cfg.k = k;
    cfg.lambda = lambda;
    cfg.L = L;
    cfg.mode = InputMode::recoded;
    return cfg;
}

std::vector<double> sample_with_total(std::uint32_t k, std::uint32_t c) {
    std::vector<double> v(k, 0.0);
    for (std::uint32_t i = 0; i < c; ++i) v[i] = 1.0;
    return v;
}

double chi2_critical(int df, double alpha) {
    return boost::math::quantile(boost::math::complement(boost::math::chi_squared(df), alpha));
}

} // namespace

TEST(ChartConfig, Validation) {
    EXPECT_NO_THROW(raw_config().validate());
    auto cfg = raw_config();
    cfg.p0 = 0.4;
    EXPECT_THROW(cfg.validate(), config_error);
    cfg = raw_config();
    cfg.medians.pop_back();
    EXPECT_THROW(cfg.validate(), config_error);
    cfg = raw_config();
    cfg.medians[3] = std::nan("");
    EXPECT_THROW(cfg.validate(), config_error);
    cfg = raw_config();
    cfg.L = 0.0;
    EXPECT_THROW(cfg.validate(), config_error);
    cfg = raw_config();
    cfg.k = 0;
    cfg.medians.clear();
    EXPECT_THROW(cfg.validate(), config_error);
    auto rc = recoded_config();
    rc.p0 = 0.3;
    EXPECT_NO_THROW(rc.validate());
}

TEST(Recode, StrictComparison) {
    auto cfg = raw_config(2);
    const std::vector<double> above_below = {12.1, 9.9};
    EXPECT_EQ(recode(above_below, cfg), (std::vector<int>{1, 0}));
    const std::vector<double> ties = {10.0, 10.0};
    EXPECT_EQ(recode(ties, cfg), (std::vector<int>{0, 0}));
}

TEST(Recode, PerStreamMedians) {
    auto cfg = raw_config(3);
    cfg.medians = {1.0, 100.0, -5.0};
    const std::vector<double> v = {2.0, 50.0, -4.0};
    EXPECT_EQ(recode(v, cfg), (std::vector<int>{1, 0, 1}));
}

TEST(Recode, Errors) {
    auto cfg = raw_config(2);
    const std::vector<double> short_sample = {1.0};
    EXPECT_THROW((void)recode(short_sample, cfg), data_error);
    const std::vector<double> nan_sample = {1.0, std::nan("")};
    EXPECT_THROW((void)recode(nan_sample, cfg), data_error);
}

TEST(Recode, ContinuousDataGivesFairCoin) {
    auto cfg = raw_config(1);
    cfg.medians = {std::log(2.0)}; // median of Exp(1)
    std::mt19937_64 rng(2024);
    std::exponential_distribution<double> dist(1.0);
    const int n = 100000;
    int ones = 0;
    for (int i = 0; i < n; ++i) {
        const double y = dist(rng);
        ones += recode(std::span<const double>(&y, 1), cfg)[0];
    }
    const double freq = static_cast<double>(ones) / n;
    EXPECT_NEAR(freq, 0.5, 3.0 * std::sqrt(0.25 / n));
    const double expected = n * 0.5;
    const double chi2 = std::pow(ones - expected, 2) / expected + std::pow((n - ones) - expected, 2) / expected;
    EXPECT_LT(chi2, chi2_critical(1, 0.001));
}

TEST(ColumnTotal, Sums) {
    const std::vector<int> v = {1, 0, 1, 1, 0, 0, 0, 1, 0, 1};
    EXPECT_EQ(column_total(v), 5u);
    const std::vector<int> zeros(10, 0);
    EXPECT_EQ(column_total(zeros), 0u);
    const std::vector<int> bad = {1, 2};
    EXPECT_THROW((void)column_total(bad), data_error);
}

TEST(ColumnTotal, InControlTotalsFollowBinomial) {
    auto cfg = raw_config(10);
    std::mt19937_64 rng(99);
    std::normal_distribution<double> dist(10.0, 2.0);
    const int periods = 100000;
    std::vector<int> counts(11, 0);
    std::vector<double> sample(10);
    for (int p = 0; p < periods; ++p) {
        for (auto& y : sample) y = dist(rng);
        ++counts[column_total(recode(sample, cfg))];
    }
    double chi2 = 0.0;
    for (int c = 0; c <= 10; ++c) {
        const double expected = periods * oracle::binomial_pmf(10, c, 0.5);
        chi2 += std::pow(counts[c] - expected, 2) / expected;
    }
    EXPECT_LT(chi2, chi2_critical(10, 0.001));
}

TEST(Standardize, Values) {
    const auto cfg = recoded_config(10);
    EXPECT_EQ(standardize(5, 1, cfg), 0.0);
    EXPECT_NEAR(standardize(7, 1, cfg), 2.0 / std::sqrt(2.5), 1e-15);
    EXPECT_NEAR(standardize(7, 1, cfg), 1.264911, 1e-6);
    EXPECT_EQ(standardize(50, 10, cfg), 0.0);
    EXPECT_THROW((void)standardize(0, 0, cfg), config_error);
    EXPECT_THROW((void)standardize(11, 1, cfg), data_error);
}

TEST(ControlLimits, Values) {
    const auto cfg = recoded_config(10, 0.2, 3.0);
    const auto at10 = control_limits(10, 0.6369, cfg);
    EXPECT_NEAR(at10.ucl, 2.3943, 3e-4);
    EXPECT_NEAR(at10.lcl, -2.3943, 3e-4);
    const auto at1 = control_limits(1, 0.04, cfg);
    EXPECT_NEAR(at1.ucl, 0.6, 1e-15);
    EXPECT_NEAR(at1.lcl, -0.6, 1e-15);
    const auto far = control_limits(100000, exact_variance_bruteforce({0.2, 0.0}, 2000), cfg);
    EXPECT_NEAR(far.ucl, 3.0, 2e-3);
    EXPECT_NEAR(far.lcl, -3.0, 2e-3);
    EXPECT_THROW((void)control_limits(1, 0.0, cfg), config_error);
    EXPECT_THROW((void)control_limits(1, -1.0, cfg), config_error);
}

TEST(ControlLimits, CentredOnExactMean) {
    auto cfg = recoded_config(10, 0.2, 3.0);
    cfg.r0 = 1.0;
    const auto lim = control_limits(10, 0.5, cfg);
    EXPECT_NEAR(0.5 * (lim.lcl + lim.ucl), std::pow(0.8, 10), 1e-15);
    EXPECT_NEAR(lim.ucl - lim.lcl, 6.0 * std::sqrt(0.5), 1e-14);
}

TEST(Classify, BoundaryIsInControl) {
    const Limits lim{-1.0, 1.0};
    EXPECT_EQ(classify(1.0, lim), Signal::in_control);
    EXPECT_EQ(classify(-1.0, lim), Signal::in_control);
    EXPECT_EQ(classify(std::nextafter(1.0, 2.0), lim), Signal::above_ucl);
    EXPECT_EQ(classify(std::nextafter(-1.0, -2.0), lim), Signal::below_lcl);
}

TEST(Update, FirstPeriodHandValue) {
    const auto cfg = recoded_config(10, 0.2, 3.0);
    const auto res = update(initial_state(cfg), sample_with_total(10, 7), cfg);
    EXPECT_NEAR(res.point.r, 0.2 * 2.0 / std::sqrt(2.5), 1e-15);
    EXPECT_NEAR(res.point.r, 0.252982, 1e-6);
    EXPECT_EQ(res.point.c, 7u);
    EXPECT_EQ(res.state.q, 7u);
    EXPECT_EQ(res.state.t, 1u);
    EXPECT_NEAR(res.point.ucl, 0.6, 1e-15);
    EXPECT_EQ(res.point.signal, Signal::in_control);
}

TEST(Update, AllStreamsHighSignalsAtFirstPeriod) {
    const auto cfg = recoded_config(10, 0.2, 3.0);
    const auto res = update(initial_state(cfg), sample_with_total(10, 10), cfg);
    EXPECT_NEAR(res.point.w, 5.0 / std::sqrt(2.5), 1e-14);
    EXPECT_NEAR(res.point.r, 0.632456, 1e-6);
    EXPECT_EQ(res.point.signal, Signal::above_ucl);
}

TEST(Update, BalancedCountsKeepWZero) {
    auto cfg = recoded_config(10, 0.2, 3.0);
    cfg.r0 = 0.7;
    auto state = initial_state(cfg);
    for (int t = 1; t <= 60; ++t) {
        auto res = update(state, sample_with_total(10, 5), cfg);
        state = res.state;
        EXPECT_EQ(res.point.w, 0.0);
        EXPECT_NEAR(res.point.r, std::pow(0.8, t) * 0.7, 1e-14);
        EXPECT_NEAR(res.point.r, res.point.mean, 1e-14);
    }
}

TEST(Update, LambdaOneTracksW) {
    const auto cfg = recoded_config(4, 1.0, 3.0);
    auto state = initial_state(cfg);
    std::mt19937 rng(5);
    for (int t = 1; t <= 40; ++t) {
        auto res = update(state, sample_with_total(4, rng() % 5), cfg);
        state = res.state;
        EXPECT_EQ(res.point.r, res.point.w);
        EXPECT_EQ(res.point.variance, 1.0);
        EXPECT_DOUBLE_EQ(res.point.ucl, 3.0);
    }
}

TEST(Update, RejectsIncompleteOrInvalidPeriods) {
    const auto rcfg = raw_config(3);
    const auto state = initial_state(rcfg);
    const std::vector<double> missing = {11.0, 9.0};
    EXPECT_THROW((void)update(state, missing, rcfg), data_error);
    const std::vector<double> nan_row = {11.0, std::nan(""), 9.0};
    EXPECT_THROW((void)update(state, nan_row, rcfg), data_error);

    const auto ccfg = recoded_config(3);
    const std::vector<double> not_binary = {1.0, 0.5, 0.0};
    EXPECT_THROW((void)update(initial_state(ccfg), not_binary, ccfg), data_error);
}

TEST(Update, CountsTies) {
    const auto cfg = raw_config(4);
    const std::vector<double> v = {10.0, 11.0, 10.0, 9.0};
    const auto res = update(initial_state(cfg), v, cfg);
    EXPECT_EQ(res.state.ties, 2u);
    EXPECT_EQ(res.state.observations, 4u);
    EXPECT_EQ(res.point.c, 1u);
    EXPECT_DOUBLE_EQ(tie_fraction(res.state), 0.5);
}

TEST(Update, CompositionEquivalenceWithDirectFormulas) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::uint32_t k = 1 + rng() % 12;
        const double lambda = 0.05 + 0.9 * (rng() % 1000) / 1000.0;
        auto cfg = recoded_config(k, lambda, 3.0);
        cfg.r0 = (trial % 3 == 0) ? 0.5 : 0.0;
        std::vector<int> totals;
        auto state = initial_state(cfg);
        std::vector<double> r_fold;
        std::vector<double> w_fold;
        for (int t = 1; t <= 50; ++t) {
            const auto c = static_cast<std::uint32_t>(rng() % (k + 1));
            totals.push_back(static_cast<int>(c));
            auto res = update(state, sample_with_total(k, c), cfg);
            state = res.state;
            r_fold.push_back(res.point.r);
            w_fold.push_back(res.point.w);
        }
        const auto w = oracle::standardized_from_counts(totals, static_cast<int>(k), 0.5);
        const auto r = oracle::ewma_closed_form(w, lambda, cfg.r0);
        for (int t = 0; t < 50; ++t) {
            ASSERT_NEAR(w_fold[t], w[t], 1e-12);
            ASSERT_NEAR(r_fold[t], r[t], 1e-12);
        }
    }
}

TEST(Update, PointInvariantsAndDeterminism) {
    const auto cfg = raw_config(6, 0.15, 2.7);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> dist(10.0, 1.0);
    std::vector<std::vector<double>> samples(300, std::vector<double>(6));
    for (auto& s : samples)
        for (auto& y : s) y = dist(rng);
    auto run = [&] {
        ChartMonitor m(cfg);
        std::vector<ChartPoint> pts;
        for (const auto& s : samples) pts.push_back(m.push(s));
        return pts;
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(a, b);
    for (const auto& p : a) {
        EXPECT_LT(p.lcl, p.ucl);
        EXPECT_NEAR(p.ucl, p.mean + cfg.L * std::sqrt(p.variance), 1e-14);
        EXPECT_NEAR(p.lcl, p.mean - cfg.L * std::sqrt(p.variance), 1e-14);
        EXPECT_EQ(p.signal == Signal::above_ucl, p.r > p.ucl);
        EXPECT_EQ(p.signal == Signal::below_lcl, p.r < p.lcl);
    }
}

TEST(Update, EarlyLimitsAreNarrowerThanAsymptotic) {
    for (double lambda : {0.05, 0.1, 0.2, 0.5, 0.9}) {
        auto cfg = recoded_config(10, lambda, 3.0);
        auto state = initial_state(cfg);
        double prev_width = 0.0;
        for (int t = 1; t <= 1000; ++t) {
            auto res = update(state, sample_with_total(10, 5), cfg);
            state = res.state;
            const double half = 0.5 * (res.point.ucl - res.point.lcl);
            EXPECT_LT(half, cfg.L);
            EXPECT_GE(half, prev_width);
            prev_width = half;
        }
        EXPECT_GT(prev_width, 0.99 * cfg.L);
    }
}

TEST(Update, InControlFalseSignalsAreRare) {
    // Q_t is cumulative, so one excursion keeps r_t outside the limits for many
    // periods and per-replication frequencies are heavy-tailed. The smoke bound
    // is applied to the average frequency and to the typical replication.
    const auto cfg = raw_config(10, 0.2, 3.0);
    std::mt19937_64 rng(31337);
    std::normal_distribution<double> dist(10.0, 1.0);
    std::vector<double> sample(10);
    std::vector<double> freq;
    for (int rep = 0; rep < 200; ++rep) {
        ChartMonitor m(cfg);
        int signals = 0;
        for (int t = 0; t < 1000; ++t) {
            for (auto& y : sample) y = dist(rng);
            if (m.push(sample).signal != Signal::in_control) ++signals;
        }
        freq.push_back(signals / 1000.0);
    }
    double mean = 0.0;
    for (double f : freq) mean += f;
    mean /= static_cast<double>(freq.size());
    EXPECT_LT(mean, 0.05);
    const auto below = std::count_if(freq.begin(), freq.end(), [](double f) { return f < 0.05; });
    EXPECT_GE(below, 190);
}

TEST(StateRecord, FreshRoundTrip) {
    const auto cfg = raw_config();
    const auto s = initial_state(cfg);
    EXPECT_EQ(load_state(save_state(s, cfg), cfg), s);
}

TEST(StateRecord, ResumedRunMatchesUninterrupted) {
    const auto cfg = raw_config(5, 0.25, 3.0);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> dist(10.0, 3.0);
    std::vector<std::vector<double>> samples(200, std::vector<double>(5));
    for (auto& s : samples)
        for (auto& y : s) y = dist(rng);

    ChartMonitor whole(cfg);
    std::vector<ChartPoint> expected;
    for (const auto& s : samples) expected.push_back(whole.push(s));

    ChartMonitor first(cfg);
    std::vector<ChartPoint> got;
    for (int i = 0; i < 100; ++i) got.push_back(first.push(samples[i]));
    const auto record = save_state(first.state(), cfg);
    const auto restored = load_state(record, cfg);
    EXPECT_EQ(restored, first.state());
    ChartMonitor second(cfg, restored);
    for (int i = 100; i < 200; ++i) got.push_back(second.push(samples[i]));
    EXPECT_EQ(got, expected);
}

TEST(StateRecord, RejectsOtherConfigAndCorruption) {
    const auto cfg = raw_config();
    auto other = cfg;
    other.lambda = 0.25;
    const auto record = save_state(initial_state(cfg), cfg);
    EXPECT_THROW((void)load_state(record, other), config_error);
    other = cfg;
    other.medians[2] = 10.5;
    EXPECT_THROW((void)load_state(record, other), config_error);
    EXPECT_THROW((void)load_state("", cfg), data_error);
    EXPECT_THROW((void)load_state("something else 1\n", cfg), data_error);
    std::string truncated = record.substr(0, record.find("acc_s"));
    EXPECT_THROW((void)load_state(truncated, cfg), data_error);
}

TEST(Fingerprint, SensitiveToEveryField) {
    const auto base = raw_config();
    const auto h = fingerprint(base);
    auto c = base;
    c.k = 11;
    c.medians.push_back(10.0);
    EXPECT_NE(fingerprint(c), h);
    c = base;
    c.r0 = 0.1;
    EXPECT_NE(fingerprint(c), h);
    c = base;
    c.L = 2.9;
    EXPECT_NE(fingerprint(c), h);
    c = base;
    c.mode = InputMode::recoded;
    EXPECT_NE(fingerprint(c), h);
    EXPECT_EQ(fingerprint_hex(base).size(), 16u);
}
