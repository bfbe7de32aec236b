#pragma once

// Online CSB-EWMA chart: median recoding, cumulative counts, the EWMA
// recursion and adaptive control limits for k parallel streams.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "moments.hpp"

namespace csb_ewma {

enum class InputMode { raw, recoded };

inline std::string_view to_string(InputMode mode) {
    return mode == InputMode::raw ? "raw" : "recoded";
}

inline InputMode input_mode_from_string(std::string_view name) {
    if (name == "raw") return InputMode::raw;
    if (name == "recoded") return InputMode::recoded;
    throw config_error("unknown input mode '" + std::string(name) + "' (expected raw or recoded)");
}

struct ChartConfig {
    std::uint32_t k = 10;
    double p0 = 0.5;
    double lambda = 0.2;
    double r0 = 0.0;
    double L = 3.0;
    std::vector<double> medians; // per-stream in-control medians; raw mode only
    InputMode mode = InputMode::raw;

    [[nodiscard]] MomentParams moment_params() const { return {lambda, r0}; }
    [[nodiscard]] double count_mean() const { return k * p0; }
    [[nodiscard]] double count_variance() const { return k * p0 * (1.0 - p0); }

    void validate() const {
        if (k == 0) throw config_error("k must be >= 1");
        moment_params().validate();
        if (!std::isfinite(L) || L <= 0.0) throw config_error("L must be finite and > 0");
        if (!std::isfinite(p0) || !(p0 > 0.0 && p0 < 1.0)) throw config_error("p0 must lie in (0, 1)");
        if (mode == InputMode::raw) {
            // Median recoding makes every indicator Bernoulli(0.5) in control.
            if (p0 != 0.5) throw config_error("p0 must be 0.5 when recoding against medians");
            if (medians.size() != k)
                throw config_error("expected " + std::to_string(k) + " medians, got " +
                                   std::to_string(medians.size()));
        } else if (!medians.empty() && medians.size() != k) {
            throw config_error("medians must be empty or have k entries");
        }
        for (double m : medians)
            if (!std::isfinite(m)) throw config_error("medians must be finite");
    }
};

namespace detail {

inline void fnv1a(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
}

template <class T>
void fnv1a_value(std::uint64_t& h, T value) {
    fnv1a(h, &value, sizeof value);
}

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw data_error("not a number: '" + std::string(text) + "'");
    return v;
}

inline std::uint64_t parse_uint(std::string_view text) {
    std::uint64_t v = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw data_error("not a nonnegative integer: '" + std::string(text) + "'");
    return v;
}

} // namespace detail

/// FNV-1a over k, lambda, r0, L, p0, mode and medians (IEEE bit patterns).
[[nodiscard]] inline std::uint64_t fingerprint(const ChartConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    detail::fnv1a_value(h, cfg.k);
    detail::fnv1a_value(h, cfg.lambda);
    detail::fnv1a_value(h, cfg.r0);
    detail::fnv1a_value(h, cfg.L);
    detail::fnv1a_value(h, cfg.p0);
    detail::fnv1a_value(h, static_cast<std::uint8_t>(cfg.mode));
    detail::fnv1a_value(h, static_cast<std::uint64_t>(cfg.medians.size()));
    for (double m : cfg.medians) detail::fnv1a_value(h, m);
    return h;
}

[[nodiscard]] inline std::string fingerprint_hex(const ChartConfig& cfg) {
    char buf[17];
    auto res = std::to_chars(buf, buf + sizeof buf, fingerprint(cfg), 16);
    std::string hex(buf, res.ptr);
    return std::string(16 - hex.size(), '0') + hex;
}

/**
 * Indicator x_i = 1 if raw_i > median_i, else 0. Ties with the median map to
 * 0, which pulls the in-control proportion below 0.5 when data are heavily
 * tied; MonitorState counts ties so callers can report it.
 */
[[nodiscard]] inline std::vector<int> recode(std::span<const double> raw, const ChartConfig& cfg) {
    if (raw.size() != cfg.k)
        throw data_error("expected " + std::to_string(cfg.k) + " stream values, got " +
                         std::to_string(raw.size()));
    if (cfg.medians.size() != cfg.k) throw config_error("recode: config has no medians for every stream");
    std::vector<int> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!std::isfinite(raw[i])) throw data_error("non-finite value in stream " + std::to_string(i + 1));
        out[i] = raw[i] > cfg.medians[i] ? 1 : 0;
    }
    return out;
}

/// C_j: number of streams above their median in one period.
[[nodiscard]] inline std::uint32_t column_total(std::span<const int> indicators) {
    std::uint32_t total = 0;
    for (std::size_t i = 0; i < indicators.size(); ++i) {
        if (indicators[i] != 0 && indicators[i] != 1)
            throw data_error("indicator " + std::to_string(i + 1) + " is not 0 or 1");
        total += static_cast<std::uint32_t>(indicators[i]);
    }
    return total;
}

/// W_t = (Q_t - mu t) / sqrt(t sigma^2), mu = k p0, sigma^2 = k p0 (1 - p0).
[[nodiscard]] inline double standardize(std::uint64_t q, std::uint64_t t, const ChartConfig& cfg) {
    if (t == 0) throw config_error("standardize: t must be >= 1");
    if (q > static_cast<std::uint64_t>(cfg.k) * t)
        throw data_error("standardize: cumulative count exceeds k * t");
    const auto tt = static_cast<double>(t);
    return (static_cast<double>(q) - cfg.count_mean() * tt) / std::sqrt(tt * cfg.count_variance());
}

struct Limits {
    double lcl;
    double ucl;
};

/// Limits centred on E[r_t] with half-width L * sqrt(Var(r_t)).
[[nodiscard]] inline Limits control_limits(std::uint64_t t, double var_t, const ChartConfig& cfg) {
    if (!(var_t > 0.0) || !std::isfinite(var_t)) throw config_error("control_limits: variance must be > 0");
    const double centre = exact_mean(cfg.moment_params(), t);
    const double half_width = cfg.L * std::sqrt(var_t);
    return {centre - half_width, centre + half_width};
}

enum class Signal { in_control, above_ucl, below_lcl };

inline std::string_view to_string(Signal s) {
    switch (s) {
    case Signal::above_ucl: return "above_ucl";
    case Signal::below_lcl: return "below_lcl";
    default: return "in_control";
    }
}

inline Signal signal_from_string(std::string_view name) {
    if (name == "in_control") return Signal::in_control;
    if (name == "above_ucl") return Signal::above_ucl;
    if (name == "below_lcl") return Signal::below_lcl;
    throw data_error("unknown signal '" + std::string(name) + "'");
}

/// A value exactly on a limit is in control.
[[nodiscard]] constexpr Signal classify(double r, Limits limits) noexcept {
    if (r > limits.ucl) return Signal::above_ucl;
    if (r < limits.lcl) return Signal::below_lcl;
    return Signal::in_control;
}

struct MonitorState {
    std::uint64_t t = 0;
    std::uint64_t q = 0;
    double r = 0.0;
    VarianceAccumulator var_acc;
    std::uint64_t ties = 0;         // raw values equal to their median
    std::uint64_t observations = 0; // raw values seen

    friend bool operator==(const MonitorState&, const MonitorState&) = default;
};

[[nodiscard]] inline MonitorState initial_state(const ChartConfig& cfg) {
    cfg.validate();
    MonitorState s;
    s.r = cfg.r0;
    s.var_acc = VarianceAccumulator(cfg.lambda);
    return s;
}

struct ChartPoint {
    std::uint64_t t = 0;
    std::uint32_t c = 0;
    double w = 0.0;
    double r = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    double lcl = 0.0;
    double ucl = 0.0;
    Signal signal = Signal::in_control;

    friend bool operator==(const ChartPoint&, const ChartPoint&) = default;
};

struct UpdateResult {
    MonitorState state;
    ChartPoint point;
};

/// Fold one period's column total into the chart.
[[nodiscard]] inline UpdateResult advance(const MonitorState& state, std::uint32_t column_total,
                                          const ChartConfig& cfg) {
    if (column_total > cfg.k) throw data_error("column total exceeds k");
    MonitorState next = state;
    next.t = state.t + 1;
    next.q = state.q + column_total;

    ChartPoint p;
    p.t = next.t;
    p.c = column_total;
    p.w = standardize(next.q, next.t, cfg);
    next.r = cfg.lambda * p.w + (1.0 - cfg.lambda) * state.r;
    p.r = next.r;

    const auto step = variance_step(state.var_acc, cfg.moment_params());
    next.var_acc = step.acc;
    p.variance = step.variance;
    p.mean = exact_mean(cfg.moment_params(), next.t);
    const Limits limits = control_limits(next.t, p.variance, cfg);
    p.lcl = limits.lcl;
    p.ucl = limits.ucl;
    p.signal = classify(p.r, limits);
    return {next, p};
}

/**
 * Process one complete sample period. In raw mode the k values are recoded
 * against the medians; in recoded mode they must already be 0 or 1. Any
 * invalid period is rejected as a whole and the input state is untouched.
 */
[[nodiscard]] inline UpdateResult update(const MonitorState& state, std::span<const double> sample,
                                         const ChartConfig& cfg) {
    if (sample.size() != cfg.k)
        throw data_error("expected " + std::to_string(cfg.k) + " stream values, got " +
                         std::to_string(sample.size()));
    std::vector<int> indicators;
    std::uint64_t ties = 0;
    if (cfg.mode == InputMode::raw) {
        indicators = recode(sample, cfg);
        for (std::size_t i = 0; i < sample.size(); ++i)
            if (sample[i] == cfg.medians[i]) ++ties;
    } else {
        indicators.resize(sample.size());
        for (std::size_t i = 0; i < sample.size(); ++i) {
            if (sample[i] != 0.0 && sample[i] != 1.0)
                throw data_error("recoded value in stream " + std::to_string(i + 1) + " is not 0 or 1");
            indicators[i] = sample[i] == 1.0 ? 1 : 0;
        }
    }
    auto result = advance(state, column_total(indicators), cfg);
    if (cfg.mode == InputMode::raw) {
        result.state.ties += ties;
        result.state.observations += sample.size();
    }
    return result;
}

/// Fraction of raw observations tied with their median.
[[nodiscard]] inline double tie_fraction(const MonitorState& s) {
    return s.observations == 0 ? 0.0 : static_cast<double>(s.ties) / static_cast<double>(s.observations);
}

inline constexpr double tie_warning_fraction = 0.01;

// State record: one "key value" pair per line, reals in shortest round-trip form.
inline constexpr std::string_view state_magic = "csb-ewma-state";
inline constexpr int state_format_version = 1;

[[nodiscard]] inline std::string save_state(const MonitorState& s, const ChartConfig& cfg) {
    std::ostringstream out;
    out << state_magic << ' ' << state_format_version << '\n'
        << "fingerprint " << fingerprint_hex(cfg) << '\n'
        << "t " << s.t << '\n'
        << "q " << s.q << '\n'
        << "r " << detail::format_double(s.r) << '\n'
        << "acc_t " << s.var_acc.t << '\n'
        << "acc_s " << detail::format_double(s.var_acc.s) << '\n'
        << "acc_b " << detail::format_double(s.var_acc.b) << '\n'
        << "ties " << s.ties << '\n'
        << "observations " << s.observations << '\n';
    return out.str();
}

[[nodiscard]] inline MonitorState load_state(std::string_view record, const ChartConfig& cfg) {
    std::map<std::string, std::string, std::less<>> fields;
    std::istringstream in{std::string(record)};
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto space = line.find(' ');
        if (space == std::string::npos) throw data_error("state record: malformed line '" + line + "'");
        std::string key = line.substr(0, space);
        std::string value = line.substr(space + 1);
        if (first) {
            if (key != state_magic) throw data_error("state record: missing header");
            if (value != std::to_string(state_format_version))
                throw data_error("state record: unsupported version " + value);
            first = false;
            continue;
        }
        fields[key] = value;
    }
    if (first) throw data_error("state record: empty");
    auto get = [&](std::string_view key) -> const std::string& {
        auto it = fields.find(key);
        if (it == fields.end()) throw data_error("state record: missing field '" + std::string(key) + "'");
        return it->second;
    };
    if (get("fingerprint") != fingerprint_hex(cfg))
        throw config_error("state record was written for a different chart configuration");

    MonitorState s;
    s.t = detail::parse_uint(get("t"));
    s.q = detail::parse_uint(get("q"));
    s.r = detail::parse_double(get("r"));
    s.var_acc.lambda = cfg.lambda;
    s.var_acc.t = detail::parse_uint(get("acc_t"));
    s.var_acc.s = detail::parse_double(get("acc_s"));
    s.var_acc.b = detail::parse_double(get("acc_b"));
    s.ties = detail::parse_uint(get("ties"));
    s.observations = detail::parse_uint(get("observations"));
    if (s.var_acc.t != s.t) throw data_error("state record: accumulator time does not match t");
    if (s.q > static_cast<std::uint64_t>(cfg.k) * s.t) throw data_error("state record: q exceeds k * t");
    return s;
}

/// Stateful convenience wrapper: one config, one running state, single writer.
class ChartMonitor {
public:
    explicit ChartMonitor(ChartConfig cfg) : cfg_(std::move(cfg)), state_(initial_state(cfg_)) {}
    ChartMonitor(ChartConfig cfg, MonitorState state) : cfg_(std::move(cfg)), state_(std::move(state)) {
        cfg_.validate();
    }

    ChartPoint push(std::span<const double> sample) {
        auto result = update(state_, sample, cfg_);
        state_ = result.state;
        return result.point;
    }

    [[nodiscard]] const ChartConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const MonitorState& state() const noexcept { return state_; }

private:
    ChartConfig cfg_;
    MonitorState state_;
};

} // namespace csb_ewma
