#pragma once

// Text formats around the chart: JSON chart configuration, ChartPoint rows
// (CSV or JSON lines) and the period-per-row stream input "t,s1,...,sk".

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "chart.hpp"
#include "errors.hpp"
#include "report_io.hpp"

namespace csb_ewma {

inline nlohmann::json to_json(const ChartConfig& cfg) {
    return {{"k", cfg.k},   {"lambda", cfg.lambda},       {"r0", cfg.r0},          {"L", cfg.L},
            {"p0", cfg.p0}, {"medians", cfg.medians},     {"mode", to_string(cfg.mode)}};
}

/// Flat JSON object; absent keys keep their defaults. "medians" may be an
/// array of k numbers or a single number shared by all streams.
inline ChartConfig chart_config_from_json(const nlohmann::json& j, ChartConfig cfg = {}) {
    try {
        if (!j.is_object()) throw config_error("chart config must be a JSON object");
        if (j.contains("k")) cfg.k = j.at("k").get<std::uint32_t>();
        if (j.contains("lambda")) cfg.lambda = j.at("lambda").get<double>();
        if (j.contains("r0")) cfg.r0 = j.at("r0").get<double>();
        if (j.contains("L")) cfg.L = j.at("L").get<double>();
        if (j.contains("p0")) cfg.p0 = j.at("p0").get<double>();
        if (j.contains("mode")) cfg.mode = input_mode_from_string(j.at("mode").get<std::string>());
        if (j.contains("medians")) {
            const auto& m = j.at("medians");
            if (m.is_number())
                cfg.medians.assign(cfg.k, m.get<double>());
            else
                cfg.medians = m.get<std::vector<double>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("invalid chart config: ") + e.what());
    }
    return cfg;
}

inline constexpr std::string_view chart_points_csv_header = "t,c,w,r,mean,variance,lcl,ucl,signal";

inline void write_point_csv(std::ostream& out, const ChartPoint& p) {
    using detail::format_double;
    out << p.t << ',' << p.c << ',' << format_double(p.w) << ',' << format_double(p.r) << ','
        << format_double(p.mean) << ',' << format_double(p.variance) << ',' << format_double(p.lcl) << ','
        << format_double(p.ucl) << ',' << to_string(p.signal) << '\n';
}

inline nlohmann::json to_json(const ChartPoint& p) {
    return {{"t", p.t},         {"c", p.c},                 {"w", p.w},     {"r", p.r},
            {"mean", p.mean},   {"variance", p.variance},   {"lcl", p.lcl}, {"ucl", p.ucl},
            {"signal", to_string(p.signal)}};
}

inline ChartPoint chart_point_from_json(const nlohmann::json& j) {
    ChartPoint p;
    p.t = j.at("t").get<std::uint64_t>();
    p.c = j.at("c").get<std::uint32_t>();
    p.w = j.at("w").get<double>();
    p.r = j.at("r").get<double>();
    p.mean = j.at("mean").get<double>();
    p.variance = j.at("variance").get<double>();
    p.lcl = j.at("lcl").get<double>();
    p.ucl = j.at("ucl").get<double>();
    p.signal = signal_from_string(j.at("signal").get<std::string>());
    return p;
}

/// Reads monitor output in either CSV or JSON-lines form; '#' lines and
/// JSON-lines config records are skipped.
inline std::vector<ChartPoint> read_chart_points(std::istream& in) {
    std::vector<ChartPoint> points;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#' || line == chart_points_csv_header) continue;
        try {
            if (line.front() == '{') {
                const auto j = nlohmann::json::parse(line);
                if (j.contains("config")) continue;
                points.push_back(chart_point_from_json(j));
                continue;
            }
            const auto cells = detail::split_csv(line);
            if (cells.size() != 9) throw data_error("wrong number of columns");
            ChartPoint p;
            p.t = detail::parse_uint(cells[0]);
            p.c = static_cast<std::uint32_t>(detail::parse_uint(cells[1]));
            p.w = detail::parse_double(cells[2]);
            p.r = detail::parse_double(cells[3]);
            p.mean = detail::parse_double(cells[4]);
            p.variance = detail::parse_double(cells[5]);
            p.lcl = detail::parse_double(cells[6]);
            p.ucl = detail::parse_double(cells[7]);
            p.signal = signal_from_string(cells[8]);
            points.push_back(p);
        } catch (const std::exception& e) {
            throw data_error("chart output line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return points;
}

struct Period {
    std::uint64_t t = 0;
    std::vector<double> values;
};

/**
 * Reader for "t,s1,...,sk" stream input. The header is checked for exactly
 * k stream columns; each row must carry all k values.
 */
class PeriodReader {
public:
    PeriodReader(std::istream& in, std::uint32_t k) : in_(in), k_(k) {}

    /// Next period, or nullopt at end of input. Throws data_error naming the line.
    std::optional<Period> next() {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            if (!header_seen_) {
                check_header(line);
                header_seen_ = true;
                continue;
            }
            return parse_row(line);
        }
        if (!header_seen_) throw data_error("input is empty (expected header t,s1,...,sk)");
        return std::nullopt;
    }

    [[nodiscard]] std::size_t line_number() const noexcept { return line_no_; }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw data_error("input row " + std::to_string(line_no_) + ": " + why);
    }

    void check_header(const std::string& line) const {
        std::string expected = "t";
        for (std::uint32_t i = 1; i <= k_; ++i) expected += ",s" + std::to_string(i);
        if (line != expected) fail("expected header '" + expected + "'");
    }

    Period parse_row(const std::string& line) const {
        const auto cells = detail::split_csv(line);
        if (cells.size() != k_ + 1)
            fail("expected " + std::to_string(k_) + " stream values, got " +
                 std::to_string(cells.empty() ? 0 : cells.size() - 1));
        Period p;
        try {
            p.t = detail::parse_uint(cells[0]);
            p.values.reserve(k_);
            for (std::size_t i = 1; i < cells.size(); ++i) {
                if (cells[i].empty()) fail("missing value for stream " + std::to_string(i));
                p.values.push_back(detail::parse_double(cells[i]));
            }
        } catch (const data_error& e) {
            if (std::string_view(e.what()).starts_with("input row")) throw;
            fail(e.what());
        }
        return p;
    }

    std::istream& in_;
    std::uint32_t k_;
    bool header_seen_ = false;
    std::size_t line_no_ = 0;
};

} // namespace csb_ewma
