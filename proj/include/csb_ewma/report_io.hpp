#pragma once

// JSON and CSV serialization of validation reports.
//
// CSV keeps the validation-table column order. Leading lines starting with
// '#' echo the tool version and resolved configuration; readers skip them.

#include <cstdint>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "chart.hpp"
#include "errors.hpp"
#include "simulate.hpp"

namespace csb_ewma {

enum class ReportFormat { json, csv };

inline ReportFormat report_format_from_string(std::string_view name) {
    if (name == "json") return ReportFormat::json;
    if (name == "csv") return ReportFormat::csv;
    throw config_error("unknown report format '" + std::string(name) + "' (expected json or csv)");
}

inline constexpr std::string_view report_csv_header =
    "Time,Theoretical Mean,Simulated Mean,Theoretical Variance,Simulated Variance,Relative Bias";

inline constexpr std::string_view series_csv_header =
    "t,theoretical_mean,simulated_mean,theoretical_var,simulated_var,relative_bias_var";

inline nlohmann::json to_json(const SimConfig& cfg) {
    nlohmann::json j = {{"k", cfg.k},           {"p0", cfg.p0},         {"lambda", cfg.lambda},
                        {"r0", cfg.r0},         {"t_max", cfg.t_max},   {"n_reps", cfg.n_reps},
                        {"seed", cfg.seed}};
    j["shift_p"] = cfg.shift_p ? nlohmann::json(*cfg.shift_p) : nlohmann::json(nullptr);
    return j;
}

inline SimConfig sim_config_from_json(const nlohmann::json& j) {
    SimConfig cfg;
    cfg.k = j.at("k").get<std::uint32_t>();
    cfg.p0 = j.at("p0").get<double>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.r0 = j.at("r0").get<double>();
    cfg.t_max = j.at("t_max").get<std::uint64_t>();
    cfg.n_reps = j.at("n_reps").get<std::uint64_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("shift_p") && !j.at("shift_p").is_null()) cfg.shift_p = j.at("shift_p").get<double>();
    return cfg;
}

namespace detail {

inline nlohmann::json row_to_json(const ValidationRow& row) {
    return {{"t", row.t},
            {"theoretical_mean", row.theoretical_mean},
            {"simulated_mean", row.simulated_mean},
            {"theoretical_var", row.theoretical_var},
            {"simulated_var", row.simulated_var},
            {"relative_bias_var", row.relative_bias_var}};
}

inline ValidationRow row_from_json(const nlohmann::json& j) {
    ValidationRow row;
    row.t = j.at("t").get<std::uint64_t>();
    row.theoretical_mean = j.at("theoretical_mean").get<double>();
    row.simulated_mean = j.at("simulated_mean").get<double>();
    row.theoretical_var = j.at("theoretical_var").get<double>();
    row.simulated_var = j.at("simulated_var").get<double>();
    row.relative_bias_var = j.at("relative_bias_var").get<double>();
    return row;
}

inline void append_row_csv(std::ostringstream& out, const ValidationRow& row) {
    out << row.t << ',' << format_double(row.theoretical_mean) << ',' << format_double(row.simulated_mean) << ','
        << format_double(row.theoretical_var) << ',' << format_double(row.simulated_var) << ','
        << format_double(row.relative_bias_var) << '\n';
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

} // namespace detail

inline nlohmann::json to_json(const ValidationReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : report.rows) rows.push_back(detail::row_to_json(row));
    nlohmann::json series = nlohmann::json::array();
    for (const auto& row : report.series) series.push_back(detail::row_to_json(row));
    const auto& d = report.diagnostics;
    return {{"tool", "csb-ewma"},
            {"tool_version", report.tool_version},
            {"config", to_json(report.config)},
            {"seed", report.config.seed},
            {"rows", rows},
            {"diagnostics",
             {{"max_abs_bias_mean", d.max_abs_bias_mean},
              {"rms_bias_mean", d.rms_bias_mean},
              {"max_abs_bias_var", d.max_abs_bias_var},
              {"rms_bias_var", d.rms_bias_var}}},
            {"convergence_t_99", report.convergence_t_99},
            {"series", series}};
}

inline ValidationReport report_from_json(const nlohmann::json& j) {
    ValidationReport report;
    report.tool_version = j.at("tool_version").get<std::string>();
    report.config = sim_config_from_json(j.at("config"));
    for (const auto& row : j.at("rows")) report.rows.push_back(detail::row_from_json(row));
    const auto& d = j.at("diagnostics");
    report.diagnostics.max_abs_bias_mean = d.at("max_abs_bias_mean").get<double>();
    report.diagnostics.rms_bias_mean = d.at("rms_bias_mean").get<double>();
    report.diagnostics.max_abs_bias_var = d.at("max_abs_bias_var").get<double>();
    report.diagnostics.rms_bias_var = d.at("rms_bias_var").get<double>();
    report.convergence_t_99 = j.at("convergence_t_99").get<std::uint64_t>();
    if (j.contains("series"))
        for (const auto& row : j.at("series")) report.series.push_back(detail::row_from_json(row));
    return report;
}

inline ValidationReport parse_report_json(std::string_view text) {
    try {
        return report_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("invalid report JSON: ") + e.what());
    }
}

inline std::string export_report(const ValidationReport& report, ReportFormat format) {
    if (format == ReportFormat::json) return to_json(report).dump(2) + "\n";

    std::ostringstream out;
    const auto& c = report.config;
    out << "# csb-ewma " << report.tool_version << " validate"
        << " k=" << c.k << " p0=" << detail::format_double(c.p0) << " lambda=" << detail::format_double(c.lambda)
        << " r0=" << detail::format_double(c.r0) << " t_max=" << c.t_max << " n_reps=" << c.n_reps
        << " seed=" << c.seed;
    if (c.shift_p) out << " shift_p=" << detail::format_double(*c.shift_p);
    out << '\n';
    const auto& d = report.diagnostics;
    out << "# convergence_t_99=" << report.convergence_t_99
        << " max_abs_bias_mean=" << detail::format_double(d.max_abs_bias_mean)
        << " rms_bias_mean=" << detail::format_double(d.rms_bias_mean)
        << " max_abs_bias_var=" << detail::format_double(d.max_abs_bias_var)
        << " rms_bias_var=" << detail::format_double(d.rms_bias_var) << '\n';
    out << report_csv_header << '\n';
    for (const auto& row : report.rows) detail::append_row_csv(out, row);
    return out.str();
}

/// Full per-t series (plot data) as CSV.
inline std::string export_series_csv(const ValidationReport& report) {
    std::ostringstream out;
    out << series_csv_header << '\n';
    for (const auto& row : report.series) detail::append_row_csv(out, row);
    return out.str();
}

/// Rows of a CSV produced by export_report() or export_series_csv().
inline std::vector<ValidationRow> read_report_csv_rows(std::istream& in) {
    std::vector<ValidationRow> rows;
    std::string line;
    bool header_seen = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        if (!header_seen) {
            if (line != report_csv_header && line != series_csv_header)
                throw data_error("report CSV: unexpected header on line " + std::to_string(line_no));
            header_seen = true;
            continue;
        }
        const auto cells = detail::split_csv(line);
        if (cells.size() != 6) throw data_error("report CSV: line " + std::to_string(line_no) + " has wrong arity");
        ValidationRow row;
        row.t = detail::parse_uint(cells[0]);
        row.theoretical_mean = detail::parse_double(cells[1]);
        row.simulated_mean = detail::parse_double(cells[2]);
        row.theoretical_var = detail::parse_double(cells[3]);
        row.simulated_var = detail::parse_double(cells[4]);
        row.relative_bias_var = detail::parse_double(cells[5]);
        rows.push_back(row);
    }
    return rows;
}

} // namespace csb_ewma
