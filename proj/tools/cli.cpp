#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "csb_ewma/csb_ewma.hpp"

namespace csb_ewma::cli {
namespace {

namespace fs = std::filesystem;

// Output sink that is either the caller's stream or a file.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) {
        if (path == "-") {
            stream_ = &fallback;
            return;
        }
        file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
        if (!*file_) throw config_error("cannot open output file '" + path + "'");
        stream_ = file_.get();
    }
    std::ostream& stream() { return *stream_; }
    void finish() {
        stream_->flush();
        if (!*stream_) throw config_error("write to output failed");
    }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* stream_ = nullptr;
};

void write_file_atomically(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw config_error("cannot write state file '" + path + "'");
        f << content;
        f.flush();
        if (!f) throw config_error("cannot write state file '" + path + "'");
    }
    fs::rename(tmp, path);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw config_error("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct SimFlags {
    SimConfig cfg;
    std::optional<double> shift_p;
    unsigned threads = 0;
};

void add_sim_flags(CLI::App& cmd, SimFlags& f) {
    cmd.add_option("--k", f.cfg.k, "Number of streams")->capture_default_str();
    cmd.add_option("--p0", f.cfg.p0, "In-control proportion")->capture_default_str();
    cmd.add_option("--lambda", f.cfg.lambda, "EWMA smoothing weight, 0 < lambda <= 1")->capture_default_str();
    cmd.add_option("--r0", f.cfg.r0, "Initial EWMA value")->capture_default_str();
    cmd.add_option("--t-max", f.cfg.t_max, "Periods per replication")->capture_default_str();
    cmd.add_option("--n-reps", f.cfg.n_reps, "Monte Carlo replications")->capture_default_str();
    cmd.add_option("--seed", f.cfg.seed, "Master seed")->capture_default_str();
    cmd.add_option("--threads", f.threads, "Worker threads (0 = all cores)")->capture_default_str();
}

// ---- limits ----------------------------------------------------------------

struct LimitsArgs {
    double lambda = 0.2;
    double r0 = 0.0;
    double L = 3.0;
    std::uint64_t t_max = 100;
    std::string format = "csv";
    std::string out = "-";
};

int cmd_limits(const LimitsArgs& a, std::ostream& out_default) {
    ChartConfig cfg;
    cfg.lambda = a.lambda;
    cfg.r0 = a.r0;
    cfg.L = a.L;
    cfg.mode = InputMode::recoded;
    cfg.validate();
    if (a.t_max == 0) throw config_error("t-max must be >= 1");
    const auto format = report_format_from_string(a.format);

    Sink sink(a.out, out_default);
    auto& out = sink.stream();
    const auto params = cfg.moment_params();
    nlohmann::json rows = nlohmann::json::array();
    if (format == ReportFormat::csv) {
        out << "# csb-ewma " << version << " limits lambda=" << detail::format_double(cfg.lambda)
            << " r0=" << detail::format_double(cfg.r0) << " L=" << detail::format_double(cfg.L)
            << " t_max=" << a.t_max << '\n'
            << "t,mean,variance,lcl,ucl\n";
    }
    VarianceAccumulator acc(cfg.lambda);
    for (std::uint64_t t = 1; t <= a.t_max; ++t) {
        const auto step = variance_step(acc, params);
        acc = step.acc;
        const double mean = exact_mean(params, t);
        const auto limits = control_limits(t, step.variance, cfg);
        if (format == ReportFormat::csv) {
            out << t << ',' << detail::format_double(mean) << ',' << detail::format_double(step.variance) << ','
                << detail::format_double(limits.lcl) << ',' << detail::format_double(limits.ucl) << '\n';
        } else {
            rows.push_back({{"t", t}, {"mean", mean}, {"variance", step.variance},
                            {"lcl", limits.lcl}, {"ucl", limits.ucl}});
        }
    }
    if (format == ReportFormat::json) {
        nlohmann::json doc = {{"tool", "csb-ewma"},
                              {"tool_version", version},
                              {"config", {{"lambda", cfg.lambda}, {"r0", cfg.r0}, {"L", cfg.L}, {"t_max", a.t_max}}},
                              {"asymptotic_variance", asymptotic_variance()},
                              {"rows", rows}};
        out << doc.dump(2) << '\n';
    }
    sink.finish();
    return exit_ok;
}

// ---- validate --------------------------------------------------------------

struct ValidateArgs {
    SimFlags sim;
    std::vector<std::uint64_t> checkpoints;
    std::string format = "json";
    std::string out = "-";
    std::string series_out;
};

int cmd_validate(ValidateArgs a, std::ostream& out_default, std::ostream& err) {
    a.sim.cfg.validate();
    const auto format = report_format_from_string(a.format);
    if (a.checkpoints.empty()) {
        for (std::uint64_t t : {10, 50, 100, 500, 1000})
            if (t <= a.sim.cfg.t_max) a.checkpoints.push_back(t);
        if (a.checkpoints.empty()) a.checkpoints.push_back(a.sim.cfg.t_max);
    }
    // Open outputs before the run so a bad path fails fast.
    Sink sink(a.out, out_default);
    std::unique_ptr<Sink> series;
    if (!a.series_out.empty()) series = std::make_unique<Sink>(a.series_out, out_default);

    const auto report = run_validation(a.sim.cfg, a.checkpoints, a.sim.threads);
    sink.stream() << export_report(report, format);
    sink.finish();
    if (series) {
        series->stream() << export_series_csv(report);
        series->finish();
    }

    const bool ok = passes(report);
    for (const auto& row : report.rows) {
        char line[160];
        std::snprintf(line, sizeof line, "t=%-6llu mean=% .6e (theory % .6e)  var=%.6f (theory %.6f)  rel.bias=%+.3f%%  %s\n",
                      static_cast<unsigned long long>(row.t), row.simulated_mean, row.theoretical_mean,
                      row.simulated_var, row.theoretical_var, 100.0 * row.relative_bias_var,
                      row_within(row) ? "ok" : "OUT OF TOLERANCE");
        err << line;
    }
    err << "variance reaches 99% of its limit at t = " << report.convergence_t_99 << '\n'
        << (ok ? "validation passed" : "validation FAILED") << '\n';
    return ok ? exit_ok : exit_validation_failed;
}

// ---- monitor ---------------------------------------------------------------

struct MonitorArgs {
    std::string config_path;
    std::optional<std::uint32_t> k;
    std::optional<double> lambda, r0, L, p0;
    std::optional<std::string> mode;
    std::vector<double> medians;
    std::string input = "-";
    std::string state_path;
    std::string out = "-";
    std::string format = "csv";
};

ChartConfig resolve_chart_config(const MonitorArgs& a) {
    ChartConfig cfg;
    if (!a.config_path.empty()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(a.config_path));
        } catch (const nlohmann::json::exception& e) {
            throw config_error("config file '" + a.config_path + "': " + e.what());
        }
        cfg = chart_config_from_json(j);
    }
    if (a.k) cfg.k = *a.k;
    if (a.lambda) cfg.lambda = *a.lambda;
    if (a.r0) cfg.r0 = *a.r0;
    if (a.L) cfg.L = *a.L;
    if (a.p0) cfg.p0 = *a.p0;
    if (a.mode) cfg.mode = input_mode_from_string(*a.mode);
    if (!a.medians.empty()) {
        cfg.medians = a.medians;
        if (cfg.medians.size() == 1 && cfg.k > 1) cfg.medians.assign(cfg.k, a.medians.front());
    }
    cfg.validate();
    return cfg;
}

int cmd_monitor(const MonitorArgs& a, std::istream& in_default, std::ostream& out_default, std::ostream& err) {
    const ChartConfig cfg = resolve_chart_config(a);
    const bool jsonl = [&] {
        if (a.format == "csv") return false;
        if (a.format == "jsonl") return true;
        throw config_error("unknown monitor format '" + a.format + "' (expected csv or jsonl)");
    }();

    MonitorState state = initial_state(cfg);
    if (!a.state_path.empty() && fs::exists(a.state_path) && fs::file_size(a.state_path) > 0)
        state = load_state(read_file(a.state_path), cfg);

    std::unique_ptr<std::ifstream> in_file;
    std::istream* in = &in_default;
    if (a.input != "-") {
        in_file = std::make_unique<std::ifstream>(a.input, std::ios::binary);
        if (!*in_file) throw data_error("cannot open input '" + a.input + "'");
        in = in_file.get();
    }
    Sink sink(a.out, out_default);
    auto& out = sink.stream();

    // Preamble only on a fresh chart, so a resumed run appends cleanly.
    const std::string config_echo = nlohmann::json{{"tool", "csb-ewma"}, {"tool_version", version},
                                                   {"fingerprint", fingerprint_hex(cfg)}, {"chart", to_json(cfg)}}
                                        .dump();
    if (state.t == 0) {
        if (jsonl)
            out << nlohmann::json{{"config", nlohmann::json::parse(config_echo)}}.dump() << '\n';
        else
            out << "# " << config_echo << '\n' << chart_points_csv_header << '\n';
    } else {
        err << "resuming at t = " << state.t + 1 << " with " << config_echo << '\n';
    }

    PeriodReader reader(*in, cfg.k);
    std::uint64_t processed = 0;
    std::uint64_t signals = 0;
    while (auto period = reader.next()) {
        if (period->t != state.t + 1)
            throw data_error("input row " + std::to_string(reader.line_number()) + ": expected t = " +
                             std::to_string(state.t + 1) + ", got " + std::to_string(period->t));
        UpdateResult result;
        try {
            result = update(state, period->values, cfg);
        } catch (const data_error& e) {
            throw data_error("input row " + std::to_string(reader.line_number()) + ": " + e.what());
        }
        state = result.state;
        if (jsonl)
            out << to_json(result.point).dump() << '\n';
        else
            write_point_csv(out, result.point);
        out.flush();
        if (!a.state_path.empty()) write_file_atomically(a.state_path, save_state(state, cfg));
        ++processed;
        if (result.point.signal != Signal::in_control) ++signals;
    }
    sink.finish();
    err << "processed " << processed << " periods, " << signals << " signals\n";
    if (tie_fraction(state) > tie_warning_fraction)
        err << "warning: " << state.ties << " of " << state.observations
            << " observations equal their in-control median; ties are recoded as 0 and bias the"
               " in-control proportion below 0.5\n";
    return exit_ok;
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
    SimFlags sim;
    std::string out = "-";
};

int cmd_simulate(SimulateArgs a, std::ostream& out_default) {
    a.sim.cfg.shift_p = a.sim.shift_p;
    const auto& cfg = a.sim.cfg;
    cfg.validate();
    Sink sink(a.out, out_default);
    auto& out = sink.stream();
    out << "# csb-ewma " << version << " simulate " << to_json(cfg).dump() << '\n' << "rep,t,c,w,r\n";
    for (std::uint64_t m = 0; m < cfg.n_reps; ++m) {
        const auto path = simulate_replication_path(cfg, replication_seed(cfg.seed, m));
        for (std::uint64_t t = 0; t < cfg.t_max; ++t)
            out << m << ',' << t + 1 << ',' << path.c[t] << ',' << detail::format_double(path.w[t]) << ','
                << detail::format_double(path.r[t]) << '\n';
    }
    sink.finish();
    return exit_ok;
}

} // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"CSB-EWMA control chart for multiple stream processes", "csb_ewma"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(version));

    LimitsArgs limits;
    auto* limits_cmd = app.add_subcommand("limits", "Table of exact mean, variance and control limits");
    limits_cmd->add_option("--lambda", limits.lambda, "EWMA smoothing weight")->capture_default_str();
    limits_cmd->add_option("--r0", limits.r0, "Initial EWMA value")->capture_default_str();
    limits_cmd->add_option("--L", limits.L, "Control-limit half-width in standard deviations")->capture_default_str();
    limits_cmd->add_option("--t-max", limits.t_max, "Last period")->capture_default_str();
    limits_cmd->add_option("--format", limits.format, "csv or json")->capture_default_str();
    limits_cmd->add_option("--out", limits.out, "Output path, - for stdout")->capture_default_str();

    ValidateArgs validate;
    auto* validate_cmd = app.add_subcommand("validate", "Monte Carlo check of the exact moments");
    add_sim_flags(*validate_cmd, validate.sim);
    validate_cmd->add_option("--checkpoints", validate.checkpoints, "Comma-separated t values")->delimiter(',');
    validate_cmd->add_option("--format", validate.format, "json or csv")->capture_default_str();
    validate_cmd->add_option("--out", validate.out, "Report path, - for stdout")->capture_default_str();
    validate_cmd->add_option("--series-out", validate.series_out, "Optional per-t series CSV (plot data)");

    MonitorArgs monitor;
    auto* monitor_cmd = app.add_subcommand("monitor", "Chart a stream of periods from CSV input");
    monitor_cmd->add_option("--config", monitor.config_path, "JSON chart configuration");
    monitor_cmd->add_option("--k", monitor.k, "Number of streams");
    monitor_cmd->add_option("--lambda", monitor.lambda, "EWMA smoothing weight");
    monitor_cmd->add_option("--r0", monitor.r0, "Initial EWMA value");
    monitor_cmd->add_option("--L", monitor.L, "Control-limit half-width");
    monitor_cmd->add_option("--p0", monitor.p0, "In-control proportion (recoded mode)");
    monitor_cmd->add_option("--mode", monitor.mode, "raw or recoded");
    monitor_cmd->add_option("--medians", monitor.medians, "Comma-separated per-stream medians")->delimiter(',');
    monitor_cmd->add_option("--input", monitor.input, "Input CSV, - for stdin")->capture_default_str();
    monitor_cmd->add_option("--state", monitor.state_path, "State file, loaded if present and rewritten per period");
    monitor_cmd->add_option("--out", monitor.out, "Output path, - for stdout")->capture_default_str();
    monitor_cmd->add_option("--format", monitor.format, "csv or jsonl")->capture_default_str();

    SimulateArgs simulate;
    simulate.sim.cfg.n_reps = 1;
    auto* simulate_cmd = app.add_subcommand("simulate", "Write simulated (C_t, W_t, r_t) paths");
    add_sim_flags(*simulate_cmd, simulate.sim);
    simulate_cmd->add_option("--shift-p", simulate.sim.shift_p, "Out-of-control generation probability");
    simulate_cmd->add_option("--out", simulate.out, "Output path, - for stdout")->capture_default_str();

    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*limits_cmd) return cmd_limits(limits, out);
        if (*validate_cmd) return cmd_validate(validate, out, err);
        if (*monitor_cmd) return cmd_monitor(monitor, in, out, err);
        if (*simulate_cmd) return cmd_simulate(simulate, out);
    } catch (const config_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const data_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }
    return exit_usage;
}

} // namespace csb_ewma::cli
