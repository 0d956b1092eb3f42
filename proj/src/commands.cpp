#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "starld/cli.hpp"
#include "starld/config_error.hpp"
#include "starld/error.hpp"
#include "starld/network_json.hpp"

namespace starld {

using nlohmann::json;

namespace {

constexpr double kFig4Values[] = {0.05, 0.15, 0.25, 0.35, 0.45};

std::ostream& out_of(const RunContext& ctx) { return ctx.out != nullptr ? *ctx.out : std::cout; }
std::ostream& err_of(const RunContext& ctx) { return ctx.err != nullptr ? *ctx.err : std::cerr; }

std::filesystem::path output_dir(const ExperimentConfig& c, const RunContext& ctx) {
    return ctx.out_dir ? *ctx.out_dir : std::filesystem::path(c.output.directory);
}

std::filesystem::path prepare_dir(const ExperimentConfig& c, const RunContext& ctx) {
    const std::filesystem::path dir = output_dir(c, ctx);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create output directory " + dir.string() + ": " +
                                 ec.message());
    }
    return dir;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    f << text;
    if (!f) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

void write_json(const std::filesystem::path& path, const json& doc) {
    write_file(path, doc.dump(2) + "\n");
}

json cost_json(const Cost& c) {
    if (c.is_infinite()) {
        return "inf";
    }
    return c.value();
}

const NetworkSpec& need_network(const ExperimentConfig& c) {
    if (!c.network) {
        throw ConfigError("network", "missing required block");
    }
    return *c.network;
}

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    const std::size_t workers =
        std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

json ergodicity_json(const NetworkSpec& spec, const ErgodicityReport& report) {
    json channels = json::array();
    for (const ChannelLoad& l : report.channels) {
        channels.push_back({{"channel", spec.channel(l.channel).id},
                            {"load", l.load},
                            {"capacity", l.capacity},
                            {"stable", l.stable()}});
    }
    return {{"ergodic", report.ergodic}, {"channels", channels}};
}

json route_names(const NetworkSpec& spec, const std::vector<RouteIndex>& routes) {
    json out = json::array();
    for (RouteIndex r : routes) {
        out.push_back(spec.route_name(r));
    }
    return out;
}

struct ChannelDecay {
    std::optional<DecayEstimate> estimate;
    std::string warning;
};

std::vector<ChannelDecay> decay_table(const NetworkSpec& spec, const TrajectoryStats& stats,
                                      const DecayWindow& window) {
    std::vector<ChannelDecay> out(spec.n_channels());
    for (ChannelIndex c = 0; c < spec.n_channels(); ++c) {
        try {
            out[c].estimate = estimate_decay_rate(stats, c, window);
        } catch (const InsufficientData& e) {
            out[c].warning = "channel " + std::to_string(spec.channel(c).id) + ": " + e.what();
        }
    }
    return out;
}

std::string csv_cell(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

json decay_result_json(const NetworkSpec& spec, ChannelIndex channel, const DecayResult& r) {
    json segments = json::array();
    for (const SegmentReport& s : r.segments) {
        json bottleneck = json::object();
        for (RouteIndex q = 0; q < spec.n_routes(); ++q) {
            bottleneck[spec.route_name(q)] =
                s.bottleneck[q] ? json(spec.channel(*s.bottleneck[q]).id) : json(nullptr);
        }
        segments.push_back(
            {{"t0", s.t0}, {"t1", s.t1}, {"cost", cost_json(s.cost)}, {"bottleneck", bottleneck}});
    }
    json breakpoints = json::array();
    for (std::size_t k = 0; k < r.optimal_path.times.size(); ++k) {
        breakpoints.push_back({{"t", r.optimal_path.times[k]},
                               {"x", route_values_to_json(spec, r.optimal_path.states[k].x)}});
    }
    const PsConsistency ps = ps_consistency_check(spec, r, channel);
    json ps_json = {{"consistent", ps.consistent}, {"samples", ps.samples}};
    ps_json["first_violation_time"] =
        ps.first_violation_time ? json(*ps.first_violation_time) : json(nullptr);
    ps_json["violating_route"] =
        ps.violating_route ? json(spec.route_name(*ps.violating_route)) : json(nullptr);
    json ps_reference = nullptr;
    try {
        ps_reference = ps_decay_rate(spec, channel);
    } catch (const NotErgodic&) {
    }
    return {{"channel", spec.channel(channel).id},
            {"label", "variational decay estimate"},
            {"value", r.value},
            {"status", to_string(r.status)},
            {"horizon", r.horizon},
            {"evaluations", r.evaluations},
            {"ladder", r.ladder},
            {"path", breakpoints},
            {"segments", segments},
            {"ps_consistency", ps_json},
            {"ps_reference", ps_reference}};
}

}  // namespace

int cmd_rate(const ExperimentConfig& config, const RunContext& ctx) {
    const NetworkSpec& spec = need_network(config);
    if (!config.rate) {
        throw ConfigError("rate", "missing required block");
    }
    const RateBlock& b = *config.rate;
    const ErgodicityReport ergodicity = is_ergodic(spec);
    std::ostream& os = out_of(ctx);
    const FluidState x(b.x);
    const LocalRateBreakdown br = local_rate_breakdown(spec, x, b.drift, b.mode, b.zero_tol);

    json terms = json::object();
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        terms[spec.route_name(r)] = cost_json(br.terms[r]);
    }
    json report = {{"mode", to_string(b.mode)},
                   {"total", cost_json(br.total)},
                   {"occupied", cost_json(br.occupied)},
                   {"jammed_cut", cost_json(br.jammed)},
                   {"free_block", cost_json(br.free_block)},
                   {"terms", terms},
                   {"service", route_values_to_json(spec, br.service)},
                   {"face",
                    {{"occupied", route_names(spec, br.face.lambda)},
                     {"jammed", route_names(spec, br.face.lambda1)},
                     {"free", route_names(spec, br.face.lambda2)}}},
                   {"ergodicity", ergodicity_json(spec, ergodicity)}};

    os << "L(x, D) = " << br.total << " (" << to_string(b.mode) << " mode)\n";
    os << "face: occupied " << report["face"]["occupied"].dump() << ", jammed "
       << report["face"]["jammed"].dump() << ", free " << report["face"]["free"].dump() << "\n";
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        os << "  route " << spec.route_name(r) << ": " << br.terms[r] << "\n";
    }
    os << "  occupied sum " << br.occupied << ", jammed cut " << br.jammed << ", free block "
       << br.free_block << "\n";
    os << "ergodic: " << (ergodicity.ergodic ? "yes" : "no") << "\n";
    for (const ChannelLoad& l : ergodicity.channels) {
        os << "  channel " << spec.channel(l.channel).id << ": load " << l.load << " / capacity "
           << l.capacity << (l.stable() ? "" : "  OVERLOADED") << "\n";
    }
    if (config.output.wants("json")) {
        write_json(prepare_dir(config, ctx) / "rate.json", report);
    }
    return kExitOk;
}

int cmd_simulate(const ExperimentConfig& config, const RunContext& ctx) {
    const NetworkSpec& base = need_network(config);
    if (!config.simulate) {
        throw ConfigError("simulate", "missing required block");
    }
    const SimulateBlock& b = *config.simulate;
    const std::uint64_t seed = ctx.seed.value_or(b.seed);
    SimulationOptions opts;
    opts.histogram_cap = b.histogram_cap;

    std::vector<double> values;
    const bool sweeping = config.sweep && !config.sweep->parameter.empty();
    if (config.sweep && !sweeping) {
        throw ConfigError("sweep.parameter", "simulate sweeps need a parameter path");
    }
    if (sweeping) {
        values = config.sweep->values;
    }
    const std::size_t points = sweeping ? values.size() : 1;
    std::vector<NetworkSpec> specs;
    for (std::size_t k = 0; k < points; ++k) {
        specs.push_back(sweeping ? apply_parameter(base, config.sweep->parameter, values[k]) : base);
    }
    std::vector<std::optional<TrajectoryStats>> runs(points);
    parallel_for(points, ctx.threads, [&](std::size_t k) {
        runs[k] = simulate(specs[k], b.policy, b.x0, b.horizon, seed, opts);
    });

    const std::filesystem::path dir = prepare_dir(config, ctx);
    std::ostream& os = out_of(ctx);
    std::ostringstream decay_csv;
    decay_csv << (sweeping ? "value,channel,rate,stderr\n" : "channel,rate,stderr\n");
    json summaries = json::array();
    for (std::size_t k = 0; k < points; ++k) {
        const NetworkSpec& spec = specs[k];
        const TrajectoryStats& stats = *runs[k];
        const std::vector<ChannelDecay> decay = decay_table(spec, stats, b.window);
        json decay_json = json::object();
        for (ChannelIndex c = 0; c < spec.n_channels(); ++c) {
            const ChannelDecay& d = decay[c];
            if (!d.warning.empty()) {
                err_of(ctx) << "warning: " << d.warning << "\n";
            }
            if (sweeping) {
                decay_csv << format_number(values[k]) << ',';
            }
            decay_csv << spec.channel(c).id << ','
                      << csv_cell(d.estimate ? std::optional(d.estimate->rate) : std::nullopt)
                      << ','
                      << csv_cell(d.estimate ? std::optional(d.estimate->stderr_) : std::nullopt)
                      << '\n';
            decay_json[std::to_string(spec.channel(c).id)] =
                d.estimate ? json{{"rate", d.estimate->rate},
                                  {"stderr", d.estimate->stderr_},
                                  {"regression_stderr", d.estimate->regression_stderr},
                                  {"bins", d.estimate->bins},
                                  {"n_low", d.estimate->n_low},
                                  {"n_high", d.estimate->n_high}}
                           : json(nullptr);
            os << (sweeping ? "value " + format_number(values[k]) + " " : std::string())
               << "channel " << spec.channel(c).id << ": decay "
               << (d.estimate ? format_number(d.estimate->rate) + " +- " +
                                    format_number(d.estimate->stderr_)
                              : std::string("n/a"))
               << "\n";
        }
        json summary = summary_json(spec, stats);
        summary["seed"] = seed;
        summary["decay"] = decay_json;
        if (sweeping) {
            summary["parameter"] = config.sweep->parameter;
            summary["value"] = values[k];
        }
        summaries.push_back(summary);
        if (config.output.wants("csv")) {
            std::ostringstream hist;
            write_histogram_csv(hist, spec, stats);
            const std::string name =
                sweeping ? "histogram_" + std::to_string(k) + ".csv" : "histogram.csv";
            write_file(dir / name, hist.str());
        }
    }
    if (config.output.wants("csv")) {
        write_file(dir / "decay.csv", decay_csv.str());
    }
    if (config.output.wants("json")) {
        write_json(dir / "summary.json", sweeping ? json{{"points", summaries}} : summaries[0]);
    }
    return kExitOk;
}

int cmd_optimize(const ExperimentConfig& config, const RunContext& ctx) {
    const NetworkSpec& spec = need_network(config);
    OptimizeBlock b = config.optimize.value_or(OptimizeBlock{});
    OptimizeOptions opts = b.options;
    opts.threads = ctx.threads;
    if (ctx.seed) {
        opts.seed = *ctx.seed;
    }
    const ErgodicityReport ergodicity = is_ergodic(spec);
    if (!ergodicity.ergodic) {
        std::string names;
        for (ChannelIndex c : ergodicity.overloaded()) {
            names += (names.empty() ? "" : ", ") + std::to_string(spec.channel(c).id);
        }
        throw NotErgodic("the network is not ergodic (overloaded channel(s): " + names +
                         "), so no stationary tail exists");
    }
    std::vector<ChannelIndex> targets;
    if (b.target_channel) {
        targets.push_back(spec.channel_index_or_throw(*b.target_channel));
    } else {
        for (ChannelIndex c = 0; c < spec.n_channels(); ++c) {
            if (!spec.routes_of(c).empty()) {
                targets.push_back(c);
            }
        }
    }

    std::vector<std::optional<DecayResult>> results(targets.size());
    for (std::size_t k = 0; k < targets.size(); ++k) {
        results[k] = optimize_tail_decay(spec, targets[k], opts);
    }

    std::ostream& os = out_of(ctx);
    bool all_converged = true;
    json out = json::array();
    std::ostringstream path_csv;
    path_csv << "channel,t";
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        path_csv << ',' << spec.route_name(r);
    }
    path_csv << '\n';
    for (std::size_t k = 0; k < targets.size(); ++k) {
        const DecayResult& r = *results[k];
        const json j = decay_result_json(spec, targets[k], r);
        out.push_back(j);
        all_converged = all_converged && r.status == OptimizeStatus::Converged;
        const int id = spec.channel(targets[k]).id;
        for (std::size_t p = 0; p < r.optimal_path.times.size(); ++p) {
            path_csv << id << ',' << format_number(r.optimal_path.times[p]);
            for (double v : r.optimal_path.states[p].x) {
                path_csv << ',' << format_number(v);
            }
            path_csv << '\n';
        }
        os << "channel " << id << ": variational decay estimate " << format_number(r.value)
           << " (" << to_string(r.status) << "), ps reference "
           << (j["ps_reference"].is_null() ? std::string("n/a")
                                           : format_number(j["ps_reference"].get<double>()))
           << ", ps consistent " << (j["ps_consistency"]["consistent"].get<bool>() ? "yes" : "no")
           << "\n";
    }
    const std::filesystem::path dir = prepare_dir(config, ctx);
    if (config.output.wants("json")) {
        write_json(dir / "decay_result.json",
                   {{"seed", opts.seed}, {"mode", to_string(opts.mode)}, {"results", out}});
    }
    if (config.output.wants("csv")) {
        write_file(dir / "path.csv", path_csv.str());
    }
    if (!all_converged) {
        err_of(ctx) << "error: optimizer did not converge within max_iterations; results are "
                       "flagged not_converged\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_example_fig4(const ExperimentConfig& config, const RunContext& ctx) {
    std::vector<double> values(std::begin(kFig4Values), std::end(kFig4Values));
    if (config.sweep) {
        if (!config.sweep->parameter.empty() && config.sweep->parameter != "routes.1-3.lambda") {
            throw ConfigError("sweep.parameter",
                              "example-fig4 sweeps routes.1-3.lambda (lambda13 = x) only");
        }
        values = config.sweep->values;
    }
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (!(values[k] > 0.0) || !(values[k] < 0.5)) {
            throw ConfigError("sweep.values[" + std::to_string(k) + "]",
                              "x = " + format_number(values[k]) +
                                  " is outside (0, 0.5): channel 3 carries load 1/2 + x and "
                                  "capacity 1, so the network is ergodic only for x < 0.5");
        }
    }
    const double horizon = config.simulate ? config.simulate->horizon : 1e6;
    const std::uint64_t seed = ctx.seed.value_or(config.simulate ? config.simulate->seed : 1);
    const DecayWindow window = config.simulate ? config.simulate->window : DecayWindow{};
    SimulationOptions sim_opts;
    sim_opts.histogram_cap = config.simulate ? config.simulate->histogram_cap : 10000;
    OptimizeOptions opt = config.optimize ? config.optimize->options : OptimizeOptions{};
    if (ctx.seed) {
        opt.seed = *ctx.seed;
    }
    opt.threads = 1;

    const std::size_t n = values.size();
    std::vector<std::optional<TrajectoryStats>> runs(n);
    std::vector<std::optional<DecayResult>> var(n * 3);
    // Simulations and optimizations are independent tasks.
    parallel_for(n * 4, ctx.threads, [&](std::size_t task) {
        const std::size_t k = task / 4;
        const std::size_t part = task % 4;
        const NetworkSpec spec = fig4_network(values[k]);
        if (part == 0) {
            runs[k] = simulate(spec, Policy::min_policy(), DiscreteState(3, 0), horizon, seed,
                               sim_opts);
        } else {
            var[k * 3 + part - 1] = optimize_tail_decay(spec, part - 1, opt);
        }
    });

    std::ostream& os = out_of(ctx);
    std::ostringstream csv;
    csv << "x,channel,sim_rate,sim_stderr,ps_rate,var_rate\n";
    json points = json::array();
    bool all_converged = true;
    for (std::size_t k = 0; k < n; ++k) {
        const NetworkSpec spec = fig4_network(values[k]);
        const std::vector<ChannelDecay> decay = decay_table(spec, *runs[k], window);
        for (ChannelIndex c = 0; c < 3; ++c) {
            const DecayResult& r = *var[k * 3 + c];
            all_converged = all_converged && r.status == OptimizeStatus::Converged;
            const double ps = ps_decay_rate(spec, c);
            const ChannelDecay& d = decay[c];
            if (!d.warning.empty()) {
                err_of(ctx) << "warning: x = " << format_number(values[k]) << ", " << d.warning
                            << "\n";
            }
            csv << format_number(values[k]) << ',' << spec.channel(c).id << ','
                << csv_cell(d.estimate ? std::optional(d.estimate->rate) : std::nullopt) << ','
                << csv_cell(d.estimate ? std::optional(d.estimate->stderr_) : std::nullopt) << ','
                << format_number(ps) << ',' << format_number(r.value) << '\n';
            const PsConsistency check = ps_consistency_check(spec, r, c);
            json point = {{"x", values[k]},
                          {"channel", spec.channel(c).id},
                          {"sim_rate", d.estimate ? json(d.estimate->rate) : json(nullptr)},
                          {"sim_stderr", d.estimate ? json(d.estimate->stderr_) : json(nullptr)},
                          {"ps_rate", ps},
                          {"var_rate", r.value},
                          {"var_status", to_string(r.status)},
                          {"ps_consistent", check.consistent}};
            point["first_violation_time"] = check.first_violation_time
                                                ? json(*check.first_violation_time)
                                                : json(nullptr);
            points.push_back(point);
            os << "x " << format_number(values[k]) << " channel " << spec.channel(c).id
               << ": sim "
               << (d.estimate ? format_number(d.estimate->rate) : std::string("n/a"))
               << ", ps " << format_number(ps) << ", variational " << format_number(r.value)
               << (check.consistent ? "" : " (channel not always the bottleneck)") << "\n";
        }
    }
    const std::filesystem::path dir = prepare_dir(config, ctx);
    if (config.output.wants("csv")) {
        write_file(dir / "fig4.csv", csv.str());
    }
    if (config.output.wants("json")) {
        write_json(dir / "fig4.json",
                   {{"horizon", horizon}, {"seed", seed}, {"points", points}});
    }
    if (!all_converged) {
        err_of(ctx) << "error: optimizer did not converge on every point\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_stay_cost(const ExperimentConfig& config, const RunContext& ctx) {
    const NetworkSpec& spec = need_network(config);
    std::vector<RouteIndex> subset;
    if (config.stay_cost && !config.stay_cost->routes.empty()) {
        subset = config.stay_cost->routes;
    } else {
        for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
            subset.push_back(r);
        }
    }
    const StayCostResult res = stay_cost_transient(spec, subset);
    std::ostream& os = out_of(ctx);
    os << "stay cost " << format_number(res.value) << " (duality gap "
       << format_number(res.duality_gap) << ", " << (res.converged ? "converged" : "not converged")
       << ")\n";
    for (RouteIndex r : subset) {
        os << "  nu[" << spec.route_name(r) << "] = " << format_number(res.allocation.nu[r])
           << "\n";
    }
    if (config.output.wants("json")) {
        json alloc = json::object();
        for (RouteIndex r : subset) {
            alloc[spec.route_name(r)] = res.allocation.nu[r];
        }
        write_json(prepare_dir(config, ctx) / "stay_cost.json",
                   {{"routes", route_names(spec, subset)},
                    {"value", res.value},
                    {"allocation", alloc},
                    {"duality_gap", res.duality_gap},
                    {"sweeps", res.sweeps},
                    {"converged", res.converged}});
    }
    if (!res.converged) {
        err_of(ctx) << "error: stay-cost solver did not reach its gap tolerance\n";
        return kExitRuntime;
    }
    return kExitOk;
}

namespace {

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

void log_line(const std::filesystem::path& dir, const std::string& text) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream log(dir / "run.log", std::ios::app);
    if (log) {
        log << timestamp() << ' ' << text << '\n';
    }
}

}  // namespace

int run_verb(const std::string& verb, const std::optional<std::filesystem::path>& config_path,
             const RunContext& ctx) {
    std::ostream& err = err_of(ctx);
    ExperimentConfig config;
    try {
        if (config_path) {
            config = load_config(*config_path);
        } else if (verb != "example-fig4") {
            throw ConfigError("--config", "required for " + verb);
        }
    } catch (const ConfigError& e) {
        err << "validation error: " << e.what() << "\n";
        return kExitValidation;
    }
    const std::filesystem::path dir = output_dir(config, ctx);
    log_line(dir, verb + " started");
    int code = kExitOk;
    try {
        if (verb == "rate") {
            code = cmd_rate(config, ctx);
        } else if (verb == "simulate") {
            code = cmd_simulate(config, ctx);
        } else if (verb == "optimize") {
            code = cmd_optimize(config, ctx);
        } else if (verb == "example-fig4") {
            code = cmd_example_fig4(config, ctx);
        } else if (verb == "stay-cost") {
            code = cmd_stay_cost(config, ctx);
        } else {
            err << "validation error: unknown command " << verb << "\n";
            code = kExitValidation;
        }
    } catch (const ConfigError& e) {
        err << "validation error: " << e.what() << "\n";
        code = kExitValidation;
    } catch (const InvalidArgument& e) {
        err << "validation error: " << e.what() << "\n";
        code = kExitValidation;
    } catch (const ModeMismatch& e) {
        err << "validation error: " << e.what() << "\n";
        code = kExitValidation;
    } catch (const NotErgodic& e) {
        err << "validation error: " << e.what() << "\n";
        code = kExitValidation;
    } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << "\n";
        code = kExitRuntime;
    }
    log_line(dir, verb + " finished with exit code " + std::to_string(code));
    return code;
}

}  // namespace starld
