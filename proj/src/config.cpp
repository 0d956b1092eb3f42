#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "starld/cli.hpp"
#include "starld/config_error.hpp"
#include "starld/error.hpp"
#include "starld/network_json.hpp"

namespace starld {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::string& path,
                         const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError(path + "." + key, "unknown key");
        }
    }
}

void require_object(const json& v, const std::string& path) {
    if (!v.is_object()) {
        throw ConfigError(path, "expected an object");
    }
}

double get_number(const json& obj, const std::string& path, const char* key, double fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_number()) {
        throw ConfigError(path + "." + key, "expected a number");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
        throw ConfigError(path + "." + key, "must be finite");
    }
    return d;
}

std::int64_t get_int(const json& obj, const std::string& path, const char* key,
                     std::int64_t fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_number_integer()) {
        throw ConfigError(path + "." + key, "expected an integer");
    }
    return v.get<std::int64_t>();
}

std::uint64_t get_seed(const json& obj, const std::string& path, std::uint64_t fallback) {
    if (!obj.contains("seed")) {
        return fallback;
    }
    const json& v = obj.at("seed");
    if (v.is_number_unsigned()) {
        return v.get<std::uint64_t>();
    }
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    throw ConfigError(path + ".seed", "expected an unsigned 64-bit integer");
}

RateMode parse_mode(const json& obj, const std::string& path) {
    if (!obj.contains("mode")) {
        return RateMode::Ergodic;
    }
    const json& v = obj.at("mode");
    if (v == "ergodic") {
        return RateMode::Ergodic;
    }
    if (v == "general") {
        return RateMode::General;
    }
    throw ConfigError(path + ".mode", "expected \"ergodic\" or \"general\"");
}

const NetworkSpec& need_network(const ExperimentConfig& c, const std::string& block) {
    if (!c.network) {
        throw ConfigError(block, "this block refers to routes, so a network block is required");
    }
    return *c.network;
}

int channel_id_field(const NetworkSpec& spec, const json& obj, const std::string& path,
                     const char* key) {
    const json& v = obj.at(key);
    if (!v.is_number_integer()) {
        throw ConfigError(path + "." + key, "expected a channel id");
    }
    const int id = v.get<int>();
    if (!spec.channel_index(id)) {
        throw ConfigError(path + "." + key, "unknown channel id " + std::to_string(id));
    }
    return id;
}

RateBlock parse_rate(const ExperimentConfig& c, const json& doc) {
    const std::string path = "rate";
    require_object(doc, path);
    reject_unknown_keys(doc, path, {"x", "drift", "mode", "zero_tol"});
    const NetworkSpec& spec = need_network(c, path);
    RateBlock b;
    if (!doc.contains("x")) {
        throw ConfigError(path + ".x", "missing required field");
    }
    b.x = route_values_from_json(spec, doc.at("x"), path + ".x");
    for (RouteIndex r = 0; r < b.x.size(); ++r) {
        if (!(b.x[r] >= 0.0) || !std::isfinite(b.x[r])) {
            throw ConfigError(path + ".x." + spec.route_name(r), "must be finite and >= 0");
        }
    }
    b.drift = doc.contains("drift") ? route_values_from_json(spec, doc.at("drift"), path + ".drift")
                                    : std::vector<double>(spec.n_routes(), 0.0);
    for (RouteIndex r = 0; r < b.drift.size(); ++r) {
        if (!std::isfinite(b.drift[r])) {
            throw ConfigError(path + ".drift." + spec.route_name(r), "must be finite");
        }
    }
    b.mode = parse_mode(doc, path);
    b.zero_tol = get_number(doc, path, "zero_tol", 0.0);
    if (b.zero_tol < 0.0) {
        throw ConfigError(path + ".zero_tol", "must be >= 0");
    }
    return b;
}

Policy parse_policy(const NetworkSpec& spec, const json& doc, const std::string& path) {
    require_object(doc, path);
    reject_unknown_keys(doc, path, {"kind", "anchor"});
    if (!doc.contains("kind")) {
        throw ConfigError(path + ".kind", "missing required field");
    }
    const json& kind = doc.at("kind");
    if (kind == "min") {
        if (doc.contains("anchor")) {
            throw ConfigError(path + ".anchor", "only processor sharing takes an anchor");
        }
        return Policy::min_policy();
    }
    if (kind == "processor_sharing") {
        if (!doc.contains("anchor")) {
            throw ConfigError(path + ".anchor", "missing required field");
        }
        const int id = channel_id_field(spec, doc, path, "anchor");
        const ChannelIndex a = *spec.channel_index(id);
        for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
            if (!spec.route(r).touches(a)) {
                throw ConfigError(path + ".anchor", "route " + spec.route_name(r) +
                                                        " does not use channel " +
                                                        std::to_string(id));
            }
        }
        return Policy::processor_sharing(a);
    }
    throw ConfigError(path + ".kind", "expected \"min\" or \"processor_sharing\"");
}

SimulateBlock parse_simulate(const ExperimentConfig& c, const json& doc) {
    const std::string path = "simulate";
    require_object(doc, path);
    reject_unknown_keys(doc, path,
                        {"horizon", "seed", "policy", "x0", "histogram_cap", "window"});
    SimulateBlock b;
    if (!doc.contains("horizon")) {
        throw ConfigError(path + ".horizon", "missing required field");
    }
    b.horizon = get_number(doc, path, "horizon", 0.0);
    if (!(b.horizon > 0.0)) {
        throw ConfigError(path + ".horizon", "must be positive");
    }
    b.seed = get_seed(doc, path, 1);
    if (doc.contains("policy")) {
        b.policy = parse_policy(need_network(c, path + ".policy"), doc.at("policy"),
                                path + ".policy");
    }
    if (c.network) {
        b.x0.assign(c.network->n_routes(), 0);
    }
    if (doc.contains("x0")) {
        const NetworkSpec& spec = need_network(c, path + ".x0");
        const std::vector<double> x0 = route_values_from_json(spec, doc.at("x0"), path + ".x0");
        for (RouteIndex r = 0; r < x0.size(); ++r) {
            if (!(x0[r] >= 0.0) || x0[r] != std::floor(x0[r]) || x0[r] > 1e15) {
                throw ConfigError(path + ".x0." + spec.route_name(r),
                                  "must be a nonnegative integer");
            }
            b.x0[r] = static_cast<std::int64_t>(x0[r]);
        }
    }
    b.histogram_cap = get_int(doc, path, "histogram_cap", 10000);
    if (b.histogram_cap < 1 || b.histogram_cap > 100000000) {
        throw ConfigError(path + ".histogram_cap", "must be between 1 and 1e8");
    }
    if (doc.contains("window")) {
        const json& w = doc.at("window");
        if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number()) {
            throw ConfigError(path + ".window", "expected [low, high] quantiles");
        }
        b.window.low = w[0].get<double>();
        b.window.high = w[1].get<double>();
        if (!(b.window.low >= 0.0 && b.window.low < b.window.high && b.window.high <= 1.0)) {
            throw ConfigError(path + ".window", "must satisfy 0 <= low < high <= 1");
        }
    }
    return b;
}

OptimizeBlock parse_optimize(const ExperimentConfig& c, const json& doc) {
    const std::string path = "optimize";
    require_object(doc, path);
    reject_unknown_keys(doc, path,
                        {"segments", "multistarts", "seed", "target_channel", "max_iterations",
                         "tolerance", "mode"});
    OptimizeBlock b;
    OptimizeOptions& o = b.options;
    o.segments = static_cast<int>(get_int(doc, path, "segments", o.segments));
    if (o.segments < 1 || o.segments > 64) {
        throw ConfigError(path + ".segments", "must be between 1 and 64");
    }
    o.multistarts = static_cast<int>(get_int(doc, path, "multistarts", o.multistarts));
    if (o.multistarts < 1 || o.multistarts > 10000) {
        throw ConfigError(path + ".multistarts", "must be between 1 and 10000");
    }
    o.seed = get_seed(doc, path, o.seed);
    o.max_iterations =
        static_cast<int>(get_int(doc, path, "max_iterations", o.max_iterations));
    if (o.max_iterations < 1) {
        throw ConfigError(path + ".max_iterations", "must be >= 1");
    }
    o.tolerance = get_number(doc, path, "tolerance", o.tolerance);
    if (!(o.tolerance > 0.0)) {
        throw ConfigError(path + ".tolerance", "must be positive");
    }
    o.mode = parse_mode(doc, path);
    if (doc.contains("target_channel")) {
        if (c.network) {
            b.target_channel = channel_id_field(*c.network, doc, path, "target_channel");
        } else {
            const json& v = doc.at("target_channel");
            if (!v.is_number_integer()) {
                throw ConfigError(path + ".target_channel", "expected a channel id");
            }
            b.target_channel = v.get<int>();
        }
    }
    return b;
}

SweepBlock parse_sweep(const ExperimentConfig& c, const json& doc) {
    const std::string path = "sweep";
    require_object(doc, path);
    reject_unknown_keys(doc, path, {"parameter", "values"});
    SweepBlock b;
    if (!doc.contains("values") || !doc.at("values").is_array() || doc.at("values").empty()) {
        throw ConfigError(path + ".values", "expected a nonempty array of numbers");
    }
    for (std::size_t k = 0; k < doc.at("values").size(); ++k) {
        const json& v = doc.at("values")[k];
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
            throw ConfigError(path + ".values[" + std::to_string(k) + "]", "expected a number");
        }
        b.values.push_back(v.get<double>());
    }
    if (doc.contains("parameter")) {
        if (!doc.at("parameter").is_string()) {
            throw ConfigError(path + ".parameter", "expected a string");
        }
        b.parameter = doc.at("parameter").get<std::string>();
        if (c.network) {
            try {
                (void)apply_parameter(*c.network, b.parameter, b.values.front());
            } catch (const ConfigError& e) {
                throw ConfigError(path + ".parameter", e.what());
            }
        }
    }
    return b;
}

StayCostBlock parse_stay_cost(const ExperimentConfig& c, const json& doc) {
    const std::string path = "stay_cost";
    require_object(doc, path);
    reject_unknown_keys(doc, path, {"routes"});
    const NetworkSpec& spec = need_network(c, path);
    StayCostBlock b;
    if (!doc.contains("routes")) {
        return b;
    }
    const json& routes = doc.at("routes");
    if (!routes.is_array()) {
        throw ConfigError(path + ".routes", "expected an array of \"i-j\" names");
    }
    for (std::size_t k = 0; k < routes.size(); ++k) {
        const std::string where = path + ".routes[" + std::to_string(k) + "]";
        if (!routes[k].is_string()) {
            throw ConfigError(where, "expected a route name \"i-j\"");
        }
        json probe = json::object();
        probe[routes[k].get<std::string>()] = 1.0;
        const std::vector<double> mark = route_values_from_json(spec, probe, where);
        for (RouteIndex r = 0; r < mark.size(); ++r) {
            if (mark[r] == 1.0) {
                for (RouteIndex prev : b.routes) {
                    if (prev == r) {
                        throw ConfigError(where, "duplicate route");
                    }
                }
                b.routes.push_back(r);
            }
        }
    }
    return b;
}

OutputBlock parse_output(const json& doc) {
    const std::string path = "output";
    require_object(doc, path);
    reject_unknown_keys(doc, path, {"directory", "formats"});
    OutputBlock b;
    if (doc.contains("directory")) {
        if (!doc.at("directory").is_string() || doc.at("directory").get<std::string>().empty()) {
            throw ConfigError(path + ".directory", "expected a nonempty string");
        }
        b.directory = doc.at("directory").get<std::string>();
    }
    if (doc.contains("formats")) {
        const json& f = doc.at("formats");
        if (!f.is_array()) {
            throw ConfigError(path + ".formats", "expected an array");
        }
        b.formats.clear();
        for (std::size_t k = 0; k < f.size(); ++k) {
            if (f[k] != "json" && f[k] != "csv") {
                throw ConfigError(path + ".formats[" + std::to_string(k) + "]",
                                  "expected \"json\" or \"csv\"");
            }
            b.formats.push_back(f[k].get<std::string>());
        }
    }
    return b;
}

}  // namespace

bool OutputBlock::wants(const std::string& format) const {
    for (const std::string& f : formats) {
        if (f == format) {
            return true;
        }
    }
    return false;
}

ExperimentConfig parse_config(const json& doc) {
    if (!doc.is_object()) {
        throw ConfigError("(root)", "expected an object");
    }
    reject_unknown_keys(doc, "(root)",
                        {"network", "rate", "simulate", "optimize", "sweep", "stay_cost",
                         "output"});
    ExperimentConfig c;
    if (doc.contains("network")) {
        c.network = network_from_json(doc.at("network"));
    }
    if (doc.contains("rate")) {
        c.rate = parse_rate(c, doc.at("rate"));
    }
    if (doc.contains("simulate")) {
        c.simulate = parse_simulate(c, doc.at("simulate"));
    }
    if (doc.contains("optimize")) {
        c.optimize = parse_optimize(c, doc.at("optimize"));
    }
    if (doc.contains("sweep")) {
        c.sweep = parse_sweep(c, doc.at("sweep"));
    }
    if (doc.contains("stay_cost")) {
        c.stay_cost = parse_stay_cost(c, doc.at("stay_cost"));
    }
    if (doc.contains("output")) {
        c.output = parse_output(doc.at("output"));
    }
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json doc = json::object();
    if (c.network) {
        doc["network"] = network_to_json(*c.network);
    }
    if (c.rate) {
        const NetworkSpec& spec = *c.network;
        doc["rate"] = {{"x", route_values_to_json(spec, c.rate->x)},
                       {"drift", route_values_to_json(spec, c.rate->drift)},
                       {"mode", to_string(c.rate->mode)},
                       {"zero_tol", c.rate->zero_tol}};
    }
    if (c.simulate) {
        const SimulateBlock& s = *c.simulate;
        json block = {{"horizon", s.horizon},
                      {"seed", s.seed},
                      {"histogram_cap", s.histogram_cap},
                      {"window", {s.window.low, s.window.high}}};
        if (c.network) {
            const NetworkSpec& spec = *c.network;
            json policy = {{"kind", "min"}};
            if (s.policy.kind == Policy::Kind::ProcessorSharing) {
                policy = {{"kind", "processor_sharing"},
                          {"anchor", spec.channel(s.policy.anchor).id}};
            }
            json x0 = json::object();
            for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
                x0[spec.route_name(r)] = s.x0[r];
            }
            block["policy"] = policy;
            block["x0"] = x0;
        }
        doc["simulate"] = block;
    }
    if (c.optimize) {
        const OptimizeOptions& o = c.optimize->options;
        json block = {{"segments", o.segments},
                      {"multistarts", o.multistarts},
                      {"seed", o.seed},
                      {"max_iterations", o.max_iterations},
                      {"tolerance", o.tolerance},
                      {"mode", to_string(o.mode)}};
        if (c.optimize->target_channel) {
            block["target_channel"] = *c.optimize->target_channel;
        }
        doc["optimize"] = block;
    }
    if (c.sweep) {
        json block = {{"values", c.sweep->values}};
        if (!c.sweep->parameter.empty()) {
            block["parameter"] = c.sweep->parameter;
        }
        doc["sweep"] = block;
    }
    if (c.stay_cost) {
        json routes = json::array();
        for (RouteIndex r : c.stay_cost->routes) {
            routes.push_back(c.network->route_name(r));
        }
        doc["stay_cost"] = {{"routes", routes}};
    }
    doc["output"] = {{"directory", c.output.directory}, {"formats", c.output.formats}};
    return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path.string(), "cannot open configuration file");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), std::string("malformed JSON: ") + e.what());
    }
    return parse_config(doc);
}

NetworkSpec apply_parameter(const NetworkSpec& spec, const std::string& parameter, double value) {
    std::vector<std::string> parts;
    std::stringstream ss(parameter);
    for (std::string part; std::getline(ss, part, '.');) {
        parts.push_back(part);
    }
    if (parts.size() != 3) {
        throw ConfigError(parameter,
                          "expected routes.<i-j>.lambda, routes.<i-j>.mu or channels.<id>.capacity");
    }
    if (!std::isfinite(value) || !(value > 0.0)) {
        throw ConfigError(parameter, "swept values must be positive");
    }
    if (parts[0] == "routes") {
        json probe = json::object();
        probe[parts[1]] = 1.0;
        const std::vector<double> mark = route_values_from_json(spec, probe, parameter);
        RouteIndex r = 0;
        while (mark[r] != 1.0) {
            ++r;
        }
        const Route& route = spec.route(r);
        if (parts[2] == "lambda") {
            return spec.with_route_rates(r, value, route.mu);
        }
        if (parts[2] == "mu") {
            return spec.with_route_rates(r, route.lambda, value);
        }
        throw ConfigError(parameter, "route parameters are lambda and mu");
    }
    if (parts[0] == "channels") {
        int id = 0;
        const auto [ptr, ec] =
            std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), id);
        if (ec != std::errc() || ptr != parts[1].data() + parts[1].size() ||
            !spec.channel_index(id)) {
            throw ConfigError(parameter, "unknown channel id " + parts[1]);
        }
        if (parts[2] != "capacity") {
            throw ConfigError(parameter, "the channel parameter is capacity");
        }
        return spec.with_capacity(*spec.channel_index(id), value);
    }
    throw ConfigError(parameter, "parameter paths start with routes or channels");
}

NetworkSpec fig4_network(double x) {
    return NetworkSpec::from_ids({{1, 3.0}, {2, 2.0}, {3, 1.0}},
                                 {{1, 2, 1.0, 1.0}, {2, 3, 1.0, 2.0}, {1, 3, x, 1.0}});
}

std::string format_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, ptr};
}

}  // namespace starld
