#include "starld/network_json.hpp"

#include <set>

#include "starld/config_error.hpp"
#include "starld/error.hpp"

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

const json& require(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) {
        throw ConfigError(path + "." + key, "missing required field");
    }
    return obj.at(key);
}

double require_number(const json& obj, const std::string& path, const char* key) {
    const json& v = require(obj, path, key);
    if (!v.is_number()) {
        throw ConfigError(path + "." + key, "expected a number");
    }
    return v.get<double>();
}

int require_int(const json& obj, const std::string& path, const char* key) {
    const json& v = require(obj, path, key);
    if (!v.is_number_integer()) {
        throw ConfigError(path + "." + key, "expected an integer");
    }
    return v.get<int>();
}

}  // namespace

NetworkSpec network_from_json(const json& doc, const std::string& path) {
    if (!doc.is_object()) {
        throw ConfigError(path, "expected an object");
    }
    reject_unknown_keys(doc, path, {"channels", "routes"});
    const json& channels = require(doc, path, "channels");
    const json& routes = require(doc, path, "routes");
    if (!channels.is_array()) {
        throw ConfigError(path + ".channels", "expected an array");
    }
    if (!routes.is_array()) {
        throw ConfigError(path + ".routes", "expected an array");
    }

    std::vector<Channel> chans;
    for (std::size_t c = 0; c < channels.size(); ++c) {
        const std::string where = path + ".channels[" + std::to_string(c) + "]";
        const json& ch = channels[c];
        if (!ch.is_object()) {
            throw ConfigError(where, "expected an object");
        }
        reject_unknown_keys(ch, where, {"id", "capacity"});
        const int id = require_int(ch, where, "id");
        const double capacity = require_number(ch, where, "capacity");
        if (!(capacity > 0.0)) {
            throw ConfigError(where + ".capacity", "must be positive");
        }
        for (const Channel& prev : chans) {
            if (prev.id == id) {
                throw ConfigError(where + ".id", "duplicate channel id");
            }
        }
        chans.push_back({id, capacity});
    }
    if (chans.size() < 2) {
        throw ConfigError(path + ".channels", "a star network needs at least two channels");
    }

    std::vector<NetworkSpec::RouteByIds> rs;
    for (std::size_t r = 0; r < routes.size(); ++r) {
        const std::string where = path + ".routes[" + std::to_string(r) + "]";
        const json& rt = routes[r];
        if (!rt.is_object()) {
            throw ConfigError(where, "expected an object");
        }
        reject_unknown_keys(rt, where, {"i", "j", "lambda", "mu"});
        NetworkSpec::RouteByIds route{require_int(rt, where, "i"), require_int(rt, where, "j"),
                                      require_number(rt, where, "lambda"),
                                      require_number(rt, where, "mu")};
        auto known = [&](int id) {
            for (const Channel& ch : chans) {
                if (ch.id == id) {
                    return true;
                }
            }
            return false;
        };
        if (!known(route.i)) {
            throw ConfigError(where + ".i", "unknown channel id " + std::to_string(route.i));
        }
        if (!known(route.j)) {
            throw ConfigError(where + ".j", "unknown channel id " + std::to_string(route.j));
        }
        if (route.i == route.j) {
            throw ConfigError(where + ".j", "a route joins two distinct channels");
        }
        if (!(route.lambda > 0.0)) {
            throw ConfigError(where + ".lambda", "must be positive");
        }
        if (!(route.mu > 0.0)) {
            throw ConfigError(where + ".mu", "must be positive");
        }
        for (std::size_t s = 0; s < rs.size(); ++s) {
            if ((rs[s].i == route.i && rs[s].j == route.j) ||
                (rs[s].i == route.j && rs[s].j == route.i)) {
                throw ConfigError(where, "duplicate route (routes are unordered)");
            }
        }
        rs.push_back(route);
    }
    try {
        return NetworkSpec::from_ids(std::move(chans), rs);
    } catch (const InvalidArgument& e) {
        throw ConfigError(path, e.what());
    }
}

json network_to_json(const NetworkSpec& spec) {
    json channels = json::array();
    for (const Channel& c : spec.channels()) {
        channels.push_back({{"id", c.id}, {"capacity", c.capacity}});
    }
    json routes = json::array();
    for (const Route& r : spec.routes()) {
        routes.push_back({{"i", spec.channel(r.first).id},
                          {"j", spec.channel(r.second).id},
                          {"lambda", r.lambda},
                          {"mu", r.mu}});
    }
    return {{"channels", channels}, {"routes", routes}};
}

std::vector<double> route_values_from_json(const NetworkSpec& spec, const json& doc,
                                           const std::string& path, double fill) {
    if (!doc.is_object()) {
        throw ConfigError(path, "expected an object keyed by route \"i-j\"");
    }
    std::vector<double> out(spec.n_routes(), fill);
    for (const auto& [key, value] : doc.items()) {
        const auto dash = key.find('-');
        int i = 0;
        int j = 0;
        try {
            if (dash == std::string::npos) {
                throw std::invalid_argument(key);
            }
            std::size_t used = 0;
            i = std::stoi(key.substr(0, dash), &used);
            if (used != dash) {
                throw std::invalid_argument(key);
            }
            const std::string rest = key.substr(dash + 1);
            j = std::stoi(rest, &used);
            if (used != rest.size()) {
                throw std::invalid_argument(key);
            }
        } catch (const std::exception&) {
            throw ConfigError(path + "." + key, "route keys have the form \"i-j\"");
        }
        RouteIndex r = 0;
        try {
            r = spec.route_index_by_ids(i, j);
        } catch (const InvalidArgument&) {
            throw ConfigError(path + "." + key, "unknown route");
        }
        if (!value.is_number()) {
            throw ConfigError(path + "." + key, "expected a number");
        }
        out[r] = value.get<double>();
    }
    return out;
}

json route_values_to_json(const NetworkSpec& spec, std::span<const double> values) {
    json out = json::object();
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        out[spec.route_name(r)] = values[r];
    }
    return out;
}

}  // namespace starld
