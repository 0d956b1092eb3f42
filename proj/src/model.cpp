#include "starld/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "starld/error.hpp"

namespace starld {

namespace {

[[nodiscard]] bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

NetworkSpec::NetworkSpec(std::vector<Channel> channels, std::vector<Route> routes)
    : channels_(std::move(channels)), routes_(std::move(routes)) {
    if (channels_.size() < 2) {
        throw InvalidArgument("channels: a star network needs at least two channels");
    }
    for (std::size_t c = 0; c < channels_.size(); ++c) {
        if (!positive_finite(channels_[c].capacity)) {
            std::ostringstream os;
            os << "channels[" << c << "].capacity: must be positive and finite";
            throw InvalidArgument(os.str());
        }
        for (std::size_t d = 0; d < c; ++d) {
            if (channels_[d].id == channels_[c].id) {
                std::ostringstream os;
                os << "channels[" << c << "].id: duplicate channel id " << channels_[c].id;
                throw InvalidArgument(os.str());
            }
        }
    }
    incidence_.assign(channels_.size(), {});
    for (std::size_t r = 0; r < routes_.size(); ++r) {
        Route& route = routes_[r];
        std::ostringstream where;
        where << "routes[" << r << "]";
        if (route.first >= channels_.size() || route.second >= channels_.size()) {
            throw InvalidArgument(where.str() + ": references an unknown channel");
        }
        if (route.first == route.second) {
            throw InvalidArgument(where.str() + ": a route joins two distinct channels");
        }
        if (route.first > route.second) {
            std::swap(route.first, route.second);
        }
        if (!positive_finite(route.lambda)) {
            throw InvalidArgument(where.str() + ".lambda: must be positive and finite");
        }
        if (!positive_finite(route.mu)) {
            throw InvalidArgument(where.str() + ".mu: must be positive and finite");
        }
        for (std::size_t s = 0; s < r; ++s) {
            if (routes_[s].first == route.first && routes_[s].second == route.second) {
                throw InvalidArgument(where.str() + ": duplicate route " + route_name(r));
            }
        }
        incidence_[route.first].push_back(r);
        incidence_[route.second].push_back(r);
    }
}

NetworkSpec NetworkSpec::from_ids(std::vector<Channel> channels,
                                  const std::vector<RouteByIds>& routes) {
    auto index_of = [&](int id, std::size_t r) {
        for (std::size_t c = 0; c < channels.size(); ++c) {
            if (channels[c].id == id) {
                return c;
            }
        }
        std::ostringstream os;
        os << "routes[" << r << "]: unknown channel id " << id;
        throw InvalidArgument(os.str());
    };
    std::vector<Route> out;
    out.reserve(routes.size());
    for (std::size_t r = 0; r < routes.size(); ++r) {
        out.push_back({index_of(routes[r].i, r), index_of(routes[r].j, r), routes[r].lambda,
                       routes[r].mu});
    }
    return NetworkSpec(std::move(channels), std::move(out));
}

std::optional<ChannelIndex> NetworkSpec::channel_index(int id) const {
    for (std::size_t c = 0; c < channels_.size(); ++c) {
        if (channels_[c].id == id) {
            return c;
        }
    }
    return std::nullopt;
}

ChannelIndex NetworkSpec::channel_index_or_throw(int id) const {
    if (auto c = channel_index(id)) {
        return *c;
    }
    throw InvalidArgument("unknown channel id " + std::to_string(id));
}

std::optional<RouteIndex> NetworkSpec::route_index(ChannelIndex a, ChannelIndex b) const {
    if (a > b) {
        std::swap(a, b);
    }
    for (std::size_t r = 0; r < routes_.size(); ++r) {
        if (routes_[r].first == a && routes_[r].second == b) {
            return r;
        }
    }
    return std::nullopt;
}

RouteIndex NetworkSpec::route_index_by_ids(int i, int j) const {
    auto a = channel_index(i);
    auto b = channel_index(j);
    if (a && b) {
        if (auto r = route_index(*a, *b)) {
            return *r;
        }
    }
    std::ostringstream os;
    os << "unknown route " << i << "-" << j;
    throw InvalidArgument(os.str());
}

std::string NetworkSpec::route_name(RouteIndex r) const {
    const Route& route = routes_.at(r);
    return std::to_string(channels_[route.first].id) + "-" +
           std::to_string(channels_[route.second].id);
}

NetworkSpec NetworkSpec::with_route_rates(RouteIndex r, double lambda, double mu) const {
    std::vector<Route> routes = routes_;
    routes.at(r).lambda = lambda;
    routes.at(r).mu = mu;
    return NetworkSpec(channels_, std::move(routes));
}

NetworkSpec NetworkSpec::with_capacity(ChannelIndex c, double capacity) const {
    std::vector<Channel> channels = channels_;
    channels.at(c).capacity = capacity;
    return NetworkSpec(std::move(channels), routes_);
}

void validate_state(const NetworkSpec& spec, const FluidState& x) {
    if (x.size() != spec.n_routes()) {
        throw InvalidArgument("state: expected " + std::to_string(spec.n_routes()) +
                              " route occupancies, got " + std::to_string(x.size()));
    }
    for (std::size_t r = 0; r < x.size(); ++r) {
        if (!std::isfinite(x[r]) || x[r] < 0.0) {
            throw InvalidArgument("state[" + spec.route_name(r) +
                                  "]: occupancy must be finite and nonnegative");
        }
    }
}

double channel_occupancy(const NetworkSpec& spec, std::span<const double> x, ChannelIndex c) {
    double sum = 0.0;
    for (RouteIndex r : spec.routes_of(c)) {
        sum += x[r];
    }
    return sum;
}

FacePartition face_partition(const NetworkSpec& spec, const FluidState& x, double zero_tol) {
    const std::size_t n = spec.n_routes();
    FacePartition face;
    face.block.assign(n, FacePartition::Block::Free);
    std::vector<bool> channel_busy(spec.n_channels(), false);
    for (RouteIndex r = 0; r < n; ++r) {
        if (x[r] > zero_tol) {
            face.block[r] = FacePartition::Block::Occupied;
            channel_busy[spec.route(r).first] = true;
            channel_busy[spec.route(r).second] = true;
        }
    }
    for (RouteIndex r = 0; r < n; ++r) {
        if (face.block[r] == FacePartition::Block::Occupied) {
            face.lambda.push_back(r);
        } else if (channel_busy[spec.route(r).first] || channel_busy[spec.route(r).second]) {
            face.block[r] = FacePartition::Block::Jammed;
            face.lambda1.push_back(r);
        } else {
            face.lambda2.push_back(r);
        }
    }
    return face;
}

double min_policy_allocation(const NetworkSpec& spec, std::span<const double> x, RouteIndex r) {
    const double xr = x[r];
    if (xr <= 0.0) {
        return 0.0;
    }
    const Route& route = spec.route(r);
    const double xi = channel_occupancy(spec, x, route.first);
    const double xj = channel_occupancy(spec, x, route.second);
    const double share = std::min(spec.capacity(route.first) / xi,
                                  spec.capacity(route.second) / xj);
    return xr * share;
}

double service_rate(const NetworkSpec& spec, const Policy& policy, const FluidState& x,
                    RouteIndex r) {
    if (r >= spec.n_routes()) {
        throw InvalidArgument("service_rate: unknown route index " + std::to_string(r));
    }
    if (x.size() != spec.n_routes()) {
        throw InvalidArgument("service_rate: state size does not match the route count");
    }
    const Route& route = spec.route(r);
    if (policy.kind == Policy::Kind::Min) {
        return route.mu * min_policy_allocation(spec, x.x, r);
    }
    if (policy.anchor >= spec.n_channels() || !route.touches(policy.anchor)) {
        throw InvalidArgument("service_rate: route " + spec.route_name(r) +
                              " does not use the processor-sharing anchor channel");
    }
    if (x[r] <= 0.0) {
        return 0.0;
    }
    const double xa = channel_occupancy(spec, x.x, policy.anchor);
    return route.mu * spec.capacity(policy.anchor) * x[r] / xa;
}

std::vector<ChannelIndex> ErgodicityReport::overloaded() const {
    std::vector<ChannelIndex> out;
    for (const ChannelLoad& c : channels) {
        if (!c.stable()) {
            out.push_back(c.channel);
        }
    }
    return out;
}

ErgodicityReport is_ergodic(const NetworkSpec& spec) {
    ErgodicityReport report;
    report.ergodic = true;
    for (ChannelIndex c = 0; c < spec.n_channels(); ++c) {
        ChannelLoad load{c, 0.0, spec.capacity(c)};
        for (RouteIndex r : spec.routes_of(c)) {
            load.load += spec.route(r).lambda / spec.route(r).mu;
        }
        report.ergodic = report.ergodic && load.stable();
        report.channels.push_back(load);
    }
    return report;
}

}  // namespace starld
