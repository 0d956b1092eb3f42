#include "starld/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "engine.hpp"
#include "starld/error.hpp"

namespace starld {

Dynamics::Dynamics(NetworkSpec spec, std::vector<RouteDynamics> routes, ChannelIndex anchor)
    : spec_(std::move(spec)), routes_(std::move(routes)), anchor_(anchor) {
    if (routes_.size() != spec_.n_routes()) {
        throw InvalidArgument("dynamics: expected one entry per route");
    }
    for (RouteIndex r = 0; r < routes_.size(); ++r) {
        const RouteDynamics& d = routes_[r];
        if (!std::isfinite(d.arrival) || d.arrival < 0.0 || !std::isfinite(d.mu) || d.mu < 0.0) {
            throw InvalidArgument("dynamics: rates of route " + spec_.route_name(r) +
                                  " must be finite and nonnegative");
        }
        if (d.service == ServiceKind::ProcessorSharing && !spec_.route(r).touches(anchor_)) {
            throw InvalidArgument("dynamics: processor-sharing route " + spec_.route_name(r) +
                                  " does not use the anchor channel");
        }
    }
}

Dynamics Dynamics::natural(const NetworkSpec& spec, const Policy& policy) {
    std::vector<RouteDynamics> routes;
    routes.reserve(spec.n_routes());
    const ServiceKind kind = policy.kind == Policy::Kind::Min ? ServiceKind::MinPolicy
                                                              : ServiceKind::ProcessorSharing;
    for (const Route& r : spec.routes()) {
        routes.push_back({r.lambda, kind, r.mu});
    }
    return {spec, std::move(routes), policy.anchor};
}

double Dynamics::departure_rate(std::span<const std::int64_t> q,
                                std::span<const std::int64_t> per_channel, RouteIndex r) const {
    if (q[r] == 0) {
        return 0.0;
    }
    const RouteDynamics& d = routes_[r];
    const auto qr = static_cast<double>(q[r]);
    switch (d.service) {
        case ServiceKind::Constant:
            return d.mu;
        case ServiceKind::ProcessorSharing:
            return d.mu * spec_.capacity(anchor_) * qr /
                   static_cast<double>(per_channel[anchor_]);
        case ServiceKind::MinPolicy:
        default: {
            const Route& rt = spec_.route(r);
            return d.mu *
                   std::min(spec_.capacity(rt.first) * qr /
                                static_cast<double>(per_channel[rt.first]),
                            spec_.capacity(rt.second) * qr /
                                static_cast<double>(per_channel[rt.second]));
        }
    }
}

Dynamics tilt(const NetworkSpec& spec, const FluidState& x, const TiltedGenerator& g,
              double zero_tol) {
    validate_state(spec, x);
    const FacePartition face = face_partition(spec, x, zero_tol);
    check_feasible(spec, face, g);
    std::vector<RouteDynamics> routes;
    routes.reserve(spec.n_routes());
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        if (face.in_lambda2(r)) {
            routes.push_back({spec.route(r).lambda, ServiceKind::MinPolicy, spec.route(r).mu});
        } else {
            routes.push_back({g.lambda_tilde[r], ServiceKind::Constant, g.mu_tilde[r]});
        }
    }
    return {spec, std::move(routes)};
}

Dynamics tilt(const NetworkSpec& spec, const TransientGenerator& g) {
    check_feasible(spec, g);
    std::vector<RouteDynamics> routes;
    routes.reserve(spec.n_routes());
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        const double mu = g.nu[r] > 0.0 ? g.a[r] / g.nu[r] : 0.0;
        routes.push_back({g.a[r], ServiceKind::MinPolicy, mu});
    }
    return {spec, std::move(routes)};
}

std::vector<double> TrajectoryStats::time_averaged_allocation() const {
    std::vector<double> out(allocation_integral.size());
    for (std::size_t r = 0; r < out.size(); ++r) {
        out[r] = allocation_integral[r] / horizon;
    }
    return out;
}

double TrajectoryStats::histogram_mass(ChannelIndex c) const {
    return pairwise_sum(histogram.at(c)) + overflow.at(c);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
    auto mix = [](std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    };
    return mix(mix(seed) ^ (index * 0xd1b54a32d192ed03ULL + 0x8bb84b93962eacc9ULL));
}

TrajectoryStats simulate(const Dynamics& dynamics, const DiscreteState& x0, double horizon,
                         std::uint64_t seed, const SimulationOptions& opts) {
    std::mt19937_64 rng(stream_seed(seed, 0));
    detail::Engine engine(dynamics, nullptr, opts);
    return engine.run(x0, horizon, rng);
}

TrajectoryStats simulate(const NetworkSpec& spec, const Policy& policy, const DiscreteState& x0,
                         double horizon, std::uint64_t seed, const SimulationOptions& opts) {
    return simulate(Dynamics::natural(spec, policy), x0, horizon, seed, opts);
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) {
            s += v;
        }
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

void write_histogram_csv(std::ostream& os, const NetworkSpec& spec, const TrajectoryStats& stats) {
    os << "channel,n,time_mass\n";
    os.precision(17);
    for (ChannelIndex c = 0; c < stats.histogram.size(); ++c) {
        const int id = spec.channel(c).id;
        for (std::size_t n = 0; n < stats.histogram[c].size(); ++n) {
            if (stats.histogram[c][n] > 0.0) {
                os << id << ',' << n << ',' << stats.histogram[c][n] << '\n';
            }
        }
        if (stats.overflow[c] > 0.0) {
            os << id << ",overflow," << stats.overflow[c] << '\n';
        }
    }
}

nlohmann::json summary_json(const NetworkSpec& spec, const TrajectoryStats& stats) {
    nlohmann::json j;
    j["horizon"] = stats.horizon;
    j["event_count"] = stats.event_count;
    nlohmann::json arrivals = nlohmann::json::object();
    nlohmann::json departures = nlohmann::json::object();
    nlohmann::json nu_bar = nlohmann::json::object();
    nlohmann::json final_state = nlohmann::json::object();
    const std::vector<double> avg = stats.time_averaged_allocation();
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        const std::string name = spec.route_name(r);
        arrivals[name] = stats.arrivals[r];
        departures[name] = stats.departures[r];
        nu_bar[name] = avg[r];
        final_state[name] = stats.final_state[r];
    }
    j["arrivals"] = arrivals;
    j["departures"] = departures;
    j["nu_bar"] = nu_bar;
    j["final_state"] = final_state;
    nlohmann::json channels = nlohmann::json::object();
    for (ChannelIndex c = 0; c < spec.n_channels(); ++c) {
        channels[std::to_string(spec.channel(c).id)] = {
            {"max_occupancy", stats.max_occupancy[c]},
            {"overflow_time", stats.overflow[c]},
            {"histogram_mass", stats.histogram_mass(c)},
        };
    }
    j["channels"] = channels;
    return j;
}

}  // namespace starld
