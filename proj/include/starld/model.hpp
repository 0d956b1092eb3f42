#pragma once

// Star network topology, occupancy states, bandwidth-sharing policies and the
// face partition of the route set.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace starld {

using ChannelIndex = std::size_t;
using RouteIndex = std::size_t;

struct Channel {
    int id = 0;  // external identifier, as written in configuration files
    double capacity = 0.0;
};

/// An unordered pair of distinct channels, stored with first < second (indices).
struct Route {
    ChannelIndex first = 0;
    ChannelIndex second = 0;
    double lambda = 0.0;  // document arrival rate
    double mu = 0.0;      // inverse mean document size

    [[nodiscard]] bool touches(ChannelIndex c) const { return first == c || second == c; }
    [[nodiscard]] ChannelIndex other(ChannelIndex c) const { return c == first ? second : first; }
};

/// Channels with capacities and the active routes between them.
///
/// Construction validates every invariant: at least two channels, positive
/// capacities, positive rates, routes between distinct known channels and no
/// duplicate (unordered) route.
class NetworkSpec {
public:
    NetworkSpec(std::vector<Channel> channels, std::vector<Route> routes);

    /// Convenience builder keyed by external channel ids.
    struct RouteByIds {
        int i;
        int j;
        double lambda;
        double mu;
    };
    [[nodiscard]] static NetworkSpec from_ids(std::vector<Channel> channels,
                                              const std::vector<RouteByIds>& routes);

    [[nodiscard]] std::size_t n_channels() const { return channels_.size(); }
    [[nodiscard]] std::size_t n_routes() const { return routes_.size(); }
    [[nodiscard]] const std::vector<Channel>& channels() const { return channels_; }
    [[nodiscard]] const std::vector<Route>& routes() const { return routes_; }
    [[nodiscard]] const Channel& channel(ChannelIndex c) const { return channels_.at(c); }
    [[nodiscard]] const Route& route(RouteIndex r) const { return routes_.at(r); }
    [[nodiscard]] double capacity(ChannelIndex c) const { return channels_.at(c).capacity; }

    /// Routes incident to channel c, in route order.
    [[nodiscard]] const std::vector<RouteIndex>& routes_of(ChannelIndex c) const {
        return incidence_.at(c);
    }

    [[nodiscard]] std::optional<ChannelIndex> channel_index(int id) const;
    [[nodiscard]] ChannelIndex channel_index_or_throw(int id) const;
    /// Index of the unordered route between two channel indices, if it exists.
    [[nodiscard]] std::optional<RouteIndex> route_index(ChannelIndex a, ChannelIndex b) const;
    [[nodiscard]] RouteIndex route_index_by_ids(int i, int j) const;

    /// "i-j" with external ids, i < j in index order.
    [[nodiscard]] std::string route_name(RouteIndex r) const;

    /// Copy with one route's rates replaced.
    [[nodiscard]] NetworkSpec with_route_rates(RouteIndex r, double lambda, double mu) const;
    [[nodiscard]] NetworkSpec with_capacity(ChannelIndex c, double capacity) const;

private:
    std::vector<Channel> channels_;
    std::vector<Route> routes_;
    std::vector<std::vector<RouteIndex>> incidence_;
};

/// Per-route nonnegative real occupancies.
struct FluidState {
    std::vector<double> x;

    FluidState() = default;
    explicit FluidState(std::vector<double> values) : x(std::move(values)) {}

    [[nodiscard]] double operator[](RouteIndex r) const { return x[r]; }
    [[nodiscard]] double& operator[](RouteIndex r) { return x[r]; }
    [[nodiscard]] std::size_t size() const { return x.size(); }
};

/// Per-route integer occupancies, used by the simulator.
using DiscreteState = std::vector<std::int64_t>;

/// Throws InvalidArgument unless x has one finite nonnegative entry per route.
void validate_state(const NetworkSpec& spec, const FluidState& x);

/// x_i: the sum of the occupancies of the routes through channel c.
[[nodiscard]] double channel_occupancy(const NetworkSpec& spec, std::span<const double> x,
                                       ChannelIndex c);

struct FacePartition {
    std::vector<RouteIndex> lambda;   // occupied routes
    std::vector<RouteIndex> lambda1;  // empty routes sharing a channel with an occupied one
    std::vector<RouteIndex> lambda2;  // the remaining empty routes

    enum class Block : std::uint8_t { Occupied, Jammed, Free };
    std::vector<Block> block;  // per route

    [[nodiscard]] bool in_lambda(RouteIndex r) const { return block[r] == Block::Occupied; }
    [[nodiscard]] bool in_lambda1(RouteIndex r) const { return block[r] == Block::Jammed; }
    [[nodiscard]] bool in_lambda2(RouteIndex r) const { return block[r] == Block::Free; }
};

/// Entries with x_r <= zero_tol count as empty.
[[nodiscard]] FacePartition face_partition(const NetworkSpec& spec, const FluidState& x,
                                           double zero_tol = 0.0);

struct Policy {
    enum class Kind : std::uint8_t { Min, ProcessorSharing };
    Kind kind = Kind::Min;
    ChannelIndex anchor = 0;  // only meaningful for ProcessorSharing

    [[nodiscard]] static Policy min_policy() { return {}; }
    [[nodiscard]] static Policy processor_sharing(ChannelIndex anchor) {
        return {Kind::ProcessorSharing, anchor};
    }
};

/// Bandwidth share nu_r(x) allocated to route r (min policy): x_r * min(C_i/x_i, C_j/x_j),
/// zero when x_r is zero.
[[nodiscard]] double min_policy_allocation(const NetworkSpec& spec, std::span<const double> x,
                                           RouteIndex r);

/// Total service rate of route r at state x, i.e. mu_r times the allocated bandwidth.
///
/// For processor sharing the route must use the anchor channel; the allocation is
/// C_anchor * x_r / x_anchor.
[[nodiscard]] double service_rate(const NetworkSpec& spec, const Policy& policy,
                                  const FluidState& x, RouteIndex r);

struct ChannelLoad {
    ChannelIndex channel = 0;
    double load = 0.0;  // sum over incident routes of lambda/mu
    double capacity = 0.0;
    [[nodiscard]] bool stable() const { return load < capacity; }
};

struct ErgodicityReport {
    bool ergodic = false;
    std::vector<ChannelLoad> channels;

    /// Channels violating the strict load condition.
    [[nodiscard]] std::vector<ChannelIndex> overloaded() const;
};

[[nodiscard]] ErgodicityReport is_ergodic(const NetworkSpec& spec);

}  // namespace starld
