#pragma once

// Event-driven simulation of the star network under natural or tilted
// dynamics, empirical generators, likelihood-ratio bookkeeping and tail decay
// estimation from occupancy histograms.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

#include <json.hpp>

#include "starld/model.hpp"
#include "starld/rate.hpp"

namespace starld {

/// How a route is served in a simulated network.
enum class ServiceKind : std::uint8_t {
    MinPolicy,          // mu q_r min(C_i/q_i, C_j/q_j)
    Constant,           // mu whenever q_r > 0
    ProcessorSharing,   // mu C_a q_r / q_a on the anchor channel a
};

struct RouteDynamics {
    double arrival = 0.0;
    ServiceKind service = ServiceKind::MinPolicy;
    double mu = 0.0;
};

/// Transition rates of a simulatable star network: constant arrival rates and
/// state-dependent departure rates per route.
class Dynamics {
public:
    Dynamics(NetworkSpec spec, std::vector<RouteDynamics> routes, ChannelIndex anchor = 0);

    /// The network's own dynamics under the given policy.
    [[nodiscard]] static Dynamics natural(const NetworkSpec& spec, const Policy& policy = {});

    [[nodiscard]] const NetworkSpec& spec() const { return spec_; }
    [[nodiscard]] const std::vector<RouteDynamics>& routes() const { return routes_; }
    [[nodiscard]] double arrival_rate(RouteIndex r) const { return routes_[r].arrival; }
    /// Departure rate of route r given per-route and per-channel occupancies.
    [[nodiscard]] double departure_rate(std::span<const std::int64_t> q,
                                        std::span<const std::int64_t> per_channel,
                                        RouteIndex r) const;

private:
    NetworkSpec spec_;
    std::vector<RouteDynamics> routes_;
    ChannelIndex anchor_ = 0;
};

/// Localized tilt: occupied and jammed routes get constant arrival rate lambda~
/// and constant service rate mu~; free routes keep their min-policy dynamics.
[[nodiscard]] Dynamics tilt(const NetworkSpec& spec, const FluidState& x, const TiltedGenerator& g,
                            double zero_tol = 0.0);

/// Transient tilt: the min-policy network with lambda~ = a and mu~ = a / nu.
[[nodiscard]] Dynamics tilt(const NetworkSpec& spec, const TransientGenerator& g);

struct SimulationOptions {
    std::int64_t histogram_cap = 10000;  // occupancies >= cap land in the overflow bin
    double snapshot_interval = 0.0;      // > 0: record channel occupancies on this time grid
    int blocks = 20;                     // equal time blocks kept for the decay standard error
};

struct TrajectoryStats {
    double horizon = 0.0;
    std::uint64_t event_count = 0;
    std::vector<std::uint64_t> arrivals;    // per route
    std::vector<std::uint64_t> departures;  // per route
    /// Per channel, time spent at occupancy n (index n < cap); grows on demand.
    std::vector<std::vector<double>> histogram;
    std::vector<double> overflow;              // per channel, time spent at occupancy >= cap
    std::vector<double> allocation_integral;   // per route, integral of nu_r(Q(s)) ds
    std::vector<std::int64_t> max_occupancy;   // per channel
    DiscreteState initial_state;
    DiscreteState final_state;
    std::vector<std::vector<std::int64_t>> snapshots;  // channel occupancies on the snapshot grid
    /// block_histogram[b][c]: the histogram restricted to the b-th time block.
    std::vector<std::vector<std::vector<double>>> block_histogram;

    /// (1/t) * integral of the min-policy allocation.
    [[nodiscard]] std::vector<double> time_averaged_allocation() const;
    /// Total histogram mass of a channel including the overflow bin.
    [[nodiscard]] double histogram_mass(ChannelIndex c) const;
};

[[nodiscard]] TrajectoryStats simulate(const Dynamics& dynamics, const DiscreteState& x0,
                                       double horizon, std::uint64_t seed,
                                       const SimulationOptions& opts = {});

[[nodiscard]] TrajectoryStats simulate(const NetworkSpec& spec, const Policy& policy,
                                       const DiscreteState& x0, double horizon,
                                       std::uint64_t seed, const SimulationOptions& opts = {});

/// Counter-style stream seed for replication `index` of a run seeded with `seed`.
[[nodiscard]] std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

/// Occupancy quantiles (of the time-weighted histogram, overflow excluded)
/// bounding the regression window.
struct DecayWindow {
    double low = 0.9;
    double high = 0.995;
};

struct DecayEstimate {
    double rate = 0.0;
    double stderr_ = 0.0;             // block jackknife when blocks are available
    double regression_stderr = 0.0;   // residual-based OLS value, for reference
    int bins = 0;
    std::int64_t n_low = 0;
    std::int64_t n_high = 0;
};

/// Least-squares slope of n -> -log P[Q_c = n] over the occupancy window.
/// InsufficientData when fewer than 4 nonempty bins fall inside it.
[[nodiscard]] DecayEstimate estimate_decay_rate(const TrajectoryStats& stats, ChannelIndex channel,
                                                const DecayWindow& window = {});

struct EmpiricalGenerator {
    std::vector<double> a;       // arrivals per unit time
    std::vector<double> d;       // (Q_t - Q_0) / t
    std::vector<double> nu_bar;  // time-averaged min-policy allocation
};

/// Localized form: arrival rates restricted to the occupied and jammed routes of the face.
[[nodiscard]] EmpiricalGenerator empirical_generator(const TrajectoryStats& stats,
                                                     const FacePartition& face);
/// Transient form: all routes.
[[nodiscard]] EmpiricalGenerator empirical_generator(const TrajectoryStats& stats);

/// Predicate on a finished replication.
using TrajectoryEvent = std::function<bool(const TrajectoryStats&)>;

struct ImportanceEstimate {
    std::vector<double> log_weights;  // per replication
    std::vector<bool> hits;           // event indicator per replication
    double estimate = 0.0;
    double standard_error = 0.0;
    std::size_t replications = 0;
};

struct ReplicationOptions {
    std::size_t replications = 1000;
    std::uint64_t seed = 1;
    int threads = 1;
    std::int64_t histogram_cap = 1024;
};

/// Estimates P[event] for the natural min-policy network by sampling the tilted
/// dynamics and weighting each replication with the likelihood ratio dP/dP~.
/// Throws AbsoluteContinuityBreach when a visited state has a natural transition
/// the tilted dynamics cannot make.
[[nodiscard]] ImportanceEstimate importance_run(const NetworkSpec& spec, const Dynamics& tilted,
                                                const DiscreteState& x0,
                                                const TrajectoryEvent& event, double horizon,
                                                const ReplicationOptions& opts);

/// Samples the natural dynamics and returns the mean of M_t = dP~/dP
/// (log M_t = sum of log-rate ratios at jumps minus the integral of the
/// compensator). Its expectation is 1.
[[nodiscard]] ImportanceEstimate martingale_run(const NetworkSpec& spec, const Dynamics& tilted,
                                                const DiscreteState& x0, double horizon,
                                                const ReplicationOptions& opts);

/// Histogram as CSV rows "channel,n,time_mass" (channel by external id; the
/// overflow bin is written with n = "overflow").
void write_histogram_csv(std::ostream& os, const NetworkSpec& spec, const TrajectoryStats& stats);

[[nodiscard]] nlohmann::json summary_json(const NetworkSpec& spec, const TrajectoryStats& stats);

/// Sum with pairwise splitting.
[[nodiscard]] double pairwise_sum(std::span<const double> values);

}  // namespace starld
