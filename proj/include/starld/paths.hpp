#pragma once

// Sample-path cost of piecewise-linear paths, the variational search for the
// stationary tail decay of a channel, and processor-sharing comparison values.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "starld/cost.hpp"
#include "starld/model.hpp"
#include "starld/rate.hpp"

namespace starld {

/// Breakpoint times 0 = t_0 < ... < t_K = T and the state at each breakpoint.
struct PiecewiseLinearPath {
    std::vector<double> times;
    std::vector<FluidState> states;

    [[nodiscard]] std::size_t segments() const { return times.empty() ? 0 : times.size() - 1; }
    [[nodiscard]] double horizon() const { return times.empty() ? 0.0 : times.back(); }
    /// Linear interpolation at time t in [0, T].
    [[nodiscard]] FluidState at(double t) const;
};

/// Throws InvalidArgument on non-increasing times, mismatched sizes or negative states.
void validate_path(const NetworkSpec& spec, const PiecewiseLinearPath& path);

struct QuadratureOptions {
    double tolerance = 1e-12;  // per-piece agreement between 16-node and split 16-node rules
    int max_depth = 40;
    int presplit = 1;  // each smooth piece is cut into this many equal parts before adapting
};

struct SegmentReport {
    double t0 = 0.0;
    double t1 = 0.0;
    Cost cost;
    /// Per route, the channel with the smaller C/x at the segment midpoint
    /// (nullopt for routes that are empty there).
    std::vector<std::optional<ChannelIndex>> bottleneck;
};

struct PathCostReport {
    Cost total = Cost::zero();
    std::vector<SegmentReport> segments;
};

/// I_T of a piecewise-linear path: the integral of L(phi(t), phi'(t)).
///
/// Segments are cut where a route's bottleneck channel switches, so the
/// integrand is smooth on every piece; each piece is integrated with adaptive
/// 16-node Gauss-Legendre.
[[nodiscard]] Cost path_cost(const NetworkSpec& spec, const PiecewiseLinearPath& path,
                             RateMode mode, const QuadratureOptions& quad = {});

[[nodiscard]] PathCostReport path_cost_report(const NetworkSpec& spec,
                                              const PiecewiseLinearPath& path, RateMode mode,
                                              const QuadratureOptions& quad = {});

struct OptimizeOptions {
    int segments = 4;
    int multistarts = 16;
    std::uint64_t seed = 1;
    int max_iterations = 100000;  // objective evaluations per pattern search
    double tolerance = 1e-9;     // final pattern-search step length
    RateMode mode = RateMode::Ergodic;
    int threads = 1;
};

enum class OptimizeStatus { Converged, NotConverged };

[[nodiscard]] const char* to_string(OptimizeStatus status);

struct DecayResult {
    double value = 0.0;  // variational decay estimate
    PiecewiseLinearPath optimal_path;
    double horizon = 0.0;
    ChannelIndex target = 0;
    OptimizeStatus status = OptimizeStatus::Converged;
    std::vector<SegmentReport> segments;
    /// Best value after each breakpoint added (index 0: straight line from 0).
    std::vector<double> ladder;
    int evaluations = 0;
};

/// Minimises I_T over piecewise-linear paths from 0 to the set where the target
/// channel's occupancy equals 1, jointly over breakpoint states and durations.
///
/// The search starts from straight lines out of the origin (multi-start pattern
/// search over directions), then adds one breakpoint at a time, splitting the
/// costliest segment and re-optimising. Segment durations are optimised exactly
/// for given breakpoint states. Deterministic for a given seed.
[[nodiscard]] DecayResult optimize_tail_decay(const NetworkSpec& spec, ChannelIndex target,
                                              const OptimizeOptions& opts = {});

/// -log rho_i of the single-channel multiclass processor-sharing queue with the
/// same routes, rho_i = sum_j lambda_ij / (mu_ij C_i). NotErgodic when rho_i >= 1.
[[nodiscard]] double ps_decay_rate(const NetworkSpec& spec, ChannelIndex channel);

struct PsConsistency {
    bool consistent = true;
    std::optional<double> first_violation_time;
    std::optional<RouteIndex> violating_route;
    int samples = 0;
};

/// Whether the channel stays the bottleneck (smallest C/x) of each of its occupied
/// routes along the optimal path, sampled at quadrature nodes.
[[nodiscard]] PsConsistency ps_consistency_check(const NetworkSpec& spec,
                                                 const DecayResult& result, ChannelIndex channel);

[[nodiscard]] PsConsistency ps_consistency_check(const NetworkSpec& spec,
                                                 const PiecewiseLinearPath& path,
                                                 ChannelIndex channel);

}  // namespace starld
