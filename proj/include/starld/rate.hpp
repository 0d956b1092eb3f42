#pragma once

// Rate-function calculus for the min-policy star network: the M/M/1 drift cost,
// Poisson relative entropy, the local rate L(x, D), entropies of tilted
// generators and the cost for a (possibly transient) network to stay near 0.

#include <span>
#include <vector>

#include "starld/cost.hpp"
#include "starld/model.hpp"

namespace starld {

/// Cost per unit time for an M/M/1 queue with arrival rate lambda and service
/// rate mu, started far from 0, to follow drift D:
///
///   D log((D + sqrt(D^2 + 4 lambda mu)) / (2 lambda)) + lambda + mu - sqrt(D^2 + 4 lambda mu)
///
/// with the limits l(0 | lambda, 0) = lambda, l(0 | 0, mu) = mu. Drifts that need
/// arrivals when lambda = 0 (D > 0) or departures when mu = 0 (D < 0) are infinite.
[[nodiscard]] Cost mm1_cost(double drift, double lambda, double mu);

/// Relative entropy of a Poisson process of intensity nu w.r.t. intensity lambda:
/// nu log(nu/lambda) - nu + lambda, with 0 log 0 = 0. Infinite when nu > 0 = lambda.
[[nodiscard]] Cost poisson_entropy(double nu, double lambda);

enum class RateMode { Ergodic, General };

[[nodiscard]] const char* to_string(RateMode mode);

/// Per-term view of L(x, D).
struct LocalRateBreakdown {
    FacePartition face;
    std::vector<double> service;  // mu_r(x) per route (zero off the occupied face)
    std::vector<Cost> terms;      // M/M/1 cost per occupied or jammed route, zero on the free block
    Cost occupied = Cost::zero();  // sum over occupied routes
    Cost jammed = Cost::zero();    // sum over jammed routes (the cut arrivals)
    Cost free_block = Cost::zero();  // stay cost of the free block (general mode only)
    Cost total = Cost::zero();
};

/// Local rate L(x, D).
///
/// Ergodic mode sums the M/M/1 costs over occupied and jammed routes and requires an
/// ergodic network (ModeMismatch otherwise). General mode adds the stay cost of the
/// free block. D must be nonnegative off the occupied face.
[[nodiscard]] Cost local_rate(const NetworkSpec& spec, const FluidState& x,
                              std::span<const double> drift, RateMode mode,
                              double zero_tol = 0.0);

[[nodiscard]] LocalRateBreakdown local_rate_breakdown(const NetworkSpec& spec,
                                                      const FluidState& x,
                                                      std::span<const double> drift,
                                                      RateMode mode, double zero_tol = 0.0);

/// Throws ModeMismatch naming the overloaded channels when the network is not ergodic.
void require_ergodic_for_rate(const NetworkSpec& spec);

/// A per-route bandwidth allocation nu.
struct Allocation {
    std::vector<double> nu;
};

/// True when nu >= 0 and sum_j nu_ij <= C_i (1 + rel_tol) on every channel.
[[nodiscard]] bool in_capacity_set(const NetworkSpec& spec, std::span<const double> nu,
                                   double rel_tol = 0.0);

struct StayCostResult {
    double value = 0.0;
    Allocation allocation;
    double duality_gap = 0.0;
    int sweeps = 0;
    bool converged = false;
};

/// inf over feasible allocations nu of sum over the subset of (sqrt(lambda) - sqrt(mu nu))^2.
///
/// Solved through the concave dual in per-channel prices: for prices p the
/// route optimum is nu_r = lambda mu / (mu + p_i + p_j)^2, and each price is
/// maximised exactly in turn (coordinate ascent). The recovered allocation is
/// scaled into the capacity set, so the returned value is attained and the
/// duality gap certifies it.
[[nodiscard]] StayCostResult stay_cost_transient(const NetworkSpec& spec,
                                                 std::span<const RouteIndex> subset);

/// Stay cost of the whole route set.
[[nodiscard]] StayCostResult stay_cost_transient(const NetworkSpec& spec);

/// The stay-cost objective written in s = sqrt(nu): sum over the subset of
/// (sqrt(lambda) - sqrt(mu) s)^2. Convex in s.
[[nodiscard]] double stay_cost_objective_sqrt(const NetworkSpec& spec,
                                              std::span<const RouteIndex> subset,
                                              std::span<const double> s);

/// A localized empirical generator seen as a modified star network: per-route
/// arrival rates and (constant) service intensities on the occupied and jammed
/// routes. Entries on the free block are ignored; those routes keep their natural
/// dynamics.
struct TiltedGenerator {
    std::vector<double> lambda_tilde;
    std::vector<double> mu_tilde;
};

/// The transient empirical generator: arrival rates a and a feasible allocation nu.
/// Its star network runs the min policy with lambda~ = a and mu~ = a / nu.
struct TransientGenerator {
    std::vector<double> a;
    std::vector<double> nu;
};

/// Drift lambda~ - mu~ of a localized generator (zero on the free block).
[[nodiscard]] std::vector<double> generator_drift(const FacePartition& face,
                                                  const TiltedGenerator& g);

/// Throws InvalidArgument naming the first violated constraint: nonnegative
/// entries, no arrivals on jammed routes, no drift off the occupied face.
void check_feasible(const NetworkSpec& spec, const FacePartition& face, const TiltedGenerator& g);

/// Throws InvalidArgument unless nu lies in the capacity set, a >= 0, and a = 0
/// wherever nu = 0.
void check_feasible(const NetworkSpec& spec, const TransientGenerator& g);

/// The natural generator R(x): lambda~ = lambda and mu~ = mu(x) on occupied and
/// jammed routes.
[[nodiscard]] TiltedGenerator natural_generator(const NetworkSpec& spec, const FluidState& x,
                                                double zero_tol = 0.0);

/// H(G | R(x)): sum over occupied and jammed routes of
/// I_p(lambda~ | lambda) + I_p(mu~ | mu(x)).
[[nodiscard]] Cost relative_entropy(const NetworkSpec& spec, const FluidState& x,
                                    const TiltedGenerator& g, double zero_tol = 0.0);

/// H(G | R) for the transient generator: sum over routes of
/// I_p(a | lambda) + I_p(a | nu mu).
[[nodiscard]] Cost relative_entropy(const NetworkSpec& spec, const TransientGenerator& g);

struct EntropyMinimum {
    double a_star = 0.0;  // optimal tilted arrival rate; a_star - D is the tilted service rate
    Cost value;
};

/// min over a >= max(0, D) of I_p(a | lambda) + I_p(a - D | mu).
/// The minimiser is a* = (D + sqrt(D^2 + 4 lambda mu)) / 2 and the value is mm1_cost.
[[nodiscard]] EntropyMinimum entropy_minimize(double lambda, double mu, double drift);

/// The generator attaining L(x, D): per-route entropy minimisers on occupied and
/// jammed routes.
[[nodiscard]] TiltedGenerator optimal_generator(const NetworkSpec& spec, const FluidState& x,
                                                std::span<const double> drift,
                                                double zero_tol = 0.0);

}  // namespace starld
