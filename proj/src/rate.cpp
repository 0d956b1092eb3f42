#include "starld/rate.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "starld/error.hpp"

namespace starld {

namespace {

void require_rate(double v, const char* what) {
    if (!std::isfinite(v) || v < 0.0) {
        throw InvalidArgument(std::string(what) + " must be finite and nonnegative");
    }
}

// r log r - r + 1, accurate near r = 1.
double entropy_kernel(double r) {
    if (r == 0.0) {
        return 1.0;
    }
    const double u = r - 1.0;
    if (std::abs(u) < 1e-3) {
        // sum_{k>=2} (-1)^k u^k / (k (k - 1))
        double term = u * u;
        double sum = 0.0;
        for (int k = 2; k <= 9; ++k) {
            sum += ((k % 2 == 0) ? term : -term) / (k * (k - 1));
            term *= u;
        }
        return sum;
    }
    return r * std::log(r) - r + 1.0;
}

// I_p(nu | lambda) for lambda > 0.
double poisson_entropy_positive(double nu, double lambda) {
    return lambda * entropy_kernel(nu / lambda);
}

}  // namespace

Cost poisson_entropy(double nu, double lambda) {
    require_rate(nu, "poisson_entropy: nu");
    require_rate(lambda, "poisson_entropy: lambda");
    if (lambda == 0.0) {
        return nu == 0.0 ? Cost::zero() : Cost::infinite();
    }
    return Cost(poisson_entropy_positive(nu, lambda));
}

Cost mm1_cost(double drift, double lambda, double mu) {
    if (!std::isfinite(drift)) {
        throw InvalidArgument("mm1_cost: drift must be finite");
    }
    require_rate(lambda, "mm1_cost: lambda");
    require_rate(mu, "mm1_cost: mu");

    if (lambda == 0.0 && mu == 0.0) {
        return drift == 0.0 ? Cost::zero() : Cost::infinite();
    }
    if (lambda == 0.0) {
        // Only departures: the queue empties at rate -D.
        return drift > 0.0 ? Cost::infinite() : Cost(poisson_entropy_positive(-drift, mu));
    }
    if (mu == 0.0) {
        return drift < 0.0 ? Cost::infinite() : Cost(poisson_entropy_positive(drift, lambda));
    }

    // Entropy form at the optimal tilt: a* b* = lambda mu and a* - b* = D, with each
    // root taken from the side that avoids cancellation.
    const double root = std::hypot(drift, 2.0 * std::sqrt(lambda * mu));
    double a = 0.0;
    double b = 0.0;
    if (drift >= 0.0) {
        a = 0.5 * (drift + root);
        b = 2.0 * lambda * mu / (root + drift);
    } else {
        a = 2.0 * lambda * mu / (root - drift);
        b = 0.5 * (root - drift);
    }
    return Cost(poisson_entropy_positive(a, lambda) + poisson_entropy_positive(b, mu));
}

EntropyMinimum entropy_minimize(double lambda, double mu, double drift) {
    if (!std::isfinite(drift)) {
        throw InvalidArgument("entropy_minimize: drift must be finite");
    }
    require_rate(lambda, "entropy_minimize: lambda");
    require_rate(mu, "entropy_minimize: mu");
    const double prod = lambda * mu;
    const double root = std::hypot(drift, 2.0 * std::sqrt(prod));
    double a = 0.0;
    if (drift >= 0.0) {
        a = 0.5 * (drift + root);
    } else {
        a = root - drift > 0.0 ? 2.0 * prod / (root - drift) : 0.0;
    }
    return {a, mm1_cost(drift, lambda, mu)};
}

const char* to_string(RateMode mode) {
    return mode == RateMode::Ergodic ? "ergodic" : "general";
}

void require_ergodic_for_rate(const NetworkSpec& spec) {
    const ErgodicityReport report = is_ergodic(spec);
    if (report.ergodic) {
        return;
    }
    std::ostringstream os;
    os << "ergodic rate mode requested but the network is not ergodic: ";
    bool first = true;
    for (const ChannelLoad& c : report.channels) {
        if (c.stable()) {
            continue;
        }
        if (!first) {
            os << "; ";
        }
        first = false;
        os << "channel " << spec.channel(c.channel).id << " is overloaded (load " << c.load
           << " >= capacity " << c.capacity << ")";
    }
    throw ModeMismatch(os.str());
}

LocalRateBreakdown local_rate_breakdown(const NetworkSpec& spec, const FluidState& x,
                                        std::span<const double> drift, RateMode mode,
                                        double zero_tol) {
    validate_state(spec, x);
    if (drift.size() != spec.n_routes()) {
        throw InvalidArgument("local_rate: drift size does not match the route count");
    }
    if (!(zero_tol >= 0.0)) {
        throw InvalidArgument("local_rate: zero_tol must be nonnegative");
    }
    if (mode == RateMode::Ergodic) {
        require_ergodic_for_rate(spec);
    }

    LocalRateBreakdown out;
    out.face = face_partition(spec, x, zero_tol);
    out.service.assign(spec.n_routes(), 0.0);
    out.terms.assign(spec.n_routes(), Cost::zero());
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        if (!std::isfinite(drift[r])) {
            throw InvalidArgument("local_rate: drift[" + spec.route_name(r) + "] is not finite");
        }
        if (!out.face.in_lambda(r) && drift[r] < 0.0) {
            throw InvalidArgument("local_rate: drift[" + spec.route_name(r) +
                                  "] is negative on an empty route");
        }
    }
    for (RouteIndex r : out.face.lambda) {
        out.service[r] = service_rate(spec, Policy::min_policy(), x, r);
        out.terms[r] = mm1_cost(drift[r], spec.route(r).lambda, out.service[r]);
        out.occupied += out.terms[r];
    }
    for (RouteIndex r : out.face.lambda1) {
        out.terms[r] = mm1_cost(drift[r], spec.route(r).lambda, 0.0);
        out.jammed += out.terms[r];
    }
    if (mode == RateMode::General && !out.face.lambda2.empty()) {
        out.free_block = Cost(stay_cost_transient(spec, out.face.lambda2).value);
    }
    out.total = out.occupied + out.jammed + out.free_block;
    return out;
}

Cost local_rate(const NetworkSpec& spec, const FluidState& x, std::span<const double> drift,
                RateMode mode, double zero_tol) {
    return local_rate_breakdown(spec, x, drift, mode, zero_tol).total;
}

bool in_capacity_set(const NetworkSpec& spec, std::span<const double> nu, double rel_tol) {
    if (nu.size() != spec.n_routes()) {
        return false;
    }
    for (double v : nu) {
        if (!std::isfinite(v) || v < 0.0) {
            return false;
        }
    }
    for (ChannelIndex c = 0; c < spec.n_channels(); ++c) {
        if (channel_occupancy(spec, nu, c) > spec.capacity(c) * (1.0 + rel_tol)) {
            return false;
        }
    }
    return true;
}

std::vector<double> generator_drift(const FacePartition& face, const TiltedGenerator& g) {
    std::vector<double> d(g.lambda_tilde.size(), 0.0);
    for (std::size_t r = 0; r < d.size(); ++r) {
        if (!face.in_lambda2(r)) {
            d[r] = g.lambda_tilde[r] - g.mu_tilde[r];
        }
    }
    return d;
}

void check_feasible(const NetworkSpec& spec, const FacePartition& face, const TiltedGenerator& g) {
    if (g.lambda_tilde.size() != spec.n_routes() || g.mu_tilde.size() != spec.n_routes()) {
        throw InvalidArgument("tilted generator: expected one rate pair per route");
    }
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        if (face.in_lambda2(r)) {
            continue;
        }
        const std::string name = spec.route_name(r);
        if (!std::isfinite(g.lambda_tilde[r]) || g.lambda_tilde[r] < 0.0) {
            throw InvalidArgument("infeasible generator: lambda~[" + name + "] >= 0 violated");
        }
        if (!std::isfinite(g.mu_tilde[r]) || g.mu_tilde[r] < 0.0) {
            throw InvalidArgument("infeasible generator: lambda~[" + name + "] - D[" + name +
                                  "] >= 0 violated");
        }
        if (face.in_lambda1(r) && g.lambda_tilde[r] != 0.0) {
            throw InvalidArgument("infeasible generator: arrivals must be cut on jammed route " +
                                  name + " (lambda~ = 0)");
        }
        if (face.in_lambda1(r) && g.mu_tilde[r] != 0.0) {
            throw InvalidArgument("infeasible generator: drift must vanish on empty route " + name);
        }
    }
}

void check_feasible(const NetworkSpec& spec, const TransientGenerator& g) {
    if (g.a.size() != spec.n_routes() || g.nu.size() != spec.n_routes()) {
        throw InvalidArgument("transient generator: expected one (a, nu) pair per route");
    }
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        const std::string name = spec.route_name(r);
        if (!std::isfinite(g.a[r]) || g.a[r] < 0.0) {
            throw InvalidArgument("infeasible generator: a[" + name + "] >= 0 violated");
        }
        if (!std::isfinite(g.nu[r]) || g.nu[r] < 0.0) {
            throw InvalidArgument("infeasible generator: nu[" + name + "] >= 0 violated");
        }
        if (g.nu[r] == 0.0 && g.a[r] != 0.0) {
            throw InvalidArgument("infeasible generator: a[" + name + "] must be 0 when nu is 0");
        }
    }
    for (ChannelIndex c = 0; c < spec.n_channels(); ++c) {
        const double used = channel_occupancy(spec, g.nu, c);
        if (used > spec.capacity(c) * (1.0 + 1e-12)) {
            throw InvalidArgument("infeasible generator: allocation exceeds capacity of channel " +
                                  std::to_string(spec.channel(c).id));
        }
    }
}

TiltedGenerator natural_generator(const NetworkSpec& spec, const FluidState& x, double zero_tol) {
    validate_state(spec, x);
    const FacePartition face = face_partition(spec, x, zero_tol);
    TiltedGenerator g;
    g.lambda_tilde.assign(spec.n_routes(), 0.0);
    g.mu_tilde.assign(spec.n_routes(), 0.0);
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        g.lambda_tilde[r] = spec.route(r).lambda;
        if (face.in_lambda(r)) {
            g.mu_tilde[r] = service_rate(spec, Policy::min_policy(), x, r);
        }
    }
    return g;
}

Cost relative_entropy(const NetworkSpec& spec, const FluidState& x, const TiltedGenerator& g,
                      double zero_tol) {
    validate_state(spec, x);
    const FacePartition face = face_partition(spec, x, zero_tol);
    check_feasible(spec, face, g);
    Cost total = Cost::zero();
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        if (face.in_lambda2(r)) {
            continue;
        }
        const double natural_service =
            face.in_lambda(r) ? service_rate(spec, Policy::min_policy(), x, r) : 0.0;
        total += poisson_entropy(g.lambda_tilde[r], spec.route(r).lambda);
        total += poisson_entropy(g.mu_tilde[r], natural_service);
    }
    return total;
}

Cost relative_entropy(const NetworkSpec& spec, const TransientGenerator& g) {
    check_feasible(spec, g);
    Cost total = Cost::zero();
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        total += poisson_entropy(g.a[r], spec.route(r).lambda);
        total += poisson_entropy(g.a[r], g.nu[r] * spec.route(r).mu);
    }
    return total;
}

TiltedGenerator optimal_generator(const NetworkSpec& spec, const FluidState& x,
                                  std::span<const double> drift, double zero_tol) {
    validate_state(spec, x);
    if (drift.size() != spec.n_routes()) {
        throw InvalidArgument("optimal_generator: drift size does not match the route count");
    }
    const FacePartition face = face_partition(spec, x, zero_tol);
    TiltedGenerator g;
    g.lambda_tilde.assign(spec.n_routes(), 0.0);
    g.mu_tilde.assign(spec.n_routes(), 0.0);
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        const double lambda = spec.route(r).lambda;
        if (face.in_lambda2(r)) {
            g.lambda_tilde[r] = lambda;
            continue;
        }
        const double service =
            face.in_lambda(r) ? service_rate(spec, Policy::min_policy(), x, r) : 0.0;
        const EntropyMinimum m = entropy_minimize(lambda, service, drift[r]);
        g.lambda_tilde[r] = m.a_star;
        g.mu_tilde[r] = std::max(0.0, m.a_star - drift[r]);
    }
    return g;
}

}  // namespace starld
