#include "starld/paths.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "segment_model.hpp"
#include "starld/error.hpp"

namespace starld {

namespace detail {

namespace {

constexpr double kMaxDuration = 1e12;
constexpr double kMinDuration = 1e-12;

}  // namespace

SegmentModel::SegmentModel(const NetworkSpec& spec, std::span<const double> from,
                           std::span<const double> to, RateMode mode,
                           const QuadratureOptions& quad)
    : from_(from.begin(), from.end()), to_(to.begin(), to.end()) {
    const std::size_t n = spec.n_routes();
    FluidState open(std::vector<double>(n, 0.0));
    for (RouteIndex r = 0; r < n; ++r) {
        open[r] = (from_[r] > 0.0 || to_[r] > 0.0) ? 1.0 : 0.0;
    }
    face_ = face_partition(spec, open);
    stationary_ = true;
    for (RouteIndex r : face_.lambda) {
        occupied_.push_back(r);
        lambda_.push_back(spec.route(r).lambda);
        delta_.push_back(to_[r] - from_[r]);
        stationary_ = stationary_ && delta_.back() == 0.0;
    }
    for (RouteIndex r : face_.lambda1) {
        constant_rate_ += spec.route(r).lambda;  // l(0 | lambda, 0)
    }
    if (mode == RateMode::General && !face_.lambda2.empty()) {
        constant_rate_ += stay_cost_transient(spec, face_.lambda2).value;
    }
    if (occupied_.empty()) {
        return;
    }

    // Cut where an occupied route's bottleneck switches: C_i x_j(u) - C_j x_i(u) is linear in u.
    std::vector<double> cuts{0.0, 1.0};
    for (RouteIndex r : occupied_) {
        const Route& route = spec.route(r);
        const double ci = spec.capacity(route.first);
        const double cj = spec.capacity(route.second);
        const double h0 = ci * channel_occupancy(spec, from_, route.second) -
                          cj * channel_occupancy(spec, from_, route.first);
        const double h1 = ci * channel_occupancy(spec, to_, route.second) -
                          cj * channel_occupancy(spec, to_, route.first);
        if ((h0 < 0.0 && h1 > 0.0) || (h0 > 0.0 && h1 < 0.0)) {
            const double u = h0 / (h0 - h1);
            if (u > 1e-14 && u < 1.0 - 1e-14) {
                cuts.push_back(u);
            }
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    // Refinement is driven by the integrand at unit drift scale; the singular
    // behaviour (service rates vanishing at an end) does not depend on the duration.
    double reference = 0.0;
    for (double d : delta_) {
        reference = std::max(reference, std::abs(d));
    }
    if (reference == 0.0) {
        reference = 1.0;
    }
    const int parts = std::max(1, quad.presplit);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        for (int p = 0; p < parts; ++p) {
            const double a = cuts[k] + (cuts[k + 1] - cuts[k]) * p / parts;
            const double b = cuts[k] + (cuts[k + 1] - cuts[k]) * (p + 1) / parts;
            add_piece(spec, a, b, reference, quad, 0);
        }
    }
}

std::vector<SegmentModel::Node> SegmentModel::rule(const NetworkSpec& spec, double u0,
                                                   double u1) const {
    std::vector<Node> out;
    out.reserve(16);
    const double mid = 0.5 * (u0 + u1);
    const double half = 0.5 * (u1 - u0);
    std::vector<double> x(from_.size());
    for (const auto& [node, weight] : kGaussLegendre16) {
        for (double sign : {-1.0, 1.0}) {
            Node nd;
            nd.u = mid + sign * half * node;
            nd.weight = half * weight;
            for (std::size_t r = 0; r < x.size(); ++r) {
                x[r] = std::max(0.0, from_[r] + nd.u * (to_[r] - from_[r]));
            }
            nd.service.reserve(occupied_.size());
            for (RouteIndex r : occupied_) {
                nd.service.push_back(spec.route(r).mu * min_policy_allocation(spec, x, r));
            }
            out.push_back(std::move(nd));
        }
    }
    return out;
}

double SegmentModel::integrate(const std::vector<Node>& nodes, double duration) const {
    double sum = 0.0;
    for (const Node& nd : nodes) {
        double f = 0.0;
        for (std::size_t k = 0; k < occupied_.size(); ++k) {
            f += mm1_cost(delta_[k] / duration, lambda_[k], nd.service[k]).value();
        }
        sum += nd.weight * f;
    }
    return sum;
}

void SegmentModel::add_piece(const NetworkSpec& spec, double u0, double u1, double reference,
                             const QuadratureOptions& quad, int depth) {
    std::vector<Node> coarse = rule(spec, u0, u1);
    const double um = 0.5 * (u0 + u1);
    std::vector<Node> fine = rule(spec, u0, um);
    std::vector<Node> right = rule(spec, um, u1);
    fine.insert(fine.end(), std::make_move_iterator(right.begin()),
                std::make_move_iterator(right.end()));
    const double ic = integrate(coarse, reference);
    const double ifine = integrate(fine, reference);
    if (std::abs(ic - ifine) <= quad.tolerance * std::max(1.0, std::abs(ifine)) ||
        depth >= quad.max_depth) {
        nodes_.insert(nodes_.end(), std::make_move_iterator(fine.begin()),
                      std::make_move_iterator(fine.end()));
        return;
    }
    add_piece(spec, u0, um, reference, quad, depth + 1);
    add_piece(spec, um, u1, reference, quad, depth + 1);
}

Cost SegmentModel::cost(double duration) const {
    if (!(duration > 0.0) || !std::isfinite(duration)) {
        throw InvalidArgument("segment duration must be positive and finite");
    }
    return Cost(duration * (integrate(nodes_, duration) + constant_rate_));
}

double SegmentModel::slope(double duration) const {
    // d/dtau [tau l(delta/tau)] = l - D dl/dD = lambda + mu - sqrt(D^2 + 4 lambda mu).
    double sum = 0.0;
    for (const Node& nd : nodes_) {
        double f = 0.0;
        for (std::size_t k = 0; k < occupied_.size(); ++k) {
            const double d = delta_[k] / duration;
            const double mu = nd.service[k];
            f += lambda_[k] + mu - std::hypot(d, 2.0 * std::sqrt(lambda_[k] * mu));
        }
        sum += nd.weight * f;
    }
    return sum + constant_rate_;
}

SegmentModel::Optimum SegmentModel::optimal_duration() const {
    if (stationary_) {
        return {kMinDuration, cost(kMinDuration), false};
    }
    // slope() increases from -inf (tau -> 0) to L(x, 0) >= 0 (tau -> inf).
    double lo = 1.0;
    double hi = 1.0;
    if (slope(1.0) < 0.0) {
        while (slope(hi) < 0.0) {
            lo = hi;
            hi *= 4.0;
            if (hi > kMaxDuration) {
                return {kMaxDuration, cost(kMaxDuration), true};
            }
        }
    } else {
        while (slope(lo) >= 0.0) {
            hi = lo;
            lo *= 0.25;
            if (lo < kMinDuration) {
                return {kMinDuration, cost(kMinDuration), false};
            }
        }
    }
    // Bisection in log(tau).
    for (int it = 0; it < 200 && hi > lo * (1.0 + 1e-13); ++it) {
        const double mid = std::sqrt(lo * hi);
        if (slope(mid) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double tau = std::sqrt(lo * hi);
    return {tau, cost(tau), false};
}

}  // namespace detail

FluidState PiecewiseLinearPath::at(double t) const {
    if (times.empty()) {
        throw InvalidArgument("path has no breakpoints");
    }
    if (t <= times.front()) {
        return states.front();
    }
    if (t >= times.back()) {
        return states.back();
    }
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
    const double u = (t - times[k]) / (times[k + 1] - times[k]);
    FluidState x(std::vector<double>(states[k].size()));
    for (std::size_t r = 0; r < x.size(); ++r) {
        x[r] = std::max(0.0, states[k][r] + u * (states[k + 1][r] - states[k][r]));
    }
    return x;
}

void validate_path(const NetworkSpec& spec, const PiecewiseLinearPath& path) {
    if (path.times.size() < 2) {
        throw InvalidArgument("path: at least two breakpoints are required");
    }
    if (path.states.size() != path.times.size()) {
        throw InvalidArgument("path: one state per breakpoint time is required");
    }
    if (path.times.front() != 0.0) {
        throw InvalidArgument("path: the first breakpoint time must be 0");
    }
    for (std::size_t k = 0; k < path.times.size(); ++k) {
        if (!std::isfinite(path.times[k])) {
            throw InvalidArgument("path: breakpoint times must be finite");
        }
        if (k > 0 && !(path.times[k] > path.times[k - 1])) {
            throw InvalidArgument("path: breakpoint times must be strictly increasing (index " +
                                  std::to_string(k) + ")");
        }
        validate_state(spec, path.states[k]);
    }
}

namespace {

std::vector<std::optional<ChannelIndex>> bottlenecks(const NetworkSpec& spec,
                                                     const FluidState& x) {
    std::vector<std::optional<ChannelIndex>> out(spec.n_routes());
    for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
        if (x[r] <= 0.0) {
            continue;
        }
        const Route& route = spec.route(r);
        const double si = spec.capacity(route.first) / channel_occupancy(spec, x.x, route.first);
        const double sj = spec.capacity(route.second) / channel_occupancy(spec, x.x, route.second);
        out[r] = si <= sj ? route.first : route.second;
    }
    return out;
}

}  // namespace

PathCostReport path_cost_report(const NetworkSpec& spec, const PiecewiseLinearPath& path,
                                RateMode mode, const QuadratureOptions& quad) {
    validate_path(spec, path);
    if (mode == RateMode::Ergodic) {
        require_ergodic_for_rate(spec);
    }
    PathCostReport report;
    for (std::size_t k = 0; k + 1 < path.times.size(); ++k) {
        const detail::SegmentModel model(spec, path.states[k].x, path.states[k + 1].x, mode, quad);
        SegmentReport seg;
        seg.t0 = path.times[k];
        seg.t1 = path.times[k + 1];
        seg.cost = model.cost(seg.t1 - seg.t0);
        seg.bottleneck = bottlenecks(spec, path.at(0.5 * (seg.t0 + seg.t1)));
        report.total += seg.cost;
        report.segments.push_back(std::move(seg));
    }
    return report;
}

Cost path_cost(const NetworkSpec& spec, const PiecewiseLinearPath& path, RateMode mode,
               const QuadratureOptions& quad) {
    return path_cost_report(spec, path, mode, quad).total;
}

const char* to_string(OptimizeStatus status) {
    return status == OptimizeStatus::Converged ? "converged" : "not_converged";
}

double ps_decay_rate(const NetworkSpec& spec, ChannelIndex channel) {
    if (channel >= spec.n_channels()) {
        throw InvalidArgument("ps_decay_rate: unknown channel index " + std::to_string(channel));
    }
    double rho = 0.0;
    for (RouteIndex r : spec.routes_of(channel)) {
        rho += spec.route(r).lambda / (spec.route(r).mu * spec.capacity(channel));
    }
    if (rho >= 1.0) {
        throw NotErgodic("ps_decay_rate: channel " + std::to_string(spec.channel(channel).id) +
                         " has processor-sharing load " + std::to_string(rho) + " >= 1");
    }
    return -std::log(rho);
}

PsConsistency ps_consistency_check(const NetworkSpec& spec, const PiecewiseLinearPath& path,
                                   ChannelIndex channel) {
    validate_path(spec, path);
    PsConsistency out;
    const double ci = spec.capacity(channel);
    for (std::size_t k = 0; k + 1 < path.times.size(); ++k) {
        const double t0 = path.times[k];
        const double t1 = path.times[k + 1];
        for (const auto& [node, weight] : detail::kGaussLegendre16) {
            for (double sign : {-1.0, 1.0}) {
                const double t = 0.5 * (t0 + t1) + sign * 0.5 * (t1 - t0) * node;
                const FluidState x = path.at(t);
                ++out.samples;
                const double xi = channel_occupancy(spec, x.x, channel);
                for (RouteIndex r : spec.routes_of(channel)) {
                    if (x[r] <= 0.0) {
                        continue;
                    }
                    const ChannelIndex other = spec.route(r).other(channel);
                    const double xj = channel_occupancy(spec, x.x, other);
                    // C_i / x_i <= C_j / x_j, cross-multiplied.
                    if (ci * xj > spec.capacity(other) * xi * (1.0 + 1e-9)) {
                        if (!out.first_violation_time || t < *out.first_violation_time) {
                            out.consistent = false;
                            out.first_violation_time = t;
                            out.violating_route = r;
                        }
                    }
                }
            }
        }
    }
    return out;
}

PsConsistency ps_consistency_check(const NetworkSpec& spec, const DecayResult& result,
                                   ChannelIndex channel) {
    return ps_consistency_check(spec, result.optimal_path, channel);
}

}  // namespace starld
