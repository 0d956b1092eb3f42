#include <algorithm>
#include <cmath>
#include <numeric>

#include "starld/error.hpp"
#include "starld/rate.hpp"

namespace starld {

namespace {

constexpr int kMaxSweeps = 100000;
constexpr double kPriceTol = 1e-15;

struct DualProblem {
    const NetworkSpec& spec;
    std::vector<RouteIndex> routes;                  // the subset
    std::vector<ChannelIndex> channels;              // channels touched by the subset
    std::vector<std::vector<std::size_t>> incident;  // per channel slot: positions in `routes`
    std::vector<std::size_t> slot_of;                // channel index -> slot (or npos)

    [[nodiscard]] double route_price(const std::vector<double>& p, std::size_t k) const {
        const Route& r = spec.route(routes[k]);
        return p[slot_of[r.first]] + p[slot_of[r.second]];
    }

    [[nodiscard]] double allocation(double lambda, double mu, double price) const {
        const double d = mu + price;
        return lambda * mu / (d * d);
    }

    // d g / d p_c at the given price of slot c (other prices fixed).
    [[nodiscard]] double excess(const std::vector<double>& p, std::size_t slot,
                                double price_c) const {
        double used = 0.0;
        for (std::size_t k : incident[slot]) {
            const Route& r = spec.route(routes[k]);
            const double other = route_price(p, k) - p[slot];
            used += allocation(r.lambda, r.mu, other + price_c);
        }
        return used - spec.capacity(channels[slot]);
    }

    [[nodiscard]] double dual_value(const std::vector<double>& p) const {
        double g = 0.0;
        for (std::size_t k = 0; k < routes.size(); ++k) {
            const Route& r = spec.route(routes[k]);
            const double price = route_price(p, k);
            g += r.lambda * price / (r.mu + price);
        }
        for (std::size_t s = 0; s < channels.size(); ++s) {
            g -= p[s] * spec.capacity(channels[s]);
        }
        return g;
    }

    // Maximises the dual over the price of one channel with the others fixed.
    [[nodiscard]] double best_price(const std::vector<double>& p, std::size_t slot) const {
        if (excess(p, slot, 0.0) <= 0.0) {
            return 0.0;
        }
        double lo = 0.0;
        double hi = 1.0;
        while (excess(p, slot, hi) > 0.0) {
            lo = hi;
            hi *= 2.0;
        }
        // Excess is convex and decreasing in the price: Newton from the left stays
        // left of the root, bisection keeps the bracket honest.
        double x = lo;
        for (int it = 0; it < 200; ++it) {
            const double f = excess(p, slot, x);
            if (f > 0.0) {
                lo = x;
            } else {
                hi = x;
            }
            double slope = 0.0;
            for (std::size_t k : incident[slot]) {
                const Route& r = spec.route(routes[k]);
                const double d = r.mu + route_price(p, k) - p[slot] + x;
                slope -= 2.0 * r.lambda * r.mu / (d * d * d);
            }
            double next = slope < 0.0 ? x - f / slope : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) {
                next = 0.5 * (lo + hi);
            }
            if (std::abs(next - x) <= 1e-16 * std::max(1.0, x) || hi - lo <= 1e-16 * hi) {
                x = next;
                break;
            }
            x = next;
        }
        return x;
    }
};

}  // namespace

double stay_cost_objective_sqrt(const NetworkSpec& spec, std::span<const RouteIndex> subset,
                                std::span<const double> s) {
    if (s.size() != spec.n_routes()) {
        throw InvalidArgument("stay_cost_objective_sqrt: expected one entry per route");
    }
    double total = 0.0;
    for (RouteIndex r : subset) {
        const double d = std::sqrt(spec.route(r).lambda) - std::sqrt(spec.route(r).mu) * s[r];
        total += d * d;
    }
    return total;
}

StayCostResult stay_cost_transient(const NetworkSpec& spec, std::span<const RouteIndex> subset) {
    StayCostResult out;
    out.allocation.nu.assign(spec.n_routes(), 0.0);
    if (subset.empty()) {
        out.converged = true;
        return out;
    }

    DualProblem dual{spec, {}, {}, {}, std::vector<std::size_t>(spec.n_channels(), SIZE_MAX)};
    std::vector<bool> seen(spec.n_routes(), false);
    for (RouteIndex r : subset) {
        if (r >= spec.n_routes()) {
            throw InvalidArgument("stay_cost_transient: unknown route index " + std::to_string(r));
        }
        if (seen[r]) {
            continue;
        }
        seen[r] = true;
        dual.routes.push_back(r);
    }
    std::sort(dual.routes.begin(), dual.routes.end());
    for (std::size_t k = 0; k < dual.routes.size(); ++k) {
        const Route& r = spec.route(dual.routes[k]);
        for (ChannelIndex c : {r.first, r.second}) {
            if (dual.slot_of[c] == SIZE_MAX) {
                dual.slot_of[c] = dual.channels.size();
                dual.channels.push_back(c);
                dual.incident.emplace_back();
            }
            dual.incident[dual.slot_of[c]].push_back(k);
        }
    }

    std::vector<double> p(dual.channels.size(), 0.0);
    int sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
        double change = 0.0;
        for (std::size_t s = 0; s < p.size(); ++s) {
            const double next = dual.best_price(p, s);
            change = std::max(change, std::abs(next - p[s]) / std::max(1.0, next));
            p[s] = next;
        }
        if (change <= kPriceTol) {
            out.converged = true;
            break;
        }
    }
    out.sweeps = sweep + 1;

    // Primal recovery, then a per-channel shrink into the capacity set.
    std::vector<double>& nu = out.allocation.nu;
    for (std::size_t k = 0; k < dual.routes.size(); ++k) {
        const Route& r = spec.route(dual.routes[k]);
        nu[dual.routes[k]] = dual.allocation(r.lambda, r.mu, dual.route_price(p, k));
    }
    std::vector<double> shrink(spec.n_channels(), 1.0);
    for (ChannelIndex c : dual.channels) {
        const double used = channel_occupancy(spec, nu, c);
        if (used > spec.capacity(c)) {
            shrink[c] = spec.capacity(c) / used;
        }
    }
    for (RouteIndex r : dual.routes) {
        nu[r] *= std::min(shrink[spec.route(r).first], shrink[spec.route(r).second]);
    }

    double value = 0.0;
    for (RouteIndex r : dual.routes) {
        const double d = std::sqrt(spec.route(r).lambda) - std::sqrt(spec.route(r).mu * nu[r]);
        value += d * d;
    }
    out.value = value;
    out.duality_gap = std::max(0.0, value - dual.dual_value(p));
    return out;
}

StayCostResult stay_cost_transient(const NetworkSpec& spec) {
    std::vector<RouteIndex> all(spec.n_routes());
    std::iota(all.begin(), all.end(), RouteIndex{0});
    return stay_cost_transient(spec, all);
}

}  // namespace starld
