#pragma once

// Next-event loop shared by plain simulation and likelihood-ratio replications.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "starld/error.hpp"
#include "starld/simulate.hpp"

namespace starld::detail {

/// Uniform in (0, 1) from the top 53 bits.
inline double open_unit(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Per-route arrival and departure rates of one dynamics at the current state.
class RateTable {
public:
    explicit RateTable(const Dynamics& dynamics) : dynamics_(&dynamics) {
        const std::size_t n = dynamics.spec().n_routes();
        arrival_.resize(n);
        departure_.assign(n, 0.0);
        for (RouteIndex r = 0; r < n; ++r) {
            arrival_[r] = dynamics.arrival_rate(r);
        }
    }

    void recompute(const DiscreteState& q, const std::vector<std::int64_t>& qc) {
        total_ = 0.0;
        for (RouteIndex r = 0; r < arrival_.size(); ++r) {
            departure_[r] = dynamics_->departure_rate(q, qc, r);
            total_ += arrival_[r] + departure_[r];
        }
    }

    /// Refreshes the routes sharing a channel with route r.
    void update_around(const DiscreteState& q, const std::vector<std::int64_t>& qc, RouteIndex r) {
        const NetworkSpec& spec = dynamics_->spec();
        const Route& route = spec.route(r);
        for (ChannelIndex c : {route.first, route.second}) {
            for (RouteIndex s : spec.routes_of(c)) {
                const double fresh = dynamics_->departure_rate(q, qc, s);
                total_ += fresh - departure_[s];
                departure_[s] = fresh;
            }
        }
    }

    [[nodiscard]] double total() const { return total_; }
    [[nodiscard]] double arrival(RouteIndex r) const { return arrival_[r]; }
    [[nodiscard]] double departure(RouteIndex r) const { return departure_[r]; }
    [[nodiscard]] std::size_t size() const { return arrival_.size(); }

private:
    const Dynamics* dynamics_;
    std::vector<double> arrival_;
    std::vector<double> departure_;
    double total_ = 0.0;
};

/// Runs one trajectory of `sampling` on [0, horizon]. When `reference` is given,
/// also accumulates log dP_reference/dP_sampling over the path.
class Engine {
public:
    Engine(const Dynamics& sampling, const Dynamics* reference, const SimulationOptions& opts)
        : sampling_(sampling), reference_(reference), opts_(opts) {}

    TrajectoryStats run(const DiscreteState& x0, double horizon, std::mt19937_64& rng,
                        double* log_ratio = nullptr) {
        const NetworkSpec& spec = sampling_.spec();
        const std::size_t n_routes = spec.n_routes();
        const std::size_t n_channels = spec.n_channels();
        if (!(horizon > 0.0) || !std::isfinite(horizon)) {
            throw InvalidArgument("simulate: horizon must be positive and finite");
        }
        if (x0.size() != n_routes) {
            throw InvalidArgument("simulate: initial state needs one entry per route");
        }
        for (std::int64_t v : x0) {
            if (v < 0) {
                throw InvalidArgument("simulate: initial state must be nonnegative");
            }
        }
        if (opts_.histogram_cap < 1) {
            throw InvalidArgument("simulate: histogram cap must be >= 1");
        }

        TrajectoryStats st;
        st.horizon = horizon;
        st.arrivals.assign(n_routes, 0);
        st.departures.assign(n_routes, 0);
        st.histogram.assign(n_channels, {});
        st.overflow.assign(n_channels, 0.0);
        if (opts_.blocks > 1) {
            st.block_histogram.assign(static_cast<std::size_t>(opts_.blocks),
                                      std::vector<std::vector<double>>(n_channels));
        }
        st.allocation_integral.assign(n_routes, 0.0);
        st.max_occupancy.assign(n_channels, 0);
        st.initial_state = x0;

        DiscreteState q = x0;
        std::vector<std::int64_t> qc(n_channels, 0);
        for (RouteIndex r = 0; r < n_routes; ++r) {
            qc[spec.route(r).first] += q[r];
            qc[spec.route(r).second] += q[r];
        }
        for (ChannelIndex c = 0; c < n_channels; ++c) {
            st.max_occupancy[c] = qc[c];
        }

        RateTable rates(sampling_);
        rates.recompute(q, qc);
        std::optional<RateTable> ref;
        if (reference_ != nullptr) {
            ref.emplace(*reference_);
            ref->recompute(q, qc);
        }
        double log_lr = 0.0;

        double next_snapshot = opts_.snapshot_interval > 0.0 ? opts_.snapshot_interval
                                                             : std::numeric_limits<double>::infinity();
        double t = 0.0;
        std::uint64_t since_refresh = 0;
        while (true) {
            if (ref) {
                check_continuity(rates, *ref);
            }
            const double total = rates.total();
            double dt = total > 0.0 ? -std::log(open_unit(rng)) / total
                                    : std::numeric_limits<double>::infinity();
            const bool last = t + dt >= horizon;
            if (last) {
                dt = horizon - t;
            }
            accumulate(st, q, qc, dt);
            if (!st.block_histogram.empty()) {
                accumulate_blocks(st, qc, t, dt, horizon);
            }
            if (ref) {
                log_lr -= (ref->total() - total) * dt;
            }
            while (next_snapshot <= t + dt && next_snapshot <= horizon) {
                st.snapshots.push_back(qc);
                next_snapshot += opts_.snapshot_interval;
            }
            if (last) {
                break;
            }
            t += dt;

            // Pick the transition proportionally to its rate.
            double target = open_unit(rng) * total;
            RouteIndex route = 0;
            bool arrival = true;
            bool found = false;
            for (RouteIndex r = 0; r < n_routes && !found; ++r) {
                if (target < rates.arrival(r)) {
                    route = r;
                    arrival = true;
                    found = true;
                    break;
                }
                target -= rates.arrival(r);
                if (target < rates.departure(r)) {
                    route = r;
                    arrival = false;
                    found = true;
                    break;
                }
                target -= rates.departure(r);
            }
            if (!found) {
                // Rounding drift in the running total: refresh it and redraw.
                rates.recompute(q, qc);
                if (ref) {
                    ref->recompute(q, qc);
                }
                continue;
            }

            if (ref) {
                const double num = arrival ? ref->arrival(route) : ref->departure(route);
                const double den = arrival ? rates.arrival(route) : rates.departure(route);
                log_lr += num > 0.0 ? std::log(num / den) : -std::numeric_limits<double>::infinity();
            }

            const Route& rt = spec.route(route);
            const std::int64_t step = arrival ? 1 : -1;
            q[route] += step;
            qc[rt.first] += step;
            qc[rt.second] += step;
            if (arrival) {
                ++st.arrivals[route];
                st.max_occupancy[rt.first] = std::max(st.max_occupancy[rt.first], qc[rt.first]);
                st.max_occupancy[rt.second] = std::max(st.max_occupancy[rt.second], qc[rt.second]);
            } else {
                ++st.departures[route];
            }
            ++st.event_count;

            if (++since_refresh >= 1000000) {
                since_refresh = 0;
                rates.recompute(q, qc);
                if (ref) {
                    ref->recompute(q, qc);
                }
            } else {
                rates.update_around(q, qc, route);
                if (ref) {
                    ref->update_around(q, qc, route);
                }
            }
        }
        st.final_state = q;
        if (log_ratio != nullptr) {
            *log_ratio = log_lr;
        }
        return st;
    }

private:
    void accumulate(TrajectoryStats& st, const DiscreteState& q,
                    const std::vector<std::int64_t>& qc, double dt) const {
        const NetworkSpec& spec = sampling_.spec();
        for (ChannelIndex c = 0; c < qc.size(); ++c) {
            if (qc[c] >= opts_.histogram_cap) {
                st.overflow[c] += dt;
                continue;
            }
            auto& h = st.histogram[c];
            const auto n = static_cast<std::size_t>(qc[c]);
            if (h.size() <= n) {
                h.resize(n + 1, 0.0);
            }
            h[n] += dt;
        }
        for (RouteIndex r = 0; r < q.size(); ++r) {
            if (q[r] == 0) {
                continue;
            }
            const Route& rt = spec.route(r);
            const double qr = static_cast<double>(q[r]);
            const double share =
                std::min(spec.capacity(rt.first) * qr / static_cast<double>(qc[rt.first]),
                         spec.capacity(rt.second) * qr / static_cast<double>(qc[rt.second]));
            st.allocation_integral[r] += share * dt;
        }
    }

    // Splits [t, t + dt) across the equal time blocks it touches.
    void accumulate_blocks(TrajectoryStats& st, const std::vector<std::int64_t>& qc, double t,
                           double dt, double horizon) const {
        const std::size_t nb = st.block_histogram.size();
        const double width = horizon / static_cast<double>(nb);
        const double end = t + dt;
        while (t < end) {
            const auto b = std::min(nb - 1, static_cast<std::size_t>(t / width));
            const double stop = b + 1 == nb ? end : std::min(end, width * static_cast<double>(b + 1));
            const double piece = stop - t;
            if (!(piece > 0.0)) {
                break;
            }
            for (ChannelIndex c = 0; c < qc.size(); ++c) {
                if (qc[c] >= opts_.histogram_cap) {
                    continue;
                }
                auto& h = st.block_histogram[b][c];
                const auto n = static_cast<std::size_t>(qc[c]);
                if (h.size() <= n) {
                    h.resize(n + 1, 0.0);
                }
                h[n] += piece;
            }
            t = stop;
        }
    }

    void check_continuity(const RateTable& sampling, const RateTable& reference) const {
        for (RouteIndex r = 0; r < sampling.size(); ++r) {
            const bool arr = reference.arrival(r) > 0.0 && sampling.arrival(r) == 0.0;
            const bool dep = reference.departure(r) > 0.0 && sampling.departure(r) == 0.0;
            if (arr || dep) {
                throw AbsoluteContinuityBreach(
                    std::string("likelihood ratio undefined: the reference law can ") +
                    (arr ? "add to" : "serve") + " route " + sampling_.spec().route_name(r) +
                    " but the sampling law cannot");
            }
        }
    }

    const Dynamics& sampling_;
    const Dynamics* reference_;
    SimulationOptions opts_;
};

}  // namespace starld::detail
