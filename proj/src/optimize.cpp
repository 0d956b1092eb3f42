#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "segment_model.hpp"
#include "starld/error.hpp"
#include "starld/paths.hpp"

namespace starld {

namespace {

constexpr int kCarriedCandidates = 4;
constexpr double kFirstStep = 0.5;
constexpr double kLadderStep = 0.1;
constexpr double kMinGain = 1e-12;  // relative decrease needed to accept a move

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Breakpoint states y_1..y_K of a path leaving the origin, with the target
/// channel's routes of y_K normalised to sum to 1, and the cached optimal
/// segment durations and costs.
class PathSearch {
public:
    PathSearch(const NetworkSpec& spec, ChannelIndex target, RateMode mode)
        : spec_(spec), mode_(mode), target_routes_(spec.routes_of(target)) {}

    void reset(std::vector<std::vector<double>> points) {
        points_ = std::move(points);
        normalize_end();
        costs_.assign(points_.size(), Cost::infinite());
        durations_.assign(points_.size(), 0.0);
        for (std::size_t k = 0; k < points_.size(); ++k) {
            evaluate_segment(k, costs_[k], durations_[k]);
        }
    }

    [[nodiscard]] double total() const {
        Cost c = Cost::zero();
        for (const Cost& s : costs_) {
            c += s;
        }
        return c.value_or_inf();
    }

    [[nodiscard]] std::size_t segments() const { return points_.size(); }
    [[nodiscard]] const std::vector<std::vector<double>>& points() const { return points_; }
    [[nodiscard]] const std::vector<double>& durations() const { return durations_; }
    [[nodiscard]] const std::vector<Cost>& costs() const { return costs_; }
    [[nodiscard]] int evaluations() const { return evaluations_; }

    /// Hooke-Jeeves search: compass exploration with step halving plus pattern
    /// moves along the last successful displacement. Returns true when the step
    /// fell below tol, false when the evaluation budget ran out.
    bool pattern_search(double step, double tol, int max_evaluations) {
        const int limit = evaluations_ + max_evaluations;
        while (step >= tol) {
            if (evaluations_ >= limit) {
                return false;
            }
            auto base = points_;
            if (!explore(step, limit)) {
                step *= 0.5;
                continue;
            }
            while (evaluations_ < limit) {
                const auto saved_points = points_;
                const auto saved_costs = costs_;
                const auto saved_durations = durations_;
                const double current = total();
                auto next = points_;
                for (std::size_t k = 0; k < next.size(); ++k) {
                    for (std::size_t r = 0; r < next[k].size(); ++r) {
                        next[k][r] = std::max(0.0, 2.0 * points_[k][r] - base[k][r]);
                    }
                }
                reset(std::move(next));
                explore(step, limit);
                if (total() < current - kMinGain * (1.0 + std::abs(current))) {
                    base = saved_points;
                    continue;
                }
                points_ = saved_points;
                costs_ = saved_costs;
                durations_ = saved_durations;
                break;
            }
        }
        return true;
    }

    /// Splits the costliest segment at its midpoint state.
    void add_breakpoint() {
        std::size_t worst = 0;
        for (std::size_t k = 1; k < costs_.size(); ++k) {
            if (costs_[k].value_or_inf() > costs_[worst].value_or_inf()) {
                worst = k;
            }
        }
        const std::vector<double>& b = points_[worst];
        std::vector<double> mid(b.size());
        for (std::size_t r = 0; r < b.size(); ++r) {
            const double a = worst == 0 ? 0.0 : points_[worst - 1][r];
            mid[r] = 0.5 * (a + b[r]);
        }
        auto pts = points_;
        pts.insert(pts.begin() + static_cast<std::ptrdiff_t>(worst), std::move(mid));
        reset(std::move(pts));
    }

private:
    // One sweep of coordinate moves of the given step; true if any was kept.
    bool explore(double step, int limit) {
        bool improved = false;
        for (std::size_t k = 0; k < points_.size(); ++k) {
            for (std::size_t r = 0; r < spec_.n_routes(); ++r) {
                for (double dir : {1.0, -1.0}) {
                    if (evaluations_ >= limit) {
                        return improved;
                    }
                    const double old = points_[k][r];
                    double trial = old + dir * step;
                    if (trial < 0.0) {
                        if (old == 0.0) {
                            continue;
                        }
                        trial = 0.0;
                    }
                    if (try_move(k, r, trial)) {
                        improved = true;
                        break;
                    }
                }
            }
        }
        return improved;
    }

    void normalize_end() {
        std::vector<double>& end = points_.back();
        double sum = 0.0;
        for (RouteIndex r : target_routes_) {
            sum += end[r];
        }
        if (sum > 0.0) {
            for (RouteIndex r : target_routes_) {
                end[r] /= sum;
            }
        }
    }

    [[nodiscard]] bool end_valid() const {
        double sum = 0.0;
        for (RouteIndex r : target_routes_) {
            sum += points_.back()[r];
        }
        return sum > 0.0;
    }

    void evaluate_segment(std::size_t k, Cost& cost, double& duration) {
        ++evaluations_;
        if (!end_valid()) {
            cost = Cost::infinite();
            duration = 0.0;
            return;
        }
        const std::vector<double> origin(spec_.n_routes(), 0.0);
        const std::vector<double>& from = k == 0 ? origin : points_[k - 1];
        const detail::SegmentModel model(spec_, from, points_[k], mode_);
        const auto opt = model.optimal_duration();
        cost = opt.cost;
        duration = opt.duration;
    }

    // Moves one coordinate and keeps the move if it lowers the total.
    bool try_move(std::size_t k, RouteIndex r, double value) {
        const auto saved_points = points_;
        const auto saved_costs = costs_;
        const auto saved_durations = durations_;
        const double before = total();

        points_[k][r] = value;
        const bool last = k + 1 == points_.size();
        if (last) {
            normalize_end();
        }
        evaluate_segment(k, costs_[k], durations_[k]);
        if (!last) {
            evaluate_segment(k + 1, costs_[k + 1], durations_[k + 1]);
        }
        const double after = total();
        if (after < before - kMinGain * (1.0 + std::abs(before))) {
            return true;
        }
        points_ = saved_points;
        costs_ = saved_costs;
        durations_ = saved_durations;
        return false;
    }

    const NetworkSpec& spec_;
    RateMode mode_;
    std::vector<RouteIndex> target_routes_;
    std::vector<std::vector<double>> points_;
    std::vector<Cost> costs_;
    std::vector<double> durations_;
    int evaluations_ = 0;
};

std::vector<double> start_direction(const NetworkSpec& spec, ChannelIndex target,
                                    std::uint64_t seed, int start) {
    const std::size_t n = spec.n_routes();
    std::vector<double> v(n, 0.0);
    if (start == 0) {
        for (RouteIndex r = 0; r < n; ++r) {
            v[r] = spec.route(r).lambda / spec.route(r).mu;
        }
        return v;
    }
    if (start == 1) {
        for (RouteIndex r : spec.routes_of(target)) {
            v[r] = spec.route(r).lambda / spec.route(r).mu;
        }
        return v;
    }
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(start))));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    for (RouteIndex r = 0; r < n; ++r) {
        v[r] = unit(rng) < 0.3 ? 0.0 : expo(rng);
    }
    const auto& targets = spec.routes_of(target);
    double sum = 0.0;
    for (RouteIndex r : targets) {
        sum += v[r];
    }
    if (sum == 0.0) {
        v[targets[static_cast<std::size_t>(unit(rng) * static_cast<double>(targets.size())) %
                  targets.size()]] = 1.0;
    }
    return v;
}

template <typename Fn>
void run_indexed(int count, int threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    const int workers = std::min(threads, count);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < count; i += workers) {
                fn(i);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
}

}  // namespace

DecayResult optimize_tail_decay(const NetworkSpec& spec, ChannelIndex target,
                                const OptimizeOptions& opts) {
    if (target >= spec.n_channels()) {
        throw InvalidArgument("optimize_tail_decay: unknown target channel index " +
                              std::to_string(target));
    }
    if (spec.routes_of(target).empty()) {
        throw InvalidArgument("optimize_tail_decay: target channel carries no route");
    }
    if (!is_ergodic(spec).ergodic) {
        throw NotErgodic("optimize_tail_decay: the network is not ergodic, so no stationary tail "
                         "exists");
    }
    if (opts.segments < 1 || opts.multistarts < 1 || opts.max_iterations < 1 ||
        !(opts.tolerance > 0.0)) {
        throw InvalidArgument("optimize_tail_decay: segments, multistarts and max_iterations "
                              "must be >= 1 and tolerance > 0");
    }

    struct Candidate {
        std::vector<std::vector<double>> points;
        double value = 0.0;
        bool converged = true;
        int evaluations = 0;
        std::vector<double> ladder;
    };

    // Straight lines out of the origin.
    std::vector<Candidate> rays(static_cast<std::size_t>(opts.multistarts));
    run_indexed(opts.multistarts, opts.threads, [&](int s) {
        PathSearch search(spec, target, opts.mode);
        search.reset({start_direction(spec, target, opts.seed, s)});
        Candidate& c = rays[static_cast<std::size_t>(s)];
        c.converged = search.pattern_search(kFirstStep, opts.tolerance, opts.max_iterations);
        c.points = search.points();
        c.value = search.total();
        c.evaluations = search.evaluations();
    });

    std::vector<std::size_t> order(rays.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rays[a].value < rays[b].value; });
    std::vector<std::size_t> carried;
    for (std::size_t idx : order) {
        if (carried.size() >= static_cast<std::size_t>(kCarriedCandidates)) {
            break;
        }
        bool duplicate = false;
        for (std::size_t c : carried) {
            duplicate = duplicate || std::abs(rays[c].value - rays[idx].value) <= 1e-12;
        }
        if (!duplicate) {
            carried.push_back(idx);
        }
    }

    // Breakpoint ladder for each carried candidate.
    std::vector<Candidate> finals(carried.size());
    run_indexed(static_cast<int>(carried.size()), opts.threads, [&](int i) {
        const Candidate& ray = rays[carried[static_cast<std::size_t>(i)]];
        PathSearch search(spec, target, opts.mode);
        search.reset(ray.points);
        Candidate& c = finals[static_cast<std::size_t>(i)];
        c.converged = ray.converged;
        c.ladder.push_back(search.total());
        for (int k = 2; k <= opts.segments; ++k) {
            search.add_breakpoint();
            c.converged =
                search.pattern_search(kLadderStep, opts.tolerance, opts.max_iterations) &&
                c.converged;
            c.ladder.push_back(search.total());
        }
        c.points = search.points();
        c.value = search.total();
        c.evaluations = search.evaluations();
    });

    std::size_t best = 0;
    for (std::size_t i = 1; i < finals.size(); ++i) {
        if (finals[i].value < finals[best].value) {
            best = i;
        }
    }

    PathSearch search(spec, target, opts.mode);
    search.reset(finals[best].points);

    DecayResult result;
    result.target = target;
    result.status = finals[best].converged ? OptimizeStatus::Converged
                                           : OptimizeStatus::NotConverged;
    for (const Candidate& c : rays) {
        result.evaluations += c.evaluations;
    }
    for (const Candidate& c : finals) {
        result.evaluations += c.evaluations;
    }
    result.ladder = finals[best].ladder;

    PiecewiseLinearPath& path = result.optimal_path;
    path.times.push_back(0.0);
    path.states.emplace_back(std::vector<double>(spec.n_routes(), 0.0));
    for (std::size_t k = 0; k < search.segments(); ++k) {
        path.times.push_back(path.times.back() + search.durations()[k]);
        path.states.emplace_back(search.points()[k]);
    }
    result.horizon = path.horizon();
    const PathCostReport report = path_cost_report(spec, path, opts.mode);
    result.value = report.total.value_or_inf();
    result.segments = report.segments;
    return result;
}

}  // namespace starld
