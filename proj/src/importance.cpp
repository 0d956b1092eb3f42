#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "engine.hpp"
#include "starld/error.hpp"
#include "starld/simulate.hpp"

namespace starld {

namespace {

/// Runs the replications under `sampling`; value_k = event_k * exp(log dP_ref/dP_sampling).
ImportanceEstimate weighted_replications(const Dynamics& sampling, const Dynamics& reference,
                                         const DiscreteState& x0, const TrajectoryEvent& event,
                                         double horizon, const ReplicationOptions& opts) {
    if (opts.replications < 2) {
        throw InvalidArgument("importance sampling: at least 2 replications are needed");
    }
    const std::size_t reps = opts.replications;
    ImportanceEstimate out;
    out.replications = reps;
    out.log_weights.assign(reps, 0.0);
    std::vector<char> hits(reps, 0);

    SimulationOptions sim;
    sim.histogram_cap = opts.histogram_cap;
    sim.blocks = 0;

    std::exception_ptr failure;
    std::size_t failed_at = reps;
    std::mutex failure_mutex;
    auto work = [&](std::size_t begin, std::size_t stride) {
        detail::Engine engine(sampling, &reference, sim);
        for (std::size_t k = begin; k < reps; k += stride) {
            try {
                std::mt19937_64 rng(stream_seed(opts.seed, k));
                double log_lr = 0.0;
                const TrajectoryStats st = engine.run(x0, horizon, rng, &log_lr);
                out.log_weights[k] = log_lr;
                hits[k] = event(st) ? 1 : 0;
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (k < failed_at) {
                    failed_at = k;
                    failure = std::current_exception();
                }
                return;
            }
        }
    };
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(1, opts.threads)), reps);
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(work, w, workers);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (failure) {
        try {
            std::rethrow_exception(failure);
        } catch (const AbsoluteContinuityBreach& e) {
            throw AbsoluteContinuityBreach("replication " + std::to_string(failed_at) +
                                           " invalid: " + e.what());
        }
    }

    std::vector<double> values(reps, 0.0);
    out.hits.resize(reps);
    for (std::size_t k = 0; k < reps; ++k) {
        out.hits[k] = hits[k] != 0;
        values[k] = hits[k] != 0 ? std::exp(out.log_weights[k]) : 0.0;
    }
    const auto n = static_cast<double>(reps);
    out.estimate = pairwise_sum(values) / n;
    std::vector<double> sq(reps);
    for (std::size_t k = 0; k < reps; ++k) {
        sq[k] = (values[k] - out.estimate) * (values[k] - out.estimate);
    }
    out.standard_error = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
    return out;
}

}  // namespace

ImportanceEstimate importance_run(const NetworkSpec& spec, const Dynamics& tilted,
                                  const DiscreteState& x0, const TrajectoryEvent& event,
                                  double horizon, const ReplicationOptions& opts) {
    const Dynamics natural = Dynamics::natural(spec);
    return weighted_replications(tilted, natural, x0, event, horizon, opts);
}

ImportanceEstimate martingale_run(const NetworkSpec& spec, const Dynamics& tilted,
                                  const DiscreteState& x0, double horizon,
                                  const ReplicationOptions& opts) {
    const Dynamics natural = Dynamics::natural(spec);
    return weighted_replications(natural, tilted, x0, [](const TrajectoryStats&) { return true; },
                                 horizon, opts);
}

}  // namespace starld
