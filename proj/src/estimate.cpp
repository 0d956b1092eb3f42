#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "starld/error.hpp"
#include "starld/simulate.hpp"

namespace starld {

namespace {

struct Fit {
    double slope = 0.0;
    double stderr_ = 0.0;
    int bins = 0;
};

// OLS slope of n -> -log h[n] over the nonempty bins in [lo, hi].
Fit fit_slope(const std::vector<double>& h, std::int64_t lo, std::int64_t hi) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::int64_t n = lo; n <= hi; ++n) {
        const double mass = h[static_cast<std::size_t>(n)];
        if (mass > 0.0) {
            xs.push_back(static_cast<double>(n));
            ys.push_back(-std::log(mass));
        }
    }
    Fit f;
    f.bins = static_cast<int>(xs.size());
    if (xs.size() < 3) {
        return f;
    }
    const auto k = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= k;
    my /= k;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    f.slope = sxy / sxx;
    const double intercept = my - f.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - intercept - f.slope * xs[i];
        rss += e * e;
    }
    f.stderr_ = std::sqrt(rss / (k - 2.0) / sxx);
    return f;
}

}  // namespace

DecayEstimate estimate_decay_rate(const TrajectoryStats& stats, ChannelIndex channel,
                                  const DecayWindow& window) {
    if (channel >= stats.histogram.size()) {
        throw InvalidArgument("estimate_decay_rate: unknown channel index " +
                              std::to_string(channel));
    }
    if (!(window.low >= 0.0) || !(window.high <= 1.0) || !(window.low < window.high)) {
        throw InvalidArgument("estimate_decay_rate: window must satisfy 0 <= low < high <= 1");
    }
    const std::vector<double>& h = stats.histogram[channel];
    const double total = pairwise_sum(h);
    if (!(total > 0.0)) {
        throw InsufficientData("estimate_decay_rate: empty histogram");
    }
    // Window ends: occupancy quantiles of the time-weighted distribution.
    DecayEstimate out;
    out.n_low = -1;
    out.n_high = static_cast<std::int64_t>(h.size()) - 1;
    double cumulative = 0.0;
    for (std::size_t n = 0; n < h.size(); ++n) {
        cumulative += h[n];
        if (out.n_low < 0 && cumulative >= window.low * total) {
            out.n_low = static_cast<std::int64_t>(n);
        }
        if (cumulative >= window.high * total) {
            out.n_high = static_cast<std::int64_t>(n);
            break;
        }
    }

    const Fit full = fit_slope(h, out.n_low, out.n_high);
    out.bins = full.bins;
    if (full.bins < 4) {
        throw InsufficientData("estimate_decay_rate: only " + std::to_string(full.bins) +
                               " nonempty bins between occupancies " + std::to_string(out.n_low) +
                               " and " + std::to_string(out.n_high) + " (4 needed)");
    }
    out.rate = full.slope;
    out.regression_stderr = full.stderr_;
    out.stderr_ = full.stderr_;

    // Delete-one-block jackknife. Neighbouring bins share excursions, so the
    // residual-based value above understates the spread badly.
    const std::size_t nb = stats.block_histogram.size();
    if (nb < 2) {
        return out;
    }
    std::vector<double> loo(h.size());
    std::vector<double> slopes;
    slopes.reserve(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        const std::vector<double>& hb = stats.block_histogram[b].at(channel);
        for (std::size_t n = 0; n < h.size(); ++n) {
            loo[n] = h[n] - (n < hb.size() ? hb[n] : 0.0);
        }
        const Fit f = fit_slope(loo, out.n_low, out.n_high);
        if (f.bins < 3) {
            return out;  // too thin to jackknife; keep the regression value
        }
        slopes.push_back(f.slope);
    }
    double mean = 0.0;
    for (double v : slopes) {
        mean += v;
    }
    mean /= static_cast<double>(nb);
    double ss = 0.0;
    for (double v : slopes) {
        ss += (v - mean) * (v - mean);
    }
    out.stderr_ = std::sqrt(ss * static_cast<double>(nb - 1) / static_cast<double>(nb));
    return out;
}

EmpiricalGenerator empirical_generator(const TrajectoryStats& stats) {
    if (!(stats.horizon > 0.0)) {
        throw InvalidArgument("empirical_generator: horizon must be positive");
    }
    const std::size_t n = stats.arrivals.size();
    EmpiricalGenerator g;
    g.a.resize(n);
    g.d.resize(n);
    g.nu_bar = stats.time_averaged_allocation();
    for (std::size_t r = 0; r < n; ++r) {
        g.a[r] = static_cast<double>(stats.arrivals[r]) / stats.horizon;
        g.d[r] = static_cast<double>(stats.final_state[r] - stats.initial_state[r]) / stats.horizon;
    }
    return g;
}

EmpiricalGenerator empirical_generator(const TrajectoryStats& stats, const FacePartition& face) {
    EmpiricalGenerator g = empirical_generator(stats);
    if (face.block.size() != g.a.size()) {
        throw InvalidArgument("empirical_generator: face does not match the route count");
    }
    for (std::size_t r = 0; r < g.a.size(); ++r) {
        if (face.in_lambda2(r)) {
            g.a[r] = 0.0;
            g.d[r] = 0.0;
        }
    }
    return g;
}

}  // namespace starld
