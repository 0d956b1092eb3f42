#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "starld/error.hpp"
#include "starld/rate.hpp"
#include "support.hpp"

using namespace starld;

namespace {

// Grid of (lambda, mu) in {0.1, ..., 5} and D in [-5, 5].
std::vector<double> rate_grid() {
    std::vector<double> v;
    for (int k = 0; k < 10; ++k) {
        v.push_back(0.1 + k * (5.0 - 0.1) / 9.0);
    }
    return v;
}

std::vector<double> drift_grid() {
    std::vector<double> v;
    for (int k = 0; k <= 20; ++k) {
        v.push_back(-5.0 + 0.5 * k);
    }
    return v;
}

// Truncated sum over k of Pois(nu)(k) log(Pois(nu)(k) / Pois(lambda)(k)).
double poisson_kl_series(double nu, double lambda) {
    double s = 0.0;
    for (int k = 0; k <= 50; ++k) {
        const double logp = -nu + k * std::log(nu) - std::lgamma(k + 1.0);
        const double logq = -lambda + k * std::log(lambda) - std::lgamma(k + 1.0);
        s += std::exp(logp) * (logp - logq);
    }
    return s;
}

}  // namespace

TEST_CASE("mm1_cost agrees with the Legendre and entropy oracles") {
    double worst = 0.0;
    for (double lambda : rate_grid()) {
        for (double mu : rate_grid()) {
            for (double d : drift_grid()) {
                const double v = mm1_cost(d, lambda, mu).value();
                worst = std::max(worst, std::abs(v - oracle::legendre_mm1(d, lambda, mu)));
                worst = std::max(worst, std::abs(v - oracle::entropy_mm1(d, lambda, mu)));
            }
        }
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("mm1_cost limits and infinities") {
    CHECK(mm1_cost(0.0, 1.3, 0.0).value() == doctest::Approx(1.3).epsilon(1e-15));
    CHECK(mm1_cost(0.0, 0.0, 0.7).value() == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(mm1_cost(0.5, 0.0, 1.0).is_infinite());
    CHECK(mm1_cost(-0.5, 1.0, 0.0).is_infinite());
    CHECK(mm1_cost(1.0, 2.0, 1.0).value() == doctest::Approx(0.0).epsilon(1e-15));
    // Near the natural drift the value is second order in the offset.
    const double eps = 1e-7;
    CHECK(mm1_cost(1.0 + eps, 2.0, 1.0).value() < 1e-13);
    CHECK(mm1_cost(1e6, 1.0, 1.0).value() ==
          doctest::Approx(oracle::entropy_mm1(1e6, 1.0, 1.0)).epsilon(1e-10));
}

TEST_CASE("poisson entropy matches the truncated KL series") {
    for (double nu : {0.1, 0.5, 1.0, 2.5, 5.0}) {
        for (double lambda : {0.2, 1.0, 3.0, 5.0}) {
            CHECK(poisson_entropy(nu, lambda).value() ==
                  doctest::Approx(poisson_kl_series(nu, lambda)).epsilon(1e-9));
        }
    }
    CHECK(poisson_entropy(0.0, 2.0).value() == 2.0);
    CHECK(poisson_entropy(1.0, 0.0).is_infinite());
    CHECK(poisson_entropy(0.0, 0.0).value() == 0.0);
}

TEST_CASE("entropy minimiser preserves the geometric mean") {
    for (double lambda : rate_grid()) {
        for (double mu : rate_grid()) {
            for (double d : drift_grid()) {
                const EntropyMinimum m = entropy_minimize(lambda, mu, d);
                CHECK(m.a_star * (m.a_star - d) == doctest::Approx(lambda * mu).epsilon(1e-10));
                CHECK(m.value.value() == doctest::Approx(mm1_cost(d, lambda, mu).value()).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("local rate of the three-channel example at (1,0,0)") {
    const double x13 = 0.3;
    const NetworkSpec spec = test::fig4(x13);
    const FluidState x({1.0, 0.0, 0.0});
    const std::vector<double> d(3, 0.0);
    // Route 1-2 is served at min(3, 2) = 2; routes 2-3 and 1-3 have their arrivals cut.
    const double expected = (1.0 + 2.0 - 2.0 * std::sqrt(2.0)) + 1.0 + x13;
    const LocalRateBreakdown b = local_rate_breakdown(spec, x, d, RateMode::Ergodic);
    CHECK(b.total.value() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(b.total.value() == doctest::Approx(1.471572875).epsilon(1e-9));
    CHECK(b.occupied.value() == doctest::Approx(3.0 - 2.0 * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(b.jammed.value() == doctest::Approx(1.3).epsilon(1e-12));
}

TEST_CASE("local rate vanishes on the natural drift") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const NetworkSpec spec = test::random_spec(rng, 5, true);
        FluidState x = test::random_state(rng, spec, 0.0);
        std::vector<double> d(spec.n_routes());
        for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
            d[r] = spec.route(r).lambda - service_rate(spec, Policy::min_policy(), x, r);
        }
        CHECK(local_rate(spec, x, d, RateMode::Ergodic).value() < 1e-12);
    }
}

TEST_CASE("ergodic mode on a non-ergodic network names the overloaded channel") {
    const NetworkSpec spec = test::fig4(0.8);
    const FluidState x({1.0, 0.0, 0.0});
    const std::vector<double> d(3, 0.0);
    try {
        (void)local_rate(spec, x, d, RateMode::Ergodic);
        FAIL("expected ModeMismatch");
    } catch (const ModeMismatch& e) {
        CHECK(std::string(e.what()).find('3') != std::string::npos);
    }
    CHECK(local_rate(spec, x, d, RateMode::General).is_finite());
}

TEST_CASE("negative drift on an empty route is rejected") {
    const NetworkSpec spec = test::fig4(0.3);
    const FluidState x({1.0, 0.0, 0.0});
    CHECK_THROWS_AS((void)local_rate(spec, x, std::vector<double>{0.0, -0.1, 0.0}, RateMode::Ergodic),
                    InvalidArgument);
}

TEST_CASE("general and ergodic modes agree on ergodic networks") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 200; ++trial) {
        const NetworkSpec spec = test::random_spec(rng, 5, true);
        const FluidState x = test::random_state(rng, spec, 0.5);
        const FacePartition face = face_partition(spec, x);
        std::vector<double> d(spec.n_routes(), 0.0);
        for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
            d[r] = face.in_lambda(r) ? n01(rng) : (face.in_lambda1(r) ? std::abs(n01(rng)) : 0.0);
        }
        const Cost e = local_rate(spec, x, d, RateMode::Ergodic);
        const Cost g = local_rate(spec, x, d, RateMode::General);
        CHECK(std::abs(e.value() - g.value()) <= 1e-10 * (1.0 + e.value()));
    }
}

TEST_CASE("local rate is strictly midpoint convex in D") {
    std::mt19937_64 rng(19);
    std::normal_distribution<double> n01;
    int strict = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const NetworkSpec spec = test::random_spec(rng, 5, true);
        const FluidState x = test::random_state(rng, spec, 0.4);
        const FacePartition face = face_partition(spec, x);
        std::vector<double> d1(spec.n_routes(), 0.0);
        std::vector<double> d2(spec.n_routes(), 0.0);
        for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
            if (face.in_lambda(r)) {
                d1[r] = 2.0 * n01(rng);
                d2[r] = 2.0 * n01(rng);
            } else if (face.in_lambda1(r)) {
                d1[r] = std::abs(n01(rng));
                d2[r] = std::abs(n01(rng));
            }
        }
        std::vector<double> mid(spec.n_routes());
        for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
            mid[r] = 0.5 * (d1[r] + d2[r]);
        }
        const double a = local_rate(spec, x, d1, RateMode::Ergodic).value();
        const double b = local_rate(spec, x, d2, RateMode::Ergodic).value();
        const double m = local_rate(spec, x, mid, RateMode::Ergodic).value();
        CHECK(m <= 0.5 * (a + b) + 1e-12);
        if (face.lambda.size() + face.lambda1.size() > 0) {
            CHECK(m < 0.5 * (a + b));
            ++strict;
        }
    }
    CHECK(strict > 100);
}

TEST_CASE("local rate grows at least like half |D| log |D|") {
    std::mt19937_64 rng(23);
    int checked[3] = {0, 0, 0};
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 200; ++trial) {
        const NetworkSpec spec = test::random_spec(rng, 5, true);
        FluidState x = test::random_state(rng, spec, 0.4);
        if (face_partition(spec, x).lambda.empty()) {
            x[0] = 1.0;
        }
        const FacePartition face = face_partition(spec, x);
        std::vector<double> dir(spec.n_routes(), 0.0);
        double norm = 0.0;
        while (norm == 0.0) {
            for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
                dir[r] = face.in_lambda(r) ? n01(rng) : (face.in_lambda1(r) ? std::abs(n01(rng)) : 0.0);
            }
            norm = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
        }
        // The bound holds past a spec-dependent M. From l(D|lambda,mu) >= |D|(log(|D|/m) - 1),
        // m = max(lambda, mu), a sufficient threshold for direction u is
        // log M = sum |u|(log m + 1 - log |u|) / (sum |u| - 1/2).
        double m = 0.0;
        for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
            const Route& rt = spec.route(r);
            m = std::max({m, rt.lambda,
                          rt.mu * std::max(spec.capacity(rt.first), spec.capacity(rt.second))});
        }
        double l1 = 0.0;
        double num = 0.0;
        for (double v : dir) {
            const double u = std::abs(v) / norm;
            if (u > 0.0) {
                l1 += u;
                num += u * (std::log(m) + 1.0 - std::log(u));
            }
        }
        const double log_m = num / (l1 - 0.5);
        for (double log_scale : {4.0, 6.0, 8.0}) {
            if (log_scale < log_m) {
                continue;
            }
            const double scale = std::exp(log_scale);
            std::vector<double> d(dir.size());
            for (RouteIndex r = 0; r < d.size(); ++r) {
                d[r] = dir[r] / norm * scale;
            }
            CHECK(local_rate(spec, x, d, RateMode::Ergodic).value() >= 0.5 * scale * log_scale);
            checked[static_cast<int>(log_scale) / 2 - 2] += 1;
        }
    }
    CHECK(checked[2] >= 150);
    MESSAGE("bound checked at e^4, e^6, e^8: " << checked[0] << ", " << checked[1] << ", "
                                               << checked[2] << " of 200");
}

TEST_CASE("relative entropy of the natural and optimal generators") {
    std::mt19937_64 rng(29);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 100; ++trial) {
        const NetworkSpec spec = test::random_spec(rng, 5, true);
        // In the interior the natural generator is feasible and costs nothing.
        const FluidState inner = test::random_state(rng, spec, 0.0);
        CHECK(relative_entropy(spec, inner, natural_generator(spec, inner)).value() == 0.0);
        const FluidState x = test::random_state(rng, spec, 0.4);
        const FacePartition face = face_partition(spec, x);
        std::vector<double> d(spec.n_routes(), 0.0);
        for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
            d[r] = face.in_lambda(r) ? n01(rng) : 0.0;
        }
        const TiltedGenerator g = optimal_generator(spec, x, d);
        check_feasible(spec, face, g);
        CHECK(relative_entropy(spec, x, g).value() ==
              doctest::Approx(local_rate(spec, x, d, RateMode::Ergodic).value()).epsilon(1e-10));
        const std::vector<double> gd = generator_drift(face, g);
        for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
            CHECK(gd[r] == doctest::Approx(d[r]).epsilon(1e-10).scale(1.0));
        }
    }
}

TEST_CASE("infeasible generators are rejected") {
    const NetworkSpec spec = test::fig4(0.3);
    const FluidState x({1.0, 0.0, 0.0});
    const FacePartition face = face_partition(spec, x);
    TiltedGenerator g = natural_generator(spec, x);
    g.lambda_tilde[1] = 0.5;  // arrivals on a jammed route
    CHECK_THROWS_AS(check_feasible(spec, face, g), InvalidArgument);
    g = natural_generator(spec, x);
    g.mu_tilde[0] = -1.0;
    CHECK_THROWS_AS(check_feasible(spec, face, g), InvalidArgument);

    TransientGenerator t{{0.5, 0.5, 0.1}, {3.0, 0.5, 0.5}};  // channel 1 over capacity
    CHECK_THROWS_AS(check_feasible(spec, t), InvalidArgument);
    t = {{0.5, 0.5, 0.1}, {1.0, 0.5, 0.0}};  // arrivals where nothing is allocated
    CHECK_THROWS_AS(check_feasible(spec, t), InvalidArgument);
}

TEST_CASE("stay cost is zero on ergodic networks") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const NetworkSpec spec = test::random_spec(rng, 5, true);
        const StayCostResult s = stay_cost_transient(spec);
        CHECK(s.value <= 1e-9);
        CHECK(in_capacity_set(spec, s.allocation.nu, 1e-12));
    }
}

TEST_CASE("stay cost of a single overloaded route") {
    const NetworkSpec spec = NetworkSpec::from_ids({{1, 1.0}, {2, 1.0}}, {{1, 2, 2.0, 1.0}});
    const StayCostResult s = stay_cost_transient(spec);
    CHECK(s.value == doctest::Approx(std::pow(std::sqrt(2.0) - 1.0, 2)).epsilon(1e-8));
    CHECK(s.converged);
}

TEST_CASE("stay cost matches a zoomed grid oracle on three-route networks") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        const NetworkSpec spec = NetworkSpec::from_ids(
            {{1, u(rng)}, {2, u(rng)}, {3, u(rng)}},
            {{1, 2, 2.0 * u(rng), u(rng)}, {2, 3, 2.0 * u(rng), u(rng)}, {1, 3, 2.0 * u(rng), u(rng)}});
        const auto term = [&](RouteIndex r, double nu) {
            const Route& rt = spec.route(r);
            const double v = std::sqrt(rt.lambda) - std::sqrt(rt.mu * std::max(nu, 0.0));
            return v * v;
        };
        // Grid over (nu_12, nu_23); nu_13 takes as much as its channels leave,
        // capped at lambda/mu where its term is minimal.
        const double c1 = spec.capacity(0);
        const double c2 = spec.capacity(1);
        const double c3 = spec.capacity(2);
        const auto value = [&](double a, double b) {
            if (a < 0.0 || b < 0.0 || a + b > c2) {
                return std::numeric_limits<double>::infinity();
            }
            const double room = std::min(c1 - a, c3 - b);
            if (room < 0.0) {
                return std::numeric_limits<double>::infinity();
            }
            const double c = std::min(room, spec.route(2).lambda / spec.route(2).mu);
            return term(0, a) + term(1, b) + term(2, c);
        };
        double best = std::numeric_limits<double>::infinity();
        double ca = 0.0;
        double cb = 0.0;
        double step = std::max({c1, c2, c3}) / 200.0;
        for (int level = 0; level < 5; ++level) {
            const double a0 = level == 0 ? 0.0 : ca - 100 * step;
            const double b0 = level == 0 ? 0.0 : cb - 100 * step;
            for (int i = 0; i <= 200; ++i) {
                for (int j = 0; j <= 200; ++j) {
                    const double v = value(a0 + i * step, b0 + j * step);
                    if (v < best) {
                        best = v;
                        ca = a0 + i * step;
                        cb = b0 + j * step;
                    }
                }
            }
            step /= 20.0;
        }
        const StayCostResult s = stay_cost_transient(spec);
        CHECK(s.value == doctest::Approx(best).epsilon(1e-5).scale(1.0));
        CHECK(s.value <= best + 1e-12);
    }
}

TEST_CASE("stay-cost objective is convex in sqrt(nu)") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const NetworkSpec spec = test::random_spec(rng, 5, false);
        std::vector<RouteIndex> all(spec.n_routes());
        std::iota(all.begin(), all.end(), RouteIndex{0});
        std::vector<double> s1(spec.n_routes());
        std::vector<double> s2(spec.n_routes());
        std::vector<double> mid(spec.n_routes());
        for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
            s1[r] = 2.0 * u(rng);
            s2[r] = 2.0 * u(rng);
            mid[r] = 0.5 * (s1[r] + s2[r]);
        }
        CHECK(stay_cost_objective_sqrt(spec, all, mid) <=
              0.5 * (stay_cost_objective_sqrt(spec, all, s1) + stay_cost_objective_sqrt(spec, all, s2)) +
                  1e-12);
    }
}
