#include <doctest.h>

#include <random>

#include "starld/error.hpp"
#include "starld/model.hpp"
#include "support.hpp"

using namespace starld;

TEST_CASE("spec construction rejects malformed networks") {
    CHECK_THROWS_AS((void)NetworkSpec::from_ids({{1, 1.0}}, {}), InvalidArgument);
    CHECK_THROWS_AS((void)NetworkSpec::from_ids({{1, 1.0}, {2, -1.0}}, {{1, 2, 1.0, 1.0}}),
                    InvalidArgument);
    CHECK_THROWS_AS((void)NetworkSpec::from_ids({{1, 1.0}, {2, 1.0}}, {{1, 1, 1.0, 1.0}}),
                    InvalidArgument);
    CHECK_THROWS_AS((void)NetworkSpec::from_ids({{1, 1.0}, {2, 1.0}}, {{1, 2, 1.0, 1.0}, {2, 1, 1.0, 1.0}}),
                    InvalidArgument);
    CHECK_THROWS_AS((void)NetworkSpec::from_ids({{1, 1.0}, {2, 1.0}}, {{1, 3, 1.0, 1.0}}),
                    InvalidArgument);
    CHECK_THROWS_AS((void)NetworkSpec::from_ids({{1, 1.0}, {2, 1.0}}, {{1, 2, 0.0, 1.0}}),
                    InvalidArgument);
}

TEST_CASE("face partition on four channels") {
    const NetworkSpec spec = NetworkSpec::from_ids(
        {{1, 1.0}, {2, 1.0}, {3, 1.0}, {4, 1.0}},
        {{1, 2, 0.1, 1.0}, {3, 4, 0.1, 1.0}, {1, 3, 0.1, 1.0}, {1, 4, 0.1, 1.0},
         {2, 3, 0.1, 1.0}, {2, 4, 0.1, 1.0}});
    FluidState x(std::vector<double>(6, 0.0));
    x[spec.route_index_by_ids(1, 2)] = 0.7;
    const FacePartition f = face_partition(spec, x);
    REQUIRE(f.lambda.size() == 1);
    CHECK(f.lambda[0] == spec.route_index_by_ids(1, 2));
    CHECK(f.lambda1.size() == 4);
    REQUIRE(f.lambda2.size() == 1);
    CHECK(f.lambda2[0] == spec.route_index_by_ids(3, 4));
}

TEST_CASE("face partition honours zero_tol") {
    const NetworkSpec spec = test::fig4(0.2);
    const FluidState x({1.0, 1e-14, 0.0});
    CHECK(face_partition(spec, x).lambda.size() == 2);
    CHECK(face_partition(spec, x, 1e-12).lambda.size() == 1);
}

TEST_CASE("face partition is invariant under scaling") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const NetworkSpec spec = test::random_spec(rng, 5, true);
        const FluidState x = test::random_state(rng, spec, 0.5);
        const double c = std::exp(std::uniform_real_distribution<double>(-5.0, 5.0)(rng));
        FluidState y = x;
        for (double& v : y.x) {
            v *= c;
        }
        const FacePartition a = face_partition(spec, x);
        const FacePartition b = face_partition(spec, y);
        CHECK(a.lambda == b.lambda);
        CHECK(a.lambda1 == b.lambda1);
        CHECK(a.lambda2 == b.lambda2);
    }
}

TEST_CASE("min-policy route rates are invariant under scaling") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const NetworkSpec spec = test::random_spec(rng, 5, true);
        const FluidState x = test::random_state(rng, spec, 0.3);
        const double c = std::exp(std::uniform_real_distribution<double>(-4.0, 4.0)(rng));
        FluidState y = x;
        for (double& v : y.x) {
            v *= c;
        }
        // mu x_ij min(C_i/x_i, C_j/x_j) is homogeneous of degree zero.
        for (RouteIndex r = 0; r < spec.n_routes(); ++r) {
            const double a = service_rate(spec, Policy::min_policy(), x, r);
            const double b = service_rate(spec, Policy::min_policy(), y, r);
            CHECK(b == doctest::Approx(a).epsilon(1e-12));
        }
    }
}

TEST_CASE("allocations respect capacities; processor sharing saturates its anchor") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const NetworkSpec spec = test::random_spec(rng, 5, true);
        const FluidState x = test::random_state(rng, spec, 0.3);
        for (ChannelIndex c = 0; c < spec.n_channels(); ++c) {
            double used = 0.0;
            for (RouteIndex r : spec.routes_of(c)) {
                used += service_rate(spec, Policy::min_policy(), x, r) / spec.route(r).mu;
            }
            CHECK(used <= spec.capacity(c) * (1.0 + 1e-12));
        }
    }

    // A star around channel 1 so every route meets the anchor.
    const NetworkSpec star = NetworkSpec::from_ids(
        {{1, 2.0}, {2, 1.0}, {3, 1.0}, {4, 1.0}},
        {{1, 2, 0.2, 1.0}, {1, 3, 0.3, 2.0}, {1, 4, 0.1, 0.5}});
    const FluidState x({0.5, 1.5, 0.25});
    const Policy ps = Policy::processor_sharing(*star.channel_index(1));
    double used = 0.0;
    for (RouteIndex r = 0; r < star.n_routes(); ++r) {
        used += service_rate(star, ps, x, r) / star.route(r).mu;
    }
    CHECK(used == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("zero occupancy gets zero service (0/0 convention)") {
    const NetworkSpec spec = test::fig4(0.2);
    const FluidState x({0.0, 0.0, 0.0});
    for (RouteIndex r = 0; r < 3; ++r) {
        CHECK(service_rate(spec, Policy::min_policy(), x, r) == 0.0);
    }
}

TEST_CASE("fig4 ergodicity threshold sits at x = 0.5 on channel 3") {
    CHECK(is_ergodic(test::fig4(0.49)).ergodic);
    const ErgodicityReport bad = is_ergodic(test::fig4(0.5));
    CHECK_FALSE(bad.ergodic);
    REQUIRE(bad.overloaded().size() == 1);
    CHECK(test::fig4(0.5).channel(bad.overloaded()[0]).id == 3);
}

TEST_CASE("ergodicity is monotone in the rates and capacities") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> shrink(0.1, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const NetworkSpec spec = test::random_spec(rng, 5, false);
        if (!is_ergodic(spec).ergodic) {
            continue;
        }
        const RouteIndex r = std::uniform_int_distribution<RouteIndex>(0, spec.n_routes() - 1)(rng);
        const Route& route = spec.route(r);
        CHECK(is_ergodic(spec.with_route_rates(r, route.lambda * shrink(rng), route.mu)).ergodic);
        CHECK(is_ergodic(spec.with_route_rates(r, route.lambda, route.mu / shrink(rng))).ergodic);
        const ChannelIndex c =
            std::uniform_int_distribution<ChannelIndex>(0, spec.n_channels() - 1)(rng);
        CHECK(is_ergodic(spec.with_capacity(c, spec.capacity(c) / shrink(rng))).ergodic);
    }
}
