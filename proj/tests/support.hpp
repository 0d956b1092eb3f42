#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "starld/cli.hpp"
#include "starld/model.hpp"

namespace test {

inline starld::NetworkSpec fig4(double x) { return starld::fig4_network(x); }

/// Random star network on 2..max_channels channels with at least one route.
/// With `ergodic`, arrival rates are scaled so that every channel load is at
/// most 0.9 of its capacity.
inline starld::NetworkSpec random_spec(std::mt19937_64& rng, int max_channels, bool ergodic) {
    using namespace starld;
    std::uniform_int_distribution<int> nch(2, max_channels);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    std::bernoulli_distribution keep(0.6);
    const int n = nch(rng);
    std::vector<Channel> channels;
    for (int i = 0; i < n; ++i) {
        channels.push_back({i + 1, u(rng)});
    }
    std::vector<NetworkSpec::RouteByIds> routes;
    for (int i = 1; i <= n; ++i) {
        for (int j = i + 1; j <= n; ++j) {
            if (keep(rng)) {
                routes.push_back({i, j, u(rng), u(rng)});
            }
        }
    }
    if (routes.empty()) {
        routes.push_back({1, 2, u(rng), u(rng)});
    }
    if (ergodic) {
        double worst = 0.0;
        for (const Channel& c : channels) {
            double load = 0.0;
            for (const auto& r : routes) {
                if (r.i == c.id || r.j == c.id) {
                    load += r.lambda / r.mu;
                }
            }
            worst = std::max(worst, load / c.capacity);
        }
        const double scale = std::uniform_real_distribution<double>(0.2, 0.9)(rng) / worst;
        for (auto& r : routes) {
            r.lambda *= scale;
        }
    }
    return NetworkSpec::from_ids(channels, routes);
}

/// Random fluid state; each entry is zero with probability p_zero.
inline starld::FluidState random_state(std::mt19937_64& rng, const starld::NetworkSpec& spec,
                                       double p_zero) {
    std::bernoulli_distribution zero(p_zero);
    std::uniform_real_distribution<double> u(0.05, 2.0);
    starld::FluidState x(std::vector<double>(spec.n_routes(), 0.0));
    for (double& v : x.x) {
        v = zero(rng) ? 0.0 : u(rng);
    }
    return x;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Fresh empty directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const std::filesystem::path dir = std::filesystem::temp_directory_path() / "starld_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace test
