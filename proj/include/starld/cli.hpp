#pragma once

// Experiment configuration documents and the command pipelines behind the
// starld executable.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "starld/model.hpp"
#include "starld/paths.hpp"
#include "starld/rate.hpp"
#include "starld/simulate.hpp"

namespace starld {

struct RateBlock {
    std::vector<double> x;      // per route
    std::vector<double> drift;  // per route
    RateMode mode = RateMode::Ergodic;
    double zero_tol = 0.0;
};

struct SimulateBlock {
    double horizon = 0.0;
    std::uint64_t seed = 1;
    Policy policy;
    DiscreteState x0;
    std::int64_t histogram_cap = 10000;
    DecayWindow window;
};

struct OptimizeBlock {
    OptimizeOptions options;
    std::optional<int> target_channel;  // external id; all channels when absent
};

/// A parameter path ("routes.1-3.lambda", "routes.2-3.mu", "channels.3.capacity")
/// and the values it takes.
struct SweepBlock {
    std::string parameter;
    std::vector<double> values;
};

struct StayCostBlock {
    std::vector<RouteIndex> routes;  // empty: all routes
};

struct OutputBlock {
    std::string directory = "out";
    std::vector<std::string> formats = {"json", "csv"};

    [[nodiscard]] bool wants(const std::string& format) const;
};

struct ExperimentConfig {
    std::optional<NetworkSpec> network;
    std::optional<RateBlock> rate;
    std::optional<SimulateBlock> simulate;
    std::optional<OptimizeBlock> optimize;
    std::optional<SweepBlock> sweep;
    std::optional<StayCostBlock> stay_cost;
    OutputBlock output;
};

/// Validates and converts a configuration document. Unknown keys, missing
/// fields and out-of-range values throw ConfigError with the field path.
[[nodiscard]] ExperimentConfig parse_config(const nlohmann::json& doc);

/// Canonical document for a configuration; parse_config(config_to_json(c)) == c.
[[nodiscard]] nlohmann::json config_to_json(const ExperimentConfig& config);

/// Reads and parses a JSON file. ConfigError on unreadable or malformed files.
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);

/// Copy of the network with one swept parameter set to value.
[[nodiscard]] NetworkSpec apply_parameter(const NetworkSpec& spec, const std::string& parameter,
                                          double value);

/// The example network: C = (3, 2, 1); lambda12 = mu12 = 1, lambda23 = 1,
/// mu23 = 2, lambda13 = x, mu13 = 1.
[[nodiscard]] NetworkSpec fig4_network(double x);

/// Settings shared by all commands, taken from the command line.
struct RunContext {
    std::optional<std::filesystem::path> out_dir;  // overrides output.directory
    int threads = 1;
    std::optional<std::uint64_t> seed;  // overrides block seeds
    std::ostream* out = nullptr;        // human-readable report
    std::ostream* err = nullptr;        // warnings
};

enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitRuntime = 3 };

int cmd_rate(const ExperimentConfig& config, const RunContext& ctx);
int cmd_simulate(const ExperimentConfig& config, const RunContext& ctx);
int cmd_optimize(const ExperimentConfig& config, const RunContext& ctx);
int cmd_example_fig4(const ExperimentConfig& config, const RunContext& ctx);
int cmd_stay_cost(const ExperimentConfig& config, const RunContext& ctx);

/// Runs a verb, maps exceptions to exit codes and appends start and finish
/// lines (the only timestamps) to run.log in the output directory.
int run_verb(const std::string& verb, const std::optional<std::filesystem::path>& config_path,
             const RunContext& ctx);

/// Shortest decimal text that reads back to the same double.
[[nodiscard]] std::string format_number(double v);

}  // namespace starld
