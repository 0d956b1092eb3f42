#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "starld/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Large-deviation rates, tail-decay optimization and simulation for star networks"};
    app.require_subcommand(1, 1);

    std::string config;
    std::string out;
    int threads = 1;
    std::uint64_t seed = 0;
    CLI::Option* config_opt =
        app.add_option("--config", config, "experiment configuration (JSON)")->check(CLI::ExistingFile);
    CLI::Option* out_opt = app.add_option("--out", out, "output directory (overrides output.directory)");
    app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 1024));
    CLI::Option* seed_opt = app.add_option("--seed", seed, "seed overriding the configured seeds");

    for (const char* verb : {"rate", "simulate", "optimize", "example-fig4", "stay-cost"}) {
        app.add_subcommand(verb)->fallthrough();
    }
    app.get_subcommand("rate")->description("local rate L(x, D) with its breakdown");
    app.get_subcommand("simulate")->description("simulate, write histograms and decay estimates");
    app.get_subcommand("optimize")->description("variational tail-decay estimate and optimal path");
    app.get_subcommand("example-fig4")->description("three-channel example sweep, plot-ready CSV");
    app.get_subcommand("stay-cost")->description("cost of staying near 0");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return starld::kExitValidation;
    }

    starld::RunContext ctx;
    ctx.threads = threads;
    ctx.out = &std::cout;
    ctx.err = &std::cerr;
    if (*out_opt) {
        ctx.out_dir = std::filesystem::path(out);
    }
    if (*seed_opt) {
        ctx.seed = seed;
    }
    std::optional<std::filesystem::path> config_path;
    if (*config_opt) {
        config_path = std::filesystem::path(config);
    }
    const std::string verb = app.get_subcommands().front()->get_name();
    return starld::run_verb(verb, config_path, ctx);
}
