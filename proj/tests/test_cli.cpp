#include <doctest.h>

#include <cmath>
#include <sstream>

#include "starld/cli.hpp"
#include "starld/config_error.hpp"
#include "support.hpp"

using namespace starld;
using nlohmann::json;

namespace {

const char* kFig4Network = R"({
  "channels": [{"id": 1, "capacity": 3}, {"id": 2, "capacity": 2}, {"id": 3, "capacity": 1}],
  "routes": [{"i": 1, "j": 2, "lambda": 1, "mu": 1},
             {"i": 2, "j": 3, "lambda": 1, "mu": 2},
             {"i": 1, "j": 3, "lambda": 0.3, "mu": 1}]
})";

json fig4_doc() { return {{"network", json::parse(kFig4Network)}}; }

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run run(const std::string& verb, const json& doc, const std::filesystem::path& dir) {
    const std::filesystem::path cfg = dir / "config.json";
    {
        std::ofstream f(cfg);
        f << doc.dump(2);
    }
    std::ostringstream out;
    std::ostringstream err;
    RunContext ctx;
    ctx.out_dir = dir / "out";
    ctx.out = &out;
    ctx.err = &err;
    Run r;
    r.code = run_verb(verb, cfg, ctx);
    r.out = out.str();
    r.err = err.str();
    return r;
}

}  // namespace

TEST_CASE("config round trip is the identity on the canonical form") {
    json doc = fig4_doc();
    doc["rate"] = {{"x", {{"1-2", 1.0}}}};
    doc["simulate"] = {{"horizon", 1000.0},
                       {"seed", 5},
                       {"policy", {{"kind", "min"}}},
                       {"x0", {{"2-3", 3}}},
                       {"window", {0.8, 0.99}}};
    doc["optimize"] = {{"segments", 3}, {"target_channel", 2}};
    doc["sweep"] = {{"parameter", "routes.1-3.lambda"}, {"values", {0.1, 0.2}}};
    doc["stay_cost"] = {{"routes", {"1-3", "2-3"}}};
    doc["output"] = {{"directory", "elsewhere"}, {"formats", {"csv"}}};
    const json canonical = config_to_json(parse_config(doc));
    CHECK(config_to_json(parse_config(canonical)) == canonical);
    CHECK(canonical.at("simulate").at("x0").at("2-3") == 3);

    // Processor sharing needs an anchor every route touches: a star around 1.
    json star = {{"network", json::parse(R"({
      "channels": [{"id": 1, "capacity": 2}, {"id": 2, "capacity": 1}, {"id": 3, "capacity": 1}],
      "routes": [{"i": 1, "j": 2, "lambda": 0.3, "mu": 1}, {"i": 1, "j": 3, "lambda": 0.2, "mu": 1}]
    })")}};
    star["simulate"] = {{"horizon", 50.0}, {"policy", {{"kind", "processor_sharing"}, {"anchor", 1}}}};
    const json ps = config_to_json(parse_config(star));
    CHECK(config_to_json(parse_config(ps)) == ps);
    CHECK(ps.at("simulate").at("policy").at("anchor") == 1);
}

TEST_CASE("unknown keys and bad values are rejected with their field path") {
    const auto path_of = [](const json& doc) -> std::string {
        try {
            (void)parse_config(doc);
        } catch (const ConfigError& e) {
            return e.path();
        }
        return "(accepted)";
    };
    json doc = fig4_doc();
    doc["colour"] = "blue";
    CHECK(path_of(doc) == "(root).colour");

    doc = fig4_doc();
    doc["simulate"] = {{"horizon", 10.0}, {"sed", 1}};
    CHECK(path_of(doc) == "simulate.sed");

    doc = fig4_doc();
    doc["simulate"] = {{"horizon", 0.0}};
    CHECK(path_of(doc) == "simulate.horizon");

    doc = fig4_doc();
    doc["network"]["routes"][0]["rate"] = 1.0;
    CHECK(path_of(doc).rfind("network.routes", 0) == 0);

    doc = fig4_doc();
    doc["optimize"] = {{"target_channel", 9}};
    CHECK(path_of(doc) == "optimize.target_channel");

    doc = fig4_doc();
    doc["rate"] = {{"x", {{"1-4", 1.0}}}};
    CHECK(path_of(doc).rfind("rate.x", 0) == 0);

    doc = fig4_doc();
    doc["sweep"] = {{"parameter", "routes.1-2.speed"}, {"values", {1.0}}};
    CHECK(path_of(doc) == "sweep.parameter");
}

TEST_CASE("apply_parameter edits one field") {
    const NetworkSpec spec = fig4_network(0.3);
    CHECK(apply_parameter(spec, "routes.1-3.lambda", 0.45).route(2).lambda == 0.45);
    CHECK(apply_parameter(spec, "routes.2-3.mu", 5.0).route(1).mu == 5.0);
    CHECK(apply_parameter(spec, "channels.3.capacity", 4.0).capacity(2) == 4.0);
    CHECK_THROWS_AS((void)apply_parameter(spec, "channels.7.capacity", 1.0), ConfigError);
}

TEST_CASE("rate command reports the example value") {
    const auto dir = test::scratch_dir("rate");
    json doc = fig4_doc();
    doc["rate"] = {{"x", {{"1-2", 1.0}}}};
    const Run r = run("rate", doc, dir);
    CHECK(r.code == kExitOk);
    const json report = json::parse(test::slurp(dir / "out" / "rate.json"));
    CHECK(report.at("total").get<double>() == doctest::Approx(1.471572875).epsilon(1e-9));
    CHECK(report.at("jammed_cut").get<double>() == doctest::Approx(1.3).epsilon(1e-12));
    CHECK(r.out.find("L(x, D)") != std::string::npos);
}

TEST_CASE("exit codes") {
    const auto dir = test::scratch_dir("exit");

    json bad = fig4_doc();
    bad["simulate"] = {{"horizon", 0.0}};
    const Run zero = run("simulate", bad, dir);
    CHECK(zero.code == kExitValidation);
    CHECK(zero.err.find("simulate.horizon") != std::string::npos);

    json hot = fig4_doc();
    hot["network"]["routes"][2]["lambda"] = 0.8;
    hot["optimize"] = {{"target_channel", 3}};
    const Run overloaded = run("optimize", hot, dir);
    CHECK(overloaded.code == kExitValidation);
    CHECK(overloaded.err.find('3') != std::string::npos);

    hot["rate"] = {{"x", {{"1-2", 1.0}}}};
    CHECK(run("rate", hot, dir).code == kExitValidation);

    json sweep = fig4_doc();
    sweep["sweep"] = {{"values", {0.2, 0.6}}};
    const Run fig = run("example-fig4", sweep, dir);
    CHECK(fig.code == kExitValidation);
    CHECK(fig.err.find("ergodic") != std::string::npos);

    json tight = fig4_doc();
    tight["optimize"] = {{"target_channel", 2}, {"max_iterations", 1}, {"multistarts", 1}};
    const Run stalled = run("optimize", tight, dir);
    CHECK(stalled.code == kExitRuntime);
    const json result = json::parse(test::slurp(dir / "out" / "decay_result.json"));
    CHECK(result.at("results").at(0).at("status") == "not_converged");

    RunContext ctx;
    std::ostringstream sink;
    ctx.out = &sink;
    ctx.err = &sink;
    CHECK(run_verb("rate", std::nullopt, ctx) == kExitValidation);
    CHECK(run_verb("rate", dir / "missing.json", ctx) == kExitValidation);

    // An output directory that cannot be created is a runtime failure.
    std::ofstream(dir / "blocker") << "x";
    json ok = fig4_doc();
    ok["rate"] = {{"x", {{"1-2", 1.0}}}};
    {
        std::ofstream f(dir / "ok.json");
        f << ok.dump();
    }
    ctx.out_dir = dir / "blocker" / "inside";
    CHECK(run_verb("rate", dir / "ok.json", ctx) == kExitRuntime);
}

TEST_CASE("single-route simulate recovers log 2 within 3 standard errors") {
    const auto dir = test::scratch_dir("mm1");
    json doc = {{"network",
                 {{"channels", {{{"id", 1}, {"capacity", 2}}, {{"id", 2}, {"capacity", 3}}}},
                  {"routes", {{{"i", 1}, {"j", 2}, {"lambda", 1}, {"mu", 1}}}}}},
                {"simulate", {{"horizon", 1e6}, {"seed", 11}}}};
    const Run r = run("simulate", doc, dir);
    REQUIRE(r.code == kExitOk);
    std::istringstream csv(test::slurp(dir / "out" / "decay.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "channel,rate,stderr");
    std::getline(csv, line);
    double rate = 0.0;
    double se = 0.0;
    int channel = 0;
    char comma = 0;
    std::istringstream(line) >> channel >> comma >> rate >> comma >> se;
    CHECK(channel == 1);
    CHECK(std::abs(rate - std::log(2.0)) <= 3.0 * se);
}

TEST_CASE("reruns produce byte-identical outputs; timestamps only in run.log") {
    json doc = fig4_doc();
    doc["simulate"] = {{"horizon", 2e4}, {"seed", 3}};
    doc["sweep"] = {{"parameter", "routes.1-3.lambda"}, {"values", {0.1, 0.3}}};
    doc["optimize"] = {{"segments", 2}, {"multistarts", 3}, {"target_channel", 3}};
    doc["stay_cost"] = json::object();
    doc["rate"] = {{"x", {{"1-2", 1.0}, {"1-3", 0.5}}}, {"drift", {{"1-2", 0.2}}}};
    const auto a = test::scratch_dir("rerun_a");
    const auto b = test::scratch_dir("rerun_b");
    for (const char* verb : {"simulate", "optimize", "stay-cost", "rate"}) {
        CHECK(run(verb, doc, a).code == kExitOk);
        CHECK(run(verb, doc, b).code == kExitOk);
    }
    int compared = 0;
    for (const auto& entry : std::filesystem::directory_iterator(a / "out")) {
        const std::string name = entry.path().filename().string();
        if (name == "run.log") {
            continue;
        }
        CHECK_MESSAGE(test::slurp(entry.path()) == test::slurp(b / "out" / name), name);
        ++compared;
    }
    CHECK(compared >= 7);
    const std::string log = test::slurp(a / "out" / "run.log");
    CHECK(log.find("simulate started") != std::string::npos);
    CHECK(log.find("T") != std::string::npos);
}

TEST_CASE("stay-cost command on the overloaded example") {
    const auto dir = test::scratch_dir("stay");
    json doc = fig4_doc();
    doc["network"]["routes"][2]["lambda"] = 0.8;
    doc["stay_cost"] = json::object();
    REQUIRE(run("stay-cost", doc, dir).code == kExitOk);
    const json s = json::parse(test::slurp(dir / "out" / "stay_cost.json"));
    CHECK(s.at("value").get<double>() > 0.02);
}

TEST_CASE("numbers are written in shortest round-trip form") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(1e-300) == "1e-300");
    CHECK(std::stod(format_number(std::log(2.0))) == std::log(2.0));
}
