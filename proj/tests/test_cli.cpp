#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cli.hpp"
#include "shardalloc/core_model.hpp"
#include "shardalloc/experiments.hpp"
#include "test_support.hpp"

#include <json.hpp>

#include <iostream>
#include <sstream>

using shardalloc::cli::cli_dispatch;
using nlohmann::json;

namespace {

// Captures std::cout and std::cerr while a command runs.
struct Captured {
    int code;
    std::string out, err;
};

Captured run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    auto* old_out = std::cout.rdbuf(out.rdbuf());
    auto* old_err = std::cerr.rdbuf(err.rdbuf());
    const int code = cli_dispatch(args);
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    return {code, out.str(), err.str()};
}

} // namespace

TEST_CASE("help and usage errors") {
    const Captured help = run({"--help"});
    CHECK(help.code == 0);
    for (const char* sub : {"gen", "solve", "baseline", "simulate", "experiment", "validate"})
        CHECK(help.out.find(sub) != std::string::npos);
    const Captured sub_help = run({"solve", "--help"});
    CHECK(sub_help.code == 0);
    CHECK(sub_help.out.find("--variant") != std::string::npos);

    CHECK(run({}).code == 1);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"solve", "/nonexistent.json"}).code == 1);
    CHECK(run({"gen", "--nodes", "abc"}).code == 1);
}

TEST_CASE("gen then solve") {
    test::TempDir dir;
    const std::string inst = (dir / "inst.json").string(), sol = (dir / "sol.json").string();
    REQUIRE(run({"gen", "--nodes", "50", "--mean", "36.8", "--std", "6.7", "--max-diff", "31",
                 "--seed", "7", "-o", inst})
                .code == 0);
    const auto loaded = shardalloc::load_instance(inst);
    CHECK(loaded.size() == 50);
    CHECK(shardalloc::instance_stats(loaded).max_difference <= 31.0);

    REQUIRE(run({"solve", inst, "--tau", "0.001", "--s-max", "10", "--variant", "rederived", "-o", sol,
                 "--alloc-csv", (dir / "alloc.csv").string()})
                .code == 0);
    const json doc = json::parse(test::slurp(sol));
    CHECK(doc["status"] == "SHARDED");
    CHECK(doc["sigma_star"] == 10);
    CHECK(doc["throughput"] == 20000.0);
    CHECK(std::filesystem::exists(dir / "alloc.csv"));
}

TEST_CASE("runtime failures exit with code 2") {
    test::TempDir dir;
    test::spit(dir / "broken.json", "{\"tau\": 0.001}");
    const Captured r = run({"solve", (dir / "broken.json").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("error:") != std::string::npos);
    CHECK(run({"solve", (dir / "broken.json").string(), "--variant", "wrong"}).code == 2);
}

TEST_CASE("baseline command") {
    test::TempDir dir;
    shardalloc::save_instance(shardalloc::make_uniform_instance(50, 10, 0.1, 0.001, 6), dir / "i.json");
    const Captured search = run({"baseline", (dir / "i.json").string(), "--method", "uniform"});
    REQUIRE(search.code == 0);
    const json s = json::parse(search.out);
    CHECK(s["status"] == "SHARDED");
    CHECK(s["sigma_star"] == 6);

    const Captured fixed = run({"baseline", (dir / "i.json").string(), "--method", "greedy", "--sigma", "2"});
    REQUIRE(fixed.code == 0);
    CHECK(json::parse(fixed.out)["status"] == "FEASIBLE");
}

TEST_CASE("simulate command") {
    test::TempDir dir;
    shardalloc::save_instance(shardalloc::make_uniform_instance(50, 10, 0.1, 0.001, 4), dir / "i.json");
    test::spit(dir / "sim.json", R"({"epochs": 5, "slots_per_epoch": 2})");
    const Captured r = run({"simulate", (dir / "i.json").string(), "--config", (dir / "sim.json").string(),
                            "--epochs", "7", "--epoch-csv", (dir / "trace.csv").string()});
    REQUIRE(r.code == 0);
    const json doc = json::parse(r.out);
    CHECK(doc["epochs"].size() == 7);
    CHECK(doc["attacked_fraction"] == 0.0);
    CHECK(std::filesystem::exists(dir / "trace.csv"));
}

TEST_CASE("experiment and validate commands") {
    test::TempDir dir;
    const auto out = dir / "results";
    test::spit(dir / "exp.json", R"({
        "shard_counts": [1, 2, 5],
        "methods": ["LGRN_REDERIVED", "UNIFORM"],
        "instances": [{"label": "small", "generate": {"n_nodes": 20, "mean": 30, "std": 4, "max_difference": 40}}]
    })");
    REQUIRE(run({"experiment", "pr51_vs_shards", "--config", (dir / "exp.json").string(), "--output-dir",
                 out.string(), "--no-timing"})
                .code == 0);
    const auto rows = shardalloc::read_results_csv(out / "pr51_vs_shards.csv");
    CHECK(rows.size() == 6);

    const Captured v = run({"validate", "--results", out.string()});
    CHECK(v.code == 0);
    CHECK(v.out.find("FAIL") == std::string::npos);
    CHECK(run({"experiment", "fig9"}).code == 2);
}
