#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "shardalloc/errors.hpp"
#include "shardalloc/experiments.hpp"
#include "test_support.hpp"

#include <cmath>
#include <map>

using namespace shardalloc;
namespace fs = std::filesystem;

namespace {

const ResultRow& find_row(const std::vector<ResultRow>& rows, const std::string& label,
                          const std::string& method, int sigma, bool grid = true) {
    for (const auto& r : rows)
        if (r.instance_label == label && r.method == method && r.sigma == sigma &&
            is_grid_status(r.status) == grid)
            return r;
    FAIL("row not found: " << label << " " << method << " " << sigma);
    throw std::logic_error("unreachable");
}

ExperimentConfig small_config(ExperimentId id, const fs::path& out) {
    ExperimentConfig c = default_experiment_config(id);
    c.output_dir = out;
    c.record_timing = false;
    return c;
}

InstanceSource generated(const std::string& label, int n, double mean, double std_dev,
                         double max_diff, int s_max, std::uint64_t seed) {
    InstanceGenConfig g;
    g.n_nodes = n;
    g.score_mean = mean;
    g.score_std = std_dev;
    g.max_difference = max_diff;
    g.s_max = s_max;
    g.rng_seed = seed;
    return {label, std::nullopt, g};
}

} // namespace

TEST_CASE("experiment and method names round trip") {
    for (auto id : {ExperimentId::Pr51VsShards, ExperimentId::ThroughputAndTime,
                    ExperimentId::AdvProbSweep, ExperimentId::MeanStdSweep})
        CHECK(parse_experiment_id(to_string(id)) == id);
    for (auto m : {Method::LgrnRederived, Method::LgrnPaperLiteral, Method::Uniform, Method::Greedy,
                   Method::RandomRestart, Method::Exhaustive})
        CHECK(parse_method(to_string(m)) == m);
    CHECK_THROWS_AS(parse_experiment_id("fig9"), Error);
    CHECK_THROWS_AS(parse_method("CPLEX"), Error);
}

TEST_CASE("reference instance shapes") {
    const auto table = table1_instances(7, 0.1, 0.001, 20, 2000);
    REQUIRE(table.size() == 5);
    const int nodes[] = {25, 50, 100, 150, 200};
    for (std::size_t i = 0; i < 5; ++i) {
        REQUIRE(table[i].generate);
        CHECK(table[i].generate->n_nodes == nodes[i]);
        CHECK(table[i].generate->rng_seed == 7 + i);
    }
    CHECK(table[1].generate->score_mean == 36.8);
    CHECK(table[1].generate->max_difference == 31.0);
}

TEST_CASE("default configs have non-empty grids") {
    for (auto id : {ExperimentId::Pr51VsShards, ExperimentId::ThroughputAndTime,
                    ExperimentId::AdvProbSweep, ExperimentId::MeanStdSweep}) {
        const ExperimentConfig c = default_experiment_config(id);
        CHECK_FALSE(c.methods.empty());
    }
    CHECK(default_experiment_config(ExperimentId::Pr51VsShards).shard_counts.size() == 20);
    CHECK_FALSE(default_experiment_config(ExperimentId::ThroughputAndTime).s_max_grid.empty());
    CHECK_FALSE(default_experiment_config(ExperimentId::AdvProbSweep).p_scale_percent.empty());
    CHECK_FALSE(default_experiment_config(ExperimentId::MeanStdSweep).stds.empty());
}

TEST_CASE("config documents override defaults") {
    const ExperimentConfig c = experiment_config_from_json(R"({
        "experiment_id": "pr51_vs_shards",
        "methods": ["LGRN_REDERIVED", "GREEDY"],
        "shard_counts": [1, 2, 3],
        "tau": 0.01,
        "rng_seed": 5,
        "restart_budget": 9,
        "record_timing": false,
        "output_dir": "out",
        "instances": [
          {"label": "a", "generate": {"n_nodes": 12, "mean": 20, "std": 2, "max_difference": 20}},
          {"label": "b", "file": "b.json"}
        ]})");
    CHECK(c.id == ExperimentId::Pr51VsShards);
    CHECK(c.methods == std::vector<Method>{Method::LgrnRederived, Method::Greedy});
    CHECK(c.shard_counts == std::vector<int>{1, 2, 3});
    CHECK(c.tau == 0.01);
    CHECK(c.baseline.restart_budget == 9);
    CHECK_FALSE(c.record_timing);
    CHECK(c.output_dir == "out");
    REQUIRE(c.instances.size() == 2);
    CHECK(c.instances[0].generate->n_nodes == 12);
    CHECK(c.instances[0].generate->tau == 0.01);
    CHECK(c.instances[0].generate->rng_seed == 5);
    CHECK(c.instances[1].file == fs::path("b.json"));

    CHECK(experiment_config_from_json("{}", ExperimentId::MeanStdSweep).id == ExperimentId::MeanStdSweep);
    CHECK_THROWS_AS(experiment_config_from_json(R"({"methods": []})", ExperimentId::Pr51VsShards),
                    InvariantViolation);
    CHECK_THROWS_AS(experiment_config_from_json(R"({"methods": ["X"]})", ExperimentId::Pr51VsShards), Error);
    CHECK_THROWS_AS(experiment_config_from_json(R"({"instances": [{"label": "x"}]})",
                                                ExperimentId::Pr51VsShards),
                    MalformedFile);
    CHECK_THROWS_AS(experiment_config_from_json("{", ExperimentId::Pr51VsShards), MalformedFile);
}

TEST_CASE("results CSV round trip") {
    test::TempDir dir;
    std::vector<ResultRow> rows{
        {"pr51_vs_shards", "inst1", "UNIFORM", 3, 1.2345678901234567e-7, 6000, 0.0, 0, "FEASIBLE"},
        {"pr51_vs_shards", "inst1", "LGRN_REDERIVED", 0, 0.5, 0, 0.0, 5, "UNSAFE"},
    };
    write_results_csv(rows, dir / "r.csv");
    CHECK(read_results_csv(dir / "r.csv") == rows);
    test::spit(dir / "bad.csv", "a,b\n1,2\n");
    CHECK_THROWS_AS(read_results_csv(dir / "bad.csv"), MalformedFile);
}

TEST_CASE("pr51 versus shard count") {
    test::TempDir dir;
    ExperimentConfig c = small_config(ExperimentId::Pr51VsShards, dir.path());
    c.instances = {generated("eq", 6, 10, 0, 1, 6, 1), generated("mid", 40, 36.8, 6.7, 31, 12, 2)};
    c.shard_counts = {1, 2, 3, 6};
    c.methods = {Method::LgrnRederived, Method::LgrnPaperLiteral, Method::Uniform, Method::Greedy,
                 Method::RandomRestart, Method::Exhaustive};
    const auto rows = run_experiment(c);
    CHECK(rows.size() == 2 * 4 * 6);
    CHECK(fs::exists(dir / "pr51_vs_shards.csv"));

    for (const std::string label : {"eq", "mid"}) {
        // Sigma = 1 is forced, so every method that ran agrees.
        const double base = find_row(rows, label, "LGRN_REDERIVED", 1).pr51;
        for (const auto& r : rows)
            if (r.instance_label == label && r.sigma == 1 && is_grid_status(r.status))
                CHECK(r.pr51 == doctest::Approx(base).epsilon(1e-12));
        // LGRN stays flat across shard counts.
        for (int s : {2, 3, 6})
            CHECK(find_row(rows, label, "LGRN_REDERIVED", s).pr51 == doctest::Approx(base).epsilon(1e-9));
    }
    // Whole-score greedy with one equal-score user per shard: exp(-2 * 0.4^2).
    CHECK(find_row(rows, "eq", "GREEDY", 6).pr51 == doctest::Approx(std::exp(-0.32)));
    // Exhaustive is only defined on tiny instances.
    CHECK(find_row(rows, "mid", "EXHAUSTIVE", 2, false).status == "INSTANCE_TOO_LARGE");
}

TEST_CASE("stored allocations re-validate and reruns are byte identical") {
    test::TempDir a, b;
    ExperimentConfig c = small_config(ExperimentId::Pr51VsShards, a.path());
    c.instances = {generated("x", 30, 30, 5, 40, 8, 3)};
    c.shard_counts = {1, 4, 8};
    run_experiment(c);
    c.output_dir = b.path();
    run_experiment(c);
    CHECK(test::slurp(a / "pr51_vs_shards.csv") == test::slurp(b / "pr51_vs_shards.csv"));
    const RevalidationSummary sum = revalidate_results(a.path());
    CHECK(sum.ok());
    CHECK(sum.checked == sum.rows);
    CHECK(sum.checked == 12);
}

TEST_CASE("tampered results fail re-validation") {
    test::TempDir dir;
    ExperimentConfig c = small_config(ExperimentId::Pr51VsShards, dir.path());
    c.instances = {generated("x", 30, 30, 5, 40, 8, 3)};
    c.shard_counts = {2};
    c.methods = {Method::Uniform};
    auto rows = run_experiment(c);
    rows[0].pr51 *= 1.001;
    write_results_csv(rows, dir / "pr51_vs_shards.csv");
    const RevalidationSummary sum = revalidate_results(dir.path());
    CHECK_FALSE(sum.ok());
    CHECK(sum.mismatches == 1);
}

TEST_CASE("instance files used as sources are not modified") {
    test::TempDir dir;
    InstanceGenConfig g;
    g.s_max = 4;
    save_instance(generate_instance(g), dir / "src.json");
    const std::string before = test::slurp(dir / "src.json");
    ExperimentConfig c = small_config(ExperimentId::ThroughputAndTime, dir / "out");
    c.instances = {{"file", dir / "src.json", std::nullopt}};
    c.s_max_grid = {2, 4};
    run_experiment(c);
    CHECK(test::slurp(dir / "src.json") == before);
}

TEST_CASE("throughput and running time") {
    test::TempDir dir;
    ExperimentConfig c = small_config(ExperimentId::ThroughputAndTime, dir.path());
    c.instances = {generated("inst2", 50, 36.8, 6.7, 31, 10, 7)};
    c.s_max_grid = {4, 10};
    c.baseline.restart_budget = 1;
    const auto rows = run_experiment(c);
    CHECK(rows.size() == 2 * c.methods.size());
    const ResultRow& lgrn = find_row(rows, "inst2/S10", "LGRN_REDERIVED", 10, false);
    CHECK(lgrn.status == "SHARDED");
    CHECK(lgrn.throughput_tx_s == 20000.0);
    for (const auto& r : rows) {
        if (r.method == "LGRN_REDERIVED") {
            const int s = r.instance_label.ends_with("S10") ? 10 : 4;
            CHECK(r.solves <= static_cast<int>(std::ceil(std::log2(s))) + 2);
        }
        if (r.status == "SHARDED") CHECK(r.throughput_tx_s == 2000.0 * r.sigma);
    }
}

TEST_CASE("one restart sample finds nothing on an unsafe instance") {
    test::TempDir dir;
    save_instance(make_uniform_instance(4, 10, 0.1, 0.001, 6), dir / "four.json");
    ExperimentConfig c = small_config(ExperimentId::ThroughputAndTime, dir / "out");
    c.instances = {{"four", dir / "four.json", std::nullopt}};
    c.s_max_grid = {6};
    c.methods = {Method::LgrnRederived, Method::RandomRestart};
    c.baseline.restart_budget = 1;
    const auto rows = run_experiment(c);
    CHECK(find_row(rows, "four/S6", "RANDOM_RESTART", 0, false).status == "NO_SOLUTION");
    CHECK(find_row(rows, "four/S6", "LGRN_REDERIVED", 0, false).status == "UNSAFE");
    CHECK(revalidate_results(dir / "out").ok());
}

TEST_CASE("adversarial probability sweep") {
    test::TempDir dir;
    ExperimentConfig c = small_config(ExperimentId::AdvProbSweep, dir.path());
    c.instances = {generated("inst2", 50, 36.8, 6.7, 31, 10, 7)};
    c.shard_counts = {4, 10};
    c.p_scale_percent = {100, 150, 200, 250, 300, 400, 500};
    const auto rows = run_experiment(c);

    double prev_pr51 = 0.0, prev_tp = 1e300;
    bool dropped = false;
    for (double pct : c.p_scale_percent) {
        const std::string label = "inst2@p" + std::to_string(static_cast<int>(pct));
        if (pct >= 500) {
            for (const auto& r : rows)
                if (r.instance_label == label) CHECK(r.status == "DOMAIN_EXCEEDED");
            continue;
        }
        const double pr51 = find_row(rows, label, "LGRN_REDERIVED", 10).pr51;
        CHECK(pr51 >= prev_pr51);
        prev_pr51 = pr51;
        double tp = 0.0;
        for (const auto& r : rows)
            if (r.instance_label == label && r.method == "LGRN_REDERIVED" && !is_grid_status(r.status))
                tp = r.throughput_tx_s;
        CHECK(tp <= prev_tp);
        dropped = dropped || tp < 20000.0;
        prev_tp = tp;
    }
    CHECK(dropped);

    // The 100% rows match a plain shard-count run on the same instance.
    test::TempDir other;
    ExperimentConfig p = small_config(ExperimentId::Pr51VsShards, other.path());
    p.instances = c.instances;
    p.shard_counts = c.shard_counts;
    const auto plain = run_experiment(p);
    for (const auto& m : {"UNIFORM", "GREEDY", "RANDOM_RESTART", "LGRN_REDERIVED"})
        for (int s : c.shard_counts)
            CHECK(find_row(rows, "inst2@p100", m, s).pr51 == find_row(plain, "inst2", m, s).pr51);
}

TEST_CASE("mean and spread sweep") {
    test::TempDir dir;
    ExperimentConfig c = small_config(ExperimentId::MeanStdSweep, dir.path());
    const auto rows = run_experiment(c);
    CHECK(fs::exists(dir / "mean_std_sweep_instances.csv"));
    std::map<std::pair<double, double>, double> cell;
    std::size_t i = 0;
    for (double m : c.means)
        for (double s : c.stds) {
            REQUIRE(rows[i].status == "FEASIBLE");
            cell[{m, s}] = rows[i++].pr51;
        }
    for (double m : c.means) {
        CHECK(cell[{m, 0.0}] == doctest::Approx(std::exp(-16.0)).epsilon(1e-12));
        for (std::size_t k = 1; k < c.stds.size(); ++k)
            CHECK(cell[{m, c.stds[k]}] >= cell[{m, c.stds[k - 1]}] * (1 - 1e-9));
    }
    for (double s : c.stds)
        for (std::size_t k = 1; k < c.means.size(); ++k)
            CHECK(cell[{c.means[k], s}] <= cell[{c.means[k - 1], s}] * (1 + 1e-9));
    CHECK(revalidate_results(dir.path()).ok());
}

TEST_CASE("impossible sweep cells are marked") {
    test::TempDir dir;
    ExperimentConfig c = small_config(ExperimentId::MeanStdSweep, dir.path());
    c.means = {5};
    c.stds = {20};
    c.sweep_max_difference = 1.0;
    const auto rows = run_experiment(c);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].status == "GENERATION_FAILURE");
    CHECK(rows[0].pr51 == 1.0);
}
