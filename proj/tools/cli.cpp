#include "cli.hpp"

#include "shardalloc/baselines.hpp"
#include "shardalloc/errors.hpp"
#include "shardalloc/experiments.hpp"
#include "shardalloc/poe_simulator.hpp"
#include "shardalloc/security_bounds.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace shardalloc::cli {

namespace {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MalformedFile("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << text << '\n';
}

// Instance overrides shared by solve / baseline / simulate.
struct InstanceArgs {
    std::string path;
    std::optional<double> tau;
    std::optional<int> s_max;

    void add(CLI::App* cmd) {
        cmd->add_option("instance", path, "Instance JSON file")->required()->check(CLI::ExistingFile);
        cmd->add_option("--tau", tau, "Override the safety threshold");
        cmd->add_option("--s-max", s_max, "Override the maximum shard count");
    }

    InstancePtr load() const {
        ProblemInstance inst = load_instance(path);
        if (tau) inst = inst.with_tau(*tau);
        if (s_max) inst = inst.with_s_max(*s_max);
        return share(std::move(inst));
    }
};

// ---------------------------------------------------------------- validate

struct CheckLog {
    int failures = 0;
    void check(bool ok, const std::string& name, const std::string& detail = {}) {
        std::cout << (ok ? "ok   " : "FAIL ") << name;
        if (!ok && !detail.empty()) std::cout << "  (" << detail << ')';
        std::cout << '\n';
        if (!ok) ++failures;
    }
};

void invariant_suite(CheckLog& log, std::uint64_t seed, int nodes) {
    InstanceGenConfig g;
    g.n_nodes = nodes;
    g.rng_seed = seed;
    const InstancePtr inst = share(generate_instance(g));
    const InstanceStats st = instance_stats(*inst);
    const auto eta = inst->eta();

    log.check(std::all_of(eta.begin(), eta.end(), [](double v) { return v > 0; }) &&
                  st.max_difference <= g.max_difference,
              "generated scores positive and within spread");
    log.check(std::abs(st.mean - g.score_mean) < 1e-9 && std::abs(st.std - g.score_std) < 1e-9,
              "generated moments match the request");
    log.check(instance_from_json(instance_to_json(*inst)) == *inst, "instance JSON round trip");

    double worst_uniform_gap = 0.0, worst_residual_ratio = 0.0;
    for (int sigma : {1, 2, 5, inst->s_max()}) {
        const P3Solution sol = solve_p3(inst, sigma, inst->tau(), StationarityVariant::Rederived);
        const Allocation uni = uniform_split(inst, sigma);
        for (std::size_t i = 0; i < uni.table().size(); ++i)
            worst_uniform_gap = std::max(worst_uniform_gap,
                                         std::abs(sol.allocation.table()[i] - uni.table()[i]) /
                                             std::abs(uni.table()[i]));
        worst_residual_ratio = std::max(worst_residual_ratio, sol.diagnostics.residual_norm /
                                                                  sol.diagnostics.residual_tolerance);
    }
    log.check(worst_residual_ratio <= 1.0, "linear solves within residual tolerance");
    log.check(worst_uniform_gap <= 1e-8, "stationary point is the uniform split");

    const ShardingSolution bin = optimize_sharding(inst, StationarityVariant::Rederived, SearchMode::Binary);
    const ShardingSolution lin = optimize_sharding(inst, StationarityVariant::Rederived, SearchMode::LinearScan);
    log.check(bin.sigma_star == lin.sigma_star, "binary and linear search agree",
              std::to_string(bin.sigma_star) + " vs " + std::to_string(lin.sigma_star));
    const int budget = static_cast<int>(std::ceil(std::log2(inst->s_max()))) + 2;
    log.check(bin.solves_performed <= budget, "binary search solve budget");
    if (bin.allocation) {
        log.check(verify_p1(bin, *inst).all(), "solution satisfies the full formulation");
        log.check(bin.allocation->conserves(), "solution conserves every score");
    }

    bool bounds_ok = true;
    const Allocation uni = uniform_split(inst, 3);
    for (int s = 0; s < uni.sigma(); ++s) {
        const ShardSafetyReport r = is_shard_safe(uni.column(s), inst->tau(), s);
        bounds_ok = bounds_ok && r.bound >= 0.0 && r.bound <= 1.0 && (r.safe == (r.bound <= inst->tau()));
    }
    log.check(bounds_ok, "attack bound in [0,1] and consistent with the safety test");

    const std::vector<std::pair<int, double>> members{{1, 3.0}, {2, 1.0}};
    const Seed256 s0 = sha256(std::span<const std::uint8_t>());
    log.check(elect_leader(members, s0, 42) == elect_leader(members, s0, 42),
              "leader election is deterministic");
    log.check(remap_seeds({s0}, 5, s0).size() == 5 && remap_seeds(remap_seeds({s0}, 5, s0), 2, s0).size() == 2,
              "seed remapping reaches the requested count");
}

// ---------------------------------------------------------------- commands

int run(CLI::App& app, int argc, char** argv) {
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a random instance");
    InstanceGenConfig gc;
    std::string gen_out;
    gen->add_option("--nodes", gc.n_nodes, "Number of MUs")->capture_default_str()->check(CLI::PositiveNumber);
    gen->add_option("--mean", gc.score_mean, "Mean engagement score")->capture_default_str();
    gen->add_option("--std", gc.score_std, "Score standard deviation")->capture_default_str()->check(CLI::NonNegativeNumber);
    gen->add_option("--max-diff", gc.max_difference, "Maximum max-min score spread")->capture_default_str();
    gen->add_option("--p-adv", gc.p_adv_default, "Adversarial probability of every MU")->capture_default_str();
    gen->add_option("--tau", gc.tau, "Safety threshold")->capture_default_str();
    gen->add_option("--s-max", gc.s_max, "Maximum shard count")->capture_default_str();
    gen->add_option("--t-per-shard", gc.t_per_shard, "Throughput of one shard (Tx/s)")->capture_default_str();
    gen->add_option("--seed", gc.rng_seed, "RNG seed")->capture_default_str();
    gen->add_flag("!--no-match-moments", gc.match_moments, "Keep raw normal draws without rescaling");
    gen->add_option("-o,--output", gen_out, "Output file (stdout when omitted)");

    // solve
    auto* solve = app.add_subcommand("solve", "Find the largest safe shard count");
    InstanceArgs solve_in;
    solve_in.add(solve);
    std::string variant_text = "rederived", mode_text = "binary", solve_out, solve_csv;
    solve->add_option("--variant", variant_text, "Stationarity system: rederived | paper-literal")->capture_default_str();
    solve->add_option("--mode", mode_text, "Shard-count search: binary | linear")->capture_default_str();
    solve->add_option("-o,--output", solve_out, "Solution JSON (stdout when omitted)");
    solve->add_option("--alloc-csv", solve_csv, "Also write the allocation as CSV");

    // baseline
    auto* base = app.add_subcommand("baseline", "Run a reference allocator");
    InstanceArgs base_in;
    base_in.add(base);
    std::string method_text = "uniform", base_out, base_csv;
    std::optional<int> base_sigma;
    BaselineParams bp;
    base->add_option("--method", method_text, "uniform | greedy | random-restart | exhaustive")->capture_default_str();
    base->add_option("--sigma", base_sigma, "Evaluate one fixed shard count instead of searching");
    base->add_option("--budget", bp.restart_budget, "Random-restart samples per shard count")->capture_default_str();
    base->add_option("--grid-steps", bp.grid_steps, "Exhaustive grid resolution")->capture_default_str();
    base->add_option("--concentration", bp.dirichlet_concentration, "Dirichlet concentration")->capture_default_str();
    base->add_option("--seed", bp.seed, "RNG seed")->capture_default_str();
    base->add_option("-o,--output", base_out, "Result JSON (stdout when omitted)");
    base->add_option("--alloc-csv", base_csv, "Also write the allocation as CSV");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run the epoch-level consensus simulation");
    InstanceArgs sim_in;
    sim_in.add(sim);
    std::string sim_config, sim_out, sim_csv, adversary_text;
    std::optional<int> epochs, slots, delay, fixed_sigma, reconf;
    std::optional<double> rate;
    std::optional<std::uint64_t> sim_seed;
    sim->add_option("--config", sim_config, "JSON with EpochConfig and SimulationSettings fields")->check(CLI::ExistingFile);
    sim->add_option("--epochs", epochs, "Number of epochs");
    sim->add_option("--slots", slots, "Slots per epoch");
    sim->add_option("--corruption-rate", rate, "Expected new corruptions per epoch");
    sim->add_option("--corruption-delay", delay, "Epochs before a corruption takes effect");
    sim->add_option("--reconfigure-every", reconf, "Epochs between reconfigurations");
    sim->add_option("--adversary", adversary_text, "none | static | epoch");
    sim->add_option("--fixed-sigma", fixed_sigma, "Use a uniform split with this shard count");
    sim->add_option("--seed", sim_seed, "RNG seed");
    sim->add_option("-o,--output", sim_out, "Report JSON (stdout when omitted)");
    sim->add_option("--epoch-csv", sim_csv, "Per-slot CSV trace");

    // experiment
    auto* exp = app.add_subcommand("experiment", "Run one experiment set and write CSV");
    std::string exp_id, exp_config, exp_dir;
    bool no_timing = false;
    exp->add_option("id", exp_id, "pr51_vs_shards | throughput_and_time | adv_prob_sweep | mean_std_sweep")->required();
    exp->add_option("--config", exp_config, "Experiment config JSON")->check(CLI::ExistingFile);
    exp->add_option("--output-dir", exp_dir, "Output directory (overrides the config)");
    exp->add_flag("--no-timing", no_timing, "Write wall_time_ms = 0 for byte-stable output");

    // validate
    auto* val = app.add_subcommand("validate", "Run the invariant suite and/or re-validate results");
    std::string results_dir;
    std::uint64_t val_seed = 7;
    int val_nodes = 50;
    val->add_option("--results", results_dir, "Experiment output directory to re-validate")->check(CLI::ExistingDirectory);
    val->add_option("--seed", val_seed, "Seed of the generated test instance")->capture_default_str();
    val->add_option("--nodes", val_nodes, "Size of the generated test instance")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) {
            write_text(gen_out, instance_to_json(generate_instance(gc)));
        } else if (*solve) {
            const InstancePtr inst = solve_in.load();
            const ShardingSolution sol =
                optimize_sharding(inst, parse_variant(variant_text), parse_search_mode(mode_text));
            if (!solve_csv.empty() && sol.allocation) save_allocation_csv(*sol.allocation, solve_csv);
            write_text(solve_out, solution_to_json(sol, sol.allocation ? solve_csv : std::string()));
            std::cerr << to_string(sol.status) << " sigma*=" << sol.sigma_star
                      << " throughput=" << sol.throughput << " pr51=" << sol.pr51 << '\n';
        } else if (*base) {
            const InstancePtr inst = base_in.load();
            const BaselineMethod method = parse_baseline_method(method_text);
            nlohmann::json doc;
            doc["method"] = std::string(to_string(method));
            std::optional<Allocation> alloc;
            if (base_sigma) {
                alloc = baseline_allocation(inst, method, *base_sigma, bp);
                const bool feasible = check_feasibility(*alloc, inst->tau()).feasible;
                doc["sigma"] = *base_sigma;
                doc["status"] = feasible ? "FEASIBLE" : "INFEASIBLE";
                doc["pr51"] = allocation_pr51(*alloc);
                doc["throughput"] = feasible ? throughput(*base_sigma, inst->t_per_shard()) : 0.0;
            } else {
                BaselineResult res = run_baseline(inst, method, bp);
                alloc = std::move(res.allocation);
                doc["sigma_star"] = res.sigma_star;
                doc["status"] = res.status;
                doc["pr51"] = res.pr51;
                doc["throughput"] = res.throughput;
                doc["feasibility_checks"] = res.feasibility_checks;
                doc["wall_time_ms"] = res.wall_time.count() * 1e3;
            }
            if (!base_csv.empty() && alloc) save_allocation_csv(*alloc, base_csv);
            doc["allocation_csv"] = alloc ? base_csv : std::string();
            write_text(base_out, doc.dump(2));
        } else if (*sim) {
            const InstancePtr inst = sim_in.load();
            EpochConfig ec;
            SimulationSettings ss;
            if (!sim_config.empty()) {
                const std::string text = read_text(sim_config);
                ec = epoch_config_from_json(text);
                ss = simulation_settings_from_json(text);
            }
            if (epochs) ec.epochs = *epochs;
            if (slots) ec.slots_per_epoch = *slots;
            if (rate) ec.corruption_rate = *rate;
            if (delay) ec.corruption_delay = *delay;
            if (reconf) ec.reconfigure_every = *reconf;
            if (sim_seed) ec.rng_seed = *sim_seed;
            if (!adversary_text.empty()) ec.adversary = parse_adversary_model(adversary_text);
            if (fixed_sigma) ss.fixed_sigma = *fixed_sigma;
            const SimulationReport rep = run_simulation(inst, ec, ss);
            if (!sim_csv.empty()) write_epoch_csv(rep, sim_csv);
            write_text(sim_out, simulation_report_json(rep));
        } else if (*exp) {
            const ExperimentId id = parse_experiment_id(exp_id);
            ExperimentConfig cfg = exp_config.empty()
                                       ? default_experiment_config(id)
                                       : experiment_config_from_json(read_text(exp_config), id);
            if (!exp_dir.empty()) cfg.output_dir = exp_dir;
            if (no_timing) cfg.record_timing = false;
            const auto rows = run_experiment(cfg);
            std::cerr << rows.size() << " rows written to "
                      << (cfg.output_dir / (std::string(to_string(id)) + ".csv")).string() << '\n';
        } else if (*val) {
            CheckLog log;
            invariant_suite(log, val_seed, val_nodes);
            if (!results_dir.empty()) {
                const RevalidationSummary sum = revalidate_results(results_dir);
                for (const auto& m : sum.messages) std::cout << "  " << m << '\n';
                log.check(sum.ok() && sum.checked > 0, "stored allocations reproduce every pr51",
                          std::to_string(sum.mismatches) + " mismatches among " +
                              std::to_string(sum.checked) + " checked rows");
            }
            return log.failures == 0 ? 0 : 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

} // namespace

int cli_dispatch(int argc, char** argv) {
    CLI::App app{"shardalloc: engagement-score shard allocation and simulation", "shardalloc"};
    return run(app, argc, argv);
}

int cli_dispatch(const std::vector<std::string>& args) {
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("shardalloc");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    return cli_dispatch(static_cast<int>(argv.size()), argv.data());
}

} // namespace shardalloc::cli
