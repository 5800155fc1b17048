#include "shardalloc/experiments.hpp"

#include "shardalloc/errors.hpp"
#include "shardalloc/parallel.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace shardalloc {

namespace fs = std::filesystem;

std::string_view to_string(ExperimentId id) {
    switch (id) {
    case ExperimentId::Pr51VsShards: return "pr51_vs_shards";
    case ExperimentId::ThroughputAndTime: return "throughput_and_time";
    case ExperimentId::AdvProbSweep: return "adv_prob_sweep";
    case ExperimentId::MeanStdSweep: return "mean_std_sweep";
    }
    return "pr51_vs_shards";
}

ExperimentId parse_experiment_id(std::string_view text) {
    for (auto id : {ExperimentId::Pr51VsShards, ExperimentId::ThroughputAndTime,
                    ExperimentId::AdvProbSweep, ExperimentId::MeanStdSweep})
        if (text == to_string(id)) return id;
    throw Error("unknown experiment \"" + std::string(text) + "\"");
}

std::string_view to_string(Method m) {
    switch (m) {
    case Method::LgrnRederived: return "LGRN_REDERIVED";
    case Method::LgrnPaperLiteral: return "LGRN_PAPER_LITERAL";
    case Method::Uniform: return "UNIFORM";
    case Method::Greedy: return "GREEDY";
    case Method::RandomRestart: return "RANDOM_RESTART";
    case Method::Exhaustive: return "EXHAUSTIVE";
    }
    return "LGRN_REDERIVED";
}

Method parse_method(std::string_view text) {
    for (auto m : {Method::LgrnRederived, Method::LgrnPaperLiteral, Method::Uniform,
                   Method::Greedy, Method::RandomRestart, Method::Exhaustive})
        if (text == to_string(m)) return m;
    throw Error("unknown method \"" + std::string(text) + "\"");
}

std::vector<InstanceSource> table1_instances(std::uint64_t base_seed, double p_adv, double tau,
                                             int s_max, double t_per_shard) {
    struct Shape {
        int nodes;
        double max_difference, mean, std;
    };
    static constexpr Shape kShapes[] = {
        {25, 29.0, 39.0, 7.9},   {50, 31.0, 36.8, 6.7},     {100, 38.0, 38.4, 4.8},
        {150, 109.0, 89.9, 19.9}, {200, 170.0, 123.8, 32.9},
    };
    std::vector<InstanceSource> out;
    for (std::size_t i = 0; i < std::size(kShapes); ++i) {
        InstanceGenConfig g;
        g.n_nodes = kShapes[i].nodes;
        g.max_difference = kShapes[i].max_difference;
        g.score_mean = kShapes[i].mean;
        g.score_std = kShapes[i].std;
        g.p_adv_default = p_adv;
        g.tau = tau;
        g.s_max = s_max;
        g.t_per_shard = t_per_shard;
        g.rng_seed = base_seed + i;
        out.push_back({"inst" + std::to_string(i + 1), std::nullopt, g});
    }
    return out;
}

ExperimentConfig default_experiment_config(ExperimentId id) {
    ExperimentConfig c;
    c.id = id;
    c.methods = {Method::LgrnRederived, Method::Uniform, Method::Greedy, Method::RandomRestart};
    c.output_dir = "results";
    switch (id) {
    case ExperimentId::Pr51VsShards:
        for (int s = 1; s <= 20; ++s) c.shard_counts.push_back(s);
        break;
    case ExperimentId::ThroughputAndTime:
        for (int s = 2; s <= 20; s += 2) c.s_max_grid.push_back(s);
        break;
    case ExperimentId::AdvProbSweep:
        c.s_max = 10;
        c.shard_counts = {10};
        for (int pct = 100; pct <= 300; pct += 10) c.p_scale_percent.push_back(pct);
        break;
    case ExperimentId::MeanStdSweep:
        c.s_max = 10;
        c.methods = {Method::LgrnRederived};
        c.shard_counts = {10};
        c.means = {30.0, 40.0, 50.0, 60.0};
        c.stds = {0.0, 2.0, 4.0, 6.0, 8.0};
        break;
    }
    c.instances = table1_instances(c.rng_seed, c.p_adv, c.tau, c.s_max, c.t_per_shard);
    if (id == ExperimentId::AdvProbSweep) c.instances = {c.instances[1]};
    if (id == ExperimentId::MeanStdSweep) c.instances.clear();
    return c;
}

namespace {

using nlohmann::json;

template <class T>
T get_or(const json& doc, const char* key, T fallback) {
    if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw MalformedFile(std::string("config field \"") + key + "\" has the wrong type: " + e.what());
    }
}

InstanceGenConfig gen_config_from_json(const json& g, const ExperimentConfig& c) {
    InstanceGenConfig out;
    out.n_nodes = get_or(g, "n_nodes", out.n_nodes);
    out.score_mean = get_or(g, "mean", out.score_mean);
    out.score_std = get_or(g, "std", out.score_std);
    out.max_difference = get_or(g, "max_difference", out.max_difference);
    out.p_adv_default = get_or(g, "p_adv", c.p_adv);
    out.tau = get_or(g, "tau", c.tau);
    out.s_max = get_or(g, "s_max", c.s_max);
    out.t_per_shard = get_or(g, "t_per_shard", c.t_per_shard);
    out.rng_seed = get_or(g, "seed", c.rng_seed);
    out.match_moments = get_or(g, "match_moments", out.match_moments);
    return out;
}

} // namespace

ExperimentConfig experiment_config_from_json(std::string_view text,
                                             std::optional<ExperimentId> id_override) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedFile(std::string("experiment config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw MalformedFile("experiment config must be an object");

    ExperimentId id = id_override ? *id_override
                                  : parse_experiment_id(get_or<std::string>(doc, "experiment_id", ""));
    ExperimentConfig c = default_experiment_config(id);
    c.p_adv = get_or(doc, "p_adv", c.p_adv);
    c.tau = get_or(doc, "tau", c.tau);
    c.t_per_shard = get_or(doc, "t_per_shard", c.t_per_shard);
    c.s_max = get_or(doc, "s_max", c.s_max);
    c.rng_seed = get_or(doc, "rng_seed", c.rng_seed);
    c.sweep_nodes = get_or(doc, "sweep_nodes", c.sweep_nodes);
    if (doc.contains("sweep_max_difference") && !doc["sweep_max_difference"].is_null())
        c.sweep_max_difference = get_or(doc, "sweep_max_difference", 0.0);
    c.output_dir = get_or<std::string>(doc, "output_dir", c.output_dir.string());
    c.record_timing = get_or(doc, "record_timing", c.record_timing);
    c.write_allocations = get_or(doc, "write_allocations", c.write_allocations);
    c.baseline.restart_budget = get_or(doc, "restart_budget", c.baseline.restart_budget);
    c.baseline.grid_steps = get_or(doc, "grid_steps", c.baseline.grid_steps);
    c.baseline.dirichlet_concentration =
        get_or(doc, "dirichlet_concentration", c.baseline.dirichlet_concentration);
    c.baseline.seed = get_or(doc, "baseline_seed", c.rng_seed);
    c.shard_counts = get_or(doc, "shard_counts", c.shard_counts);
    c.s_max_grid = get_or(doc, "s_max_grid", c.s_max_grid);
    c.p_scale_percent = get_or(doc, "p_scale_percent", c.p_scale_percent);
    c.means = get_or(doc, "means", c.means);
    c.stds = get_or(doc, "stds", c.stds);
    if (doc.contains("methods")) {
        c.methods.clear();
        for (const auto& m : doc["methods"]) c.methods.push_back(parse_method(m.get<std::string>()));
    }

    // Instances follow the (possibly overridden) shared parameters.
    if (doc.contains("instances")) {
        c.instances.clear();
        for (const auto& inst : doc["instances"]) {
            InstanceSource src;
            src.label = get_or<std::string>(inst, "label", "");
            if (src.label.empty()) throw MalformedFile("every instance needs a label");
            if (inst.contains("file")) src.file = get_or<std::string>(inst, "file", "");
            else if (inst.contains("generate")) src.generate = gen_config_from_json(inst["generate"], c);
            else throw MalformedFile("instance \"" + src.label + "\" needs \"file\" or \"generate\"");
            c.instances.push_back(std::move(src));
        }
    } else if (id != ExperimentId::MeanStdSweep) {
        auto table = table1_instances(c.rng_seed, c.p_adv, c.tau, c.s_max, c.t_per_shard);
        c.instances = id == ExperimentId::AdvProbSweep ? std::vector{table[1]} : table;
    }

    if (c.methods.empty()) throw InvariantViolation("method list must not be empty");
    for (const auto& src : c.instances)
        if (src.label.find(',') != std::string::npos)
            throw InvariantViolation("instance labels must not contain commas");
    return c;
}

// ---------------------------------------------------------------------------

bool is_grid_status(std::string_view s) { return s == "FEASIBLE" || s == "INFEASIBLE"; }

bool is_search_status(std::string_view s) {
    return s == "SHARDED" || s == "UNSHARDED_SAFE" || s == "UNSAFE" || s == "NO_SOLUTION";
}

std::string sanitize_label(std::string_view label) {
    std::string out;
    for (char ch : label) {
        const bool keep = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                          (ch >= '0' && ch <= '9') || ch == '-' || ch == '.' || ch == '_';
        out.push_back(keep ? ch : '_');
    }
    return out;
}

std::string allocation_key(const ResultRow& row) {
    const char* kind = is_grid_status(row.status) ? "grid" : "search";
    return row.experiment_id + "__" + sanitize_label(row.instance_label) + "__" + row.method +
           "__" + kind + "_s" + std::to_string(row.sigma) + ".csv";
}

namespace {

std::string fmt_double(double v, const char* fmt = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

std::string fmt_percent(double pct) { return fmt_double(pct, "%g"); }

struct RowOutcome {
    ResultRow row;
    std::optional<Allocation> allocation;
};

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

bool is_lgrn(Method m) { return m == Method::LgrnRederived || m == Method::LgrnPaperLiteral; }

StationarityVariant variant_of(Method m) {
    return m == Method::LgrnPaperLiteral ? StationarityVariant::PaperLiteral
                                         : StationarityVariant::Rederived;
}

BaselineMethod baseline_of(Method m) {
    switch (m) {
    case Method::Uniform: return BaselineMethod::Uniform;
    case Method::Greedy: return BaselineMethod::Greedy;
    case Method::RandomRestart: return BaselineMethod::RandomRestart;
    default: return BaselineMethod::Exhaustive;
    }
}

ResultRow base_row(ExperimentId id, const std::string& label, Method m) {
    ResultRow r;
    r.experiment_id = std::string(to_string(id));
    r.instance_label = label;
    r.method = std::string(to_string(m));
    return r;
}

RowOutcome error_row(ResultRow r, std::string status) {
    r.pr51 = 1.0;
    r.throughput_tx_s = 0.0;
    r.status = std::move(status);
    return {std::move(r), std::nullopt};
}

RowOutcome evaluate_grid(ExperimentId id, const std::string& label, const InstancePtr& inst,
                         Method method, int sigma, const BaselineParams& params) {
    ResultRow r = base_row(id, label, method);
    r.sigma = sigma;
    const auto start = Clock::now();
    try {
        std::optional<Allocation> alloc;
        if (is_lgrn(method)) {
            alloc = solve_p3(inst, sigma, inst->tau(), variant_of(method)).allocation;
            r.solves = 1;
        } else {
            alloc = baseline_allocation(inst, baseline_of(method), sigma, params);
        }
        const bool feasible = check_feasibility(*alloc, inst->tau()).feasible;
        r.pr51 = allocation_pr51(*alloc);
        r.status = feasible ? "FEASIBLE" : "INFEASIBLE";
        r.throughput_tx_s = feasible ? throughput(sigma, inst->t_per_shard()) : 0.0;
        r.wall_time_ms = elapsed_ms(start);
        return {std::move(r), std::move(alloc)};
    } catch (const InstanceTooLarge&) {
        return error_row(std::move(r), "INSTANCE_TOO_LARGE");
    } catch (const NumericalFailure&) {
        return error_row(std::move(r), "NUMERICAL_FAILURE");
    }
}

RowOutcome evaluate_search(ExperimentId id, const std::string& label, const InstancePtr& inst,
                           Method method, const BaselineParams& params) {
    ResultRow r = base_row(id, label, method);
    const auto start = Clock::now();
    try {
        std::optional<Allocation> alloc;
        if (is_lgrn(method)) {
            ShardingSolution sol = optimize_sharding(inst, variant_of(method), SearchMode::Binary);
            r.status = std::string(to_string(sol.status));
            r.sigma = sol.sigma_star;
            r.throughput_tx_s = sol.throughput;
            r.pr51 = sol.pr51;
            r.solves = sol.solves_performed;
            alloc = std::move(sol.allocation);
        } else {
            BaselineResult res = run_baseline(inst, baseline_of(method), params);
            r.status = res.status;
            r.sigma = res.sigma_star;
            r.throughput_tx_s = res.throughput;
            r.pr51 = res.pr51;
            r.solves = res.feasibility_checks;
            alloc = std::move(res.allocation);
        }
        // Unsharded outcomes are reported against the forced one-shard layout.
        if (!alloc) alloc = uniform_split(inst, 1);
        r.wall_time_ms = elapsed_ms(start);
        return {std::move(r), std::move(alloc)};
    } catch (const InstanceTooLarge&) {
        return error_row(std::move(r), "INSTANCE_TOO_LARGE");
    } catch (const NumericalFailure&) {
        return error_row(std::move(r), "NUMERICAL_FAILURE");
    }
}

InstancePtr resolve_instance(const InstanceSource& src) {
    if (src.file) return share(load_instance(*src.file));
    if (src.generate) return share(generate_instance(*src.generate));
    throw InvariantViolation("instance \"" + src.label + "\" has no source");
}

/// Runs the tasks in parallel, writes allocations/instances, returns rows in
/// task order.
class Harness {
public:
    explicit Harness(const ExperimentConfig& config) : config_(config) {
        if (config_.write_allocations) {
            fs::create_directories(config_.output_dir / "alloc");
            fs::create_directories(config_.output_dir / "instances");
        }
    }

    void register_instance(const std::string& label, const InstancePtr& inst) {
        if (config_.write_allocations)
            save_instance(*inst, config_.output_dir / "instances" / (sanitize_label(label) + ".json"));
    }

    void add(std::function<RowOutcome()> task) { tasks_.push_back(std::move(task)); }

    std::vector<ResultRow> run() {
        std::vector<RowOutcome> outcomes(tasks_.size());
        parallel_for(tasks_.size(), [&](std::size_t i) {
            outcomes[i] = tasks_[i]();
            if (!config_.record_timing) outcomes[i].row.wall_time_ms = 0.0;
            if (config_.write_allocations && outcomes[i].allocation)
                save_allocation_csv(*outcomes[i].allocation,
                                    config_.output_dir / "alloc" / allocation_key(outcomes[i].row));
        });
        std::vector<ResultRow> rows;
        rows.reserve(outcomes.size());
        for (auto& o : outcomes) rows.push_back(std::move(o.row));
        return rows;
    }

private:
    const ExperimentConfig& config_;
    std::vector<std::function<RowOutcome()>> tasks_;
};

} // namespace

std::vector<ResultRow> run_pr51_vs_shards(const ExperimentConfig& config) {
    Harness h(config);
    const auto id = ExperimentId::Pr51VsShards;
    for (const auto& src : config.instances) {
        const InstancePtr inst = resolve_instance(src);
        h.register_instance(src.label, inst);
        for (int sigma : config.shard_counts)
            for (Method m : config.methods)
                h.add([=, &config] { return evaluate_grid(id, src.label, inst, m, sigma, config.baseline); });
    }
    return h.run();
}

std::vector<ResultRow> run_throughput_and_time(const ExperimentConfig& config) {
    Harness h(config);
    const auto id = ExperimentId::ThroughputAndTime;
    for (const auto& src : config.instances) {
        const InstancePtr base = resolve_instance(src);
        for (int s_max : config.s_max_grid) {
            const std::string label = src.label + "/S" + std::to_string(s_max);
            const InstancePtr inst = share(base->with_s_max(s_max));
            h.register_instance(label, inst);
            for (Method m : config.methods)
                h.add([=, &config] { return evaluate_search(id, label, inst, m, config.baseline); });
        }
    }
    return h.run();
}

std::vector<ResultRow> run_adv_prob_sweep(const ExperimentConfig& config) {
    Harness h(config);
    const auto id = ExperimentId::AdvProbSweep;
    for (const auto& src : config.instances) {
        const InstancePtr base = resolve_instance(src);
        for (double pct : config.p_scale_percent) {
            const std::string label = src.label + "@p" + fmt_percent(pct);
            InstancePtr inst;
            try {
                inst = share(base->with_p_adv_scaled(pct / 100.0));
            } catch (const InvariantViolation&) {
                for (Method m : config.methods)
                    h.add([=] { return error_row(base_row(id, label, m), "DOMAIN_EXCEEDED"); });
                continue;
            }
            h.register_instance(label, inst);
            for (int sigma : config.shard_counts)
                for (Method m : config.methods)
                    h.add([=, &config] { return evaluate_grid(id, label, inst, m, sigma, config.baseline); });
            for (Method m : config.methods)
                h.add([=, &config] { return evaluate_search(id, label, inst, m, config.baseline); });
        }
    }
    return h.run();
}

std::vector<ResultRow> run_mean_std_sweep(const ExperimentConfig& config) {
    Harness h(config);
    const auto id = ExperimentId::MeanStdSweep;
    std::vector<std::pair<std::string, InstanceStats>> stats;
    std::uint64_t cell = 0;
    for (double mean : config.means) {
        for (double std_dev : config.stds) {
            const std::string label = "m" + fmt_percent(mean) + "_s" + fmt_percent(std_dev);
            InstanceGenConfig g;
            g.n_nodes = config.sweep_nodes;
            g.score_mean = mean;
            g.score_std = std_dev;
            g.max_difference = config.sweep_max_difference.value_or(10.0 * std_dev + 1.0);
            g.p_adv_default = config.p_adv;
            g.tau = config.tau;
            g.s_max = config.s_max;
            g.t_per_shard = config.t_per_shard;
            g.rng_seed = config.rng_seed + cell++;
            InstancePtr inst;
            try {
                inst = share(generate_instance(g));
            } catch (const Error&) {
                for (Method m : config.methods)
                    h.add([=] { return error_row(base_row(id, label, m), "GENERATION_FAILURE"); });
                continue;
            }
            h.register_instance(label, inst);
            stats.emplace_back(label, instance_stats(*inst));
            for (int sigma : config.shard_counts)
                for (Method m : config.methods)
                    h.add([=, &config] { return evaluate_grid(id, label, inst, m, sigma, config.baseline); });
        }
    }
    auto rows = h.run();
    fs::create_directories(config.output_dir);
    std::ofstream out(config.output_dir / "mean_std_sweep_instances.csv");
    out << "instance_label,n,mean,std,max_difference,total_score\n";
    for (const auto& [label, st] : stats)
        out << label << ',' << config.sweep_nodes << ',' << fmt_double(st.mean) << ','
            << fmt_double(st.std) << ',' << fmt_double(st.max_difference) << ','
            << fmt_double(st.total_score) << '\n';
    return rows;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
    std::vector<ResultRow> rows;
    switch (config.id) {
    case ExperimentId::Pr51VsShards: rows = run_pr51_vs_shards(config); break;
    case ExperimentId::ThroughputAndTime: rows = run_throughput_and_time(config); break;
    case ExperimentId::AdvProbSweep: rows = run_adv_prob_sweep(config); break;
    case ExperimentId::MeanStdSweep: rows = run_mean_std_sweep(config); break;
    }
    fs::create_directories(config.output_dir);
    write_results_csv(rows, config.output_dir / (std::string(to_string(config.id)) + ".csv"));
    return rows;
}

namespace {
constexpr const char* kHeader =
    "experiment_id,instance_label,method,sigma,pr51,throughput_tx_s,wall_time_ms,solves,status";
}

void write_results_csv(const std::vector<ResultRow>& rows, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << kHeader << '\n';
    for (const auto& r : rows)
        out << r.experiment_id << ',' << r.instance_label << ',' << r.method << ',' << r.sigma << ','
            << fmt_double(r.pr51) << ',' << fmt_double(r.throughput_tx_s) << ','
            << fmt_double(r.wall_time_ms, "%.3f") << ',' << r.solves << ',' << r.status << '\n';
    if (!out) throw Error("failed writing " + path.string());
}

std::vector<ResultRow> read_results_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MalformedFile("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kHeader)
        throw MalformedFile(path.string() + ": unexpected results header");
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 9) throw MalformedFile(path.string() + ": bad row \"" + line + "\"");
        ResultRow r;
        try {
            r.experiment_id = f[0];
            r.instance_label = f[1];
            r.method = f[2];
            r.sigma = std::stoi(f[3]);
            r.pr51 = std::stod(f[4]);
            r.throughput_tx_s = std::stod(f[5]);
            r.wall_time_ms = std::stod(f[6]);
            r.solves = std::stoi(f[7]);
            r.status = f[8];
        } catch (const std::exception&) {
            throw MalformedFile(path.string() + ": bad row \"" + line + "\"");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

RevalidationSummary revalidate_results(const fs::path& output_dir) {
    RevalidationSummary sum;
    std::map<std::string, InstancePtr> cache;
    for (const auto& entry : fs::directory_iterator(output_dir)) {
        if (entry.path().extension() != ".csv") continue;
        std::ifstream probe(entry.path());
        std::string header;
        std::getline(probe, header);
        if (header != kHeader) continue;
        for (const auto& row : read_results_csv(entry.path())) {
            ++sum.rows;
            const fs::path alloc_path = output_dir / "alloc" / allocation_key(row);
            if (!(is_grid_status(row.status) || is_search_status(row.status))) continue;
            if (!fs::exists(alloc_path)) {
                ++sum.mismatches;
                sum.messages.push_back("missing allocation " + alloc_path.string());
                continue;
            }
            const std::string key = sanitize_label(row.instance_label);
            auto it = cache.find(key);
            if (it == cache.end())
                it = cache.emplace(key, share(load_instance(output_dir / "instances" / (key + ".json")))).first;
            const Allocation alloc = load_allocation_csv(it->second, alloc_path);
            const double recomputed = allocation_pr51(alloc);
            ++sum.checked;
            const double scale = std::max(std::abs(row.pr51), std::numeric_limits<double>::min());
            if (std::abs(recomputed - row.pr51) > 1e-12 * scale) {
                ++sum.mismatches;
                sum.messages.push_back(entry.path().filename().string() + ": " + row.instance_label +
                                       " " + row.method + " sigma=" + std::to_string(row.sigma) +
                                       " pr51 " + fmt_double(row.pr51) + " != recomputed " +
                                       fmt_double(recomputed));
            }
        }
    }
    return sum;
}

} // namespace shardalloc
