#pragma once

// Experiment harness: pr51 vs shard count, throughput and running time vs
// S_max, adversarial-probability sweeps, and mean/STD sweeps.  Every run
// emits a tidy CSV
//
//   experiment_id,instance_label,method,sigma,pr51,throughput_tx_s,wall_time_ms,solves,status
//
// plus, for re-validation, the instance behind every label
// (instances/<label>.json) and the allocation behind every row
// (alloc/<key>.csv).
//
// Two row kinds share the schema.  Grid rows evaluate one allocation at a
// fixed sigma and carry status FEASIBLE or INFEASIBLE.  Search rows report the
// largest feasible shard count a method finds (SHARDED, UNSHARDED_SAFE,
// UNSAFE, NO_SOLUTION).  Rows that could not be computed carry an error
// status (DOMAIN_EXCEEDED, INSTANCE_TOO_LARGE, GENERATION_FAILURE,
// NUMERICAL_FAILURE) and pr51 = 1.

#include "shardalloc/baselines.hpp"
#include "shardalloc/core_model.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace shardalloc {

enum class ExperimentId { Pr51VsShards, ThroughputAndTime, AdvProbSweep, MeanStdSweep };
enum class Method { LgrnRederived, LgrnPaperLiteral, Uniform, Greedy, RandomRestart, Exhaustive };

std::string_view to_string(ExperimentId id);
ExperimentId parse_experiment_id(std::string_view text);
std::string_view to_string(Method m);
Method parse_method(std::string_view text);

struct InstanceSource {
    std::string label;
    std::optional<std::filesystem::path> file;
    std::optional<InstanceGenConfig> generate;
};

/// The five instance shapes of the reference evaluation (N, max difference,
/// mean, STD), generated with the given shared parameters; seeds are
/// base_seed + index.
std::vector<InstanceSource> table1_instances(std::uint64_t base_seed, double p_adv, double tau,
                                             int s_max, double t_per_shard);

struct ExperimentConfig {
    ExperimentId id = ExperimentId::Pr51VsShards;
    std::vector<InstanceSource> instances;
    std::vector<Method> methods;
    std::vector<int> shard_counts;
    std::vector<int> s_max_grid;
    std::vector<double> p_scale_percent;
    std::vector<double> means;
    std::vector<double> stds;
    int sweep_nodes = 50;
    std::optional<double> sweep_max_difference;
    double p_adv = 0.1;
    double tau = 0.001;
    double t_per_shard = 2000.0;
    int s_max = 20;
    std::filesystem::path output_dir = "results";
    std::uint64_t rng_seed = 7;
    BaselineParams baseline;
    bool record_timing = true;   // false writes wall_time_ms = 0 for byte-stable output
    bool write_allocations = true;
};

/// Defaults for one experiment: the five reference instance shapes and grids sized for a desk run.
ExperimentConfig default_experiment_config(ExperimentId id);
/// Reads a config document; missing keys take default_experiment_config values.
/// `id_override` replaces the document's experiment_id.
ExperimentConfig experiment_config_from_json(std::string_view text,
                                             std::optional<ExperimentId> id_override = {});

struct ResultRow {
    std::string experiment_id;
    std::string instance_label;
    std::string method;
    int sigma = 0;
    double pr51 = 1.0;
    double throughput_tx_s = 0.0;
    double wall_time_ms = 0.0;
    int solves = 0;
    std::string status;

    bool operator==(const ResultRow&) const = default;
};

/// Rows of a given kind: grid, search, or error (no allocation stored).
bool is_grid_status(std::string_view status);
bool is_search_status(std::string_view status);

/// File name (relative to <output>/alloc) of the allocation behind a row.
std::string allocation_key(const ResultRow& row);
std::string sanitize_label(std::string_view label);

std::vector<ResultRow> run_pr51_vs_shards(const ExperimentConfig& config);
std::vector<ResultRow> run_throughput_and_time(const ExperimentConfig& config);
std::vector<ResultRow> run_adv_prob_sweep(const ExperimentConfig& config);
std::vector<ResultRow> run_mean_std_sweep(const ExperimentConfig& config);

/// Dispatches on config.id, writes <output>/<id>.csv and returns the rows.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config);

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

struct RevalidationSummary {
    std::size_t rows = 0;
    std::size_t checked = 0;
    std::size_t mismatches = 0;
    std::vector<std::string> messages;
    bool ok() const { return mismatches == 0; }
};

/// Recomputes pr51 of every stored allocation under `output_dir` and compares
/// it with its CSV row to 1e-12 relative.
RevalidationSummary revalidate_results(const std::filesystem::path& output_dir);

} // namespace shardalloc
