#pragma once

// Reference allocators and brute-force referees for the Lagrangian method.

#include "shardalloc/lagrangian_solver.hpp"
#include "shardalloc/shard_optimizer.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace shardalloc {

enum class BaselineMethod { Uniform, Greedy, RandomRestart, Exhaustive };

std::string_view to_string(BaselineMethod m);
BaselineMethod parse_baseline_method(std::string_view text);

struct BaselineParams {
    int restart_budget = 200;
    int grid_steps = 3;
    double dirichlet_concentration = 5.0;
    std::uint64_t seed = 1;
};

struct BaselineResult {
    BaselineMethod method = BaselineMethod::Uniform;
    int sigma_star = 0;
    std::optional<Allocation> allocation;
    double pr51 = 1.0;
    double throughput = 0.0;
    std::chrono::duration<double> wall_time{0.0};
    /// SHARDED or NO_SOLUTION (no sigma >= 2 found) for the heuristics.
    /// Exhaustive search reports SHARDED, UNSHARDED_SAFE or UNSAFE.
    std::string status;
    int feasibility_checks = 0;
};

/// eta^s_n = eta_n / sigma.
Allocation uniform_split(const InstancePtr& instance, int sigma);

/// Whole-score placement: MUs in descending score (ties by mu_id) go to the
/// shard with the smallest running total (ties by lowest shard index).
Allocation greedy_round_robin(const InstancePtr& instance, int sigma);

/// One Dirichlet(concentration) split of every MU's score across sigma shards.
/// The last shard takes the remainder so conservation is exact.
Allocation dirichlet_split(const InstancePtr& instance, int sigma, double concentration,
                           std::uint64_t seed);

/// First of `budget` Dirichlet splits (sample i seeded by derive(seed, i))
/// that passes check_feasibility, if any.
std::optional<Allocation> random_restart_feasibility(const InstancePtr& instance, int sigma,
                                                     double tau, int budget, std::uint64_t seed,
                                                     double concentration = 5.0);

/// The sample with the lowest Pr51 among `budget` Dirichlet splits.
Allocation random_restart_best(const InstancePtr& instance, int sigma, int budget,
                               std::uint64_t seed, double concentration = 5.0);

struct ExhaustiveGuard {
    static constexpr std::size_t kMaxUsers = 6;
    static constexpr int kMaxShards = 3;
    static constexpr int kMaxGridSteps = 5;
};

/// Throws InstanceTooLarge unless N <= 6, S_max <= 3 and 1 <= grid_steps <= 5.
void check_exhaustive_guard(const ProblemInstance& instance, int grid_steps);

/// Visits every allocation in which each MU's score is split in multiples of
/// eta_n / grid_steps, in lexicographic order of the per-MU compositions.
/// The visitor receives the shard-major table and returns false to stop.
void for_each_grid_allocation(const ProblemInstance& instance, int sigma, int grid_steps,
                              const std::function<bool(std::span<const double>)>& visit);

/// Largest sigma <= S_max with a feasible grid allocation, plus a witness.
BaselineResult exhaustive_search(const InstancePtr& instance, double tau, int grid_steps);

/// Grid allocation with the lowest Pr51 at a fixed sigma.
Allocation exhaustive_best_pr51(const InstancePtr& instance, int sigma, int grid_steps);

/// Largest feasible shard count reachable by a baseline.  Uniform and greedy
/// scan sigma downward; random restart runs the binary shard-count search
/// with restart sampling as its feasibility oracle; exhaustive delegates to
/// exhaustive_search.
BaselineResult run_baseline(const InstancePtr& instance, BaselineMethod method,
                            const BaselineParams& params);

/// Baseline allocation at a fixed sigma (lowest Pr51 for the sampling and
/// enumeration methods).
Allocation baseline_allocation(const InstancePtr& instance, BaselineMethod method, int sigma,
                               const BaselineParams& params);

} // namespace shardalloc
