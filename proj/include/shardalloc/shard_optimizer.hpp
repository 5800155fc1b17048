#pragma once

#include "shardalloc/lagrangian_solver.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace shardalloc {

enum class SearchMode { Binary, LinearScan };
enum class ShardingStatus { Sharded, UnshardedSafe, Unsafe };

std::string_view to_string(SearchMode m);
std::string_view to_string(ShardingStatus s);
SearchMode parse_search_mode(std::string_view text);

/// Activation vector of length s_max: x_s = 1 for s <= sigma, else 0.
std::vector<int> derive_x(int sigma, int s_max);

/// x_s >= (sigma - s + 1) / S and x_s <= max(0, sigma - s + 1) for every s, x binary.
bool activation_constraints_hold(const std::vector<int>& x, int sigma);

/// T * sigma in Tx/s.
double throughput(int sigma, double t_per_shard);

struct ShardSearchOutcome {
    int best_sigma = 0;            // largest feasible sigma >= 2 found, 0 if none
    bool unsharded_safe = false;   // sigma = 1 checked and feasible
    std::vector<int> probed;       // sigmas in evaluation order
};

/// Shard-count search over a feasibility oracle.
///
/// Binary: probe S; if infeasible search high = S-1, low = 2 with the midpoint
/// ceil((high + low) / 2), moving low up on success and high down on failure
/// until the midpoint equals high.  The starting high (S-1) is probed at the
/// end if it was never reached and lies above the best feasible sigma.
/// LinearScan: probe S, S-1, ..., 2 and stop at the first feasible sigma.
/// Both finish with a sigma = 1 probe when no sigma >= 2 was feasible.
ShardSearchOutcome search_shard_count(int s_max, SearchMode mode,
                                      const std::function<bool(int)>& feasible_at);

struct ShardingSolution {
    ShardingStatus status = ShardingStatus::Unsafe;
    int sigma_star = 0;
    std::optional<Allocation> allocation;
    std::vector<int> x;
    double throughput = 0.0;
    double pr51 = 1.0;
    Pr51Summary pr51_summary;
    int solves_performed = 0;
    std::chrono::duration<double> wall_time{0.0};
    std::vector<int> probed_sigmas;
    double max_residual = 0.0;
    StationarityVariant variant = StationarityVariant::Rederived;
    SearchMode mode = SearchMode::Binary;
};

/// Largest shard count whose relaxed-problem solution passes the feasibility
/// check, found with search_shard_count.  For Unsafe results pr51 is the
/// single-shard bound and no allocation is returned.
ShardingSolution optimize_sharding(const InstancePtr& instance,
                                   StationarityVariant variant = StationarityVariant::Rederived,
                                   SearchMode mode = SearchMode::Binary);

struct P1Check {
    bool safety = false;      // per-shard safety with x-weighted right-hand side
    bool activation = false;  // x lower/upper activation bounds
    bool conservation = false;
    bool all() const { return safety && activation && conservation; }
};

/// Substitutes (eta padded with zero rows to S, x, sigma) into the full
/// mixed-integer formulation and checks every constraint directly.
P1Check verify_p1(const ShardingSolution& solution, const ProblemInstance& instance);

/// Solution JSON: status, sigma_star, throughput, pr51, x, solves_performed,
/// wall_time_ms and the allocation CSV path (empty when none was written).
std::string solution_to_json(const ShardingSolution& solution,
                             const std::string& allocation_csv_path);

} // namespace shardalloc
