#pragma once

// Hoeffding machinery for the 51% attack on one shard.  With adversary score
// A_s = sum of independent terms eta^s_n * Bernoulli(p^A_n),
//
//   Pr[A_s >= 0.5 theta_s] <= exp(-2 t^2 / sum_n (eta^s_n)^2),
//   t = sum_n (0.5 - p^A_n) eta^s_n,
//
// and a shard is safe at threshold tau when t^2 >= -0.5 ln(tau) sum (eta^s_n)^2.

#include "shardalloc/allocation.hpp"

#include <cstdint>

namespace shardalloc {

/// sum_n p^A_n * eta^s_n
double adversary_expected_score(const ShardColumn& col);

/// sum_n (0.5 - p^A_n) * eta^s_n
double deviation_t(const ShardColumn& col);

double sum_of_squares(const ShardColumn& col);

/// exp(-2 t^2 / sum (eta^s_n)^2).  Hoeffding only bounds positive deviations,
/// so t <= 0 yields the trivial bound 1.  Throws DegenerateShard when every
/// score is zero.
double attack_bound(const ShardColumn& col);

struct ShardSafetyReport {
    int shard_index = 0;
    double t = 0.0;
    double sum_sq = 0.0;
    double bound = 1.0;
    bool safe = false;
};

/// safe <=> t > 0 and t^2 >= -0.5 ln(tau) sum_sq.  Throws DegenerateShard.
ShardSafetyReport is_shard_safe(const ShardColumn& col, double tau, int shard_index = 0);

struct Pr51Summary {
    double max = 1.0;
    double min = 1.0;
    double mean = 1.0;
};

/// Per-shard bounds aggregated over the allocation; a shard without any
/// positive score counts as bound 1.
Pr51Summary allocation_pr51_summary(const Allocation& alloc);

/// Network risk: the worst (largest) per-shard bound.
double allocation_pr51(const Allocation& alloc);

struct MonteCarloEstimate {
    double frequency = 0.0;
    double std_error = 0.0;
    std::uint64_t trials = 0;
    std::uint64_t hits = 0;
};

/// Empirical Pr[adversarial score >= half the shard score] with each MU
/// adversarial independently with probability p^A_n.  Trials are split into
/// fixed blocks with derived seeds, so the result does not depend on the
/// number of worker threads.
MonteCarloEstimate monte_carlo_attack_probability(const ShardColumn& col, std::uint64_t trials,
                                                  std::uint64_t seed);

} // namespace shardalloc
