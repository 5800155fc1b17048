#include "shardalloc/baselines.hpp"

#include "shardalloc/errors.hpp"
#include "shardalloc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace shardalloc {

std::string_view to_string(BaselineMethod m) {
    switch (m) {
    case BaselineMethod::Uniform: return "UNIFORM";
    case BaselineMethod::Greedy: return "GREEDY";
    case BaselineMethod::RandomRestart: return "RANDOM_RESTART";
    case BaselineMethod::Exhaustive: return "EXHAUSTIVE";
    }
    return "UNIFORM";
}

BaselineMethod parse_baseline_method(std::string_view text) {
    if (text == "uniform" || text == "UNIFORM") return BaselineMethod::Uniform;
    if (text == "greedy" || text == "GREEDY") return BaselineMethod::Greedy;
    if (text == "random-restart" || text == "random_restart" || text == "RANDOM_RESTART")
        return BaselineMethod::RandomRestart;
    if (text == "exhaustive" || text == "EXHAUSTIVE") return BaselineMethod::Exhaustive;
    throw Error("unknown baseline method \"" + std::string(text) + "\"");
}

Allocation uniform_split(const InstancePtr& instance, int sigma) {
    if (sigma < 1) throw InvariantViolation("sigma must be >= 1");
    const auto eta = instance->eta();
    std::vector<double> table;
    table.reserve(static_cast<std::size_t>(sigma) * eta.size());
    for (int s = 0; s < sigma; ++s)
        for (double e : eta) table.push_back(e / sigma);
    return {instance, sigma, std::move(table)};
}

Allocation greedy_round_robin(const InstancePtr& instance, int sigma) {
    if (sigma < 1) throw InvariantViolation("sigma must be >= 1");
    const auto eta = instance->eta();
    const auto& profiles = instance->profiles();
    const std::size_t n_users = eta.size();

    std::vector<std::size_t> order(n_users);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (eta[a] != eta[b]) return eta[a] > eta[b];
        return profiles[a].mu_id < profiles[b].mu_id;
    });

    std::vector<double> totals(static_cast<std::size_t>(sigma), 0.0);
    std::vector<double> table(static_cast<std::size_t>(sigma) * n_users, 0.0);
    for (std::size_t n : order) {
        const auto target = static_cast<std::size_t>(
            std::min_element(totals.begin(), totals.end()) - totals.begin());
        totals[target] += eta[n];
        table[target * n_users + n] = eta[n];
    }
    return {instance, sigma, std::move(table)};
}

Allocation dirichlet_split(const InstancePtr& instance, int sigma, double concentration,
                           std::uint64_t seed) {
    if (sigma < 1) throw InvariantViolation("sigma must be >= 1");
    const auto eta = instance->eta();
    const std::size_t n_users = eta.size();
    const auto shards = static_cast<std::size_t>(sigma);
    std::mt19937_64 gen(seed);
    std::gamma_distribution<double> gamma(concentration, 1.0);

    std::vector<double> table(shards * n_users, 0.0);
    std::vector<double> w(shards);
    for (std::size_t n = 0; n < n_users; ++n) {
        double sum = 0.0;
        for (auto& v : w) sum += (v = gamma(gen));
        double assigned = 0.0;
        for (std::size_t s = 0; s + 1 < shards; ++s) {
            const double part = eta[n] * (w[s] / sum);
            table[s * n_users + n] = part;
            assigned += part;
        }
        table[(shards - 1) * n_users + n] = std::max(0.0, eta[n] - assigned);
    }
    return {instance, sigma, std::move(table)};
}

std::optional<Allocation> random_restart_feasibility(const InstancePtr& instance, int sigma,
                                                     double tau, int budget, std::uint64_t seed,
                                                     double concentration) {
    if (budget < 1) throw InvariantViolation("restart budget must be >= 1");
    for (int i = 0; i < budget; ++i) {
        Allocation candidate =
            dirichlet_split(instance, sigma, concentration, rng::derive(seed, static_cast<std::uint64_t>(i)));
        if (check_feasibility(candidate, tau).feasible) return candidate;
    }
    return std::nullopt;
}

Allocation random_restart_best(const InstancePtr& instance, int sigma, int budget,
                               std::uint64_t seed, double concentration) {
    if (budget < 1) throw InvariantViolation("restart budget must be >= 1");
    std::optional<Allocation> best;
    double best_pr51 = 2.0;
    for (int i = 0; i < budget; ++i) {
        Allocation candidate =
            dirichlet_split(instance, sigma, concentration, rng::derive(seed, static_cast<std::uint64_t>(i)));
        const double pr = allocation_pr51(candidate);
        if (pr < best_pr51) {
            best_pr51 = pr;
            best = std::move(candidate);
        }
    }
    return std::move(*best);
}

void check_exhaustive_guard(const ProblemInstance& instance, int grid_steps) {
    if (instance.size() > ExhaustiveGuard::kMaxUsers || instance.s_max() > ExhaustiveGuard::kMaxShards ||
        grid_steps < 1 || grid_steps > ExhaustiveGuard::kMaxGridSteps)
        throw InstanceTooLarge("exhaustive search needs N <= 6, S_max <= 3 and 1 <= grid_steps <= 5 (got N=" +
                               std::to_string(instance.size()) + ", S_max=" +
                               std::to_string(instance.s_max()) + ", grid_steps=" +
                               std::to_string(grid_steps) + ")");
}

namespace {

/// All ways to write `total` as an ordered sum of `parts` non-negative integers.
std::vector<std::vector<int>> compositions(int total, int parts) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(parts), 0);
    auto rec = [&](auto&& self, int idx, int left) -> void {
        if (idx == parts - 1) {
            cur[static_cast<std::size_t>(idx)] = left;
            out.push_back(cur);
            return;
        }
        for (int v = left; v >= 0; --v) {
            cur[static_cast<std::size_t>(idx)] = v;
            self(self, idx + 1, left - v);
        }
    };
    rec(rec, 0, total);
    return out;
}

} // namespace

void for_each_grid_allocation(const ProblemInstance& instance, int sigma, int grid_steps,
                              const std::function<bool(std::span<const double>)>& visit) {
    if (sigma < 1) throw InvariantViolation("sigma must be >= 1");
    const auto comps = compositions(grid_steps, sigma);
    const auto eta = instance.eta();
    const std::size_t n_users = eta.size();
    std::vector<double> table(static_cast<std::size_t>(sigma) * n_users, 0.0);

    bool stop = false;
    auto rec = [&](auto&& self, std::size_t n) -> void {
        if (stop) return;
        if (n == n_users) {
            if (!visit(table)) stop = true;
            return;
        }
        for (const auto& c : comps) {
            for (int s = 0; s < sigma; ++s)
                table[static_cast<std::size_t>(s) * n_users + n] =
                    eta[n] * c[static_cast<std::size_t>(s)] / grid_steps;
            self(self, n + 1);
            if (stop) return;
        }
    };
    rec(rec, 0);
}

namespace {

/// Max per-shard bound of a raw table; empty shards count as 1.
double table_pr51(const ProblemInstance& instance, std::span<const double> table, int sigma) {
    const std::size_t n_users = instance.size();
    double worst = 0.0;
    for (int s = 0; s < sigma; ++s) {
        const ShardColumn col(table.subspan(static_cast<std::size_t>(s) * n_users, n_users),
                              instance.p_adv());
        const double ss = sum_of_squares(col);
        worst = std::max(worst, ss > 0.0 ? attack_bound(col) : 1.0);
    }
    return worst;
}

bool table_safe(const ProblemInstance& instance, std::span<const double> table, int sigma,
                double tau) {
    const std::size_t n_users = instance.size();
    for (int s = 0; s < sigma; ++s) {
        const ShardColumn col(table.subspan(static_cast<std::size_t>(s) * n_users, n_users),
                              instance.p_adv());
        if (!(sum_of_squares(col) > 0.0) || !is_shard_safe(col, tau).safe) return false;
    }
    return true;
}

} // namespace

BaselineResult exhaustive_search(const InstancePtr& instance, double tau, int grid_steps) {
    check_exhaustive_guard(*instance, grid_steps);
    const auto start = std::chrono::steady_clock::now();
    BaselineResult res;
    res.method = BaselineMethod::Exhaustive;

    for (int sigma = instance->s_max(); sigma >= 1 && !res.allocation; --sigma) {
        for_each_grid_allocation(*instance, sigma, grid_steps, [&](std::span<const double> t) {
            ++res.feasibility_checks;
            if (!table_safe(*instance, t, sigma, tau)) return true;
            res.allocation.emplace(instance, sigma, std::vector<double>(t.begin(), t.end()));
            res.sigma_star = sigma;
            return false;
        });
    }
    if (res.allocation) {
        res.pr51 = allocation_pr51(*res.allocation);
        res.status = res.sigma_star >= 2 ? "SHARDED" : "UNSHARDED_SAFE";
    } else {
        res.pr51 = allocation_pr51(uniform_split(instance, 1));
        res.status = "UNSAFE";
    }
    res.throughput = throughput(res.sigma_star, instance->t_per_shard());
    res.wall_time = std::chrono::steady_clock::now() - start;
    return res;
}

Allocation exhaustive_best_pr51(const InstancePtr& instance, int sigma, int grid_steps) {
    if (instance->size() > ExhaustiveGuard::kMaxUsers || sigma > ExhaustiveGuard::kMaxShards ||
        grid_steps < 1 || grid_steps > ExhaustiveGuard::kMaxGridSteps)
        throw InstanceTooLarge("exhaustive enumeration needs N <= 6, sigma <= 3, grid_steps <= 5");
    std::vector<double> best;
    double best_pr51 = 2.0;
    for_each_grid_allocation(*instance, sigma, grid_steps, [&](std::span<const double> t) {
        const double pr = table_pr51(*instance, t, sigma);
        if (pr < best_pr51) {
            best_pr51 = pr;
            best.assign(t.begin(), t.end());
        }
        return true;
    });
    return {instance, sigma, std::move(best)};
}

BaselineResult run_baseline(const InstancePtr& instance, BaselineMethod method,
                            const BaselineParams& params) {
    if (method == BaselineMethod::Exhaustive)
        return exhaustive_search(instance, instance->tau(), params.grid_steps);

    const auto start = std::chrono::steady_clock::now();
    const double tau = instance->tau();
    BaselineResult res;
    res.method = method;
    std::optional<Allocation> best;

    auto feasible_at = [&](int sigma) {
        ++res.feasibility_checks;
        std::optional<Allocation> candidate;
        if (method == BaselineMethod::Uniform) {
            candidate = uniform_split(instance, sigma);
        } else if (method == BaselineMethod::Greedy) {
            candidate = greedy_round_robin(instance, sigma);
        } else {
            candidate = random_restart_feasibility(instance, sigma, tau, params.restart_budget,
                                                   rng::derive(params.seed, static_cast<std::uint64_t>(sigma)),
                                                   params.dirichlet_concentration);
            if (!candidate) return false;
        }
        const bool ok = check_feasibility(*candidate, tau).feasible;
        if (ok && sigma >= 2 && (!best || sigma > best->sigma())) best = std::move(candidate);
        return ok;
    };
    const SearchMode mode =
        method == BaselineMethod::RandomRestart ? SearchMode::Binary : SearchMode::LinearScan;
    const ShardSearchOutcome out = search_shard_count(instance->s_max(), mode, feasible_at);

    if (out.best_sigma >= 2 && best) {
        res.sigma_star = out.best_sigma;
        res.allocation = std::move(best);
        res.pr51 = allocation_pr51(*res.allocation);
        res.status = "SHARDED";
    } else {
        res.sigma_star = 0;
        res.pr51 = allocation_pr51(uniform_split(instance, 1));
        res.status = "NO_SOLUTION";
    }
    res.throughput = throughput(res.sigma_star, instance->t_per_shard());
    res.wall_time = std::chrono::steady_clock::now() - start;
    return res;
}

Allocation baseline_allocation(const InstancePtr& instance, BaselineMethod method, int sigma,
                               const BaselineParams& params) {
    switch (method) {
    case BaselineMethod::Uniform: return uniform_split(instance, sigma);
    case BaselineMethod::Greedy: return greedy_round_robin(instance, sigma);
    case BaselineMethod::RandomRestart:
        return random_restart_best(instance, sigma, params.restart_budget,
                                   rng::derive(params.seed, static_cast<std::uint64_t>(sigma)),
                                   params.dirichlet_concentration);
    case BaselineMethod::Exhaustive:
        return exhaustive_best_pr51(instance, sigma, params.grid_steps);
    }
    throw Error("unknown baseline method");
}

} // namespace shardalloc
