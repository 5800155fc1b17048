#include "shardalloc/shard_optimizer.hpp"

#include "shardalloc/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace shardalloc {

std::string_view to_string(SearchMode m) {
    return m == SearchMode::Binary ? "binary" : "linear";
}

std::string_view to_string(ShardingStatus s) {
    switch (s) {
    case ShardingStatus::Sharded: return "SHARDED";
    case ShardingStatus::UnshardedSafe: return "UNSHARDED_SAFE";
    case ShardingStatus::Unsafe: return "UNSAFE";
    }
    return "UNSAFE";
}

SearchMode parse_search_mode(std::string_view text) {
    if (text == "binary" || text == "BINARY") return SearchMode::Binary;
    if (text == "linear" || text == "linear-scan" || text == "LINEAR_SCAN")
        return SearchMode::LinearScan;
    throw Error("unknown search mode \"" + std::string(text) + "\"");
}

std::vector<int> derive_x(int sigma, int s_max) {
    if (sigma < 0 || sigma > s_max) throw InvariantViolation("need 0 <= sigma <= s_max");
    std::vector<int> x(static_cast<std::size_t>(s_max), 0);
    std::fill_n(x.begin(), sigma, 1);
    if (!activation_constraints_hold(x, sigma)) throw InvariantViolation("activation vector violates its bounds");
    return x;
}

bool activation_constraints_hold(const std::vector<int>& x, int sigma) {
    const double S = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const int s = static_cast<int>(i) + 1;
        if (x[i] != 0 && x[i] != 1) return false;
        if (x[i] < (sigma - s + 1) / S) return false;
        // Past sigma + 1 the upper bound goes negative; binary x reads it as 0.
        if (x[i] > std::max(0, sigma - s + 1)) return false;
    }
    return true;
}

double throughput(int sigma, double t_per_shard) { return t_per_shard * sigma; }

ShardSearchOutcome search_shard_count(int s_max, SearchMode mode,
                                      const std::function<bool(int)>& feasible_at) {
    if (s_max < 1) throw InvariantViolation("s_max must be >= 1");
    ShardSearchOutcome out;
    auto probe = [&](int sigma) {
        out.probed.push_back(sigma);
        return feasible_at(sigma);
    };

    if (s_max >= 2) {
        if (mode == SearchMode::LinearScan) {
            for (int sigma = s_max; sigma >= 2; --sigma) {
                if (probe(sigma)) {
                    out.best_sigma = sigma;
                    break;
                }
            }
        } else if (probe(s_max)) {
            out.best_sigma = s_max;
        } else {
            int high = s_max - 1;
            int low = 2;
            if (high >= low) {
                auto mid = [&] { return (high + low + 1) / 2; };
                int sigma = mid();
                bool high_probed = false;
                do {
                    const bool ok = probe(sigma);
                    if (sigma == high) high_probed = true;
                    if (ok) {
                        low = sigma;
                        out.best_sigma = std::max(out.best_sigma, sigma);
                    } else {
                        high = sigma;
                        high_probed = true;
                    }
                    sigma = mid();
                } while (sigma != high);
                if (out.best_sigma > 0 && !high_probed && high > out.best_sigma && probe(high))
                    out.best_sigma = high;
            }
        }
    }
    if (out.best_sigma == 0) out.unsharded_safe = probe(1);
    return out;
}

ShardingSolution optimize_sharding(const InstancePtr& instance, StationarityVariant variant,
                                   SearchMode mode) {
    const auto start = std::chrono::steady_clock::now();
    const double tau = instance->tau();

    ShardingSolution sol;
    sol.variant = variant;
    sol.mode = mode;
    std::map<int, P3Solution> solved;

    auto feasible_at = [&](int sigma) {
        P3Solution p3 = solve_p3(instance, sigma, tau, variant);
        ++sol.solves_performed;
        sol.max_residual = std::max(sol.max_residual, p3.diagnostics.residual_norm);
        const bool ok = check_feasibility(p3.allocation, tau).feasible;
        solved.insert_or_assign(sigma, std::move(p3));
        return ok;
    };
    const ShardSearchOutcome search = search_shard_count(instance->s_max(), mode, feasible_at);
    sol.probed_sigmas = search.probed;

    if (search.best_sigma >= 2) {
        sol.status = ShardingStatus::Sharded;
        sol.sigma_star = search.best_sigma;
    } else if (search.unsharded_safe) {
        sol.status = ShardingStatus::UnshardedSafe;
        sol.sigma_star = 1;
    } else {
        sol.status = ShardingStatus::Unsafe;
        sol.sigma_star = 0;
    }

    sol.x = derive_x(sol.sigma_star, instance->s_max());
    sol.throughput = throughput(sol.sigma_star, instance->t_per_shard());
    const int report_sigma = std::max(1, sol.sigma_star);
    const Allocation& reported = solved.at(report_sigma).allocation;
    sol.pr51_summary = allocation_pr51_summary(reported);
    sol.pr51 = sol.pr51_summary.max;
    if (sol.sigma_star >= 1) sol.allocation = reported;
    sol.wall_time = std::chrono::steady_clock::now() - start;
    return sol;
}

P1Check verify_p1(const ShardingSolution& solution, const ProblemInstance& instance) {
    P1Check check;
    const int S = instance.s_max();
    const auto& x = solution.x;
    check.activation = static_cast<int>(x.size()) == S &&
                       activation_constraints_hold(x, solution.sigma_star);
    if (!solution.allocation) {
        // The empty allocation cannot conserve positive scores.
        check.safety = true;
        check.conservation = false;
        return check;
    }
    const Allocation& alloc = *solution.allocation;
    const std::size_t n_users = instance.size();
    const double log_tau = std::log(instance.tau());
    const auto p = instance.p_adv();
    const auto eta = instance.eta();

    check.safety = static_cast<int>(x.size()) == S;
    for (int s = 0; s < S && check.safety; ++s) {
        double t = 0.0, sq = 0.0;
        if (s < alloc.sigma()) {
            for (std::size_t n = 0; n < n_users; ++n) {
                t += (0.5 - p[n]) * alloc.at(s, n);
                sq += alloc.at(s, n) * alloc.at(s, n);
            }
        }
        if (!(t * t >= -0.5 * x[static_cast<std::size_t>(s)] * log_tau * sq)) check.safety = false;
    }
    check.conservation = alloc.sigma() <= S;
    for (std::size_t n = 0; n < n_users && check.conservation; ++n) {
        double sum = 0.0;
        for (int s = 0; s < alloc.sigma(); ++s) sum += alloc.at(s, n);
        check.conservation = std::abs(sum - eta[n]) <= Allocation::kConservationTolerance * eta[n];
    }
    return check;
}

std::string solution_to_json(const ShardingSolution& sol, const std::string& allocation_csv_path) {
    nlohmann::json doc;
    doc["status"] = std::string(to_string(sol.status));
    doc["sigma_star"] = sol.sigma_star;
    doc["throughput"] = sol.throughput;
    doc["pr51"] = sol.pr51;
    doc["pr51_min"] = sol.pr51_summary.min;
    doc["pr51_mean"] = sol.pr51_summary.mean;
    doc["x"] = sol.x;
    doc["solves_performed"] = sol.solves_performed;
    doc["probed_sigmas"] = sol.probed_sigmas;
    doc["wall_time_ms"] = sol.wall_time.count() * 1e3;
    doc["variant"] = std::string(to_string(sol.variant));
    doc["search_mode"] = std::string(to_string(sol.mode));
    doc["max_residual"] = sol.max_residual;
    doc["allocation_csv"] = allocation_csv_path;
    return doc.dump(2);
}

} // namespace shardalloc
