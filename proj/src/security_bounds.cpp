#include "shardalloc/security_bounds.hpp"

#include "shardalloc/errors.hpp"
#include "shardalloc/parallel.hpp"
#include "shardalloc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace shardalloc {

double adversary_expected_score(const ShardColumn& col) {
    double sum = 0.0;
    for (std::size_t n = 0; n < col.scores.size(); ++n) sum += col.p_adv[n] * col.scores[n];
    return sum;
}

double deviation_t(const ShardColumn& col) {
    double sum = 0.0;
    for (std::size_t n = 0; n < col.scores.size(); ++n)
        sum += (0.5 - col.p_adv[n]) * col.scores[n];
    return sum;
}

double sum_of_squares(const ShardColumn& col) {
    double sum = 0.0;
    for (double v : col.scores) sum += v * v;
    return sum;
}

namespace {

double bound_from(double t, double sum_sq) {
    if (t <= 0.0) return 1.0;
    return std::min(1.0, std::exp(-2.0 * t * t / sum_sq));
}

void require_nondegenerate(double sum_sq) {
    if (!(sum_sq > 0.0)) throw DegenerateShard("shard has no positive score");
}

} // namespace

double attack_bound(const ShardColumn& col) {
    const double ss = sum_of_squares(col);
    require_nondegenerate(ss);
    return bound_from(deviation_t(col), ss);
}

ShardSafetyReport is_shard_safe(const ShardColumn& col, double tau, int shard_index) {
    ShardSafetyReport r;
    r.shard_index = shard_index;
    r.t = deviation_t(col);
    r.sum_sq = sum_of_squares(col);
    require_nondegenerate(r.sum_sq);
    r.bound = bound_from(r.t, r.sum_sq);
    r.safe = r.t > 0.0 && r.t * r.t >= -0.5 * std::log(tau) * r.sum_sq;
    return r;
}

Pr51Summary allocation_pr51_summary(const Allocation& alloc) {
    Pr51Summary out{0.0, 1.0, 0.0};
    for (int s = 0; s < alloc.sigma(); ++s) {
        const ShardColumn col = alloc.column(s);
        const double ss = sum_of_squares(col);
        const double b = ss > 0.0 ? bound_from(deviation_t(col), ss) : 1.0;
        out.max = std::max(out.max, b);
        out.min = std::min(out.min, b);
        out.mean += b;
    }
    out.mean /= alloc.sigma();
    return out;
}

double allocation_pr51(const Allocation& alloc) { return allocation_pr51_summary(alloc).max; }

MonteCarloEstimate monte_carlo_attack_probability(const ShardColumn& col, std::uint64_t trials,
                                                  std::uint64_t seed) {
    MonteCarloEstimate est;
    est.trials = trials;
    if (trials == 0) return est;

    double total = 0.0;
    for (double v : col.scores) total += v;
    const double half = 0.5 * total;

    constexpr std::uint64_t kBlock = 1u << 14;
    const std::uint64_t blocks = (trials + kBlock - 1) / kBlock;
    std::vector<std::uint64_t> hits(blocks, 0);
    parallel_for(blocks, [&](std::size_t b) {
        std::mt19937_64 gen(rng::derive(seed, b));
        const std::uint64_t begin = b * kBlock;
        const std::uint64_t end = std::min(trials, begin + kBlock);
        std::uint64_t local = 0;
        for (std::uint64_t i = begin; i < end; ++i) {
            double adv = 0.0;
            for (std::size_t n = 0; n < col.scores.size(); ++n)
                if (rng::uniform01(gen) < col.p_adv[n]) adv += col.scores[n];
            if (adv >= half) ++local;
        }
        hits[b] = local;
    });
    for (auto h : hits) est.hits += h;
    est.frequency = static_cast<double>(est.hits) / static_cast<double>(trials);
    est.std_error =
        std::sqrt(est.frequency * (1.0 - est.frequency) / static_cast<double>(trials));
    return est;
}

} // namespace shardalloc
