#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "shardalloc/baselines.hpp"
#include "shardalloc/errors.hpp"
#include "shardalloc/rng.hpp"
#include "shardalloc/security_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace shardalloc;

namespace {

InstancePtr from_scores(std::vector<double> eta, double p = 0.1, double tau = 0.001, int s_max = 4) {
    const std::vector<double> pv(eta.size(), p);
    return share(make_instance(eta, pv, tau, s_max));
}

long long binomial(int n, int k) {
    long long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

} // namespace

TEST_CASE("method names round trip") {
    for (auto m : {BaselineMethod::Uniform, BaselineMethod::Greedy, BaselineMethod::RandomRestart,
                   BaselineMethod::Exhaustive})
        CHECK(parse_baseline_method(to_string(m)) == m);
    CHECK(parse_baseline_method("random-restart") == BaselineMethod::RandomRestart);
    CHECK(parse_baseline_method("greedy") == BaselineMethod::Greedy);
    CHECK_THROWS_AS(parse_baseline_method("annealing"), Error);
}

TEST_CASE("uniform split halves every score") {
    const auto inst = from_scores({10, 20, 30});
    const Allocation a = uniform_split(inst, 2);
    for (int s = 0; s < 2; ++s) {
        CHECK(a.at(s, 0) == 5.0);
        CHECK(a.at(s, 1) == 10.0);
        CHECK(a.at(s, 2) == 15.0);
    }
    const Allocation one = uniform_split(inst, 1);
    CHECK(std::ranges::equal(one.table(), inst->eta()));
}

TEST_CASE("greedy placement by hand trace") {
    const auto inst = from_scores({4, 3, 2, 1});
    const Allocation a = greedy_round_robin(inst, 2);
    std::multiset<double> totals{a.shard_total(0), a.shard_total(1)};
    CHECK(totals == std::multiset<double>{5.0, 5.0});
    CHECK(a.at(0, 0) == 4.0);  // largest score opens shard 0
    CHECK(a.at(0, 3) == 1.0);
    CHECK(a.at(1, 1) == 3.0);
    CHECK(a.at(1, 2) == 2.0);

    const Allocation one = greedy_round_robin(inst, 1);
    CHECK(std::ranges::equal(one.table(), inst->eta()));

    const Allocation spread = greedy_round_robin(inst, 4);
    for (int s = 0; s < 4; ++s) {
        int holders = 0;
        for (std::size_t n = 0; n < 4; ++n) holders += spread.at(s, n) > 0;
        CHECK(holders == 1);
    }
    CHECK(spread.conserves());
}

TEST_CASE("greedy with one user per shard on equal scores gives the single-user bound") {
    const auto inst = from_scores(std::vector<double>(6, 10.0), 0.1, 0.001, 6);
    const Allocation a = greedy_round_robin(inst, 6);
    // One MU of p = 0.1: t = 0.4 eta, sum of squares eta^2.
    CHECK(allocation_pr51(a) == doctest::Approx(std::exp(-2 * 0.16)));
}

TEST_CASE("random splits conserve scores and are seed-deterministic") {
    const auto inst = from_scores({1, 2.5, 7, 11, 0.3});
    for (int sigma : {1, 2, 5}) {
        const Allocation a = dirichlet_split(inst, sigma, 5.0, 42);
        const Allocation b = dirichlet_split(inst, sigma, 5.0, 42);
        CHECK(std::ranges::equal(a.table(), b.table()));
        CHECK(a.conservation_error() <= 1e-12);
        CHECK(a.sign_ok());
        CHECK(a.min_entry() >= 0.0);
    }
    CHECK_FALSE(std::ranges::equal(dirichlet_split(inst, 3, 5.0, 1).table(),
                                   dirichlet_split(inst, 3, 5.0, 2).table()));
}

TEST_CASE("random restart feasibility") {
    const auto easy = share(make_uniform_instance(20, 10, 0.1, 0.999, 5));
    CHECK(random_restart_feasibility(easy, 5, 0.999, 1, 7).has_value());

    const auto hard = share(make_uniform_instance(4, 10, 0.1, 0.001, 5));
    for (int sigma = 1; sigma <= 5; ++sigma)
        CHECK_FALSE(random_restart_feasibility(hard, sigma, 0.001, 300, 7).has_value());

    InstanceGenConfig g;
    const auto mid = share(generate_instance(g));
    const auto a = random_restart_feasibility(mid, 4, 0.001, 50, 9);
    const auto b = random_restart_feasibility(mid, 4, 0.001, 50, 9);
    REQUIRE(a.has_value() == b.has_value());
    if (a) CHECK(std::ranges::equal(a->table(), b->table()));
}

TEST_CASE("random restart keeps the best sample") {
    InstanceGenConfig g;
    const auto inst = share(generate_instance(g));
    const Allocation best = random_restart_best(inst, 5, 40, 3);
    for (int i = 0; i < 40; ++i)
        CHECK(allocation_pr51(best) <= allocation_pr51(dirichlet_split(inst, 5, 5.0, rng::derive(3, i))));
}

TEST_CASE("exhaustive search rejects instances above the guard rail") {
    CHECK_THROWS_AS(check_exhaustive_guard(*from_scores(std::vector<double>(7, 1.0)), 3), InstanceTooLarge);
    CHECK_THROWS_AS(check_exhaustive_guard(*from_scores({1, 2}, 0.1, 0.001, 4), 3), InstanceTooLarge);
    CHECK_THROWS_AS(check_exhaustive_guard(*from_scores({1, 2}, 0.1, 0.001, 3), 6), InstanceTooLarge);
    CHECK_THROWS_AS(check_exhaustive_guard(*from_scores({1, 2}, 0.1, 0.001, 3), 0), InstanceTooLarge);
    CHECK_NOTHROW(check_exhaustive_guard(*from_scores(std::vector<double>(6, 1.0), 0.1, 0.001, 3), 5));
}

TEST_CASE("grid enumeration visits every composition once") {
    const auto inst = from_scores({3, 6, 9}, 0.1, 0.001, 3);
    for (int sigma = 1; sigma <= 3; ++sigma)
        for (int g = 1; g <= 4; ++g) {
            long long count = 0;
            std::set<std::vector<double>> seen;
            for_each_grid_allocation(*inst, sigma, g, [&](std::span<const double> table) {
                ++count;
                seen.emplace(table.begin(), table.end());
                for (std::size_t n = 0; n < 3; ++n) {
                    double sum = 0.0;
                    for (int s = 0; s < sigma; ++s) sum += table[s * 3 + n];
                    CHECK(sum == doctest::Approx(inst->eta()[n]));
                }
                return true;
            });
            const long long per_user = binomial(g + sigma - 1, sigma - 1);
            CHECK(count == per_user * per_user * per_user);
            CHECK(static_cast<long long>(seen.size()) == count);
        }
}

TEST_CASE("one grid step enumerates whole-score placements") {
    const auto inst = from_scores({1, 2, 4}, 0.1, 0.001, 3);
    int visits = 0;
    for_each_grid_allocation(*inst, 2, 1, [&](std::span<const double> table) {
        ++visits;
        for (std::size_t n = 0; n < 3; ++n) CHECK((table[n] == 0.0 || table[3 + n] == 0.0));
        return true;
    });
    CHECK(visits == 8);
}

TEST_CASE("exhaustive search finds nothing on the unsafe four-user instance") {
    const auto inst = share(make_uniform_instance(4, 10, 0.1, 0.001, 3));
    const BaselineResult r = exhaustive_search(inst, 0.001, 3);
    CHECK(r.sigma_star == 0);
    CHECK(r.status == "UNSAFE");
    CHECK_FALSE(r.allocation);
}

TEST_CASE("exhaustive search shards a low-adversary four-user instance fully") {
    const auto inst = share(make_uniform_instance(4, 10, 0.01, 0.5, 3));
    // Even split bound exp(-2 (0.49 * 40)^2 / 400) at every sigma.
    CHECK(std::exp(-2 * std::pow(0.49 * 40, 2) / 400) == doctest::Approx(0.1465).epsilon(1e-3));
    const BaselineResult r = exhaustive_search(inst, 0.5, 3);
    CHECK(r.sigma_star == 3);
    CHECK(r.status == "SHARDED");
    REQUIRE(r.allocation);
    CHECK(check_feasibility(*r.allocation, 0.5).feasible);
    CHECK(allocation_pr51(uniform_split(inst, 3)) == doctest::Approx(0.1465).epsilon(1e-3));
}

TEST_CASE("exhaustive best pr51 is no worse than the even split on the grid") {
    const auto inst = from_scores({2, 5, 3, 8}, 0.2, 0.001, 3);
    for (int sigma : {1, 2, 3}) {
        const int g = sigma == 1 ? 1 : (sigma == 2 ? 4 : 3);
        const Allocation best = exhaustive_best_pr51(inst, sigma, g);
        CHECK(allocation_pr51(best) <= allocation_pr51(uniform_split(inst, sigma)) * (1 + 1e-12));
    }
}

TEST_CASE("heuristic searches report status and throughput") {
    const auto safe = share(make_uniform_instance(50, 10, 0.1, 0.001, 8));
    const BaselineParams params;
    const BaselineResult u = run_baseline(safe, BaselineMethod::Uniform, params);
    CHECK(u.status == "SHARDED");
    CHECK(u.sigma_star == 8);
    CHECK(u.throughput == 16000.0);
    CHECK(u.pr51 == doctest::Approx(std::exp(-16.0)));

    // Whole-score greedy on 50 equal users puts k users in a shard with bound
    // exp(-0.32 k); k >= 22 is needed for tau = 0.001, so only two shards work.
    const BaselineResult gr = run_baseline(safe, BaselineMethod::Greedy, params);
    CHECK(gr.status == "SHARDED");
    CHECK(gr.sigma_star == 2);
    CHECK(gr.throughput == 4000.0);
    CHECK(gr.pr51 == doctest::Approx(std::exp(-0.32 * 25)));

    const auto unsafe = share(make_uniform_instance(4, 10, 0.1, 0.001, 8));
    BaselineParams one_sample;
    one_sample.restart_budget = 1;
    const BaselineResult rr = run_baseline(unsafe, BaselineMethod::RandomRestart, one_sample);
    CHECK(rr.status == "NO_SOLUTION");
    CHECK(rr.throughput == 0.0);
    CHECK(rr.pr51 == doctest::Approx(std::exp(-1.28)));
}

TEST_CASE("fixed-sigma baseline allocations conserve scores") {
    InstanceGenConfig g;
    g.n_nodes = 30;
    const auto inst = share(generate_instance(g));
    for (auto m : {BaselineMethod::Uniform, BaselineMethod::Greedy, BaselineMethod::RandomRestart})
        for (int sigma : {1, 3, 10}) {
            const Allocation a = baseline_allocation(inst, m, sigma, {});
            CHECK(a.sigma() == sigma);
            CHECK(a.conservation_error() <= 1e-12);
            CHECK(a.sign_ok());
        }
    CHECK_THROWS_AS(baseline_allocation(inst, BaselineMethod::Exhaustive, 2, {}), InstanceTooLarge);
}

TEST_CASE("every allocation counts as one shard for a single shard") {
    const auto inst = from_scores({3, 1, 4, 1, 5});
    for (auto m : {BaselineMethod::Uniform, BaselineMethod::Greedy, BaselineMethod::RandomRestart}) {
        const Allocation a = baseline_allocation(inst, m, 1, {});
        CHECK(allocation_pr51(a) == doctest::Approx(allocation_pr51(uniform_split(inst, 1))));
    }
}
