#pragma once

#include "shardalloc/core_model.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace shardalloc {

/// Scores of one shard together with the p^A of each MU.  A non-owning view;
/// negative entries are tolerated so that sign-infeasible allocations can
/// still be analysed.
struct ShardColumn {
    std::span<const double> scores;
    std::span<const double> p_adv;

    ShardColumn(std::span<const double> scores, std::span<const double> p_adv);
};

/// sigma x N table of per-shard engagement scores, stored shard-major.
class Allocation {
public:
    static constexpr double kConservationTolerance = 1e-9;
    static constexpr double kSignTolerance = 1e-12;

    Allocation(InstancePtr instance, int sigma, std::vector<double> table);

    int sigma() const { return sigma_; }
    std::size_t users() const { return instance_->size(); }
    const InstancePtr& instance() const { return instance_; }

    double at(int shard, std::size_t n) const { return table_[index(shard, n)]; }
    std::span<const double> shard_scores(int shard) const;
    ShardColumn column(int shard) const;
    std::span<const double> table() const { return table_; }

    /// max_n |sum_s eta^s_n - eta_n| / eta_n
    double conservation_error() const;
    bool conserves(double tol = kConservationTolerance) const {
        return conservation_error() <= tol;
    }
    /// No entry below -kSignTolerance.
    bool sign_ok() const;
    double min_entry() const;
    double shard_total(int shard) const;

private:
    std::size_t index(int shard, std::size_t n) const {
        return static_cast<std::size_t>(shard) * users() + n;
    }

    InstancePtr instance_;
    int sigma_;
    std::vector<double> table_;
};

/// CSV `shard,mu_id,score`, one row per (shard, MU); shards are 1-based and
/// scores are written with 17 significant digits.
void save_allocation_csv(const Allocation& alloc, const std::filesystem::path& path);
Allocation load_allocation_csv(InstancePtr instance, const std::filesystem::path& path);

} // namespace shardalloc
