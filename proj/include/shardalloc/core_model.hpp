#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shardalloc {

/// Contribution scores of one metaverse user (MU).
struct EngagementProfile {
    int mu_id = 0;
    double data_score = 0.0;
    double compute_score = 0.0;
    double token_score = 0.0;

    bool operator==(const EngagementProfile&) const = default;
};

struct Weights {
    double alpha_d = 1.0;
    double alpha_c = 1.0;
    double alpha_t = 1.0;

    /// Throws InvariantViolation unless all weights are >= 0 and one is > 0.
    void validate() const;

    bool operator==(const Weights&) const = default;
};

/// Provenance of a generated instance (achieved statistics of the draw).
struct InstanceMeta {
    std::uint64_t seed = 0;
    double achieved_mean = 0.0;
    double achieved_std = 0.0;
    double achieved_spread = 0.0;

    bool operator==(const InstanceMeta&) const = default;
};

/// Engagement score: alpha_D * D + alpha_C * C + alpha_T * T.
double compute_engagement(const EngagementProfile& profile, const Weights& weights);

/// Immutable optimizer input.  The engagement vector is derived from the
/// profiles at construction and cached; every invariant is checked there.
class ProblemInstance {
public:
    ProblemInstance(std::vector<EngagementProfile> profiles,
                    Weights weights,
                    std::vector<double> p_adv,
                    double tau,
                    int s_max,
                    double t_per_shard,
                    std::optional<InstanceMeta> meta = std::nullopt);

    std::size_t size() const { return profiles_.size(); }
    const std::vector<EngagementProfile>& profiles() const { return profiles_; }
    const Weights& weights() const { return weights_; }
    std::span<const double> eta() const { return eta_; }
    std::span<const double> p_adv() const { return p_adv_; }
    double tau() const { return tau_; }
    int s_max() const { return s_max_; }
    double t_per_shard() const { return t_per_shard_; }
    const std::optional<InstanceMeta>& meta() const { return meta_; }

    ProblemInstance with_tau(double tau) const;
    ProblemInstance with_s_max(int s_max) const;
    ProblemInstance with_p_adv(std::vector<double> p_adv) const;
    /// Multiplies every p^A by `factor`; throws InvariantViolation if any
    /// scaled value leaves [0, 0.5).
    ProblemInstance with_p_adv_scaled(double factor) const;

    bool operator==(const ProblemInstance&) const = default;

private:
    std::vector<EngagementProfile> profiles_;
    Weights weights_;
    std::vector<double> eta_;
    std::vector<double> p_adv_;
    double tau_;
    int s_max_;
    double t_per_shard_;
    std::optional<InstanceMeta> meta_;
};

using InstancePtr = std::shared_ptr<const ProblemInstance>;

inline InstancePtr share(ProblemInstance instance) {
    return std::make_shared<const ProblemInstance>(std::move(instance));
}

/// N users with identical score `eta` (held as tokens) and identical p^A.
ProblemInstance make_uniform_instance(int n, double eta, double p_adv, double tau,
                                      int s_max, double t_per_shard = 2000.0);

/// Instance with the given engagement scores (held as tokens, unit weights).
ProblemInstance make_instance(std::span<const double> eta, std::span<const double> p_adv,
                              double tau, int s_max, double t_per_shard = 2000.0);

struct InstanceGenConfig {
    int n_nodes = 50;
    double score_mean = 36.8;
    double score_std = 6.7;
    double max_difference = 31.0;
    double p_adv_default = 0.1;
    double tau = 0.001;
    int s_max = 10;
    double t_per_shard = 2000.0;
    std::uint64_t rng_seed = 7;
    // Affinely rescale each normal draw so its sample mean and population STD
    // equal the requested values exactly before the rejection tests.
    bool match_moments = true;
    int max_rounds = 10000;
};

/// Draws normal engagement scores, rejecting whole draws until every score is
/// positive and max - min <= max_difference.  Throws GenerationFailure after
/// `max_rounds` rejected draws.
ProblemInstance generate_instance(const InstanceGenConfig& config);

struct InstanceStats {
    double mean = 0.0;
    double std = 0.0; // population
    double max_difference = 0.0;
    double total_score = 0.0;
};

InstanceStats score_stats(std::span<const double> scores);
InstanceStats instance_stats(const ProblemInstance& instance);

std::string instance_to_json(const ProblemInstance& instance);
/// Throws MalformedFile for missing/mistyped fields and InvariantViolation
/// for well-formed documents that break an instance invariant.
ProblemInstance instance_from_json(std::string_view text);

void save_instance(const ProblemInstance& instance, const std::filesystem::path& path);
ProblemInstance load_instance(const std::filesystem::path& path);

} // namespace shardalloc
