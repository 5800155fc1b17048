#pragma once

// Epoch-level Proof-of-Engagement simulation.  Each epoch: corruptions are
// applied, the shard layout is periodically recomputed, and every shard
// elects one leader per slot with probability proportional to score.
// Randomness for leader election comes from a per-shard SHA-256 hash chain
// standing in for a PVSS beacon.

#include "shardalloc/shard_optimizer.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace shardalloc {

using Seed256 = std::array<std::uint8_t, 32>;

Seed256 sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Seed256& seed);

/// Follow-the-Satoshi draw: hash(seed || slot) picks a point in
/// [0, total score) and the MU whose cumulative interval holds it wins.
/// Throws EmptyShard when no score is positive.
int elect_leader(std::span<const std::pair<int, double>> shard_scores, const Seed256& seed,
                 std::uint64_t slot);

/// hash(prev || epoch || shard_index), little-endian 64-bit integers.
Seed256 next_seed(const Seed256& prev, std::uint64_t epoch, std::uint64_t shard_index);

/// Grows the list by repeatedly splitting a beacon-chosen seed into two
/// hash-derived seeds, or shrinks it by dropping beacon-chosen seeds, until
/// it holds exactly new_sigma entries.
std::vector<Seed256> remap_seeds(const std::vector<Seed256>& old_seeds, int new_sigma,
                                 const Seed256& beacon_seed);

enum class AdversaryModel {
    None,            // only corrupted MUs are adversarial
    StaticBernoulli, // each MU adversarial w.p. p^A, drawn once at start
    EpochBernoulli,  // redrawn independently every epoch
};

std::string_view to_string(AdversaryModel m);
AdversaryModel parse_adversary_model(std::string_view text);

struct EpochConfig {
    int epochs = 100;
    int slots_per_epoch = 10;
    double corruption_rate = 0.0;  // expected new corruptions per epoch
    int corruption_delay = 0;      // epochs until a corruption takes effect
    int reconfigure_every = 1;
    std::uint64_t rng_seed = 1;
    AdversaryModel adversary = AdversaryModel::None;
};

struct SimulationSettings {
    StationarityVariant variant = StationarityVariant::Rederived;
    SearchMode mode = SearchMode::Binary;
    /// Use uniform_split(fixed_sigma) instead of running the optimizer.
    std::optional<int> fixed_sigma;
    /// p^A substituted for corrupted MUs when re-optimizing.
    double corrupted_p_adv = 0.49;
};

struct PendingCorruption {
    int mu_id = 0;
    int activation_epoch = 0;
    bool operator==(const PendingCorruption&) const = default;
};

struct NetworkState {
    InstancePtr instance;
    std::optional<Allocation> allocation;
    std::set<int> corrupted;
    std::vector<PendingCorruption> pending;
    std::vector<Seed256> seeds;
};

/// Queues a corruption of `mu_id` that takes effect at epoch + delay.
void schedule_corruption(NetworkState& state, int mu_id, int epoch, int delay);

/// Draws Poisson(corruption_rate) new targets uniformly among MUs that are
/// neither corrupted nor pending, schedules them at epoch + delay, then
/// activates every pending corruption due at or before `epoch`.
NetworkState apply_corruptions(NetworkState state, int epoch, const EpochConfig& config,
                               std::mt19937_64& gen);

/// Scores of one shard as (mu_id, score) pairs.
std::vector<std::pair<int, double>> shard_members(const Allocation& alloc, int shard);

/// Fraction of a shard's score held by MUs in `adversaries`.
double adversary_fraction(const Allocation& alloc, int shard, const std::set<int>& adversaries);

struct EpochReport {
    int epoch = 0;
    int sigma = 0;
    std::vector<std::vector<int>> leaders;  // [shard][slot]
    std::vector<double> adv_fraction;       // per shard
    std::set<int> attacked_shards;          // adv_fraction >= 0.5
    bool reconfigured = false;
};

struct SimulationReport {
    std::vector<EpochReport> epochs;
    std::uint64_t shard_epoch_samples = 0;
    std::uint64_t attacked_samples = 0;
    double attacked_fraction = 0.0;
    double attacked_std_error = 0.0;
    double mean_adv_fraction = 0.0;
    std::map<int, std::uint64_t> leader_counts;
    int reconfigurations = 0;
    double initial_pr51 = 1.0;  // analytic bound of the epoch-0 allocation
    bool aborted = false;
    int abort_epoch = -1;
    std::string abort_reason;
    // State at the end of the run (or at the abort).
    int final_sigma = 0;
    std::vector<int> final_corrupted;
    std::vector<PendingCorruption> final_pending;
};

/// Runs the epoch loop; optimizer errors propagate, an Unsafe re-optimization
/// stops the run with `aborted` set and the state captured in the report.
SimulationReport run_simulation(const InstancePtr& instance, const EpochConfig& config,
                                const SimulationSettings& settings);

std::string simulation_report_json(const SimulationReport& report);
/// Per-slot rows `epoch,shard,adv_fraction,attacked,leader_mu,reconfigured`,
/// ordered by epoch, shard, slot.
void write_epoch_csv(const SimulationReport& report, const std::filesystem::path& path);

EpochConfig epoch_config_from_json(std::string_view text);
SimulationSettings simulation_settings_from_json(std::string_view text);

} // namespace shardalloc
