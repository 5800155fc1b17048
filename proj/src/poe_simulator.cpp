#include "shardalloc/poe_simulator.hpp"

#include "shardalloc/baselines.hpp"
#include "shardalloc/errors.hpp"
#include "shardalloc/rng.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace shardalloc {

namespace {

void append_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_seed(std::vector<std::uint8_t>& buf, const Seed256& s) {
    buf.insert(buf.end(), s.begin(), s.end());
}

std::uint64_t leading_u64(const Seed256& h) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(h[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

std::size_t beacon_index(const Seed256& beacon, std::uint8_t tag, std::uint64_t round,
                         std::size_t size) {
    std::vector<std::uint8_t> buf;
    append_seed(buf, beacon);
    buf.push_back(tag);
    append_u64(buf, round);
    return static_cast<std::size_t>(leading_u64(sha256(buf)) % size);
}

} // namespace

Seed256 sha256(std::span<const std::uint8_t> bytes) {
    Seed256 out{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size())
        throw Error("SHA-256 digest failed");
    return out;
}

std::string to_hex(const Seed256& seed) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : seed) {
        s.push_back(kDigits[b >> 4]);
        s.push_back(kDigits[b & 0xF]);
    }
    return s;
}

int elect_leader(std::span<const std::pair<int, double>> shard_scores, const Seed256& seed,
                 std::uint64_t slot) {
    double total = 0.0;
    const std::pair<int, double>* last_positive = nullptr;
    for (const auto& entry : shard_scores) {
        if (entry.second > 0.0) {
            total += entry.second;
            last_positive = &entry;
        }
    }
    if (!last_positive) throw EmptyShard("shard has no MU with a positive score");

    std::vector<std::uint8_t> buf;
    append_seed(buf, seed);
    append_u64(buf, slot);
    const double u = static_cast<double>(leading_u64(sha256(buf)) >> 11) * 0x1.0p-53;
    const double point = u * total;

    double cumulative = 0.0;
    for (const auto& [mu, score] : shard_scores) {
        if (!(score > 0.0)) continue;
        cumulative += score;
        if (point < cumulative) return mu;
    }
    return last_positive->first;
}

Seed256 next_seed(const Seed256& prev, std::uint64_t epoch, std::uint64_t shard_index) {
    std::vector<std::uint8_t> buf;
    append_seed(buf, prev);
    append_u64(buf, epoch);
    append_u64(buf, shard_index);
    return sha256(buf);
}

std::vector<Seed256> remap_seeds(const std::vector<Seed256>& old_seeds, int new_sigma,
                                 const Seed256& beacon_seed) {
    if (old_seeds.empty()) throw InvariantViolation("remap_seeds needs at least one seed");
    if (new_sigma < 1) throw InvariantViolation("new_sigma must be >= 1");
    std::vector<Seed256> seeds = old_seeds;
    const auto target = static_cast<std::size_t>(new_sigma);
    std::uint64_t round = 0;
    while (seeds.size() < target) {
        const std::size_t j = beacon_index(beacon_seed, 's', round++, seeds.size());
        std::vector<std::uint8_t> buf;
        append_seed(buf, seeds[j]);
        buf.push_back(0);
        const Seed256 first = sha256(buf);
        buf.back() = 1;
        const Seed256 second = sha256(buf);
        seeds[j] = first;
        seeds.insert(seeds.begin() + static_cast<std::ptrdiff_t>(j) + 1, second);
    }
    while (seeds.size() > target) {
        const std::size_t j = beacon_index(beacon_seed, 'd', round++, seeds.size());
        seeds.erase(seeds.begin() + static_cast<std::ptrdiff_t>(j));
    }
    return seeds;
}

std::string_view to_string(AdversaryModel m) {
    switch (m) {
    case AdversaryModel::None: return "none";
    case AdversaryModel::StaticBernoulli: return "static";
    case AdversaryModel::EpochBernoulli: return "epoch";
    }
    return "none";
}

AdversaryModel parse_adversary_model(std::string_view text) {
    if (text == "none") return AdversaryModel::None;
    if (text == "static") return AdversaryModel::StaticBernoulli;
    if (text == "epoch") return AdversaryModel::EpochBernoulli;
    throw Error("unknown adversary model \"" + std::string(text) + "\"");
}

void schedule_corruption(NetworkState& state, int mu_id, int epoch, int delay) {
    state.pending.push_back({mu_id, epoch + delay});
}

NetworkState apply_corruptions(NetworkState state, int epoch, const EpochConfig& config,
                               std::mt19937_64& gen) {
    if (config.corruption_rate > 0.0) {
        std::poisson_distribution<int> arrivals(config.corruption_rate);
        int k = arrivals(gen);
        std::vector<int> honest;
        for (const auto& p : state.instance->profiles()) {
            const bool pending = std::any_of(state.pending.begin(), state.pending.end(),
                                             [&](const auto& pc) { return pc.mu_id == p.mu_id; });
            if (!pending && !state.corrupted.contains(p.mu_id)) honest.push_back(p.mu_id);
        }
        while (k-- > 0 && !honest.empty()) {
            const auto idx = std::min(honest.size() - 1,
                                      static_cast<std::size_t>(rng::uniform01(gen) * honest.size()));
            schedule_corruption(state, honest[idx], epoch, config.corruption_delay);
            honest.erase(honest.begin() + static_cast<std::ptrdiff_t>(idx));
        }
    }
    auto due = [&](const PendingCorruption& pc) { return pc.activation_epoch <= epoch; };
    for (const auto& pc : state.pending)
        if (due(pc)) state.corrupted.insert(pc.mu_id);
    std::erase_if(state.pending, due);
    return state;
}

std::vector<std::pair<int, double>> shard_members(const Allocation& alloc, int shard) {
    const auto& profiles = alloc.instance()->profiles();
    std::vector<std::pair<int, double>> out;
    out.reserve(alloc.users());
    for (std::size_t n = 0; n < alloc.users(); ++n)
        out.emplace_back(profiles[n].mu_id, alloc.at(shard, n));
    return out;
}

double adversary_fraction(const Allocation& alloc, int shard, const std::set<int>& adversaries) {
    const auto& profiles = alloc.instance()->profiles();
    double adv = 0.0, total = 0.0;
    for (std::size_t n = 0; n < alloc.users(); ++n) {
        const double v = alloc.at(shard, n);
        total += v;
        if (adversaries.contains(profiles[n].mu_id)) adv += v;
    }
    return total > 0.0 ? std::clamp(adv / total, 0.0, 1.0) : 0.0;
}

SimulationReport run_simulation(const InstancePtr& instance, const EpochConfig& config,
                                const SimulationSettings& settings) {
    if (config.epochs < 1 || config.slots_per_epoch < 1 || config.reconfigure_every < 1 ||
        config.corruption_delay < 0 || !(config.corruption_rate >= 0.0))
        throw InvariantViolation("invalid epoch configuration");

    SimulationReport report;
    std::mt19937_64 gen(config.rng_seed);
    NetworkState state;
    state.instance = instance;
    {
        std::vector<std::uint8_t> buf;
        append_u64(buf, config.rng_seed);
        append_u64(buf, 0);
        state.seeds.push_back(sha256(buf));
    }

    const auto& profiles = instance->profiles();
    std::set<int> static_adversaries;
    if (config.adversary == AdversaryModel::StaticBernoulli)
        for (std::size_t n = 0; n < instance->size(); ++n)
            if (rng::uniform01(gen) < instance->p_adv()[n]) static_adversaries.insert(profiles[n].mu_id);

    double fraction_sum = 0.0;
    for (int e = 0; e < config.epochs; ++e) {
        state = apply_corruptions(std::move(state), e, config, gen);

        const bool reconfigure = e % config.reconfigure_every == 0;
        if (reconfigure) {
            std::vector<double> p(instance->p_adv().begin(), instance->p_adv().end());
            for (std::size_t n = 0; n < instance->size(); ++n)
                if (state.corrupted.contains(profiles[n].mu_id))
                    p[n] = std::max(p[n], settings.corrupted_p_adv);
            const InstancePtr view = share(instance->with_p_adv(std::move(p)));
            if (settings.fixed_sigma) {
                state.allocation = uniform_split(view, *settings.fixed_sigma);
            } else {
                ShardingSolution sol = optimize_sharding(view, settings.variant, settings.mode);
                if (sol.status == ShardingStatus::Unsafe) {
                    report.aborted = true;
                    report.abort_epoch = e;
                    report.abort_reason = "re-optimization returned UNSAFE (single-shard bound " +
                                          std::to_string(sol.pr51) + " > tau)";
                    break;
                }
                state.allocation = std::move(sol.allocation);
            }
            const auto sigma = static_cast<std::size_t>(state.allocation->sigma());
            if (state.seeds.size() != sigma) {
                std::vector<std::uint8_t> buf;
                for (const auto& s : state.seeds) append_seed(buf, s);
                append_u64(buf, static_cast<std::uint64_t>(e));
                state.seeds = remap_seeds(state.seeds, static_cast<int>(sigma), sha256(buf));
            }
            ++report.reconfigurations;
            if (e == 0) report.initial_pr51 = allocation_pr51(*state.allocation);
        }

        const Allocation& alloc = *state.allocation;
        std::set<int> adversaries = state.corrupted;
        adversaries.insert(static_adversaries.begin(), static_adversaries.end());
        if (config.adversary == AdversaryModel::EpochBernoulli)
            for (std::size_t n = 0; n < instance->size(); ++n)
                if (rng::uniform01(gen) < instance->p_adv()[n]) adversaries.insert(profiles[n].mu_id);

        EpochReport er;
        er.epoch = e;
        er.sigma = alloc.sigma();
        er.reconfigured = reconfigure;
        er.leaders.resize(static_cast<std::size_t>(alloc.sigma()));
        for (int s = 0; s < alloc.sigma(); ++s) {
            const double frac = adversary_fraction(alloc, s, adversaries);
            er.adv_fraction.push_back(frac);
            fraction_sum += frac;
            ++report.shard_epoch_samples;
            if (frac >= 0.5) {
                er.attacked_shards.insert(s);
                ++report.attacked_samples;
            }
            const auto members = shard_members(alloc, s);
            auto& slot_leaders = er.leaders[static_cast<std::size_t>(s)];
            slot_leaders.reserve(static_cast<std::size_t>(config.slots_per_epoch));
            for (int slot = 0; slot < config.slots_per_epoch; ++slot) {
                const int leader = elect_leader(members, state.seeds[static_cast<std::size_t>(s)],
                                                static_cast<std::uint64_t>(slot));
                slot_leaders.push_back(leader);
                ++report.leader_counts[leader];
            }
            state.seeds[static_cast<std::size_t>(s)] =
                next_seed(state.seeds[static_cast<std::size_t>(s)], static_cast<std::uint64_t>(e),
                          static_cast<std::uint64_t>(s));
        }
        report.epochs.push_back(std::move(er));
    }

    if (report.shard_epoch_samples > 0) {
        const double n = static_cast<double>(report.shard_epoch_samples);
        report.attacked_fraction = static_cast<double>(report.attacked_samples) / n;
        report.attacked_std_error =
            std::sqrt(report.attacked_fraction * (1.0 - report.attacked_fraction) / n);
        report.mean_adv_fraction = fraction_sum / n;
    }
    report.final_sigma = state.allocation ? state.allocation->sigma() : 0;
    report.final_corrupted.assign(state.corrupted.begin(), state.corrupted.end());
    report.final_pending = state.pending;
    return report;
}

std::string simulation_report_json(const SimulationReport& r) {
    nlohmann::json doc;
    doc["shard_epoch_samples"] = r.shard_epoch_samples;
    doc["attacked_samples"] = r.attacked_samples;
    doc["attacked_fraction"] = r.attacked_fraction;
    doc["attacked_std_error"] = r.attacked_std_error;
    doc["mean_adv_fraction"] = r.mean_adv_fraction;
    doc["initial_pr51"] = r.initial_pr51;
    doc["reconfigurations"] = r.reconfigurations;
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [mu, c] : r.leader_counts) counts[std::to_string(mu)] = c;
    doc["leader_counts"] = std::move(counts);
    doc["aborted"] = r.aborted;
    doc["abort_epoch"] = r.abort_epoch;
    doc["abort_reason"] = r.abort_reason;
    nlohmann::json pending = nlohmann::json::array();
    for (const auto& p : r.final_pending)
        pending.push_back({{"mu_id", p.mu_id}, {"activation_epoch", p.activation_epoch}});
    doc["final_state"] = {{"sigma", r.final_sigma},
                          {"corrupted", r.final_corrupted},
                          {"pending", std::move(pending)}};
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : r.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"sigma", e.sigma},
                          {"attacked_shards", std::vector<int>(e.attacked_shards.begin(),
                                                               e.attacked_shards.end())},
                          {"reconfigured", e.reconfigured}});
    doc["epochs"] = std::move(epochs);
    return doc.dump(2);
}

void write_epoch_csv(const SimulationReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "epoch,shard,adv_fraction,attacked,leader_mu,reconfigured\n";
    char frac[64];
    for (const auto& e : report.epochs) {
        for (std::size_t s = 0; s < e.leaders.size(); ++s) {
            std::snprintf(frac, sizeof frac, "%.17g", e.adv_fraction[s]);
            const int attacked = e.attacked_shards.contains(static_cast<int>(s)) ? 1 : 0;
            for (int leader : e.leaders[s])
                out << e.epoch << ',' << s + 1 << ',' << frac << ',' << attacked << ',' << leader
                    << ',' << (e.reconfigured ? 1 : 0) << '\n';
        }
    }
    if (!out) throw Error("failed writing " + path.string());
}

namespace {

template <class T>
T field_or(const nlohmann::json& doc, const char* key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw MalformedFile(std::string("field \"") + key + "\" has the wrong type: " + e.what());
    }
}

nlohmann::json parse_object(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedFile(std::string("simulation config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw MalformedFile("simulation config must be an object");
    return doc;
}

} // namespace

EpochConfig epoch_config_from_json(std::string_view text) {
    const auto doc = parse_object(text);
    EpochConfig c;
    c.epochs = field_or(doc, "epochs", c.epochs);
    c.slots_per_epoch = field_or(doc, "slots_per_epoch", c.slots_per_epoch);
    c.corruption_rate = field_or(doc, "corruption_rate", c.corruption_rate);
    c.corruption_delay = field_or(doc, "corruption_delay", c.corruption_delay);
    c.reconfigure_every = field_or(doc, "reconfigure_every", c.reconfigure_every);
    c.rng_seed = field_or(doc, "rng_seed", c.rng_seed);
    c.adversary = parse_adversary_model(field_or<std::string>(doc, "adversary", "none"));
    if (c.epochs < 1 || c.slots_per_epoch < 1 || c.reconfigure_every < 1 ||
        c.corruption_delay < 0 || !(c.corruption_rate >= 0.0))
        throw InvariantViolation("invalid epoch configuration");
    return c;
}

SimulationSettings simulation_settings_from_json(std::string_view text) {
    const auto doc = parse_object(text);
    SimulationSettings s;
    s.variant = parse_variant(field_or<std::string>(doc, "variant", "rederived"));
    s.mode = parse_search_mode(field_or<std::string>(doc, "search_mode", "binary"));
    if (doc.contains("fixed_sigma") && !doc["fixed_sigma"].is_null())
        s.fixed_sigma = field_or(doc, "fixed_sigma", 1);
    s.corrupted_p_adv = field_or(doc, "corrupted_p_adv", s.corrupted_p_adv);
    if (!(s.corrupted_p_adv >= 0.0 && s.corrupted_p_adv < 0.5))
        throw InvariantViolation("corrupted_p_adv must lie in [0, 0.5)");
    if (s.fixed_sigma && *s.fixed_sigma < 1) throw InvariantViolation("fixed_sigma must be >= 1");
    return s;
}

} // namespace shardalloc
