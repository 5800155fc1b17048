#include "shardalloc/core_model.hpp"

#include "shardalloc/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace shardalloc {

using nlohmann::json;

void Weights::validate() const {
    if (!(alpha_d >= 0.0 && alpha_c >= 0.0 && alpha_t >= 0.0))
        throw InvariantViolation("weights must be non-negative");
    if (alpha_d == 0.0 && alpha_c == 0.0 && alpha_t == 0.0)
        throw InvariantViolation("at least one weight must be positive");
}

double compute_engagement(const EngagementProfile& profile, const Weights& weights) {
    return weights.alpha_d * profile.data_score + weights.alpha_c * profile.compute_score +
           weights.alpha_t * profile.token_score;
}

ProblemInstance::ProblemInstance(std::vector<EngagementProfile> profiles, Weights weights,
                                 std::vector<double> p_adv, double tau, int s_max,
                                 double t_per_shard, std::optional<InstanceMeta> meta)
    : profiles_(std::move(profiles)),
      weights_(weights),
      p_adv_(std::move(p_adv)),
      tau_(tau),
      s_max_(s_max),
      t_per_shard_(t_per_shard),
      meta_(meta) {
    weights_.validate();
    if (profiles_.empty())
        throw InvariantViolation("instance needs at least one MU");
    if (p_adv_.size() != profiles_.size())
        throw InvariantViolation("p_adv length must equal the number of MUs");
    if (!(tau_ > 0.0 && tau_ < 1.0))
        throw InvariantViolation("tau must lie in (0, 1)");
    if (s_max_ < 1)
        throw InvariantViolation("s_max must be >= 1");
    if (!(t_per_shard_ > 0.0) || !std::isfinite(t_per_shard_))
        throw InvariantViolation("t_per_shard must be positive");

    std::set<int> ids;
    eta_.reserve(profiles_.size());
    for (std::size_t n = 0; n < profiles_.size(); ++n) {
        const auto& p = profiles_[n];
        if (!ids.insert(p.mu_id).second)
            throw InvariantViolation("duplicate mu_id " + std::to_string(p.mu_id));
        if (!(p.data_score >= 0.0 && p.compute_score >= 0.0 && p.token_score >= 0.0))
            throw InvariantViolation("scores of MU " + std::to_string(p.mu_id) +
                                     " must be non-negative");
        const double e = compute_engagement(p, weights_);
        if (!(e > 0.0) || !std::isfinite(e))
            throw InvariantViolation("engagement of MU " + std::to_string(p.mu_id) +
                                     " must be positive");
        eta_.push_back(e);
        if (!(p_adv_[n] >= 0.0 && p_adv_[n] < 0.5))
            throw InvariantViolation("p_adv of MU " + std::to_string(p.mu_id) +
                                     " must lie in [0, 0.5)");
    }
}

ProblemInstance ProblemInstance::with_tau(double tau) const {
    return {profiles_, weights_, p_adv_, tau, s_max_, t_per_shard_, meta_};
}

ProblemInstance ProblemInstance::with_s_max(int s_max) const {
    return {profiles_, weights_, p_adv_, tau_, s_max, t_per_shard_, meta_};
}

ProblemInstance ProblemInstance::with_p_adv(std::vector<double> p_adv) const {
    return {profiles_, weights_, std::move(p_adv), tau_, s_max_, t_per_shard_, meta_};
}

ProblemInstance ProblemInstance::with_p_adv_scaled(double factor) const {
    std::vector<double> scaled(p_adv_);
    for (auto& p : scaled) p *= factor;
    return with_p_adv(std::move(scaled));
}

ProblemInstance make_uniform_instance(int n, double eta, double p_adv, double tau, int s_max,
                                      double t_per_shard) {
    std::vector<double> scores(static_cast<std::size_t>(n), eta);
    std::vector<double> p(static_cast<std::size_t>(n), p_adv);
    return make_instance(scores, p, tau, s_max, t_per_shard);
}

ProblemInstance make_instance(std::span<const double> eta, std::span<const double> p_adv,
                              double tau, int s_max, double t_per_shard) {
    std::vector<EngagementProfile> profiles;
    profiles.reserve(eta.size());
    for (std::size_t n = 0; n < eta.size(); ++n)
        profiles.push_back({static_cast<int>(n + 1), 0.0, 0.0, eta[n]});
    return {std::move(profiles), Weights{}, std::vector<double>(p_adv.begin(), p_adv.end()),
            tau, s_max, t_per_shard};
}

InstanceStats score_stats(std::span<const double> scores) {
    InstanceStats st;
    if (scores.empty()) return st;
    const double n = static_cast<double>(scores.size());
    st.total_score = std::accumulate(scores.begin(), scores.end(), 0.0);
    st.mean = st.total_score / n;
    double ss = 0.0;
    for (double x : scores) ss += (x - st.mean) * (x - st.mean);
    st.std = std::sqrt(ss / n);
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    st.max_difference = *hi - *lo;
    return st;
}

InstanceStats instance_stats(const ProblemInstance& instance) {
    return score_stats(instance.eta());
}

ProblemInstance generate_instance(const InstanceGenConfig& cfg) {
    if (cfg.n_nodes < 1) throw InvariantViolation("n_nodes must be >= 1");
    if (!(cfg.score_mean > 0.0)) throw InvariantViolation("score_mean must be positive");
    if (!(cfg.score_std >= 0.0)) throw InvariantViolation("score_std must be non-negative");
    if (!(cfg.max_difference > 0.0)) throw InvariantViolation("max_difference must be positive");

    const auto n = static_cast<std::size_t>(cfg.n_nodes);
    std::mt19937_64 gen(cfg.rng_seed);
    std::vector<double> draw(n);

    auto accept = [&](const std::vector<double>& x) {
        const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
        return *lo > 0.0 && *hi - *lo <= cfg.max_difference;
    };

    bool ok = false;
    for (int round = 0; round < cfg.max_rounds && !ok; ++round) {
        if (cfg.score_std == 0.0 || n == 1) {
            // A single draw has zero sample variance; mean-matching pins it.
            std::fill(draw.begin(), draw.end(), cfg.score_mean);
        } else {
            std::normal_distribution<double> normal(cfg.score_mean, cfg.score_std);
            for (auto& x : draw) x = normal(gen);
            if (cfg.match_moments) {
                const InstanceStats st = score_stats(draw);
                if (st.std <= 0.0) continue;
                for (auto& x : draw) x = cfg.score_mean + (x - st.mean) * (cfg.score_std / st.std);
            }
        }
        ok = accept(draw);
    }
    if (!ok)
        throw GenerationFailure("no draw satisfied positivity and max_difference <= " +
                                std::to_string(cfg.max_difference) + " within " +
                                std::to_string(cfg.max_rounds) + " rounds");

    // Scores are split 1/4 data, 1/4 compute, 1/2 tokens; powers of two keep
    // the recombined engagement exactly equal to the draw under unit weights.
    std::vector<EngagementProfile> profiles;
    profiles.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = 0.25 * draw[i];
        profiles.push_back({static_cast<int>(i + 1), d, d, draw[i] - 2.0 * d});
    }
    // Recorded stats are computed from the recombined engagement vector.
    std::vector<double> eta(n);
    for (std::size_t i = 0; i < n; ++i) eta[i] = compute_engagement(profiles[i], Weights{});
    const InstanceStats st = score_stats(eta);
    InstanceMeta meta{cfg.rng_seed, st.mean, st.std, st.max_difference};
    return {std::move(profiles), Weights{}, std::vector<double>(n, cfg.p_adv_default),
            cfg.tau, cfg.s_max, cfg.t_per_shard, meta};
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <class T>
T required(const json& obj, const char* key) {
    if (!obj.is_object() || !obj.contains(key))
        throw MalformedFile(std::string("missing field \"") + key + "\"");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw MalformedFile(std::string("field \"") + key + "\" has the wrong type: " + e.what());
    }
}

} // namespace

std::string instance_to_json(const ProblemInstance& inst) {
    json doc;
    doc["tau"] = inst.tau();
    doc["s_max"] = inst.s_max();
    doc["t_per_shard"] = inst.t_per_shard();
    doc["weights"] = {{"alpha_d", inst.weights().alpha_d},
                      {"alpha_c", inst.weights().alpha_c},
                      {"alpha_t", inst.weights().alpha_t}};
    json mus = json::array();
    for (std::size_t n = 0; n < inst.size(); ++n) {
        const auto& p = inst.profiles()[n];
        mus.push_back({{"id", p.mu_id},
                       {"d", p.data_score},
                       {"c", p.compute_score},
                       {"t", p.token_score},
                       {"p_adv", inst.p_adv()[n]}});
    }
    doc["mus"] = std::move(mus);
    if (inst.meta()) {
        const auto& m = *inst.meta();
        doc["meta"] = {{"seed", m.seed},
                       {"achieved_mean", m.achieved_mean},
                       {"achieved_std", m.achieved_std},
                       {"achieved_spread", m.achieved_spread}};
    }
    // nlohmann serializes doubles in shortest round-trip form.
    return doc.dump(2);
}

ProblemInstance instance_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedFile(std::string("instance file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw MalformedFile("instance document must be an object");

    const auto tau = required<double>(doc, "tau");
    const auto s_max = required<int>(doc, "s_max");
    const auto t_per_shard = required<double>(doc, "t_per_shard");
    const auto w = required<json>(doc, "weights");
    Weights weights{required<double>(w, "alpha_d"), required<double>(w, "alpha_c"),
                    required<double>(w, "alpha_t")};
    const auto mus = required<json>(doc, "mus");
    if (!mus.is_array()) throw MalformedFile("\"mus\" must be an array");

    std::vector<EngagementProfile> profiles;
    std::vector<double> p_adv;
    for (const auto& mu : mus) {
        profiles.push_back({required<int>(mu, "id"), required<double>(mu, "d"),
                            required<double>(mu, "c"), required<double>(mu, "t")});
        p_adv.push_back(required<double>(mu, "p_adv"));
    }
    std::optional<InstanceMeta> meta;
    if (doc.contains("meta")) {
        const auto& m = doc["meta"];
        meta = InstanceMeta{required<std::uint64_t>(m, "seed"), required<double>(m, "achieved_mean"),
                            required<double>(m, "achieved_std"),
                            required<double>(m, "achieved_spread")};
    }
    return {std::move(profiles), weights, std::move(p_adv), tau, s_max, t_per_shard, meta};
}

void save_instance(const ProblemInstance& instance, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << instance_to_json(instance) << '\n';
    if (!out) throw Error("failed writing " + path.string());
}

ProblemInstance load_instance(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MalformedFile("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return instance_from_json(buf.str());
}

} // namespace shardalloc
