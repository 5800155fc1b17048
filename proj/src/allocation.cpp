#include "shardalloc/allocation.hpp"

#include "shardalloc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace shardalloc {

ShardColumn::ShardColumn(std::span<const double> s, std::span<const double> p)
    : scores(s), p_adv(p) {
    if (scores.size() != p_adv.size())
        throw InvariantViolation("shard column length does not match p_adv length");
}

Allocation::Allocation(InstancePtr instance, int sigma, std::vector<double> table)
    : instance_(std::move(instance)), sigma_(sigma), table_(std::move(table)) {
    if (!instance_) throw InvariantViolation("allocation needs an instance");
    if (sigma_ < 1) throw InvariantViolation("allocation needs sigma >= 1");
    if (table_.size() != static_cast<std::size_t>(sigma_) * instance_->size())
        throw InvariantViolation("allocation table must hold sigma * N entries");
    for (double v : table_)
        if (!std::isfinite(v)) throw InvariantViolation("allocation entries must be finite");
}

std::span<const double> Allocation::shard_scores(int shard) const {
    return std::span<const double>(table_).subspan(index(shard, 0), users());
}

ShardColumn Allocation::column(int shard) const {
    return {shard_scores(shard), instance_->p_adv()};
}

double Allocation::conservation_error() const {
    const auto eta = instance_->eta();
    double worst = 0.0;
    for (std::size_t n = 0; n < users(); ++n) {
        double sum = 0.0;
        for (int s = 0; s < sigma_; ++s) sum += at(s, n);
        worst = std::max(worst, std::abs(sum - eta[n]) / eta[n]);
    }
    return worst;
}

double Allocation::min_entry() const {
    return *std::min_element(table_.begin(), table_.end());
}

bool Allocation::sign_ok() const { return min_entry() >= -kSignTolerance; }

double Allocation::shard_total(int shard) const {
    double sum = 0.0;
    for (double v : shard_scores(shard)) sum += v;
    return sum;
}

void save_allocation_csv(const Allocation& alloc, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "shard,mu_id,score\n";
    const auto& profiles = alloc.instance()->profiles();
    char buf[64];
    for (int s = 0; s < alloc.sigma(); ++s) {
        for (std::size_t n = 0; n < alloc.users(); ++n) {
            std::snprintf(buf, sizeof buf, "%.17g", alloc.at(s, n));
            out << (s + 1) << ',' << profiles[n].mu_id << ',' << buf << '\n';
        }
    }
    if (!out) throw Error("failed writing " + path.string());
}

Allocation load_allocation_csv(InstancePtr instance, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MalformedFile("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "shard,mu_id,score")
        throw MalformedFile(path.string() + ": expected header shard,mu_id,score");

    std::map<int, std::size_t> column_of;
    for (std::size_t n = 0; n < instance->size(); ++n)
        column_of[instance->profiles()[n].mu_id] = n;

    std::map<std::pair<int, std::size_t>, double> cells;
    int sigma = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string f_shard, f_mu, f_score;
        if (!std::getline(row, f_shard, ',') || !std::getline(row, f_mu, ',') ||
            !std::getline(row, f_score))
            throw MalformedFile(path.string() + ": bad row \"" + line + "\"");
        int shard = 0, mu = 0;
        double score = 0.0;
        try {
            shard = std::stoi(f_shard);
            mu = std::stoi(f_mu);
            score = std::stod(f_score);
        } catch (const std::exception&) {
            throw MalformedFile(path.string() + ": bad row \"" + line + "\"");
        }
        auto it = column_of.find(mu);
        if (shard < 1 || it == column_of.end())
            throw MalformedFile(path.string() + ": unknown shard/mu in \"" + line + "\"");
        if (!cells.emplace(std::make_pair(shard, it->second), score).second)
            throw MalformedFile(path.string() + ": duplicate cell in \"" + line + "\"");
        sigma = std::max(sigma, shard);
    }
    const std::size_t n_users = instance->size();
    if (sigma == 0 || cells.size() != static_cast<std::size_t>(sigma) * n_users)
        throw MalformedFile(path.string() + ": allocation table is incomplete");
    std::vector<double> table(cells.size());
    for (const auto& [key, v] : cells)
        table[static_cast<std::size_t>(key.first - 1) * n_users + key.second] = v;
    return {std::move(instance), sigma, std::move(table)};
}

} // namespace shardalloc
