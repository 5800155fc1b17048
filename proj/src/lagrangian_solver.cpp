#include "shardalloc/lagrangian_solver.hpp"

#include "shardalloc/errors.hpp"

#include <cmath>
#include <string>

namespace shardalloc {

std::string_view to_string(StationarityVariant v) {
    return v == StationarityVariant::Rederived ? "rederived" : "paper-literal";
}

StationarityVariant parse_variant(std::string_view text) {
    if (text == "rederived" || text == "REDERIVED") return StationarityVariant::Rederived;
    if (text == "paper-literal" || text == "paper_literal" || text == "PAPER_LITERAL")
        return StationarityVariant::PaperLiteral;
    throw Error("unknown stationarity variant \"" + std::string(text) + "\"");
}

LinearSystem assemble_system(const ProblemInstance& instance, int sigma, double tau,
                             StationarityVariant variant) {
    if (sigma < 1) throw InvariantViolation("sigma must be >= 1");
    if (!(tau > 0.0 && tau < 1.0)) throw InvariantViolation("tau must lie in (0, 1)");

    LinearSystem sys;
    sys.sigma = sigma;
    sys.users = instance.size();
    const std::size_t n_users = sys.users;
    const auto m = static_cast<Eigen::Index>((static_cast<std::size_t>(sigma) + 1) * n_users);
    sys.coefficients = Eigen::MatrixXd::Zero(m, m);
    sys.rhs = Eigen::VectorXd::Zero(m);

    const auto p = instance.p_adv();
    const auto eta = instance.eta();
    const double log_tau = std::log(tau);
    Eigen::VectorXd a(static_cast<Eigen::Index>(n_users));
    for (std::size_t n = 0; n < n_users; ++n) a[static_cast<Eigen::Index>(n)] = 0.5 - p[n];

    auto& A = sys.coefficients;
    for (int s = 0; s < sigma; ++s) {
        for (std::size_t k = 0; k < n_users; ++k) {
            const Eigen::Index row = sys.eta_index(s, k);
            const auto ki = static_cast<Eigen::Index>(k);
            if (variant == StationarityVariant::Rederived) {
                for (std::size_t n = 0; n < n_users; ++n)
                    A(row, sys.eta_index(s, n)) = 2.0 * a[ki] * a[static_cast<Eigen::Index>(n)];
                A(row, sys.eta_index(s, k)) += log_tau;
                A(row, sys.lambda_index(k)) = -1.0;
            } else {
                for (std::size_t n = 0; n < n_users; ++n)
                    A(row, sys.eta_index(s, n)) =
                        log_tau + 2.0 * p[k] * a[static_cast<Eigen::Index>(n)];
                A(row, sys.lambda_index(k)) = 1.0;
            }
        }
    }
    for (std::size_t n = 0; n < n_users; ++n) {
        const Eigen::Index row = sys.lambda_index(n);
        for (int s = 0; s < sigma; ++s) A(row, sys.eta_index(s, n)) = 1.0;
        sys.rhs[row] = eta[n];
    }
    return sys;
}

namespace {

constexpr double kResidualFactor = 1e-8;
constexpr double kMinRcond = 1e-13;

double residual_inf(const LinearSystem& sys, const Eigen::VectorXd& x) {
    return (sys.coefficients * x - sys.rhs).lpNorm<Eigen::Infinity>();
}

} // namespace

LinearSolveResult solve_linear_system(const LinearSystem& sys) {
    const Eigen::Index m = sys.dimension();
    if (sys.coefficients.cols() != m || sys.rhs.size() != m)
        throw InvariantViolation("linear system must be square with matching rhs");

    LinearSolveResult out;
    out.residual_tolerance = kResidualFactor * (1.0 + sys.rhs.lpNorm<Eigen::Infinity>());

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.coefficients);
    out.rcond = lu.rcond();
    if (std::isfinite(out.rcond) && out.rcond > kMinRcond) {
        out.solution = lu.solve(sys.rhs);
        out.residual_norm = residual_inf(sys, out.solution);
        if (out.solution.allFinite() && out.residual_norm <= out.residual_tolerance) {
            out.rank = m;
            return out;
        }
    }

    // Minimum-norm least squares.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(sys.coefficients);
    out.solution = cod.solve(sys.rhs);
    out.rank = cod.rank();
    out.rank_deficient = out.rank < m;
    out.least_squares = true;
    out.residual_norm = residual_inf(sys, out.solution);
    if (!out.solution.allFinite() || out.residual_norm > out.residual_tolerance)
        throw NumericalFailure("linear solve residual " + std::to_string(out.residual_norm) +
                               " exceeds tolerance " + std::to_string(out.residual_tolerance) +
                               " (rank " + std::to_string(out.rank) + " of " +
                               std::to_string(m) + ")");
    return out;
}

P3Solution solve_p3(const InstancePtr& instance, int sigma, double tau,
                    StationarityVariant variant) {
    const LinearSystem sys = assemble_system(*instance, sigma, tau, variant);
    const LinearSolveResult res = solve_linear_system(sys);

    const std::size_t n_users = instance->size();
    const std::size_t cells = static_cast<std::size_t>(sigma) * n_users;
    std::vector<double> table(res.solution.data(), res.solution.data() + cells);
    std::vector<double> multipliers(res.solution.data() + cells,
                                    res.solution.data() + cells + n_users);

    Allocation alloc(instance, sigma, std::move(table));
    SolveDiagnostics diag;
    diag.residual_norm = res.residual_norm;
    diag.residual_tolerance = res.residual_tolerance;
    diag.rank_deficient = res.rank_deficient;
    diag.least_squares = res.least_squares;
    diag.rcond = res.rcond;
    diag.conservation_error = alloc.conservation_error();
    diag.min_entry = alloc.min_entry();
    return {std::move(alloc), std::move(multipliers), diag};
}

double p3_objective(const ProblemInstance& instance, std::span<const double> table, int sigma,
                    double tau) {
    const std::size_t n_users = instance.size();
    const auto p = instance.p_adv();
    const double half_log_tau = 0.5 * std::log(tau);
    double total = 0.0;
    for (int s = 0; s < sigma; ++s) {
        const auto row = table.subspan(static_cast<std::size_t>(s) * n_users, n_users);
        double lin = 0.0, sq = 0.0;
        for (std::size_t n = 0; n < n_users; ++n) {
            lin += (0.5 - p[n]) * row[n];
            sq += row[n] * row[n];
        }
        total += lin * lin + half_log_tau * sq;
    }
    return total;
}

FeasibilityReport check_feasibility(const Allocation& alloc, double tau) {
    FeasibilityReport rep;
    rep.sign_ok = alloc.sign_ok();
    rep.conservation_ok = alloc.conserves();
    bool all_safe = true;
    rep.per_shard.reserve(static_cast<std::size_t>(alloc.sigma()));
    for (int s = 0; s < alloc.sigma(); ++s) {
        const ShardColumn col = alloc.column(s);
        if (!(sum_of_squares(col) > 0.0)) {
            rep.per_shard.push_back({s, 0.0, 0.0, 1.0, false});
            all_safe = false;
            continue;
        }
        rep.per_shard.push_back(is_shard_safe(col, tau, s));
        all_safe = all_safe && rep.per_shard.back().safe;
    }
    rep.feasible = all_safe && rep.sign_ok && rep.conservation_ok;
    return rep;
}

} // namespace shardalloc
