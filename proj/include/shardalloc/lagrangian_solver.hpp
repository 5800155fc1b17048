#pragma once

// Stationarity system of the relaxed allocation problem
//
//   max_eta  sum_s [ (a . eta^s)^2 + 0.5 ln(tau) |eta^s|^2 ],   a_n = 0.5 - p^A_n
//   s.t.     sum_s eta^s_n = eta_n  for every MU n,
//
// assembled as a dense (sigma+1)N square system over the unknowns
// eta^1_1 .. eta^1_N, eta^2_1 .. eta^sigma_N, lambda_1 .. lambda_N.

#include "shardalloc/allocation.hpp"
#include "shardalloc/security_bounds.hpp"

#include <Eigen/Dense>

#include <string_view>
#include <vector>

namespace shardalloc {

enum class StationarityVariant {
    /// Row (s,k): lambda_k + ln(tau) sum_n eta^s_n + 2 p^A_k sum_n a_n eta^s_n = 0
    PaperLiteral,
    /// Row (s,k): 2 a_k sum_n a_n eta^s_n + ln(tau) eta^s_k - lambda_k = 0
    Rederived,
};

std::string_view to_string(StationarityVariant v);
/// Accepts "rederived" / "paper-literal" (also "paper_literal").
StationarityVariant parse_variant(std::string_view text);

struct LinearSystem {
    int sigma = 0;
    std::size_t users = 0;
    Eigen::MatrixXd coefficients;
    Eigen::VectorXd rhs;

    Eigen::Index dimension() const { return coefficients.rows(); }
    Eigen::Index eta_index(int shard, std::size_t n) const {
        return static_cast<Eigen::Index>(static_cast<std::size_t>(shard) * users + n);
    }
    Eigen::Index lambda_index(std::size_t n) const {
        return static_cast<Eigen::Index>(static_cast<std::size_t>(sigma) * users + n);
    }
};

LinearSystem assemble_system(const ProblemInstance& instance, int sigma, double tau,
                             StationarityVariant variant);

struct LinearSolveResult {
    Eigen::VectorXd solution;
    double residual_norm = 0.0; // ||A x - b||_inf
    double residual_tolerance = 0.0;
    bool rank_deficient = false;
    bool least_squares = false; // the LU result was rejected
    Eigen::Index rank = 0;
    double rcond = 0.0;
};

/// Partial-pivot LU; falls back to the minimum-norm least-squares solution
/// (complete orthogonal decomposition) when the LU is ill-conditioned or
/// misses the residual bound 1e-8 (1 + ||b||_inf).  Throws NumericalFailure
/// if the fallback also misses it.
LinearSolveResult solve_linear_system(const LinearSystem& system);

struct SolveDiagnostics {
    double residual_norm = 0.0;
    double residual_tolerance = 0.0;
    bool rank_deficient = false;
    bool least_squares = false;
    double rcond = 0.0;
    double conservation_error = 0.0;
    double min_entry = 0.0;
};

struct P3Solution {
    Allocation allocation;
    std::vector<double> multipliers;
    SolveDiagnostics diagnostics;
};

P3Solution solve_p3(const InstancePtr& instance, int sigma, double tau,
                    StationarityVariant variant);

/// Relaxed objective sum_s [ (a . eta^s)^2 + 0.5 ln(tau) |eta^s|^2 ] over a
/// shard-major sigma x N table.
double p3_objective(const ProblemInstance& instance, std::span<const double> table, int sigma,
                    double tau);

struct FeasibilityReport {
    bool feasible = false;
    bool sign_ok = false;
    bool conservation_ok = false;
    std::vector<ShardSafetyReport> per_shard;
};

/// Feasible <=> every shard passes the safety condition, no entry is below
/// -1e-12, and scores are conserved to 1e-9 relative.  A shard without any
/// positive score is reported unsafe with bound 1.
FeasibilityReport check_feasibility(const Allocation& alloc, double tau);

} // namespace shardalloc
