#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stochcep/linear_program.hpp"

namespace stochcep::solver {

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit, numerical_failure };

[[nodiscard]] std::string to_string(LpStatus status);

enum class VarStatus : std::uint8_t { basic, at_lower, at_upper, free_zero };

/// Simplex basis over the structural columns plus one artificial column per
/// row (column index `num_cols + row`). Reusable as a warm start for any LP
/// with the same dimensions.
struct Basis {
    std::vector<int> basic;         // one column per row position
    std::vector<VarStatus> status;  // num_cols + num_rows entries

    [[nodiscard]] bool empty() const { return basic.empty(); }
};

enum class PricingRule { dantzig, bland };

struct LpSettings {
    double primal_tol = 1e-9;
    double dual_tol = 1e-9;
    double pivot_tol = 1e-9;
    int refactor_interval = 64;
    /// Consecutive degenerate pivots before switching to Bland's rule.
    int stall_threshold = 50;
    /// 0 selects 20 * (rows + cols) + 10000.
    long max_iterations = 0;
    bool scale = true;
    PricingRule pricing = PricingRule::dantzig;
};

struct LpSolution {
    LpStatus status = LpStatus::numerical_failure;
    double objective = 0.0;
    std::vector<double> x;
    std::vector<double> duals;          // one per row
    std::vector<double> reduced_costs;  // one per structural column
    long iterations = 0;
    Basis basis;
    /// Unscaled max |Ax - b| and max bound violation.
    double primal_residual = 0.0;
    /// Largest sign violation of the reduced costs.
    double dual_infeasibility = 0.0;
    /// b^T y + sum_j min(d_j l_j, d_j u_j); -inf when a needed bound is infinite.
    double dual_objective = 0.0;
    bool used_bland = false;

    [[nodiscard]] bool optimal() const { return status == LpStatus::optimal; }
};

/// Bounded revised primal simplex with a dense explicit basis inverse,
/// geometric-mean scaling and a composite (sum of infeasibilities) phase 1
/// that also repairs infeasible warm starts.
[[nodiscard]] LpSolution solve_lp(const LinearProgram& lp, const LpSettings& settings = {},
                                  const Basis* warm_start = nullptr);

}  // namespace stochcep::solver
