#pragma once

#include <vector>

#include "stochcep/branch_and_bound.hpp"
#include "stochcep/cep_model.hpp"
#include "stochcep/simplex.hpp"

namespace stochcep::solver {

struct OperationsSettings {
    LpSettings lp;
    /// Relative tolerance between the cutting-plane model and the probed dual value.
    double lagrange_tol = 1e-9;
    /// First non-zero emissions price probed, in model cost units per tonne.
    double lambda_hint = 1e-4;
    double lambda_max = 1e4;
    int max_probes = 80;
};

/// Warm-start data carried across operations solves of the same instance.
struct OperationsState {
    std::vector<Basis> bases;  // one per day block
    std::vector<double> lambda_hint;
};

/// Optimal operations for a fixed stage-1 vector. Values are in model cost units.
struct OperationsResult {
    double value = 0.0;  // sum_t cw_t d^T y_t of the recovered primal solution
    double lower = 0.0;  // Lagrangian dual value, a lower bound on `value`
    std::vector<double> lambda;     // emissions price per group
    std::vector<double> emissions;  // sum_t ew_t e^T y_t per group
    /// Optimality cut Q(x') >= cut_constant + gradient^T x', exact at the solved x.
    std::vector<double> gradient;
    double cut_constant = 0.0;
    std::vector<double> column_totals;  // sum_t cw_t y_t over the day template columns
    long lp_solves = 0;
    long lp_iterations = 0;
    int probes = 0;
};

/// Solves min sum_t cw_t d^T y_t over all day blocks with the group emissions
/// rows dualized; the 1-D dual in each group is maximized by a cutting-plane
/// method and the primal solution is recovered as a convex combination of the
/// two bracketing probes.
[[nodiscard]] OperationsResult solve_operations(const cep::CepInstance& inst, const std::vector<double>& x,
                                                const OperationsSettings& settings = {},
                                                OperationsState* state = nullptr);

struct CepSolveSettings {
    /// Relative gap between the best upper bound and the master bound.
    double gap_tol = 5e-3;
    int max_iterations = 400;
    bool relax_integrality = false;
    /// Settings of each master MILP solve; its gap should sit below gap_tol.
    MilpSettings master{1e-4, 10000, 1e-6, {}};
    OperationsSettings operations;
};

struct CepSolution {
    MilpStatus status = MilpStatus::no_solution;
    double objective = kInf;  // model units, stage-1 offset included
    double bound = -kInf;
    double gap = kInf;
    std::vector<double> x;
    double invest_cost = 0.0;  // c^T x + offset, model units
    double operating_cost = 0.0;
    std::vector<double> emissions;
    std::vector<double> lambda;
    std::vector<double> column_totals;
    int iterations = 0;
    long lp_solves = 0;
    long master_nodes = 0;
};

/// Benders decomposition over stage 1: an LP-relaxed master phase followed by
/// a MILP master phase (skipped when integrality is relaxed).
[[nodiscard]] CepSolution solve_cep(const cep::CepInstance& inst, const CepSolveSettings& settings = {});

/// Optimal operations of a recourse instance (no stage-1 columns).
[[nodiscard]] OperationsResult solve_recourse(const cep::RecourseInstance& inst,
                                              const OperationsSettings& settings = {});

}  // namespace stochcep::solver
