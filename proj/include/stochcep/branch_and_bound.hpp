#pragma once

#include <string>
#include <vector>

#include "stochcep/linear_program.hpp"
#include "stochcep/simplex.hpp"

namespace stochcep::solver {

enum class MilpStatus { optimal, feasible, infeasible, no_solution };

[[nodiscard]] std::string to_string(MilpStatus status);

struct MilpSettings {
    /// Relative gap (incumbent - bound) / max(1, |incumbent|) at which to stop.
    double gap_tol = 1e-6;
    long node_limit = 10000;
    double integrality_tol = 1e-6;
    LpSettings lp;
};

struct MilpSolution {
    MilpStatus status = MilpStatus::no_solution;
    double objective = kInf;  // incumbent
    double bound = -kInf;     // best bound
    double gap = kInf;
    long nodes = 0;
    std::vector<double> x;
    /// Global best bound after each processed node.
    std::vector<double> bound_history;

    [[nodiscard]] bool has_solution() const {
        return status == MilpStatus::optimal || status == MilpStatus::feasible;
    }
};

[[nodiscard]] double relative_gap(double incumbent, double bound);

/// Best-first branch and bound over LP relaxations. Branches on the most
/// fractional integer variable (ties: lowest index). A rounding heuristic
/// (nearest, then up, then down, continuous part re-optimized) runs at the root.
/// `no_solution` is returned when the node limit stops the search before any
/// incumbent exists.
[[nodiscard]] MilpSolution solve_milp(const MilpProblem& problem, const MilpSettings& settings = {});

}  // namespace stochcep::solver
