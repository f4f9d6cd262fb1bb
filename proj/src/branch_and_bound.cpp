#include "stochcep/branch_and_bound.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "stochcep/errors.hpp"

namespace stochcep::solver {

std::string to_string(MilpStatus status) {
    switch (status) {
        case MilpStatus::optimal: return "optimal";
        case MilpStatus::feasible: return "feasible";
        case MilpStatus::infeasible: return "infeasible";
        case MilpStatus::no_solution: return "no_solution";
    }
    return "unknown";
}

double relative_gap(double incumbent, double bound) {
    if (!std::isfinite(incumbent)) return kInf;
    if (!std::isfinite(bound)) return kInf;
    return std::max(0.0, incumbent - bound) / std::max(1.0, std::abs(incumbent));
}

namespace {

struct Node {
    double bound;
    long id;
    std::vector<double> lower;
    std::vector<double> upper;
    Basis basis;
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.bound != b.bound) return a.bound > b.bound;
        return a.id > b.id;
    }
};

LpSolution solve_node(LinearProgram& lp, const std::vector<double>& lower,
                      const std::vector<double>& upper, const LpSettings& settings,
                      const Basis* warm) {
    lp.lower = lower;
    lp.upper = upper;
    LpSolution s = solve_lp(lp, settings, warm);
    if (s.status == LpStatus::numerical_failure || s.status == LpStatus::iteration_limit) {
        s = solve_lp(lp, settings, nullptr);
    }
    if (s.status == LpStatus::numerical_failure || s.status == LpStatus::iteration_limit) {
        LpSettings unscaled = settings;
        unscaled.scale = false;
        s = solve_lp(lp, unscaled, nullptr);
    }
    if (s.status == LpStatus::numerical_failure || s.status == LpStatus::iteration_limit) {
        throw SolverError("LP relaxation failed: " + to_string(s.status));
    }
    if (s.status == LpStatus::unbounded) throw SolverError("LP relaxation is unbounded");
    return s;
}

int most_fractional(const std::vector<double>& x, const std::vector<bool>& integer, double tol) {
    int best = -1;
    double best_frac = tol;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (j >= integer.size() || !integer[j]) continue;
        const double f = x[j] - std::floor(x[j]);
        const double frac = std::min(f, 1.0 - f);
        if (frac > best_frac) {
            best_frac = frac;
            best = static_cast<int>(j);
        }
    }
    return best;
}

}  // namespace

MilpSolution solve_milp(const MilpProblem& problem, const MilpSettings& settings) {
    MilpSolution out;
    LinearProgram lp = problem.lp;
    const std::vector<bool>& integer = problem.integer;
    const int n = lp.num_cols();

    std::vector<double> lower = problem.lp.lower, upper = problem.lp.upper;
    for (int j = 0; j < n; ++j) {
        if (j < static_cast<int>(integer.size()) && integer[j]) {
            lower[j] = std::ceil(lower[j] - settings.integrality_tol);
            upper[j] = std::floor(upper[j] + settings.integrality_tol);
        }
    }

    const LpSolution root = solve_node(lp, lower, upper, settings.lp, nullptr);
    out.nodes = 1;
    if (root.status == LpStatus::infeasible) {
        out.status = MilpStatus::infeasible;
        return out;
    }

    double incumbent = kInf;
    auto accept = [&](double obj, const std::vector<double>& x) {
        if (obj < incumbent) {
            incumbent = obj;
            out.x = x;
        }
    };

    const int root_branch = most_fractional(root.x, integer, settings.integrality_tol);
    if (root_branch < 0) {
        accept(root.objective, root.x);
    } else {
        // Rounding heuristic: fix integers, re-optimize the continuous part.
        for (int mode = 0; mode < 3; ++mode) {
            std::vector<double> lo = lower, up = upper;
            for (int j = 0; j < n; ++j) {
                if (j >= static_cast<int>(integer.size()) || !integer[j]) continue;
                double v = mode == 0 ? std::round(root.x[j])
                           : mode == 1 ? std::ceil(root.x[j] - settings.integrality_tol)
                                       : std::floor(root.x[j] + settings.integrality_tol);
                v = std::clamp(v, lower[j], upper[j]);
                lo[j] = up[j] = v;
            }
            const LpSolution h = solve_node(lp, lo, up, settings.lp, &root.basis);
            if (h.status == LpStatus::optimal) accept(h.objective, h.x);
        }
    }

    std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
    long next_id = 0;
    auto push_children = [&](const std::vector<double>& lo, const std::vector<double>& up,
                             const LpSolution& sol, int var, double bound) {
        const double v = sol.x[var];
        Node down{bound, next_id++, lo, up, sol.basis};
        down.upper[var] = std::floor(v);
        Node upn{bound, next_id++, lo, up, sol.basis};
        upn.lower[var] = std::ceil(v);
        open.push(std::move(down));
        open.push(std::move(upn));
    };

    auto global_bound = [&]() { return open.empty() ? incumbent : std::min(incumbent, open.top().bound); };

    if (root_branch >= 0 && root.objective < incumbent) {
        push_children(lower, upper, root, root_branch, root.objective);
    }
    out.bound_history.push_back(global_bound());

    bool limit_hit = false;
    while (!open.empty()) {
        if (relative_gap(incumbent, open.top().bound) <= settings.gap_tol) break;
        if (out.nodes >= settings.node_limit) {
            limit_hit = true;
            break;
        }
        Node node = open.top();
        open.pop();
        const double prune_at =
            std::isfinite(incumbent)
                ? incumbent - settings.gap_tol * std::max(1.0, std::abs(incumbent))
                : kInf;
        if (node.bound >= prune_at) continue;

        const LpSolution sol = solve_node(lp, node.lower, node.upper, settings.lp, &node.basis);
        ++out.nodes;
        if (sol.status == LpStatus::optimal) {
            const double obj = std::max(sol.objective, node.bound);
            if (obj < prune_at) {
                const int var = most_fractional(sol.x, integer, settings.integrality_tol);
                if (var < 0) {
                    accept(sol.objective, sol.x);
                } else {
                    push_children(node.lower, node.upper, sol, var, obj);
                }
            }
        }
        out.bound_history.push_back(global_bound());
    }

    out.objective = incumbent;
    if (!std::isfinite(incumbent)) {
        out.status = limit_hit ? MilpStatus::no_solution : MilpStatus::infeasible;
        out.bound = limit_hit ? global_bound() : kInf;
        return out;
    }
    out.bound = global_bound();
    out.gap = relative_gap(incumbent, out.bound);
    out.status = (!limit_hit || out.gap <= settings.gap_tol) ? MilpStatus::optimal
                                                               : MilpStatus::feasible;
    // Snap integer variables to exact integers.
    for (int j = 0; j < n; ++j)
        if (j < static_cast<int>(integer.size()) && integer[j]) out.x[j] = std::round(out.x[j]);
    return out;
}

}  // namespace stochcep::solver
