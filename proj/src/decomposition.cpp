#include "stochcep/decomposition.hpp"

#include <algorithm>
#include <cmath>

#include "stochcep/errors.hpp"

namespace stochcep::solver {

using cep::CepInstance;
using cep::DayBlock;

namespace {

/// Result of solving every block of one group at a fixed emissions price.
struct Probe {
    double lambda = 0.0;
    double dual = 0.0;       // L(lambda)
    double slope = 0.0;      // sum ew e^T y - cap
    double cost = 0.0;       // sum cw d^T y
    double emissions = 0.0;  // sum ew e^T y
    std::vector<double> totals;
    std::vector<double> grad;
    double cut_at_x = 0.0;  // cut value at the solved x (equals dual up to tolerance)
};

class DayWorker {
public:
    DayWorker(const CepInstance& inst, const std::vector<double>& x, const OperationsSettings& settings,
              OperationsState& state, OperationsResult& out)
        : inst_(inst), x_(x), settings_(settings), state_(state), out_(out), lp_(inst.day) {
        if (state_.bases.size() != inst.blocks.size()) state_.bases.assign(inst.blocks.size(), {});
        const int n = inst.day.num_cols();
        cost_.resize(n);
        reduced_.resize(n);
    }

    Probe probe(int group, const std::vector<int>& members, double lambda) {
        Probe p;
        p.lambda = lambda;
        const int n = inst_.day.num_cols();
        p.totals.assign(n, 0.0);
        p.grad.assign(x_.size(), 0.0);
        for (int b : members) solve_block(b, lambda, p);
        p.slope = p.emissions - inst_.caps[group];
        p.dual -= lambda * inst_.caps[group];
        p.cut_at_x -= lambda * inst_.caps[group];
        return p;
    }

private:
    void solve_block(int b, double lambda, Probe& p) {
        const DayBlock& blk = inst_.blocks[b];
        const int n = inst_.day.num_cols();
        const double mu = lambda * blk.emission_weight / blk.cost_weight;
        for (int j = 0; j < n; ++j) cost_[j] = inst_.day.cost[j] + mu * inst_.emissions[j];
        lp_.cost = cost_;
        inst_.day_bounds(blk, x_, lp_.rhs, lp_.upper);

        Basis& warm = state_.bases[b];
        if (warm.empty() && b > 0 && !state_.bases[b - 1].empty()) warm = state_.bases[b - 1];
        LpSolution s = solve_lp(lp_, settings_.lp, warm.empty() ? nullptr : &warm);
        ++out_.lp_solves;
        out_.lp_iterations += s.iterations;
        if (!s.optimal()) {
            s = solve_lp(lp_, settings_.lp);
            ++out_.lp_solves;
            out_.lp_iterations += s.iterations;
        }
        if (!s.optimal()) {
            LpSettings careful = settings_.lp;
            careful.scale = false;
            careful.pricing = PricingRule::bland;
            s = solve_lp(lp_, careful);
            ++out_.lp_solves;
            out_.lp_iterations += s.iterations;
        }
        if (!s.optimal())
            throw SolverError("day " + std::to_string(blk.day) + " of " + blk.scenario_id +
                              " ended with status " + to_string(s.status));
        warm = s.basis;

        double dcost = 0.0, em = 0.0;
        for (int j = 0; j < n; ++j) {
            dcost += inst_.day.cost[j] * s.x[j];
            em += inst_.emissions[j] * s.x[j];
            p.totals[j] += blk.cost_weight * s.x[j];
        }
        const double cw = blk.cost_weight;
        p.dual += cw * s.objective;
        p.cost += cw * dcost;
        p.emissions += blk.emission_weight * em;

        // Weak-duality cut in x: pi^T rhs(x) + sum_j min(dj*l, dj*u(x)) with d = c - C^T pi.
        reduced_ = cost_;
        inst_.day.A.transpose_multiply_add(s.duals, reduced_, -1.0);
        double h = 0.0;
        for (int i = 0; i < lp_.num_rows(); ++i) h += s.duals[i] * lp_.rhs[i];
        for (int j = 0; j < n; ++j) {
            const double d = reduced_[j];
            if (d > 0.0) {
                h += d * lp_.lower[j];
            } else if (d < 0.0 && std::isfinite(lp_.upper[j])) {
                h += d * lp_.upper[j];
            }
        }
        p.cut_at_x += cw * h;
        for (const cep::RowLink& l : blk.row_links) p.grad[l.x_col] += cw * s.duals[l.row] * l.coef;
        for (const cep::BoundLink& l : blk.bound_links) {
            const double d = reduced_[l.col];
            if (d < 0.0) p.grad[l.x_col] += cw * d * l.coef;
        }
    }

    const CepInstance& inst_;
    const std::vector<double>& x_;
    const OperationsSettings& settings_;
    OperationsState& state_;
    OperationsResult& out_;
    LinearProgram lp_;
    std::vector<double> cost_;
    std::vector<double> reduced_;
};

bool converged(double model, double value, double tol) {
    return model - value <= tol * std::max(1.0, std::abs(value));
}

}  // namespace

OperationsResult solve_operations(const CepInstance& inst, const std::vector<double>& x,
                                  const OperationsSettings& settings, OperationsState* state) {
    if (static_cast<int>(x.size()) != inst.stage1.num_cols())
        throw SolverError("stage-1 vector has " + std::to_string(x.size()) + " entries, expected " +
                          std::to_string(inst.stage1.num_cols()));
    OperationsState local;
    OperationsState& st = state ? *state : local;
    const int G = inst.num_groups();
    if (static_cast<int>(st.lambda_hint.size()) != G) st.lambda_hint.assign(G, 0.0);

    OperationsResult out;
    const int n = inst.day.num_cols();
    out.column_totals.assign(n, 0.0);
    out.gradient.assign(x.size(), 0.0);
    out.lambda.assign(G, 0.0);
    out.emissions.assign(G, 0.0);
    std::vector<std::vector<int>> members(G);
    for (std::size_t b = 0; b < inst.blocks.size(); ++b) members[inst.blocks[b].group].push_back(static_cast<int>(b));

    DayWorker worker(inst, x, settings, st, out);
    double cut_at_x = 0.0;
    for (int g = 0; g < G; ++g) {
        if (members[g].empty()) continue;
        auto run = [&](double lambda) {
            ++out.probes;
            return worker.probe(g, members[g], lambda);
        };
        // Bracket the optimal price. A price known from an earlier solve is
        // probed first and the bracket is widened around it.
        const double last = st.lambda_hint[g];
        Probe lo, hi, best;
        bool have_hi = false;
        auto keep_best = [&](const Probe& p) {
            if (p.dual > best.dual) best = p;
        };
        if (last > 0.0) {
            Probe p = run(last);
            best = p;
            double step = 1e-2 * last;
            if (p.slope > 0.0) {
                lo = std::move(p);
                for (;;) {
                    const double lam = lo.lambda + step;
                    if (lam > settings.lambda_max)
                        throw SolverError("emissions cap cannot be met below the maximum emissions price");
                    Probe q = run(lam);
                    keep_best(q);
                    if (q.slope <= 0.0) {
                        hi = std::move(q);
                        break;
                    }
                    lo = std::move(q);
                    step *= 4.0;
                }
                have_hi = true;
            } else {
                hi = std::move(p);
                for (;;) {
                    const double lam = std::max(hi.lambda - step, 0.0);
                    Probe q = run(lam);
                    keep_best(q);
                    if (q.slope > 0.0) {
                        lo = std::move(q);
                        have_hi = true;
                        break;
                    }
                    if (lam == 0.0) {
                        lo = std::move(q);
                        best = lo;
                        break;
                    }
                    hi = std::move(q);
                    step *= 4.0;
                }
            }
        } else {
            lo = run(0.0);
            best = lo;
            if (lo.slope > 0.0) {
                double lambda = settings.lambda_hint;
                for (;;) {
                    Probe p = run(lambda);
                    keep_best(p);
                    if (p.slope <= 0.0) {
                        hi = std::move(p);
                        break;
                    }
                    lo = std::move(p);
                    lambda *= 4.0;
                    if (lambda > settings.lambda_max)
                        throw SolverError("emissions cap cannot be met below the maximum emissions price");
                }
                have_hi = true;
            }
        }
        double w_lo = 1.0;  // convex weight of `lo` in the recovered primal
        if (have_hi) {
            int probes = 0;
            while (hi.slope < 0.0 && lo.slope > 0.0 && probes++ < settings.max_probes) {
                // Intersection of the tangent lines at lo and hi.
                const double lam = (hi.dual - lo.dual + lo.slope * lo.lambda - hi.slope * hi.lambda) /
                                   (lo.slope - hi.slope);
                const double model = lo.dual + lo.slope * (lam - lo.lambda);
                Probe p = run(lam);
                if (p.dual > best.dual) best = p;
                const bool done = converged(model, p.dual, settings.lagrange_tol);
                if (p.slope > 0.0) lo = std::move(p);
                else hi = std::move(p);
                if (done) break;
            }
            w_lo = hi.slope < 0.0 ? -hi.slope / (lo.slope - hi.slope) : 0.0;
        }
        const double lam_star = have_hi ? best.lambda : 0.0;
        out.lambda[g] = lam_star;
        st.lambda_hint[g] = lam_star;
        auto mix = [&](double a, double b) { return have_hi ? w_lo * a + (1.0 - w_lo) * b : a; };
        out.value += mix(lo.cost, hi.cost);
        out.emissions[g] = mix(lo.emissions, hi.emissions);
        for (int j = 0; j < n; ++j) out.column_totals[j] += mix(lo.totals[j], have_hi ? hi.totals[j] : 0.0);
        out.lower += best.dual;
        for (std::size_t k = 0; k < x.size(); ++k) out.gradient[k] += best.grad[k];
        cut_at_x += best.cut_at_x;
    }
    out.cut_constant = cut_at_x;
    for (std::size_t k = 0; k < x.size(); ++k) out.cut_constant -= out.gradient[k] * x[k];
    // Round-off sized coefficients are replaced by their minimum over the box,
    // which keeps the cut valid and the master matrix free of noise entries.
    double gmax = 0.0;
    for (double g : out.gradient) gmax = std::max(gmax, std::abs(g));
    for (std::size_t k = 0; k < x.size(); ++k) {
        double& g = out.gradient[k];
        if (g == 0.0 || std::abs(g) >= 1e-12 * gmax) continue;
        const double lo = inst.stage1.lower[k], hi = inst.stage1.upper[k];
        if (!std::isfinite(lo) || !std::isfinite(hi)) continue;
        out.cut_constant += std::min(g * lo, g * hi);
        g = 0.0;
    }
    return out;
}

OperationsResult solve_recourse(const cep::RecourseInstance& inst, const OperationsSettings& settings) {
    if (inst.stage1.num_cols() != 0) throw SolverError("recourse instance has stage-1 columns");
    return solve_operations(inst, {}, settings);
}

// ---------------------------------------------------------------------------
// Benders

namespace {

struct Cut {
    std::vector<double> grad;
    double constant = 0.0;
};

class Master {
public:
    explicit Master(const CepInstance& inst) : inst_(inst), n1_(inst.stage1.num_cols()) {}

    void add_cut(const OperationsResult& r) { cuts_.push_back({r.gradient, r.cut_constant}); }

    [[nodiscard]] MilpProblem problem() const {
        ModelBuilder mb;
        const LinearProgram& s = inst_.stage1;
        for (int j = 0; j < n1_; ++j)
            mb.add_variable(s.cost[j], s.lower[j], s.upper[j], {},
                            j < static_cast<int>(inst_.integer.size()) && inst_.integer[j]);
        const int eta = mb.add_variable(1.0, 0.0, kInf);
        std::vector<std::vector<std::pair<int, double>>> rows(s.num_rows());
        for (int j = 0; j < n1_; ++j)
            for (int k = s.A.col_start[j]; k < s.A.col_start[j + 1]; ++k)
                rows[s.A.row_index[k]].emplace_back(j, s.A.value[k]);
        for (int i = 0; i < s.num_rows(); ++i) mb.add_row(rows[i], RowSense::equal, s.rhs[i]);
        for (const Cut& c : cuts_) {
            std::vector<std::pair<int, double>> t{{eta, 1.0}};
            for (int j = 0; j < n1_; ++j)
                if (c.grad[j] != 0.0) t.emplace_back(j, -c.grad[j]);
            mb.add_row(t, RowSense::greater_equal, c.constant);
        }
        mb.add_objective_offset(s.objective_offset);
        return mb.build_milp();
    }

    /// Extends a basis of the master with k cuts to one with k + 1 cuts; the
    /// new cut's slack enters the basis.
    [[nodiscard]] Basis extend(const Basis& b, int cols_before, int rows_before) const {
        Basis e;
        if (b.empty()) return e;
        e.status.reserve(b.status.size() + 2);
        e.status.insert(e.status.end(), b.status.begin(), b.status.begin() + cols_before);
        e.status.push_back(VarStatus::basic);
        e.status.insert(e.status.end(), b.status.begin() + cols_before, b.status.end());
        e.status.push_back(VarStatus::at_lower);
        for (int c : b.basic) e.basic.push_back(c < cols_before ? c : c + 1);
        e.basic.push_back(cols_before);
        (void)rows_before;
        return e;
    }

    [[nodiscard]] std::size_t cuts() const { return cuts_.size(); }

private:
    const CepInstance& inst_;
    int n1_;
    std::vector<Cut> cuts_;
};

bool is_integral(const CepInstance& inst, const std::vector<double>& x, double tol) {
    for (std::size_t j = 0; j < x.size() && j < inst.integer.size(); ++j)
        if (inst.integer[j] && std::abs(x[j] - std::round(x[j])) > tol) return false;
    return true;
}

}  // namespace

CepSolution solve_cep(const CepInstance& inst, const CepSolveSettings& settings) {
    if (inst.blocks.empty()) throw SolverError("instance has no day blocks");
    CepSolution sol;
    Master master(inst);
    OperationsState state;
    const LinearProgram& s1 = inst.stage1;
    const int n1 = s1.num_cols();

    auto consider = [&](const std::vector<double>& x, const OperationsResult& ops) {
        const double invest = s1.objective(x);
        const double total = invest + ops.value;
        if (total < sol.objective) {
            sol.objective = total;
            sol.x = x;
            sol.invest_cost = invest;
            sol.operating_cost = ops.value;
            sol.emissions = ops.emissions;
            sol.lambda = ops.lambda;
            sol.column_totals = ops.column_totals;
        }
    };
    auto gap_closed = [&] {
        sol.gap = relative_gap(sol.objective, sol.bound);
        return sol.gap <= settings.gap_tol;
    };
    auto evaluate = [&](const std::vector<double>& x) {
        OperationsResult ops = solve_operations(inst, x, settings.operations, &state);
        sol.lp_solves += ops.lp_solves;
        return ops;
    };

    // LP phase.
    Basis basis;
    bool lp_done = false;
    std::vector<double> lp_x;
    while (sol.iterations < settings.max_iterations) {
        ++sol.iterations;
        const MilpProblem mp = master.problem();
        LpSolution r = solve_lp(mp.lp, settings.master.lp, basis.empty() ? nullptr : &basis);
        if (!r.optimal()) r = solve_lp(mp.lp, settings.master.lp);
        if (r.status == LpStatus::infeasible) {
            sol.status = MilpStatus::infeasible;
            return sol;
        }
        if (!r.optimal()) throw SolverError("master LP ended with status " + to_string(r.status));
        sol.bound = std::max(sol.bound, r.objective);
        const std::vector<double> x(r.x.begin(), r.x.begin() + n1);
        lp_x = x;
        const OperationsResult ops = evaluate(x);
        if (settings.relax_integrality || is_integral(inst, x, settings.master.integrality_tol)) consider(x, ops);
        if (settings.relax_integrality && gap_closed()) {
            lp_done = true;
            break;
        }
        // The LP phase stops once the relaxed bound is within a tenth of the target gap.
        const double relaxed_ub = s1.objective(x) + ops.value;
        const bool lp_converged = relaxed_ub - r.objective <= 0.1 * settings.gap_tol * std::max(1.0, std::abs(relaxed_ub));
        const int cols_before = mp.lp.num_cols(), rows_before = mp.lp.num_rows();
        master.add_cut(ops);
        basis = master.extend(r.basis, cols_before, rows_before);
        if (!settings.relax_integrality && (lp_converged || (sol.x.size() && gap_closed()))) {
            lp_done = true;
            break;
        }
    }
    if (settings.relax_integrality) {
        sol.gap = relative_gap(sol.objective, sol.bound);
        sol.status = lp_done ? MilpStatus::optimal : (sol.x.empty() ? MilpStatus::no_solution : MilpStatus::feasible);
        return sol;
    }

    // The rounded LP point is usually a near-optimal incumbent.
    if (!lp_x.empty() && !is_integral(inst, lp_x, settings.master.integrality_tol) &&
        sol.iterations < settings.max_iterations) {
        std::vector<double> x = lp_x;
        for (std::size_t j = 0; j < x.size(); ++j)
            if (j < inst.integer.size() && inst.integer[j]) x[j] = std::round(x[j]);
        if (s1.row_residual(x) <= 1e-6 && s1.bound_violation(x) <= 1e-9) {
            ++sol.iterations;
            const OperationsResult ops = evaluate(x);
            consider(x, ops);
            master.add_cut(ops);
        }
    }

    // MILP phase.
    bool limited = false;
    while (!gap_closed() && sol.iterations < settings.max_iterations) {
        ++sol.iterations;
        MilpSettings ms = settings.master;
        ms.gap_tol = std::min(ms.gap_tol, 0.5 * settings.gap_tol);
        const MilpSolution m = solve_milp(master.problem(), ms);
        sol.master_nodes += m.nodes;
        if (m.status == MilpStatus::infeasible) {
            sol.status = MilpStatus::infeasible;
            return sol;
        }
        if (!m.has_solution()) {
            limited = true;
            break;
        }
        if (m.status == MilpStatus::feasible) limited = true;
        sol.bound = std::max(sol.bound, m.bound);
        std::vector<double> x(m.x.begin(), m.x.begin() + n1);
        for (std::size_t j = 0; j < x.size(); ++j)
            if (j < inst.integer.size() && inst.integer[j]) x[j] = std::round(x[j]);
        const OperationsResult ops = evaluate(x);
        consider(x, ops);
        if (gap_closed()) break;
        master.add_cut(ops);
    }
    sol.gap = relative_gap(sol.objective, sol.bound);
    if (sol.x.empty()) sol.status = MilpStatus::no_solution;
    else if (sol.gap <= settings.gap_tol && !limited) sol.status = MilpStatus::optimal;
    else sol.status = sol.gap <= settings.gap_tol ? MilpStatus::optimal : MilpStatus::feasible;
    return sol;
}

}  // namespace stochcep::solver
