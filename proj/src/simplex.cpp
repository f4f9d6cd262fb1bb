#include "stochcep/simplex.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace stochcep::solver {

std::string to_string(LpStatus status) {
    switch (status) {
        case LpStatus::optimal: return "optimal";
        case LpStatus::infeasible: return "infeasible";
        case LpStatus::unbounded: return "unbounded";
        case LpStatus::iteration_limit: return "iteration_limit";
        case LpStatus::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

namespace {

class Simplex {
public:
    Simplex(const LinearProgram& lp, const LpSettings& settings)
        : lp_(lp), set_(settings), m_(lp.num_rows()), n_(lp.num_cols()), N_(n_ + m_) {
        scale();
    }

    LpSolution run(const Basis* warm) {
        LpSolution out;
        bool started = warm != nullptr && !warm->empty() && try_warm_start(*warm);
        if (!started) cold_start();

        const long limit = set_.max_iterations > 0 ? set_.max_iterations
                                                   : 20L * (m_ + n_) + 10000L;
        int restarts = 0;
        bool verified = true;  // factorization is fresh
        int degenerate_run = 0;
        bool bland = set_.pricing == PricingRule::bland;
        std::vector<double> cb(m_), y(m_), alpha(m_);

        while (true) {
            if (iterations_ >= limit) {
                out.status = LpStatus::iteration_limit;
                break;
            }
            if (updates_ >= set_.refactor_interval) {
                if (!refactor()) {
                    if (restarts++ < 1) {
                        cold_start();
                        verified = true;
                        continue;
                    }
                    out.status = LpStatus::numerical_failure;
                    break;
                }
                verified = true;
            }

            // Phase selection: composite phase 1 while any basic variable violates its bounds.
            bool phase1 = false;
            for (int i = 0; i < m_; ++i) {
                const int j = basic_[i];
                if (x_[j] < l_[j] - set_.primal_tol) {
                    cb[i] = -1.0;
                    phase1 = true;
                } else if (x_[j] > u_[j] + set_.primal_tol) {
                    cb[i] = 1.0;
                    phase1 = true;
                } else {
                    cb[i] = 0.0;
                }
            }
            if (!phase1) {
                for (int i = 0; i < m_; ++i) cb[i] = c_[basic_[i]];
            }
            Eigen::Map<const Eigen::VectorXd> cbv(cb.data(), m_);
            Eigen::Map<Eigen::VectorXd> yv(y.data(), m_);
            yv.noalias() = binv_.transpose() * cbv;

            // Pricing.
            int q = -1;
            int dir = 0;
            double best = 0.0;
            for (int j = 0; j < N_; ++j) {
                const VarStatus st = status_[j];
                if (st == VarStatus::basic || l_[j] == u_[j]) continue;
                double d = phase1 ? 0.0 : c_[j];
                if (j < n_) {
                    for (int k = A_.col_start[j]; k < A_.col_start[j + 1]; ++k)
                        d -= A_.value[k] * y[A_.row_index[k]];
                } else {
                    d -= y[j - n_];
                }
                // Phase 2 tests optimality on the unscaled reduced cost d / col_scale.
                const double tol = phase1 || j >= n_ ? set_.dual_tol
                                                     : set_.dual_tol * std::min(1.0, col_scale_[j]);
                int this_dir = 0;
                if ((st == VarStatus::at_lower || st == VarStatus::free_zero) && d < -tol)
                    this_dir = 1;
                else if ((st == VarStatus::at_upper || st == VarStatus::free_zero) && d > tol)
                    this_dir = -1;
                if (this_dir == 0) continue;
                if (bland) {
                    q = j;
                    dir = this_dir;
                    break;
                }
                if (std::abs(d) > best) {
                    best = std::abs(d);
                    q = j;
                    dir = this_dir;
                }
            }

            if (q < 0) {
                if (!verified) {
                    if (!refactor()) {
                        out.status = LpStatus::numerical_failure;
                        break;
                    }
                    verified = true;
                    continue;
                }
                out.status = phase1 ? LpStatus::infeasible : LpStatus::optimal;
                break;
            }

            // FTRAN.
            Eigen::Map<Eigen::VectorXd> av(alpha.data(), m_);
            av.setZero();
            if (q < n_) {
                for (int k = A_.col_start[q]; k < A_.col_start[q + 1]; ++k)
                    av.noalias() += A_.value[k] * binv_.col(A_.row_index[k]);
            } else {
                av = binv_.col(q - n_);
            }

            // Ratio test.
            const RatioResult rr = ratio_test(alpha, dir, bland);
            const double range = u_[q] - l_[q];
            if (rr.row < 0 && !std::isfinite(range)) {
                if (!verified) {
                    if (!refactor()) {
                        out.status = LpStatus::numerical_failure;
                        break;
                    }
                    verified = true;
                    continue;
                }
                out.status = phase1 ? LpStatus::numerical_failure : LpStatus::unbounded;
                break;
            }

            const bool flip = std::isfinite(range) && (rr.row < 0 || range <= rr.step);
            const double step = flip ? range : rr.step;
            ++iterations_;
            verified = false;

            if (step <= 1e-12) {
                if (++degenerate_run > set_.stall_threshold && !bland) {
                    bland = true;
                    used_bland_ = true;
                }
            } else {
                degenerate_run = 0;
                if (set_.pricing != PricingRule::bland) bland = false;
            }

            x_[q] += dir * step;
            for (int i = 0; i < m_; ++i) x_[basic_[i]] -= dir * step * alpha[i];

            if (flip) {
                status_[q] = dir > 0 ? VarStatus::at_upper : VarStatus::at_lower;
                x_[q] = dir > 0 ? u_[q] : l_[q];
                continue;
            }

            const int r = rr.row;
            const int leaving = basic_[r];
            x_[leaving] = rr.to_upper ? u_[leaving] : l_[leaving];
            status_[leaving] = rr.to_upper ? VarStatus::at_upper : VarStatus::at_lower;
            status_[q] = VarStatus::basic;
            basic_[r] = q;

            // Product-form update of the explicit inverse.
            const double pivot = alpha[r];
            Eigen::RowVectorXd prow = binv_.row(r) / pivot;
            binv_.noalias() -= av * prow;
            binv_.row(r) = prow;
            ++updates_;
        }

        out.iterations = iterations_;
        out.used_bland = used_bland_;
        finish(out);
        return out;
    }

private:
    struct RatioResult {
        int row = -1;
        double step = 0.0;
        bool to_upper = false;
    };

    template <typename F>
    void for_col(int j, F&& f) const {
        if (j < n_) {
            for (int k = A_.col_start[j]; k < A_.col_start[j + 1]; ++k) f(A_.row_index[k], A_.value[k]);
        } else {
            f(j - n_, 1.0);
        }
    }

    void scale() {
        row_scale_.assign(m_, 1.0);
        col_scale_.assign(n_, 1.0);
        if (set_.scale && m_ > 0 && n_ > 0) {
            // Entries below 1e-9 of the matrix maximum are ignored; they carry no
            // scale information and would otherwise dominate the geometric means.
            double amax = 0.0;
            for (double v : lp_.A.value) amax = std::max(amax, std::abs(v));
            const double floor = 1e-9 * amax;
            std::vector<double> rmin(m_), rmax(m_);
            for (int pass = 0; pass < 4; ++pass) {
                std::fill(rmin.begin(), rmin.end(), kInf);
                std::fill(rmax.begin(), rmax.end(), 0.0);
                for (int j = 0; j < n_; ++j) {
                    for (int k = lp_.A.col_start[j]; k < lp_.A.col_start[j + 1]; ++k) {
                        if (std::abs(lp_.A.value[k]) < floor) continue;
                        const int i = lp_.A.row_index[k];
                        const double v = std::abs(lp_.A.value[k]) * col_scale_[j];
                        rmin[i] = std::min(rmin[i], v);
                        rmax[i] = std::max(rmax[i], v);
                    }
                }
                for (int i = 0; i < m_; ++i)
                    if (rmax[i] > 0.0) row_scale_[i] = 1.0 / std::sqrt(rmin[i] * rmax[i]);
                for (int j = 0; j < n_; ++j) {
                    double cmin = kInf, cmax = 0.0;
                    for (int k = lp_.A.col_start[j]; k < lp_.A.col_start[j + 1]; ++k) {
                        if (std::abs(lp_.A.value[k]) < floor) continue;
                        const double v = std::abs(lp_.A.value[k]) * row_scale_[lp_.A.row_index[k]];
                        cmin = std::min(cmin, v);
                        cmax = std::max(cmax, v);
                    }
                    if (cmax > 0.0) col_scale_[j] = 1.0 / std::sqrt(cmin * cmax);
                }
            }
            auto pow2 = [](double s) { return std::exp2(std::round(std::log2(s))); };
            for (double& s : row_scale_) s = pow2(s);
            for (double& s : col_scale_) s = pow2(s);
        }

        A_ = lp_.A;
        for (int j = 0; j < n_; ++j)
            for (int k = A_.col_start[j]; k < A_.col_start[j + 1]; ++k)
                A_.value[k] *= row_scale_[A_.row_index[k]] * col_scale_[j];
        c_.assign(N_, 0.0);
        l_.assign(N_, 0.0);
        u_.assign(N_, 0.0);
        for (int j = 0; j < n_; ++j) {
            c_[j] = lp_.cost[j] * col_scale_[j];
            l_[j] = lp_.lower[j] / col_scale_[j];
            u_[j] = lp_.upper[j] / col_scale_[j];
        }
        b_.resize(m_);
        for (int i = 0; i < m_; ++i) b_[i] = lp_.rhs[i] * row_scale_[i];
    }

    void place_nonbasic(int j, VarStatus preferred) {
        VarStatus st = preferred;
        if (st == VarStatus::at_lower && !std::isfinite(l_[j])) st = VarStatus::free_zero;
        if (st == VarStatus::at_upper && !std::isfinite(u_[j])) st = VarStatus::free_zero;
        if (st == VarStatus::free_zero || st == VarStatus::basic) {
            if (std::isfinite(l_[j])) st = VarStatus::at_lower;
            else if (std::isfinite(u_[j])) st = VarStatus::at_upper;
            else st = VarStatus::free_zero;
        }
        status_[j] = st;
        x_[j] = st == VarStatus::at_lower ? l_[j] : st == VarStatus::at_upper ? u_[j] : 0.0;
    }

    void cold_start() {
        status_.assign(N_, VarStatus::at_lower);
        x_.assign(N_, 0.0);
        basic_.resize(m_);
        for (int j = 0; j < n_; ++j) place_nonbasic(j, VarStatus::at_lower);
        for (int i = 0; i < m_; ++i) {
            basic_[i] = n_ + i;
            status_[n_ + i] = VarStatus::basic;
        }
        binv_ = Eigen::MatrixXd::Identity(m_, m_);
        updates_ = 0;
        recompute_basics();
    }

    bool try_warm_start(const Basis& warm) {
        if (static_cast<int>(warm.basic.size()) != m_ ||
            static_cast<int>(warm.status.size()) != N_)
            return false;
        std::vector<char> seen(N_, 0);
        for (int j : warm.basic) {
            if (j < 0 || j >= N_ || seen[j]) return false;
            seen[j] = 1;
        }
        status_.assign(N_, VarStatus::at_lower);
        x_.assign(N_, 0.0);
        basic_ = warm.basic;
        for (int j = 0; j < N_; ++j) {
            if (seen[j]) {
                status_[j] = VarStatus::basic;
            } else {
                place_nonbasic(j, warm.status[j]);
            }
        }
        return refactor();
    }

    bool refactor() {
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m_, m_);
        for (int i = 0; i < m_; ++i) for_col(basic_[i], [&](int r, double v) { B(r, i) = v; });
        if (m_ > 0) {
            Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
            const auto diag = lu.matrixLU().diagonal().cwiseAbs();
            if (!(diag.minCoeff() > 1e-11 * std::max(1.0, diag.maxCoeff()))) {
                if (!repair(B)) return false;
                return refactor();
            }
            binv_ = lu.inverse();
        } else {
            binv_.resize(0, 0);
        }
        updates_ = 0;
        recompute_basics();
        return true;
    }

    /// Replaces numerically dependent basic columns with artificial columns
    /// of rows outside the span of the remaining ones.
    bool repair(const Eigen::MatrixXd& B) {
        if (++repairs_ > 50) return false;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m_, m_);
        qr.setThreshold(1e-10);
        qr.compute(B);
        const int rank = static_cast<int>(qr.rank());
        const auto& perm = qr.colsPermutation().indices();
        std::vector<char> keep(m_, 0);
        for (int k = 0; k < rank; ++k) keep[perm[k]] = 1;
        Eigen::MatrixXd span = Eigen::MatrixXd(qr.householderQ()).leftCols(m_);
        span.conservativeResize(m_, rank);
        std::vector<int> added;
        for (int i = 0; i < m_ && rank + static_cast<int>(added.size()) < m_; ++i) {
            Eigen::VectorXd v = Eigen::VectorXd::Unit(m_, i);
            v -= span * (span.transpose() * v);
            const double nv = v.norm();
            if (nv < 1e-3) continue;
            span.conservativeResize(m_, span.cols() + 1);
            span.col(span.cols() - 1) = v / nv;
            added.push_back(i);
        }
        if (rank + static_cast<int>(added.size()) < m_) return false;
        std::size_t next = 0;
        for (int pos = 0; pos < m_; ++pos) {
            if (keep[pos]) continue;
            const int j = basic_[pos];
            const bool near_upper = std::isfinite(u_[j]) && std::abs(x_[j] - u_[j]) < std::abs(x_[j] - l_[j]);
            place_nonbasic(j, near_upper ? VarStatus::at_upper : VarStatus::at_lower);
            const int art = n_ + added[next++];
            basic_[pos] = art;
            status_[art] = VarStatus::basic;
        }
        return true;
    }

    void recompute_basics() {
        Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(b_.data(), m_);
        for (int j = 0; j < N_; ++j) {
            if (status_[j] == VarStatus::basic || x_[j] == 0.0) continue;
            const double xj = x_[j];
            for_col(j, [&](int i, double v) { r[i] -= v * xj; });
        }
        const Eigen::VectorXd xb = binv_ * r;
        for (int i = 0; i < m_; ++i) x_[basic_[i]] = xb[i];
    }

    RatioResult ratio_test(const std::vector<double>& alpha, int dir, bool bland) const {
        const double tol = set_.primal_tol;
        // Rate of change of each basic variable and the bound it moves toward.
        auto target = [&](int i, double rate, double& bound, bool& upper) -> bool {
            const int j = basic_[i];
            const double xj = x_[j];
            if (rate < 0.0) {
                if (xj > u_[j] + tol) {
                    bound = u_[j];
                    upper = true;
                    return true;
                }
                if (xj < l_[j] - tol || !std::isfinite(l_[j])) return false;
                bound = l_[j];
                upper = false;
                return true;
            }
            if (xj < l_[j] - tol) {
                bound = l_[j];
                upper = false;
                return true;
            }
            if (xj > u_[j] + tol || !std::isfinite(u_[j])) return false;
            bound = u_[j];
            upper = true;
            return true;
        };

        RatioResult res;
        if (bland) {
            double best = kInf;
            int best_col = -1;
            for (int i = 0; i < m_; ++i) {
                const double rate = -dir * alpha[i];
                if (std::abs(alpha[i]) <= set_.pivot_tol) continue;
                double bound = 0.0;
                bool upper = false;
                if (!target(i, rate, bound, upper)) continue;
                const double t = std::max(0.0, (bound - x_[basic_[i]]) / rate);
                if (t < best - 1e-12 || (t <= best + 1e-12 && basic_[i] < best_col)) {
                    best = t;
                    best_col = basic_[i];
                    res = {i, t, upper};
                }
            }
            return res;
        }

        // Harris pass 1: relaxed bound on the step.
        double tmax = kInf;
        for (int i = 0; i < m_; ++i) {
            if (std::abs(alpha[i]) <= set_.pivot_tol) continue;
            const double rate = -dir * alpha[i];
            double bound = 0.0;
            bool upper = false;
            if (!target(i, rate, bound, upper)) continue;
            const double t = (std::abs(bound - x_[basic_[i]]) + tol) / std::abs(rate);
            tmax = std::min(tmax, t);
        }
        if (!std::isfinite(tmax)) return res;
        // Pass 2: largest pivot among rows blocking within the relaxed step.
        double best_pivot = 0.0;
        for (int i = 0; i < m_; ++i) {
            if (std::abs(alpha[i]) <= set_.pivot_tol) continue;
            const double rate = -dir * alpha[i];
            double bound = 0.0;
            bool upper = false;
            if (!target(i, rate, bound, upper)) continue;
            const double t = (bound - x_[basic_[i]]) / rate;
            if (t <= tmax && std::abs(alpha[i]) > best_pivot) {
                best_pivot = std::abs(alpha[i]);
                res = {i, std::max(0.0, t), upper};
            }
        }
        return res;
    }

    void finish(LpSolution& out) {
        out.basis.basic = basic_;
        out.basis.status = status_;
        out.x.assign(n_, 0.0);
        for (int j = 0; j < n_; ++j) out.x[j] = x_[j] * col_scale_[j];
        // Snap nonbasic values exactly onto their original bounds.
        for (int j = 0; j < n_; ++j) {
            if (status_[j] == VarStatus::at_lower) out.x[j] = lp_.lower[j];
            else if (status_[j] == VarStatus::at_upper) out.x[j] = lp_.upper[j];
        }
        out.objective = lp_.objective(out.x);
        out.primal_residual = std::max(lp_.row_residual(out.x), lp_.bound_violation(out.x));

        if (out.status != LpStatus::optimal) return;

        std::vector<double> cb(m_);
        for (int i = 0; i < m_; ++i) cb[i] = c_[basic_[i]];
        Eigen::VectorXd ys = binv_.transpose() * Eigen::Map<const Eigen::VectorXd>(cb.data(), m_);
        out.duals.assign(m_, 0.0);
        for (int i = 0; i < m_; ++i) out.duals[i] = ys[i] * row_scale_[i];
        out.reduced_costs = lp_.cost;
        lp_.A.transpose_multiply_add(out.duals, out.reduced_costs, -1.0);

        double dual_inf = 0.0;
        double dual_obj = lp_.objective_offset;
        for (int i = 0; i < m_; ++i) dual_obj += lp_.rhs[i] * out.duals[i];
        for (int j = 0; j < n_; ++j) {
            const double d = out.reduced_costs[j];
            const double lo = lp_.lower[j], up = lp_.upper[j];
            if (lo == up) {
                dual_obj += d * lo;
                continue;
            }
            switch (status_[j]) {
                case VarStatus::basic:
                case VarStatus::free_zero: dual_inf = std::max(dual_inf, std::abs(d)); break;
                case VarStatus::at_lower: dual_inf = std::max(dual_inf, -d); break;
                case VarStatus::at_upper: dual_inf = std::max(dual_inf, d); break;
            }
            double term = d > 0.0 ? d * lo : d * up;
            if (!std::isfinite(term) && std::abs(d) <= 1e-7 * (1.0 + std::abs(lp_.cost[j])))
                term = d * out.x[j];
            dual_obj += term;
        }
        out.dual_infeasibility = dual_inf;
        out.dual_objective = dual_obj;

        const double scale_b = 1.0 + std::abs(out.objective);
        if (!(out.primal_residual <= 1e-6 * (1.0 + max_abs(lp_.rhs))) ||
            std::abs(out.dual_objective - out.objective) > 1e-6 * scale_b) {
            out.status = LpStatus::numerical_failure;
        }
    }

    static double max_abs(const std::vector<double>& v) {
        double m = 0.0;
        for (double e : v) m = std::max(m, std::abs(e));
        return m;
    }

    const LinearProgram& lp_;
    LpSettings set_;
    int m_, n_, N_;
    SparseMatrix A_;
    std::vector<double> c_, l_, u_, b_;
    std::vector<double> row_scale_, col_scale_;
    std::vector<int> basic_;
    std::vector<VarStatus> status_;
    std::vector<double> x_;
    Eigen::MatrixXd binv_;
    int updates_ = 0;
    long iterations_ = 0;
    bool used_bland_ = false;
    int repairs_ = 0;
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const LpSettings& settings, const Basis* warm_start) {
    LpSolution out = Simplex(lp, settings).run(warm_start);
    if (out.status == LpStatus::numerical_failure && settings.scale) {
        LpSettings plain = settings;
        plain.scale = false;
        const long spent = out.iterations;
        out = Simplex(lp, plain).run(nullptr);
        out.iterations += spent;
    }
    return out;
}

}  // namespace stochcep::solver
