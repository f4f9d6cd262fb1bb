#pragma once

// Brute-force reference solutions shared by the unit tests and the acceptance run.

#include <Eigen/Dense>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "stochcep/branch_and_bound.hpp"
#include "stochcep/linear_program.hpp"
#include "stochcep/rpc.hpp"
#include "stochcep/scenario_data.hpp"

namespace oracles {

using namespace stochcep::solver;
using stochcep::data::DayProfile;
using stochcep::data::SampleSet;
namespace data = stochcep::data;

/// General Matern form with nu = 5/2 through the modified Bessel function.
inline double matern_bessel(double r) {
    const double nu = 2.5;
    if (r == 0.0) return 1.0;
    const double s = std::sqrt(2.0 * nu) * r;
    return std::pow(2.0, 1.0 - nu) / boost::math::tgamma(nu) * std::pow(s, nu) * boost::math::cyl_bessel_k(nu, s);
}

// min c^T x  s.t.  A x <= b, x >= 0; brute-force over all bases of [A I].
inline double vertex_enumeration(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                          const Eigen::VectorXd& c) {
    const int m = static_cast<int>(A.rows()), n = static_cast<int>(A.cols());
    Eigen::MatrixXd full(m, n + m);
    full << A, Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd cfull = Eigen::VectorXd::Zero(n + m);
    cfull.head(n) = c;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> pick(m);
    std::vector<bool> mask(n + m, false);
    std::fill(mask.begin(), mask.begin() + m, true);
    std::sort(mask.begin(), mask.end());
    do {
        int k = 0;
        for (int j = 0; j < n + m; ++j)
            if (mask[j]) pick[k++] = j;
        Eigen::MatrixXd B(m, m);
        for (int i = 0; i < m; ++i) B.col(i) = full.col(pick[i]);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
        if (lu.rank() < m) continue;
        const Eigen::VectorXd xb = lu.solve(b);
        if (xb.minCoeff() < -1e-10) continue;
        double obj = 0.0;
        for (int i = 0; i < m; ++i) obj += cfull[pick[i]] * xb[i];
        best = std::min(best, obj);
    } while (std::next_permutation(mask.begin(), mask.end()));
    return best;
}

inline LinearProgram inequality_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                            const Eigen::VectorXd& c) {
    ModelBuilder mb;
    std::vector<int> x;
    for (int j = 0; j < A.cols(); ++j) x.push_back(mb.add_variable(c[j], 0.0, kInf));
    for (int i = 0; i < A.rows(); ++i) {
        std::vector<std::pair<int, double>> terms;
        for (int j = 0; j < A.cols(); ++j) terms.emplace_back(x[j], A(i, j));
        mb.add_row(terms, RowSense::less_equal, b[i]);
    }
    return mb.build();
}

struct RandomIp {
    int n;
    std::vector<std::vector<double>> rows;
    std::vector<double> rhs;
    std::vector<double> cost;
};

inline RandomIp random_ip(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> coef(-1.0, 3.0), cst(-5.0, 1.0), rhs(3.0, 12.0);
    RandomIp ip{n, {}, {}, {}};
    for (int i = 0; i < 3; ++i) {
        std::vector<double> r(n);
        for (double& v : r) v = coef(rng);
        ip.rows.push_back(r);
        ip.rhs.push_back(rhs(rng));
    }
    for (int j = 0; j < n; ++j) ip.cost.push_back(cst(rng));
    return ip;
}

inline MilpProblem to_milp(const RandomIp& ip) {
    ModelBuilder mb;
    std::vector<int> x;
    for (int j = 0; j < ip.n; ++j) x.push_back(mb.add_variable(ip.cost[j], 0.0, 5.0, {}, true));
    for (std::size_t i = 0; i < ip.rows.size(); ++i) {
        std::vector<std::pair<int, double>> t;
        for (int j = 0; j < ip.n; ++j) t.emplace_back(x[j], ip.rows[i][j]);
        mb.add_row(t, RowSense::less_equal, ip.rhs[i]);
    }
    return mb.build_milp();
}

// Exhaustive enumeration over the integer box [0,5]^n.
inline double enumerate(const RandomIp& ip) {
    double best = kInf;
    std::vector<int> x(ip.n, 0);
    while (true) {
        bool ok = true;
        for (std::size_t i = 0; i < ip.rows.size() && ok; ++i) {
            double lhs = 0.0;
            for (int j = 0; j < ip.n; ++j) lhs += ip.rows[i][j] * x[j];
            ok = lhs <= ip.rhs[i] + 1e-9;
        }
        if (ok) {
            double obj = 0.0;
            for (int j = 0; j < ip.n; ++j) obj += ip.cost[j] * x[j];
            best = std::min(best, obj);
        }
        int k = 0;
        while (k < ip.n && x[k] == 5) x[k++] = 0;
        if (k == ip.n) break;
        ++x[k];
    }
    return best;
}

/// Sample set whose features are the given points, all in the power-load group.
/// Day loads are taken from `power` and `gas` when given.
inline SampleSet point_sample(const std::vector<std::vector<double>>& pts, int days_per_scenario,
                       const std::vector<double>& power = {}, const std::vector<double>& gas = {}) {
    SampleSet s;
    const int dim = static_cast<int>(pts.front().size());
    s.group_slices[0] = {0, dim};
    for (int g = 1; g < data::kGroups; ++g) s.group_slices[g] = {dim, 0};
    s.days_per_scenario = days_per_scenario;
    s.scenario_ids = {"s0"};
    for (std::size_t i = 0; i < pts.size(); ++i) {
        DayProfile p;
        p.data.scenario_id = "s0";
        p.data.day = static_cast<int>(i);
        p.data.power_load = Eigen::MatrixXd::Constant(1, 1, power.empty() ? 0.0 : power[i]);
        p.data.gas_load = Eigen::VectorXd::Constant(1, gas.empty() ? 0.0 : gas[i]);
        p.feature = Eigen::Map<const Eigen::VectorXd>(pts[i].data(), dim);
        p.raw = p.feature;
        s.profiles.push_back(p);
    }
    return s;
}

inline double medoid_cost(const Eigen::MatrixXd& D, const std::vector<int>& medoids) {
    double c = 0.0;
    for (Eigen::Index i = 0; i < D.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int m : medoids) best = std::min(best, D(i, m));
        c += best;
    }
    return c;
}

/// Exhaustive k-medoids optimum over all C(n, k) medoid sets.
inline double brute_force_kmedoids(const Eigen::MatrixXd& D, int k) {
    const int n = static_cast<int>(D.rows());
    std::vector<bool> pick(n, false);
    std::fill(pick.end() - k, pick.end(), true);
    double best = std::numeric_limits<double>::infinity();
    do {
        std::vector<int> m;
        for (int i = 0; i < n; ++i)
            if (pick[i]) m.push_back(i);
        best = std::min(best, medoid_cost(D, m));
    } while (std::next_permutation(pick.begin(), pick.end()));
    return best;
}

inline Eigen::MatrixXd euclid(const std::vector<std::vector<double>>& pts) {
    const int n = static_cast<int>(pts.size());
    Eigen::MatrixXd D(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < pts[i].size(); ++d) s += (pts[i][d] - pts[j][d]) * (pts[i][d] - pts[j][d]);
            D(i, j) = std::sqrt(s);
        }
    return D;
}

}  // namespace oracles
