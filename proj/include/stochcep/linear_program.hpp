#pragma once

#include <initializer_list>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace stochcep::solver {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Compressed sparse column matrix.
struct SparseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<int> col_start{0};
    std::vector<int> row_index;
    std::vector<double> value;

    [[nodiscard]] int nonzeros() const { return static_cast<int>(value.size()); }

    /// Builds from (row, col, value) triplets; duplicates are summed, zeros dropped.
    static SparseMatrix from_triplets(int rows, int cols,
                                      std::vector<std::tuple<int, int, double>> triplets);

    /// y += alpha * A x
    void multiply_add(std::span<const double> x, std::span<double> y, double alpha = 1.0) const;
    /// y += alpha * A^T x
    void transpose_multiply_add(std::span<const double> x, std::span<double> y,
                                double alpha = 1.0) const;
};

/// LP in computational form: min c^T x + offset  s.t.  A x = b,  l <= x <= u.
/// Inequality rows are represented through explicit slack columns.
struct LinearProgram {
    SparseMatrix A;
    std::vector<double> cost;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<double> rhs;
    double objective_offset = 0.0;
    std::vector<std::string> col_names;
    std::vector<std::string> row_names;

    [[nodiscard]] int num_rows() const { return A.rows; }
    [[nodiscard]] int num_cols() const { return A.cols; }

    /// max_i |A_i x - b_i| (unscaled).
    [[nodiscard]] double row_residual(std::span<const double> x) const;
    /// Largest bound violation of x.
    [[nodiscard]] double bound_violation(std::span<const double> x) const;
    [[nodiscard]] double objective(std::span<const double> x) const;
};

/// LP plus integrality markers.
struct MilpProblem {
    LinearProgram lp;
    std::vector<bool> integer;
};

enum class RowSense { equal, less_equal, greater_equal };

/// Incrementally assembles a LinearProgram. Inequality rows receive a
/// nonnegative slack column named "slack:<row name>".
class ModelBuilder {
public:
    int add_variable(double cost, double lower, double upper, std::string name = {},
                     bool integer = false);

    /// Returns the row index. `terms` are (column, coefficient) pairs.
    int add_row(std::span<const std::pair<int, double>> terms, RowSense sense, double rhs,
                std::string name = {});
    int add_row(std::initializer_list<std::pair<int, double>> terms, RowSense sense, double rhs,
                std::string name = {}) {
        return add_row(std::span<const std::pair<int, double>>(terms.begin(), terms.size()),
                       sense, rhs, std::move(name));
    }

    void add_objective_offset(double v) { offset_ += v; }
    void set_cost(int col, double cost) { cost_[col] = cost; }

    [[nodiscard]] int num_cols() const { return static_cast<int>(cost_.size()); }
    [[nodiscard]] int num_rows() const { return static_cast<int>(rhs_.size()); }
    /// Column index of the slack attached to `row`, or -1 for equality rows.
    [[nodiscard]] int slack_of(int row) const { return slack_[row]; }

    [[nodiscard]] LinearProgram build() const;
    [[nodiscard]] MilpProblem build_milp() const;

private:
    std::vector<double> cost_, lower_, upper_, rhs_;
    std::vector<bool> integer_;
    std::vector<int> slack_;
    std::vector<std::string> col_names_, row_names_;
    std::vector<std::tuple<int, int, double>> triplets_;
    double offset_ = 0.0;
};

/// Sparse text exchange format:
///
///     lp 1
///     dims <rows> <cols> <nonzeros>
///     offset <value>
///     col <j> <cost> <lower> <upper> <integer 0|1> [name]
///     row <i> <rhs> [name]
///     a <i> <j> <value>
///     end
///
/// Infinite bounds are written as `inf` / `-inf`. Values use 17 significant digits
/// so a write/read cycle is exact.
void write_sparse_text(std::ostream& out, const MilpProblem& problem);
[[nodiscard]] MilpProblem read_sparse_text(std::istream& in);

}  // namespace stochcep::solver
