#include "stochcep/linear_program.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <tuple>

#include "stochcep/errors.hpp"

namespace stochcep::solver {

SparseMatrix SparseMatrix::from_triplets(int rows, int cols,
                                         std::vector<std::tuple<int, int, double>> triplets) {
    std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
        if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
        return std::get<0>(a) < std::get<0>(b);
    });
    SparseMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.col_start.assign(cols + 1, 0);
    for (std::size_t k = 0; k < triplets.size();) {
        const auto [r, c, v0] = triplets[k];
        if (r < 0 || r >= rows || c < 0 || c >= cols) {
            throw BuildError("sparse triplet out of range");
        }
        double v = v0;
        std::size_t next = k + 1;
        while (next < triplets.size() && std::get<0>(triplets[next]) == r &&
               std::get<1>(triplets[next]) == c) {
            v += std::get<2>(triplets[next]);
            ++next;
        }
        if (v != 0.0) {
            m.row_index.push_back(r);
            m.value.push_back(v);
            ++m.col_start[c + 1];
        }
        k = next;
    }
    for (int c = 0; c < cols; ++c) m.col_start[c + 1] += m.col_start[c];
    return m;
}

void SparseMatrix::multiply_add(std::span<const double> x, std::span<double> y,
                                double alpha) const {
    for (int c = 0; c < cols; ++c) {
        const double xc = alpha * x[c];
        if (xc == 0.0) continue;
        for (int k = col_start[c]; k < col_start[c + 1]; ++k) y[row_index[k]] += value[k] * xc;
    }
}

void SparseMatrix::transpose_multiply_add(std::span<const double> x, std::span<double> y,
                                          double alpha) const {
    for (int c = 0; c < cols; ++c) {
        double s = 0.0;
        for (int k = col_start[c]; k < col_start[c + 1]; ++k) s += value[k] * x[row_index[k]];
        y[c] += alpha * s;
    }
}

double LinearProgram::row_residual(std::span<const double> x) const {
    std::vector<double> ax(A.rows, 0.0);
    A.multiply_add(x, ax);
    double worst = 0.0;
    for (int i = 0; i < A.rows; ++i) worst = std::max(worst, std::abs(ax[i] - rhs[i]));
    return worst;
}

double LinearProgram::bound_violation(std::span<const double> x) const {
    double worst = 0.0;
    for (int j = 0; j < A.cols; ++j) {
        worst = std::max(worst, lower[j] - x[j]);
        worst = std::max(worst, x[j] - upper[j]);
    }
    return worst;
}

double LinearProgram::objective(std::span<const double> x) const {
    double v = objective_offset;
    for (int j = 0; j < A.cols; ++j) v += cost[j] * x[j];
    return v;
}

int ModelBuilder::add_variable(double cost, double lower, double upper, std::string name,
                               bool integer) {
    if (lower > upper) throw BuildError("variable '" + name + "' has lower > upper");
    cost_.push_back(cost);
    lower_.push_back(lower);
    upper_.push_back(upper);
    integer_.push_back(integer);
    col_names_.push_back(std::move(name));
    return num_cols() - 1;
}

int ModelBuilder::add_row(std::span<const std::pair<int, double>> terms, RowSense sense,
                          double rhs, std::string name) {
    const int row = num_rows();
    for (const auto& [col, coef] : terms) {
        if (col < 0 || col >= num_cols()) throw BuildError("row '" + name + "' references bad column");
        triplets_.emplace_back(row, col, coef);
    }
    rhs_.push_back(rhs);
    row_names_.push_back(name);
    if (sense == RowSense::equal) {
        slack_.push_back(-1);
    } else {
        const int s = add_variable(0.0, 0.0, kInf, "slack:" + name);
        triplets_.emplace_back(row, s, sense == RowSense::less_equal ? 1.0 : -1.0);
        slack_.push_back(s);
    }
    return row;
}

LinearProgram ModelBuilder::build() const {
    LinearProgram lp;
    lp.A = SparseMatrix::from_triplets(num_rows(), num_cols(), triplets_);
    lp.cost = cost_;
    lp.lower = lower_;
    lp.upper = upper_;
    lp.rhs = rhs_;
    lp.objective_offset = offset_;
    lp.col_names = col_names_;
    lp.row_names = row_names_;
    return lp;
}

MilpProblem ModelBuilder::build_milp() const { return {build(), integer_}; }

namespace {

std::string fmt_num(double v) {
    if (v == kInf) return "inf";
    if (v == -kInf) return "-inf";
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

double parse_num(const std::string& tok) {
    if (tok == "inf") return kInf;
    if (tok == "-inf") return -kInf;
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw IoError("bad number '" + tok + "' in sparse text");
    return v;
}

}  // namespace

void write_sparse_text(std::ostream& out, const MilpProblem& problem) {
    const LinearProgram& lp = problem.lp;
    out << "lp 1\n";
    out << "dims " << lp.num_rows() << ' ' << lp.num_cols() << ' ' << lp.A.nonzeros() << '\n';
    out << "offset " << fmt_num(lp.objective_offset) << '\n';
    for (int j = 0; j < lp.num_cols(); ++j) {
        const bool is_int = j < static_cast<int>(problem.integer.size()) && problem.integer[j];
        out << "col " << j << ' ' << fmt_num(lp.cost[j]) << ' ' << fmt_num(lp.lower[j]) << ' '
            << fmt_num(lp.upper[j]) << ' ' << (is_int ? 1 : 0);
        if (j < static_cast<int>(lp.col_names.size()) && !lp.col_names[j].empty())
            out << ' ' << lp.col_names[j];
        out << '\n';
    }
    for (int i = 0; i < lp.num_rows(); ++i) {
        out << "row " << i << ' ' << fmt_num(lp.rhs[i]);
        if (i < static_cast<int>(lp.row_names.size()) && !lp.row_names[i].empty())
            out << ' ' << lp.row_names[i];
        out << '\n';
    }
    for (int c = 0; c < lp.A.cols; ++c) {
        for (int k = lp.A.col_start[c]; k < lp.A.col_start[c + 1]; ++k) {
            out << "a " << lp.A.row_index[k] << ' ' << c << ' ' << fmt_num(lp.A.value[k]) << '\n';
        }
    }
    out << "end\n";
}

MilpProblem read_sparse_text(std::istream& in) {
    std::string line;
    int rows = -1, cols = -1;
    MilpProblem p;
    std::vector<std::tuple<int, int, double>> triplets;
    bool header = false, ended = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "lp") {
            int version = 0;
            ls >> version;
            if (version != 1) throw IoError("unsupported sparse text version");
            header = true;
        } else if (tag == "dims") {
            int nnz = 0;
            ls >> rows >> cols >> nnz;
            if (!ls || rows < 0 || cols < 0) throw IoError("bad dims line");
            p.lp.cost.assign(cols, 0.0);
            p.lp.lower.assign(cols, 0.0);
            p.lp.upper.assign(cols, kInf);
            p.lp.rhs.assign(rows, 0.0);
            p.lp.col_names.assign(cols, {});
            p.lp.row_names.assign(rows, {});
            p.integer.assign(cols, false);
            triplets.reserve(nnz);
        } else if (tag == "offset") {
            std::string v;
            ls >> v;
            p.lp.objective_offset = parse_num(v);
        } else if (tag == "col") {
            int j = -1, is_int = 0;
            std::string c, l, u, name;
            ls >> j >> c >> l >> u >> is_int;
            if (!ls || j < 0 || j >= cols) throw IoError("bad col line: " + line);
            ls >> name;
            p.lp.cost[j] = parse_num(c);
            p.lp.lower[j] = parse_num(l);
            p.lp.upper[j] = parse_num(u);
            p.integer[j] = is_int != 0;
            p.lp.col_names[j] = name;
        } else if (tag == "row") {
            int i = -1;
            std::string b, name;
            ls >> i >> b;
            if (!ls || i < 0 || i >= rows) throw IoError("bad row line: " + line);
            ls >> name;
            p.lp.rhs[i] = parse_num(b);
            p.lp.row_names[i] = name;
        } else if (tag == "a") {
            int i = -1, j = -1;
            std::string v;
            ls >> i >> j >> v;
            if (!ls || i < 0 || i >= rows || j < 0 || j >= cols) throw IoError("bad entry: " + line);
            triplets.emplace_back(i, j, parse_num(v));
        } else if (tag == "end") {
            ended = true;
            break;
        } else {
            throw IoError("unknown sparse text tag '" + tag + "'");
        }
    }
    if (!header || rows < 0 || !ended) throw IoError("truncated sparse text instance");
    p.lp.A = SparseMatrix::from_triplets(rows, cols, std::move(triplets));
    return p;
}

}  // namespace stochcep::solver
