#include "stochcep/gp_bo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <thread>

#include <boost/random/sobol.hpp>

#include "stochcep/errors.hpp"

namespace stochcep::bo {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Eigen::VectorXd kernel_column(const GpState& g, const Eigen::VectorXd& theta) {
    Eigen::VectorXd k(g.size());
    for (int i = 0; i < g.size(); ++i) k[i] = matern52(g.inputs.row(i).transpose(), theta);
    return k;
}

Eigen::VectorXd clamp_unit(Eigen::VectorXd x) {
    for (Eigen::Index d = 0; d < x.size(); ++d) x[d] = std::clamp(x[d], 0.0, 1.0);
    return x;
}

struct LocalResult {
    Eigen::VectorXd x;
    double value = 0.0;
};

/// Projected gradient descent with central differences and Armijo backtracking.
LocalResult descend(const GpState& g, double beta, Eigen::VectorXd x, const AcquisitionOptions& opt) {
    auto f = [&](const Eigen::VectorXd& p) { return lcb(g, p, beta, opt.use_sigma); };
    const Eigen::Index m = x.size();
    double fx = f(x);
    double step = 0.1;
    for (int it = 0; it < opt.max_steps; ++it) {
        Eigen::VectorXd grad(m);
        for (Eigen::Index d = 0; d < m; ++d) {
            Eigen::VectorXd a = x, b = x;
            a[d] = std::min(1.0, x[d] + opt.fd_step);
            b[d] = std::max(0.0, x[d] - opt.fd_step);
            grad[d] = (f(a) - f(b)) / (a[d] - b[d]);
        }
        bool moved = false;
        while (step > 1e-10) {
            const Eigen::VectorXd y = clamp_unit(x - step * grad);
            const double fy = f(y);
            if (fy <= fx - 1e-4 * grad.dot(x - y) && (y - x).squaredNorm() > 0.0) {
                moved = fx - fy > 1e-12 * std::max(1.0, std::abs(fx));
                x = y;
                fx = fy;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return {x, fx};
}

std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

double matern52_r(double r) {
    const double s = std::sqrt(5.0) * r;
    return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return matern52_r((a - b).norm());
}

// ---------------------------------------------------------------------------
// Search space

SearchSpace SearchSpace::from_bounds(const rpc::HyperparameterBounds& b) {
    SearchSpace s;
    s.lower[5] = b.rep_days_min;
    s.upper[5] = b.rep_days_max;
    s.lower[6] = b.extreme_days_min;
    s.upper[6] = b.extreme_days_max;
    return s;
}

void SearchSpace::validate() const {
    for (int d = 0; d < kDims; ++d)
        if (!(lower[d] < upper[d])) throw ParameterError("search space dimension " + std::to_string(d) + " is empty");
    for (int d = 0; d < 5; ++d)
        if (lower[d] < 0.0 || upper[d] > 1.0) throw ParameterError("weight bounds must lie in [0, 1]");
    if (lower[5] < 1.0 || lower[6] < 0.0) throw ParameterError("day-count bounds must be non-negative");
}

Eigen::VectorXd SearchSpace::to_unit(const RawPoint& raw) const {
    Eigen::VectorXd u(kDims);
    for (int d = 0; d < kDims; ++d) u[d] = (raw[d] - lower[d]) / (upper[d] - lower[d]);
    return u;
}

RawPoint SearchSpace::from_unit(const Eigen::VectorXd& u) const {
    RawPoint r{};
    for (int d = 0; d < kDims; ++d) r[d] = lower[d] + std::clamp(u[d], 0.0, 1.0) * (upper[d] - lower[d]);
    return r;
}

rpc::HyperparameterBounds SearchSpace::bounds() const {
    return {static_cast<int>(std::ceil(lower[5])), static_cast<int>(std::floor(upper[5])),
            static_cast<int>(std::ceil(lower[6])), static_cast<int>(std::floor(upper[6]))};
}

rpc::Hyperparameters SearchSpace::canonicalize(const RawPoint& raw) const {
    return eval::round_hyperparameters(raw, bounds());
}

// ---------------------------------------------------------------------------
// GP

GpState gp_fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& outputs, double jitter, bool standardize) {
    const Eigen::Index n = outputs.size();
    if (n == 0) throw FitError("no observations");
    if (inputs.rows() != n) throw FitError("input and output counts differ");
    if (!outputs.allFinite() || !inputs.allFinite()) throw FitError("observations must be finite");
    if (!(jitter >= 0.0)) throw FitError("jitter must be non-negative");
    GpState g;
    g.inputs = inputs;
    g.outputs = outputs;
    if (standardize) {
        g.mean = outputs.mean();
        const double var = (outputs.array() - g.mean).square().mean();
        g.scale = var > 1e-24 * std::max(1.0, g.mean * g.mean) ? std::sqrt(var) : 1.0;
    }
    g.standardized = (outputs.array() - g.mean) / g.scale;

    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = matern52(inputs.row(i).transpose(), inputs.row(j).transpose());
    for (double jit = jitter; jit <= 1e-3 * (1.0 + 1e-9); jit = jit > 0.0 ? jit * 10.0 : 1e-10) {
        Eigen::LLT<Eigen::MatrixXd> llt(K + jit * Eigen::MatrixXd::Identity(n, n));
        if (llt.info() != Eigen::Success) continue;
        g.chol_l = llt.matrixL();
        if (!g.chol_l.allFinite() || (g.chol_l.diagonal().array() <= 0.0).any()) continue;
        g.jitter = jit;
        g.alpha = llt.solve(g.standardized);
        return g;
    }
    throw FitError("kernel matrix is not positive definite with jitter up to 1e-3");
}

Posterior gp_posterior(const GpState& g, const Eigen::VectorXd& theta) {
    const Eigen::VectorXd k = kernel_column(g, theta);
    Posterior p;
    p.mean = k.dot(g.alpha);
    const Eigen::VectorXd v = g.chol_l.triangularView<Eigen::Lower>().solve(k);
    p.variance = std::max(0.0, 1.0 - v.squaredNorm());
    return p;
}

double destandardize(const GpState& g, double standardized_mean) {
    return g.mean + g.scale * standardized_mean;
}

double lcb(const GpState& g, const Eigen::VectorXd& theta, double beta, bool use_sigma) {
    const Posterior p = gp_posterior(g, theta);
    return p.mean - beta * (use_sigma ? std::sqrt(p.variance) : p.variance);
}

Eigen::VectorXd minimize_acquisition(const GpState& g, double beta, int n_starts, std::uint64_t seed,
                                     const AcquisitionOptions& options) {
    if (n_starts < 1) throw ParameterError("n_starts must be at least 1");
    const int m = static_cast<int>(g.inputs.cols());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Eigen::VectorXd shift(m);
    for (int d = 0; d < m; ++d) shift[d] = u01(rng);

    std::vector<Eigen::VectorXd> starts;
    boost::random::sobol sobol(static_cast<std::size_t>(m));
    const double span = static_cast<double>(sobol.max()) - static_cast<double>(sobol.min()) + 1.0;
    for (int s = 0; s < n_starts; ++s) {
        Eigen::VectorXd x(m);
        for (int d = 0; d < m; ++d) {
            const double q = (static_cast<double>(sobol()) - static_cast<double>(sobol.min())) / span;
            x[d] = std::fmod(q + shift[d], 1.0);
        }
        starts.push_back(x);
    }
    Eigen::Index best_obs = 0;
    g.standardized.minCoeff(&best_obs);
    starts.push_back(g.inputs.row(best_obs).transpose());

    std::vector<LocalResult> results(starts.size());
    const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(starts.size())));
    auto run = [&](int w) {
        for (std::size_t s = static_cast<std::size_t>(w); s < starts.size(); s += static_cast<std::size_t>(workers))
            results[s] = descend(g, beta, starts[s], options);
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
        for (std::thread& t : pool) t.join();
    }
    std::size_t best = 0;
    for (std::size_t s = 1; s < results.size(); ++s)
        if (results[s].value < results[best].value) best = s;
    return clamp_unit(results[best].x);
}

// ---------------------------------------------------------------------------
// Search

std::string Method::tag() const {
    switch (kind) {
        case Kind::random: return "random";
        case Kind::baseline: return "baseline";
        case Kind::bo: break;
    }
    return "BO_" + format_number(beta);
}

Method Method::parse(const std::string& tag) {
    if (tag == "random") return {Kind::random, 0.0};
    if (tag == "baseline") return {Kind::baseline, 0.0};
    if (tag.rfind("BO_", 0) == 0) {
        try {
            std::size_t used = 0;
            const double beta = std::stod(tag.substr(3), &used);
            if (used == tag.size() - 3 && beta >= 0.0 && std::isfinite(beta)) return {Kind::bo, beta};
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("unknown method tag '" + tag + "' (expected BO_<beta>, random or baseline)");
}

const TraceEntry& SearchTrace::best() const {
    if (entries.empty()) throw ParameterError("empty search trace");
    std::size_t b = 0;
    for (std::size_t i = 1; i < entries.size(); ++i)
        if (entries[i].f < entries[b].f) b = i;
    return entries[b];
}

void to_json(json& j, const TraceEntry& e) {
    j = json{{"iteration", e.iteration}, {"raw", e.raw},         {"theta", e.theta}, {"f", e.f},
             {"best_so_far", e.best_so_far}, {"failed", e.failed}, {"record", e.record}};
}

void from_json(const json& j, TraceEntry& e) {
    j.at("iteration").get_to(e.iteration);
    j.at("raw").get_to(e.raw);
    j.at("theta").get_to(e.theta);
    j.at("f").get_to(e.f);
    j.at("best_so_far").get_to(e.best_so_far);
    j.at("failed").get_to(e.failed);
    e.record = j.contains("record") ? j.at("record") : json();
}

void write_trace_jsonl(const std::filesystem::path& file, const SearchTrace& t) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw IoError("cannot write " + file.string());
    out << json{{"method", t.method}, {"seed", t.seed}, {"config", t.config}}.dump() << '\n';
    for (const TraceEntry& e : t.entries) out << json(e).dump() << '\n';
    if (!out) throw IoError("write to " + file.string() + " failed");
}

SearchTrace read_trace_jsonl(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read " + file.string());
    SearchTrace t;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw IoError("malformed line in " + file.string());
        if (header) {
            j.at("method").get_to(t.method);
            j.at("seed").get_to(t.seed);
            t.config = j.value("config", json());
            header = false;
        } else {
            t.entries.push_back(j.get<TraceEntry>());
        }
    }
    if (header) throw IoError(file.string() + " has no header line");
    return t;
}

void write_trace_csv(const std::filesystem::path& file, const SearchTrace& t) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw IoError("cannot write " + file.string());
    out << "iteration,f,best_so_far\n";
    for (const TraceEntry& e : t.entries)
        out << e.iteration << ',' << format_number(e.f) << ',' << format_number(e.best_so_far) << '\n';
    if (!out) throw IoError("write to " + file.string() + " failed");
}

SearchTrace run_search(const Method& method, const Budget& budget, const SearchSpace& space, const EvalFn& eval_fn,
                       std::uint64_t seed, const SearchOptions& options, const std::vector<TraceEntry>& resume,
                       const EntryFn& on_entry) {
    if (method.kind == Method::Kind::baseline) throw ConfigError("baselines are evaluated, not searched");
    if (budget.initial < 1 || budget.iterations < 0) throw ConfigError("search budget must be positive");
    space.validate();
    SearchTrace trace;
    trace.method = method.tag();
    trace.seed = seed;
    const int total = budget.initial + budget.iterations;
    if (static_cast<int>(resume.size()) > total) throw ConfigError("resumed trace is longer than the budget");

    double worst = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    for (int it = 0; it < total; ++it) {
        TraceEntry e;
        if (it < static_cast<int>(resume.size())) {
            e = resume[it];
            if (e.iteration != it) throw ConfigError("resumed trace is out of order");
        } else {
            Eigen::VectorXd u(kDims);
            if (method.kind == Method::Kind::random || it < budget.initial) {
                std::mt19937_64 rng(derive_seed(seed, 1, static_cast<std::uint64_t>(it)));
                std::uniform_real_distribution<double> u01(0.0, 1.0);
                for (int d = 0; d < kDims; ++d) u[d] = u01(rng);
            } else {
                Eigen::MatrixXd X(it, kDims);
                Eigen::VectorXd y(it);
                for (int i = 0; i < it; ++i) {
                    X.row(i) = space.to_unit(trace.entries[i].raw).transpose();
                    y[i] = trace.entries[i].f;
                }
                const GpState g = gp_fit(X, y, options.jitter);
                u = minimize_acquisition(g, method.beta, options.acquisition.n_starts,
                                         derive_seed(seed, 2, static_cast<std::uint64_t>(it)), options.acquisition);
            }
            e.iteration = it;
            e.raw = space.from_unit(u);
            Observation ob = eval_fn(e.raw, it);
            e.theta = ob.theta;
            e.record = std::move(ob.record);
            e.failed = !std::isfinite(ob.f);
            e.f = e.failed ? (std::isfinite(worst) ? 10.0 * worst : options.initial_sentinel) : ob.f;
        }
        if (!e.failed) worst = std::max(worst, e.f);
        best = std::min(best, e.f);
        e.best_so_far = best;
        trace.entries.push_back(e);
        if (on_entry && it >= static_cast<int>(resume.size())) on_entry(trace.entries.back());
    }
    return trace;
}

}  // namespace stochcep::bo
