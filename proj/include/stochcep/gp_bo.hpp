#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stochcep/evaluate.hpp"

namespace stochcep::bo {

using eval::RawPoint;
inline constexpr int kDims = 7;

/// Mixes a base seed with stream tags (splitmix64); used for every derived RNG.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Matern-5/2 with unit length scale: (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r).
[[nodiscard]] double matern52_r(double r);
[[nodiscard]] double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Box over the raw hyperparameters: weights in [0,1], rep days and extreme days.
struct SearchSpace {
    std::array<double, kDims> lower{0, 0, 0, 0, 0, 5, 0};
    std::array<double, kDims> upper{1, 1, 1, 1, 1, 80, 10};

    [[nodiscard]] static SearchSpace from_bounds(const rpc::HyperparameterBounds& b);
    void validate() const;
    [[nodiscard]] Eigen::VectorXd to_unit(const RawPoint& raw) const;
    [[nodiscard]] RawPoint from_unit(const Eigen::VectorXd& u) const;
    [[nodiscard]] rpc::Hyperparameters canonicalize(const RawPoint& raw) const;
    [[nodiscard]] rpc::HyperparameterBounds bounds() const;
};

struct GpState {
    Eigen::MatrixXd inputs;  // one row per observation, unit-box coordinates
    Eigen::VectorXd outputs;  // raw
    Eigen::VectorXd standardized;
    double mean = 0.0;
    double scale = 1.0;
    double jitter = 0.0;  // jitter that made the factorization succeed
    Eigen::MatrixXd chol_l;  // lower factor of K + jitter I
    Eigen::VectorXd alpha;   // (K + jitter I)^-1 standardized

    [[nodiscard]] int size() const { return static_cast<int>(outputs.size()); }
};

/// Standardizes outputs (unless told not to) and factorizes the kernel
/// matrix, escalating the jitter tenfold up to 1e-3 before giving up with
/// FitError. A zero jitter escalates to 1e-10 first.
[[nodiscard]] GpState gp_fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& outputs, double jitter = 1e-6,
                             bool standardize = true);

struct Posterior {
    double mean = 0.0;      // standardized units
    double variance = 0.0;  // standardized units, >= 0
};

[[nodiscard]] Posterior gp_posterior(const GpState& g, const Eigen::VectorXd& theta);
/// Posterior mean in the units of the observed outputs.
[[nodiscard]] double destandardize(const GpState& g, double standardized_mean);

/// mu - beta * sigma^2, or mu - beta * sigma when use_sigma is set.
[[nodiscard]] double lcb(const GpState& g, const Eigen::VectorXd& theta, double beta, bool use_sigma = false);

struct AcquisitionOptions {
    int n_starts = 16;
    int max_steps = 100;
    double fd_step = 1e-5;
    bool use_sigma = false;
    int workers = 1;
};

/// Multi-start projected gradient descent in the unit box, from Sobol starts
/// (shifted by the seed) plus the best observed point. Returns a unit-box point.
[[nodiscard]] Eigen::VectorXd minimize_acquisition(const GpState& g, double beta, int n_starts, std::uint64_t seed,
                                                   const AcquisitionOptions& options = {});

struct Method {
    enum class Kind { bo, random, baseline };
    Kind kind = Kind::bo;
    double beta = 10.0;

    [[nodiscard]] std::string tag() const;  // "BO_10", "random", "baseline"
    [[nodiscard]] static Method parse(const std::string& tag);
};

struct Budget {
    int initial = 20;     // N0
    int iterations = 80;  // after the initial design
};

struct TraceEntry {
    int iteration = 0;
    RawPoint raw{};
    rpc::Hyperparameters theta;
    double f = 0.0;  // sentinel substituted on failure
    double best_so_far = 0.0;
    bool failed = false;
    nlohmann::json record;  // evaluation bookkeeping, opaque to the search
};

struct SearchTrace {
    std::string method;
    std::uint64_t seed = 0;
    nlohmann::json config;
    std::vector<TraceEntry> entries;

    [[nodiscard]] const TraceEntry& best() const;
};

void to_json(nlohmann::json& j, const TraceEntry& e);
void from_json(const nlohmann::json& j, TraceEntry& e);

/// One header line followed by one line per entry.
void write_trace_jsonl(const std::filesystem::path& file, const SearchTrace& t);
[[nodiscard]] SearchTrace read_trace_jsonl(const std::filesystem::path& file);
/// iteration,f,best_so_far
void write_trace_csv(const std::filesystem::path& file, const SearchTrace& t);

/// Result of one evaluation as seen by the search: only the cost drives decisions.
struct Observation {
    double f = 0.0;  // non-finite marks a failure
    rpc::Hyperparameters theta;
    nlohmann::json record;
};

using EvalFn = std::function<Observation(const RawPoint&, int iteration)>;
/// Called after each new entry; lets the caller persist progress.
using EntryFn = std::function<void(const TraceEntry&)>;

struct SearchOptions {
    AcquisitionOptions acquisition;
    double jitter = 1e-6;
    /// Sentinel before any finite evaluation; afterwards 10x the worst finite cost.
    double initial_sentinel = 1e13;
};

/// BO: N0 uniform draws, then fit -> minimize LCB -> evaluate per iteration.
/// Random: N0 + iterations uniform draws. Entries in `resume` are replayed
/// instead of re-evaluated; every random draw is derived from (seed, iteration)
/// so a resumed search continues exactly as an uninterrupted one.
[[nodiscard]] SearchTrace run_search(const Method& method, const Budget& budget, const SearchSpace& space,
                                     const EvalFn& eval_fn, std::uint64_t seed, const SearchOptions& options = {},
                                     const std::vector<TraceEntry>& resume = {}, const EntryFn& on_entry = {});

}  // namespace stochcep::bo
