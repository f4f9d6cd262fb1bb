#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stochcep/evaluate.hpp"
#include "stochcep/gp_bo.hpp"

namespace stochcep::harness {

struct MethodConfig {
    bo::Method method;
    bo::Budget budget;
};

struct SweepConfig {
    std::vector<int> rep_days{5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75, 80};
    rpc::Weights weights{0.2, 0.2, 0.2, 0.2, 0.2};
    int extreme_days = 0;
    /// Training scenario to cluster; the first training scenario when empty.
    std::string training_scenario;
};

/// Which set picks each method's configuration across trials. `test`
/// reproduces a lowest-test-cost reporting convention and evaluates every
/// trial's best point on the test set; it leaks test information.
enum class Selection { validation, test };

struct ExperimentConfig {
    std::uint64_t seed = 0;
    /// Data source: a directory of scenario CSVs, or a synthetic spec.
    std::filesystem::path data_directory;
    std::optional<data::SyntheticSpec> synthetic;
    std::optional<std::uint64_t> synthetic_seed;
    std::array<int, 3> split{2, 3, 2};
    std::optional<std::uint64_t> split_seed;
    /// Topology file; the default topology for the data's node counts when empty.
    std::filesystem::path topology;
    bo::SearchSpace space;
    std::vector<MethodConfig> methods;
    int trials = 4;
    eval::EvaluationSettings evaluation;
    bo::SearchOptions search;
    Selection selection = Selection::validation;
    SweepConfig sweep;
    std::filesystem::path output = "results";
    int workers = 1;

    /// Throws ConfigError on the first problem.
    void validate() const;
};

/// Relative paths resolve against `base`.
[[nodiscard]] ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& file);
[[nodiscard]] nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Seeds of every random component, derived from the experiment seed.
struct SeedPlan {
    std::uint64_t synthetic = 0;
    std::uint64_t split = 0;
    std::uint64_t clustering = 0;  // one clustering seed for every evaluation

    [[nodiscard]] static SeedPlan from(const ExperimentConfig& cfg);
    /// Search seed of one trial; shared by all methods so that they start from
    /// the same initial design.
    [[nodiscard]] std::uint64_t trial(int t) const;
    std::uint64_t base = 0;
};

/// Loaded data, split, training sample and evaluator of one experiment. The
/// scenario set carries an access tracer whose phase labels are "sample"
/// (building the training sample), "search" (validation evaluations) and
/// "test" (final evaluations).
class Experiment {
public:
    explicit Experiment(ExperimentConfig cfg);

    [[nodiscard]] const ExperimentConfig& config() const { return cfg_; }
    [[nodiscard]] const SeedPlan& seeds() const { return seeds_; }
    [[nodiscard]] const data::ScenarioSet& scenarios() const { return scenarios_; }
    [[nodiscard]] const data::ScenarioSplit& split() const { return split_; }
    [[nodiscard]] const cep::SystemTopology& topology() const { return top_; }
    [[nodiscard]] const eval::Evaluator& evaluator() const { return *evaluator_; }
    [[nodiscard]] const std::shared_ptr<data::AccessTracer>& tracer() const { return tracer_; }

    /// Validation evaluation through a cache keyed by the rounded hyperparameters.
    [[nodiscard]] eval::EvaluationRecord evaluate(const rpc::Hyperparameters& theta) const;
    /// As evaluate, with failures returned as records.
    [[nodiscard]] eval::EvaluationRecord try_evaluate(const rpc::Hyperparameters& theta) const;
    /// Seeds the cache, e.g. from run logs.
    void remember(const eval::EvaluationRecord& record) const;
    /// Loads earlier evaluations from `file` into the cache and appends new ones to it.
    void log_evaluations(const std::filesystem::path& file) const;
    [[nodiscard]] eval::TestEvaluation evaluate_test(const eval::EvaluationRecord& record) const;

private:
    ExperimentConfig cfg_;
    SeedPlan seeds_;
    std::shared_ptr<data::AccessTracer> tracer_;
    data::ScenarioSet scenarios_;
    data::ScenarioSplit split_;
    cep::SystemTopology top_;
    std::unique_ptr<eval::Evaluator> evaluator_;
    struct Cache;
    std::shared_ptr<Cache> cache_;
};

/// Equal weights and the largest rep-day count; Base.1 adds no extreme days,
/// Base.2 the largest extreme-day count. Default bounds give (0.2 x 5, 80, 0)
/// and (0.2 x 5, 80, 10).
[[nodiscard]] rpc::Hyperparameters base1(const rpc::HyperparameterBounds& b = {});
[[nodiscard]] rpc::Hyperparameters base2(const rpc::HyperparameterBounds& b = {});

struct BaselineResult {
    std::string name;  // "Base.1" or "Base.2"
    eval::EvaluationRecord record;
    eval::TestEvaluation test;
};

/// Validation and test evaluation of both baselines.
[[nodiscard]] std::vector<BaselineResult> run_baselines(const Experiment& ex);

struct TrialResult {
    std::string method;
    int trial = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    bo::SearchTrace trace;
};

struct Histogram {
    std::string group;
    std::vector<double> edges;             // bins + 1
    std::vector<double> sample_fraction;   // share of sample days per bin
    std::vector<double> repday_fraction;   // share of rep-day weight per bin
};

struct MethodResult {
    std::string method;  // tag, or the baseline name
    bool baseline = false;
    bool failed = false;  // every trial failed
    int best_trial = -1;
    int trials_ok = 0;
    int trials_failed = 0;
    eval::EvaluationRecord record;  // validation record of the selected point
    eval::TestEvaluation test;
    double f_val = 0.0;
    double f_test = 0.0;
    double improvement_val = 0.0;  // percent against the best baseline
    double improvement_test = 0.0;
    cep::CapacitySummary capacity;
    std::vector<Histogram> distributions;
};

struct ExperimentReport {
    std::vector<MethodResult> methods;  // baselines first
    std::vector<TrialResult> trials;
    double best_baseline_val = 0.0;
    double best_baseline_test = 0.0;
    Selection selection = Selection::validation;
};

struct RunHooks {
    /// Called after each newly evaluated search entry (not replayed ones).
    std::function<void(const std::string& method, int trial, const bo::TraceEntry&)> on_entry;
};

/// Baselines, every method x trial search, selection and one test evaluation
/// per method. Progress is logged under <output>/runs and a rerun resumes
/// from those logs.
[[nodiscard]] ExperimentReport run_experiment(const Experiment& ex, const RunHooks& hooks = {});
[[nodiscard]] ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks = {});

/// Runs the searches of one method (all trials when `trial` is empty).
[[nodiscard]] std::vector<TrialResult> run_searches(const Experiment& ex, const MethodConfig& m,
                                                    std::optional<int> trial = {}, const RunHooks& hooks = {});

/// (best - method) / best * 100.
[[nodiscard]] double improvement_percent(double best_baseline, double method);

/// Histograms of the daily mean of each parameter group: the training sample
/// against the weighted representative days.
[[nodiscard]] std::vector<Histogram> distribution_histograms(const data::SampleSet& sample,
                                                             const rpc::RepresentativeDaySet& rep, int bins = 20);

struct SweepRow {
    int rep_days = 0;
    double in_sample_cost = 0.0;      // surrogate objective, $
    double out_of_sample_cost = 0.0;  // investment + mean recourse cost on held-out scenarios, $
    bool failed = false;
    std::string error;
};

/// Clusters one training scenario for each rep-day count, solves the surrogate
/// and evaluates the investment on the validation scenarios.
[[nodiscard]] std::vector<SweepRow> sweep_rep_days(const Experiment& ex, const SweepConfig& sweep);
void write_sweep_csv(const std::filesystem::path& file, const std::vector<SweepRow>& rows);
/// True when some out-of-sample cost rises as the rep-day count grows.
[[nodiscard]] bool non_monotone(const std::vector<SweepRow>& rows);

/// Writes summary.csv, summary.txt, trials.csv, investments.csv,
/// convergence/<method>_trial<k>.csv and distributions/<method>_<group>.csv.
/// Contents depend only on the report, never on wall-clock times.
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir);

/// Fails with IoError when `dir` cannot be created or written.
void ensure_writable(const std::filesystem::path& dir);

}  // namespace stochcep::harness
