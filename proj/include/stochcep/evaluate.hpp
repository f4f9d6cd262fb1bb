#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stochcep/cep_model.hpp"
#include "stochcep/decomposition.hpp"
#include "stochcep/rpc.hpp"
#include "stochcep/scenario_data.hpp"

namespace stochcep::eval {

/// Search-space point before rounding: five raw weights, rep days, extreme days.
using RawPoint = std::array<double, 7>;

/// Weights divided by their sum, day counts rounded half-up and clamped to the bounds.
[[nodiscard]] rpc::Hyperparameters round_hyperparameters(const RawPoint& raw,
                                                         const rpc::HyperparameterBounds& bounds = {});
[[nodiscard]] RawPoint to_raw(const rpc::Hyperparameters& h);

/// Surrogate defaults during search: 0.5% gap and 10^4 master nodes.
[[nodiscard]] solver::CepSolveSettings default_surrogate_settings();

struct EvaluationSettings {
    solver::CepSolveSettings surrogate = default_surrogate_settings();
    solver::OperationsSettings recourse;
    rpc::HyperparameterBounds bounds;
    /// Threads for the per-scenario recourse solves.
    int workers = 1;
};

struct StepTimes {
    double cluster = 0.0;  // seconds
    double invest = 0.0;
    double evaluate = 0.0;
};

struct EvaluationRecord {
    rpc::Hyperparameters theta;  // after rounding
    cep::InvestmentDecision investment;
    double invest_cost = 0.0;  // $
    std::map<std::string, double> per_scenario_op_cost;  // $
    double f_value = 0.0;  // invest_cost + mean operating cost
    /// "optimal", or "feasible" when the surrogate stopped on a limit.
    std::string surrogate_status;
    double surrogate_gap = 0.0;
    double surrogate_objective = 0.0;  // $
    StepTimes wall_times;
    rpc::RepresentativeDaySet rep_days;
    bool failed = false;
    std::string failure_step;  // cluster, invest or evaluate
    std::string failure_message;
};

void to_json(nlohmann::json& j, const EvaluationRecord& r);
void from_json(const nlohmann::json& j, EvaluationRecord& r);

struct TestEvaluation {
    std::map<std::string, double> per_scenario_op_cost;  // $
    double mean_op_cost = 0.0;
    double total_cost = 0.0;  // invest_cost + mean_op_cost
    cep::OperatingBreakdown mean_breakdown;  // averaged over the scenarios
};

/// Operating cost ($) of one decision on each scenario; solves run on `workers` threads.
[[nodiscard]] std::map<std::string, double> operating_costs(const cep::SystemTopology& top,
                                                           const cep::InvestmentDecision& x,
                                                           const std::vector<const data::Scenario*>& scenarios,
                                                           const EvaluationSettings& settings);

/// Cluster, invest and evaluate for one hyperparameter vector. The distance
/// cache of the training sample is built once and reused by every call.
class Evaluator {
public:
    /// Validation scenarios are fetched from `scenarios` on every evaluation so
    /// that an attached access tracer sees each read.
    Evaluator(cep::SystemTopology top, data::SampleSet sample, const data::ScenarioSet& scenarios,
              std::vector<std::string> validation_ids, EvaluationSettings settings = {});

    /// Throws EvaluationError naming the failing step.
    [[nodiscard]] EvaluationRecord evaluate(const rpc::Hyperparameters& theta, std::uint64_t seed) const;
    [[nodiscard]] EvaluationRecord evaluate(const RawPoint& raw, std::uint64_t seed) const;
    /// As evaluate, but failures come back as a record with failed = true and
    /// an infinite f_value.
    [[nodiscard]] EvaluationRecord try_evaluate(const RawPoint& raw, std::uint64_t seed) const noexcept;
    [[nodiscard]] EvaluationRecord try_evaluate(const rpc::Hyperparameters& theta, std::uint64_t seed) const noexcept;

    [[nodiscard]] const data::SampleSet& sample() const { return sample_; }
    [[nodiscard]] const cep::SystemTopology& topology() const { return top_; }
    [[nodiscard]] const EvaluationSettings& settings() const { return settings_; }

private:
    cep::SystemTopology top_;
    data::SampleSet sample_;
    rpc::DistanceCache cache_;
    const data::ScenarioSet* scenarios_;
    std::vector<std::string> validation_ids_;
    EvaluationSettings settings_;
};

[[nodiscard]] EvaluationRecord evaluate_hyperparameters(const rpc::Hyperparameters& theta,
                                                        const data::SampleSet& sample,
                                                        const cep::SystemTopology& top,
                                                        const data::ScenarioSet& scenarios,
                                                        const std::vector<std::string>& validation_ids,
                                                        std::uint64_t seed,
                                                        const EvaluationSettings& settings = {});

[[nodiscard]] TestEvaluation evaluate_on_test(const cep::InvestmentDecision& x, double invest_cost,
                                              const cep::SystemTopology& top,
                                              const std::vector<const data::Scenario*>& test,
                                              const EvaluationSettings& settings = {});

/// One JSON object per line.
void append_record(const std::filesystem::path& log, const nlohmann::json& entry);
[[nodiscard]] std::vector<nlohmann::json> read_log(const std::filesystem::path& log);

}  // namespace stochcep::eval
