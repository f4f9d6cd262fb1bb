#include "stochcep/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <thread>

#include <nlohmann/json.hpp>

#include "stochcep/errors.hpp"

namespace stochcep::eval {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int round_half_up(double v, int lo, int hi) {
    if (!std::isfinite(v)) throw ParameterError("hyperparameter is not finite");
    const double r = std::floor(v + 0.5);
    return static_cast<int>(std::clamp(r, static_cast<double>(lo), static_cast<double>(hi)));
}

/// Runs task(i) for i in [0, n) on up to `workers` threads; rethrows the first failure.
template <class Task>
void parallel_for(std::size_t n, int workers, Task task) {
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                task(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(run);
        for (std::thread& t : pool) t.join();
    }
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

[[noreturn]] void fail(const std::string& step, const std::string& what) {
    throw EvaluationError("step '" + step + "' failed: " + what);
}

}  // namespace

rpc::Hyperparameters round_hyperparameters(const RawPoint& raw, const rpc::HyperparameterBounds& bounds) {
    rpc::Hyperparameters h;
    rpc::Weights w{};
    for (int g = 0; g < data::kGroups; ++g) w[g] = std::clamp(raw[g], 0.0, 1.0);
    h.group_weights = rpc::canonicalize_weights(w);
    h.rep_days = round_half_up(raw[5], bounds.rep_days_min, bounds.rep_days_max);
    h.extreme_days = round_half_up(raw[6], bounds.extreme_days_min, bounds.extreme_days_max);
    return h;
}

RawPoint to_raw(const rpc::Hyperparameters& h) {
    RawPoint r{};
    for (int g = 0; g < data::kGroups; ++g) r[g] = h.group_weights[g];
    r[5] = h.rep_days;
    r[6] = h.extreme_days;
    return r;
}

solver::CepSolveSettings default_surrogate_settings() {
    solver::CepSolveSettings s;
    s.gap_tol = 5e-3;
    s.master.node_limit = 10000;
    return s;
}

void to_json(json& j, const EvaluationRecord& r) {
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    j = json{{"theta", r.theta},
             {"investment", r.investment},
             {"invest_cost", num(r.invest_cost)},
             {"per_scenario_op_cost", r.per_scenario_op_cost},
             {"f_value", num(r.f_value)},
             {"surrogate", {{"status", r.surrogate_status},
                            {"gap", num(r.surrogate_gap)},
                            {"objective", num(r.surrogate_objective)}}},
             {"wall_times", {{"cluster", r.wall_times.cluster},
                             {"invest", r.wall_times.invest},
                             {"evaluate", r.wall_times.evaluate}}},
             {"rep_days", r.rep_days},
             {"failed", r.failed},
             {"failure_step", r.failure_step},
             {"failure_message", r.failure_message}};
}

void from_json(const json& j, EvaluationRecord& r) {
    auto num = [](const json& v) {
        return v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
    };
    r = {};
    j.at("theta").get_to(r.theta);
    j.at("investment").get_to(r.investment);
    r.invest_cost = num(j.at("invest_cost"));
    j.at("per_scenario_op_cost").get_to(r.per_scenario_op_cost);
    r.f_value = num(j.at("f_value"));
    const json& s = j.at("surrogate");
    s.at("status").get_to(r.surrogate_status);
    r.surrogate_gap = num(s.at("gap"));
    r.surrogate_objective = num(s.at("objective"));
    const json& t = j.at("wall_times");
    t.at("cluster").get_to(r.wall_times.cluster);
    t.at("invest").get_to(r.wall_times.invest);
    t.at("evaluate").get_to(r.wall_times.evaluate);
    j.at("rep_days").get_to(r.rep_days);
    j.at("failed").get_to(r.failed);
    j.at("failure_step").get_to(r.failure_step);
    j.at("failure_message").get_to(r.failure_message);
}

namespace {

std::map<std::string, double> run_recourse(const cep::SystemTopology& top, const cep::InvestmentDecision& x,
                                           const std::vector<const data::Scenario*>& scenarios,
                                           const EvaluationSettings& settings,
                                           std::vector<cep::OperatingBreakdown>* breakdowns) {
    std::vector<double> cost(scenarios.size(), 0.0);
    if (breakdowns) breakdowns->assign(scenarios.size(), {});
    parallel_for(scenarios.size(), settings.workers, [&](std::size_t i) {
        const cep::RecourseInstance r = cep::build_recourse(top, x, *scenarios[i]);
        const solver::OperationsResult ops = solver::solve_recourse(r, settings.recourse);
        cost[i] = ops.value / r.cost_scale;
        if (breakdowns) (*breakdowns)[i] = cep::operating_breakdown(r, ops.column_totals);
    });
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < scenarios.size(); ++i) out[scenarios[i]->id] = cost[i];
    return out;
}

}  // namespace

std::map<std::string, double> operating_costs(const cep::SystemTopology& top, const cep::InvestmentDecision& x,
                                              const std::vector<const data::Scenario*>& scenarios,
                                              const EvaluationSettings& settings) {
    return run_recourse(top, x, scenarios, settings, nullptr);
}

Evaluator::Evaluator(cep::SystemTopology top, data::SampleSet sample, const data::ScenarioSet& scenarios,
                     std::vector<std::string> validation_ids, EvaluationSettings settings)
    : top_(std::move(top)),
      sample_(std::move(sample)),
      cache_(sample_),
      scenarios_(&scenarios),
      validation_ids_(std::move(validation_ids)),
      settings_(std::move(settings)) {
    if (validation_ids_.empty()) throw EvaluationError("no validation scenarios");
    if (sample_.size() == 0) throw EvaluationError("empty training sample");
    top_.validate();
}

EvaluationRecord Evaluator::evaluate(const rpc::Hyperparameters& theta, std::uint64_t seed) const {
    EvaluationRecord rec;
    rec.theta = theta;

    auto t0 = Clock::now();
    try {
        theta.validate(settings_.bounds);
        rec.rep_days = rpc::run_rpc(theta, sample_, cache_, seed);
    } catch (const Error& e) {
        fail("cluster", e.what());
    }
    rec.wall_times.cluster = seconds_since(t0);

    t0 = Clock::now();
    try {
        const cep::CepInstance inst = cep::build_surrogate(top_, rec.rep_days, sample_);
        const solver::CepSolution sol = solver::solve_cep(inst, settings_.surrogate);
        if (sol.x.empty())
            throw SolverError("surrogate ended with status " + solver::to_string(sol.status));
        rec.surrogate_status = solver::to_string(sol.status);
        rec.surrogate_gap = sol.gap;
        rec.surrogate_objective = sol.objective / inst.cost_scale;
        rec.investment = cep::decode(inst, sol.x);
        rec.invest_cost = cep::investment_cost(top_, rec.investment);
    } catch (const Error& e) {
        fail("invest", e.what());
    }
    rec.wall_times.invest = seconds_since(t0);

    t0 = Clock::now();
    try {
        std::vector<const data::Scenario*> val;
        for (const std::string& id : validation_ids_) val.push_back(&scenarios_->get(id));
        rec.per_scenario_op_cost = operating_costs(top_, rec.investment, val, settings_);
    } catch (const Error& e) {
        fail("evaluate", e.what());
    }
    rec.wall_times.evaluate = seconds_since(t0);

    double sum = 0.0;
    for (const auto& [id, c] : rec.per_scenario_op_cost) sum += c;
    rec.f_value = rec.invest_cost + sum / static_cast<double>(rec.per_scenario_op_cost.size());
    return rec;
}

EvaluationRecord Evaluator::evaluate(const RawPoint& raw, std::uint64_t seed) const {
    return evaluate(round_hyperparameters(raw, settings_.bounds), seed);
}

EvaluationRecord Evaluator::try_evaluate(const RawPoint& raw, std::uint64_t seed) const noexcept {
    try {
        return try_evaluate(round_hyperparameters(raw, settings_.bounds), seed);
    } catch (const std::exception& e) {
        EvaluationRecord rec;
        rec.failed = true;
        rec.f_value = std::numeric_limits<double>::infinity();
        rec.failure_step = "setup";
        rec.failure_message = e.what();
        return rec;
    }
}

EvaluationRecord Evaluator::try_evaluate(const rpc::Hyperparameters& theta, std::uint64_t seed) const noexcept {
    try {
        return evaluate(theta, seed);
    } catch (const std::exception& e) {
        EvaluationRecord rec;
        rec.theta = theta;
        rec.failed = true;
        rec.f_value = std::numeric_limits<double>::infinity();
        rec.failure_message = e.what();
        const std::string msg = e.what();
        for (const char* step : {"cluster", "invest", "evaluate"})
            if (msg.find(std::string("step '") + step + "'") != std::string::npos) rec.failure_step = step;
        if (rec.failure_step.empty()) rec.failure_step = "setup";
        return rec;
    }
}

EvaluationRecord evaluate_hyperparameters(const rpc::Hyperparameters& theta, const data::SampleSet& sample,
                                          const cep::SystemTopology& top, const data::ScenarioSet& scenarios,
                                          const std::vector<std::string>& validation_ids, std::uint64_t seed,
                                          const EvaluationSettings& settings) {
    return Evaluator(top, sample, scenarios, validation_ids, settings).evaluate(theta, seed);
}

TestEvaluation evaluate_on_test(const cep::InvestmentDecision& x, double invest_cost,
                                const cep::SystemTopology& top, const std::vector<const data::Scenario*>& test,
                                const EvaluationSettings& settings) {
    if (test.empty()) throw EvaluationError("no test scenarios");
    TestEvaluation out;
    std::vector<cep::OperatingBreakdown> parts;
    try {
        out.per_scenario_op_cost = run_recourse(top, x, test, settings, &parts);
    } catch (const Error& e) {
        fail("evaluate", e.what());
    }
    const double n = static_cast<double>(parts.size());
    cep::OperatingBreakdown& m = out.mean_breakdown;
    for (const cep::OperatingBreakdown& b : parts) {
        m.gas_fuel += b.gas_fuel / n;
        m.variable_om += b.variable_om / n;
        m.power_shedding += b.power_shedding / n;
        m.gas_shedding += b.gas_shedding / n;
        m.network += b.network / n;
        m.shed_mwh += b.shed_mwh / n;
        m.gas_shed_mmbtu += b.gas_shed_mmbtu / n;
        m.vre_mwh += b.vre_mwh / n;
        m.gas_mwh += b.gas_mwh / n;
        m.ccs_mwh += b.ccs_mwh / n;
        m.gas_import_mmbtu += b.gas_import_mmbtu / n;
    }
    double sum = 0.0;
    for (const auto& [id, c] : out.per_scenario_op_cost) sum += c;
    out.mean_op_cost = sum / static_cast<double>(out.per_scenario_op_cost.size());
    out.total_cost = invest_cost + out.mean_op_cost;
    return out;
}

void append_record(const std::filesystem::path& log, const json& entry) {
    if (log.has_parent_path()) std::filesystem::create_directories(log.parent_path());
    std::ofstream out(log, std::ios::app);
    if (!out) throw IoError("cannot append to " + log.string());
    out << entry.dump() << '\n';
    out.flush();
    if (!out) throw IoError("write to " + log.string() + " failed");
}

std::vector<json> read_log(const std::filesystem::path& log) {
    std::vector<json> out;
    std::ifstream in(log);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        // A torn final line from an interrupted run is dropped.
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) break;
        out.push_back(std::move(j));
    }
    return out;
}

}  // namespace stochcep::eval
