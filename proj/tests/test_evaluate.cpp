#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "stochcep/branch_and_bound.hpp"
#include "stochcep/errors.hpp"
#include "stochcep/evaluate.hpp"
#include "test_support.hpp"

using namespace stochcep;
using namespace stochcep::eval;
using nlohmann::json;

namespace {

data::ScenarioSet tiny_set(int scenarios, int days, int hours, std::uint64_t seed) {
    data::SyntheticSpec spec;
    spec.scenarios = scenarios;
    spec.days = days;
    spec.hours_per_day = hours;
    spec.power_nodes = 2;
    spec.gas_nodes = 2;
    return data::generate_synthetic(spec, seed);
}

EvaluationSettings tiny_settings() {
    EvaluationSettings s;
    s.bounds = {1, 4, 0, 2};
    s.surrogate.gap_tol = 1e-8;
    s.surrogate.master.gap_tol = 1e-10;
    return s;
}

/// Extensive form over the given scenarios solved as one MILP, in dollars.
double extensive_optimum(const cep::SystemTopology& top, const std::vector<const data::Scenario*>& scenarios) {
    const cep::CepInstance inst = cep::build_full_cep(top, scenarios);
    solver::MilpSettings ms;
    ms.gap_tol = 1e-9;
    const solver::MilpSolution m = solver::solve_milp(cep::flatten(inst).problem, ms);
    REQUIRE(m.status == solver::MilpStatus::optimal);
    return m.objective / top.cost_scale;
}

}  // namespace

TEST_CASE("integer hyperparameters round half-up and clamp") {
    const rpc::HyperparameterBounds b;
    CHECK(round_hyperparameters({1, 1, 1, 1, 1, 5.5, 0.5}, b).rep_days == 6);
    CHECK(round_hyperparameters({1, 1, 1, 1, 1, 5.5, 0.5}, b).extreme_days == 1);
    CHECK(round_hyperparameters({1, 1, 1, 1, 1, 5.49, 0.49}, b).rep_days == 5);
    CHECK(round_hyperparameters({1, 1, 1, 1, 1, 5.49, 0.49}, b).extreme_days == 0);
    CHECK(round_hyperparameters({1, 1, 1, 1, 1, 80.6, 10.5}, b).rep_days == 80);
    CHECK(round_hyperparameters({1, 1, 1, 1, 1, 80.6, 10.5}, b).extreme_days == 10);
    CHECK(round_hyperparameters({1, 1, 1, 1, 1, 4.2, -0.3}, b).rep_days == 5);
    CHECK(round_hyperparameters({1, 1, 1, 1, 1, 4.2, -0.3}, b).extreme_days == 0);

    const auto h = round_hyperparameters({1, 1, 0, 0, 0, 10, 0}, b);
    CHECK(h.group_weights == rpc::Weights{0.5, 0.5, 0.0, 0.0, 0.0});
    const auto u = round_hyperparameters({0, 0, 0, 0, 0, 10, 0}, b);
    CHECK(u.group_weights == rpc::Weights{0.2, 0.2, 0.2, 0.2, 0.2});
    CHECK_THROWS_AS((void)round_hyperparameters({1, 1, 1, 1, 1, std::nan(""), 0}, b), ParameterError);

    rpc::Hyperparameters base;
    const RawPoint raw = to_raw(base);
    CHECK(raw[5] == 80.0);
    CHECK(round_hyperparameters(raw, b).rep_days == 80);
}

TEST_CASE("validation cost bounds the extensive-form optimum from above") {
    const cep::SystemTopology top = cep::default_topology(2, 2);
    const auto set = tiny_set(3, 4, 4, 31);
    const auto ids = set.ids();
    const std::vector<std::string> val{ids[1], ids[2]};
    const data::SampleSet sample = data::build_sample_set(set.select({ids[0]}));
    const double oracle = extensive_optimum(top, set.select(val));

    const Evaluator ev(top, sample, set, val, tiny_settings());
    const std::vector<RawPoint> grid{{0.2, 0.2, 0.2, 0.2, 0.2, 1, 0},
                                     {1.0, 0.0, 0.0, 0.0, 0.0, 2, 0},
                                     {0.0, 1.0, 0.5, 0.0, 0.0, 2, 1},
                                     {0.3, 0.1, 0.9, 0.4, 0.2, 3, 0},
                                     {0.5, 0.5, 0.0, 1.0, 1.0, 4, 0}};
    for (const RawPoint& p : grid) {
        const EvaluationRecord r = ev.evaluate(p, 3);
        CHECK(r.f_value - oracle >= -1e-6 * oracle);
    }
}

TEST_CASE("training scenario reused as validation reproduces its deterministic optimum") {
    const cep::SystemTopology top = cep::default_topology(2, 2);
    const auto set = tiny_set(1, 4, 4, 12);
    const auto ids = set.ids();
    const data::SampleSet sample = data::build_sample_set(set.select(ids));
    const Evaluator ev(top, sample, set, ids, tiny_settings());
    rpc::Hyperparameters h;
    h.rep_days = 4;
    h.extreme_days = 0;
    const EvaluationRecord r = ev.evaluate(h, 1);
    for (double w : r.rep_days.weights) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
    const double oracle = extensive_optimum(top, set.select(ids));
    CHECK(r.f_value == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(r.surrogate_objective == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("record bookkeeping and test-set evaluation") {
    const cep::SystemTopology top = cep::default_topology(2, 2);
    const auto set = tiny_set(7, 3, 4, 5);
    const auto ids = set.ids();
    const std::vector<std::string> val{ids[1], ids[2]};
    const std::vector<std::string> test{ids[2], ids[3], ids[4], ids[5], ids[6]};
    const data::SampleSet sample = data::build_sample_set(set.select({ids[0]}));
    EvaluationSettings s = tiny_settings();
    s.bounds = {1, 3, 0, 1};
    const Evaluator ev(top, sample, set, val, s);
    rpc::Hyperparameters h;
    h.rep_days = 2;
    h.extreme_days = 0;
    const EvaluationRecord r = ev.evaluate(h, 4);
    REQUIRE(r.per_scenario_op_cost.size() == 2);
    CHECK(r.surrogate_status == "optimal");
    CHECK_FALSE(r.failed);
    CHECK(r.invest_cost >= 0.0);
    for (const auto& [id, c] : r.per_scenario_op_cost) CHECK(c >= 0.0);
    const double mean = (r.per_scenario_op_cost.at(ids[1]) + r.per_scenario_op_cost.at(ids[2])) / 2.0;
    CHECK(std::abs(r.f_value - (r.invest_cost + mean)) <= 1e-9 * r.f_value);
    CHECK(r.invest_cost == doctest::Approx(cep::investment_cost(top, r.investment)).epsilon(1e-12));
    CHECK(r.rep_days.size() == 2);

    // Same scenarios as validation: identical costs.
    const TestEvaluation same = evaluate_on_test(r.investment, r.invest_cost, top, set.select(val), s);
    CHECK(same.total_cost == doctest::Approx(r.f_value).epsilon(1e-12));
    for (const auto& [id, c] : same.per_scenario_op_cost) CHECK(c == r.per_scenario_op_cost.at(id));

    const TestEvaluation t = evaluate_on_test(r.investment, r.invest_cost, top, set.select(test), s);
    REQUIRE(t.per_scenario_op_cost.size() == 5);
    double sum = 0.0;
    for (const auto& [id, c] : t.per_scenario_op_cost) sum += c;
    CHECK(std::abs(t.mean_op_cost - sum / 5.0) <= 1e-12 * t.mean_op_cost);
    CHECK(t.total_cost == r.invest_cost + t.mean_op_cost);
    CHECK_THROWS_AS((void)evaluate_on_test(r.investment, r.invest_cost, top, {}, s), EvaluationError);
}

TEST_CASE("zero build with full retirement costs the shedding penalty on every load") {
    cep::SystemTopology top = cep::default_topology(2, 1);
    for (cep::PowerNode& n : top.power_nodes) n.existing = {0, 0, 0, n.existing[3], 0};
    cep::InvestmentDecision x = cep::InvestmentDecision::zero(top);
    for (std::size_t n = 0; n < 2; ++n) x.units_retired[n] = top.power_nodes[n].existing[3];
    data::SyntheticSpec spec;
    spec.scenarios = 2;
    spec.days = 3;
    spec.hours_per_day = 6;
    spec.power_nodes = 2;
    spec.gas_nodes = 1;
    const auto set = data::generate_synthetic(spec, 8);
    const double invest = cep::investment_cost(top, x);
    const TestEvaluation t = evaluate_on_test(x, invest, top, set.select(set.ids()));
    for (const std::string& id : set.ids()) {
        const data::Scenario& s = set.get(id);
        const double expected = (365.0 / 3.0) * (top.power_shed_penalty * 4.0 * s.power_load.sum() +
                                                 top.gas_nodes[0].import_cost * s.gas_load.sum());
        CHECK(t.per_scenario_op_cost.at(id) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("parallel recourse solves equal serial ones") {
    const cep::SystemTopology top = cep::default_topology(2, 2);
    const auto set = tiny_set(6, 3, 4, 14);
    cep::InvestmentDecision x = cep::InvestmentDecision::zero(top);
    x.units_built[0][1] = 4;
    x.units_built[1][0] = 6;
    x.storage_power[0] = 150.0;
    x.storage_energy[0] = 600.0;
    EvaluationSettings serial;
    EvaluationSettings parallel;
    parallel.workers = 4;
    const auto a = operating_costs(top, x, set.select(set.ids()), serial);
    const auto b = operating_costs(top, x, set.select(set.ids()), parallel);
    CHECK(a == b);
}

TEST_CASE("failures name their step and become sentinel records") {
    const cep::SystemTopology top = cep::default_topology(2, 2);
    const auto set = tiny_set(2, 3, 4, 2);
    const auto ids = set.ids();
    const data::SampleSet sample = data::build_sample_set(set.select({ids[0]}));
    EvaluationSettings s;
    s.bounds = {1, 10, 0, 5};
    const Evaluator ev(top, sample, set, {ids[1]}, s);
    rpc::Hyperparameters h;
    h.rep_days = 8;  // more medoids than the three training days
    h.extreme_days = 0;
    try {
        (void)ev.evaluate(h, 1);
        FAIL("expected an evaluation error");
    } catch (const EvaluationError& e) {
        CHECK(std::string(e.what()).find("cluster") != std::string::npos);
    }
    const EvaluationRecord r = ev.try_evaluate(RawPoint{1, 1, 1, 1, 1, 8, 0}, 1);
    CHECK(r.failed);
    CHECK(r.failure_step == "cluster");
    CHECK(std::isinf(r.f_value));
    CHECK(r.theta.rep_days == 8);

    CHECK_THROWS_AS(Evaluator(top, sample, set, {}, s), EvaluationError);
}

TEST_CASE("records round trip through the JSON-lines log") {
    const cep::SystemTopology top = cep::default_topology(2, 2);
    const auto set = tiny_set(2, 3, 4, 6);
    const auto ids = set.ids();
    const data::SampleSet sample = data::build_sample_set(set.select({ids[0]}));
    EvaluationSettings s;
    s.bounds = {1, 3, 0, 1};
    const Evaluator ev(top, sample, set, {ids[1]}, s);
    const EvaluationRecord good = ev.try_evaluate(RawPoint{0.1, 0.9, 0.3, 0.3, 0.3, 2, 0}, 9);
    const EvaluationRecord bad = ev.try_evaluate(RawPoint{0.1, 0.9, 0.3, 0.3, 0.3, 3, 1}, 9);
    REQUIRE_FALSE(good.failed);
    REQUIRE(bad.failed);

    const auto dir = testing_support::scratch_dir("evaluate_log");
    const auto log = dir / "runs" / "log.jsonl";
    append_record(log, json(good));
    append_record(log, json(bad));
    std::ofstream(log, std::ios::app) << "{\"theta\": {\"wei";
    const std::vector<json> back = read_log(log);
    REQUIRE(back.size() == 2);
    const EvaluationRecord g2 = back[0].get<EvaluationRecord>();
    const EvaluationRecord b2 = back[1].get<EvaluationRecord>();
    CHECK(json(g2) == json(good));
    CHECK(g2.f_value == good.f_value);
    CHECK(std::isinf(b2.f_value));
    CHECK(b2.failure_step == bad.failure_step);
    CHECK(read_log(dir / "absent.jsonl").empty());
}
