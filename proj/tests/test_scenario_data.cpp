#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "stochcep/errors.hpp"
#include "stochcep/scenario_data.hpp"
#include "test_support.hpp"

using namespace stochcep;
using namespace stochcep::data;
using testing_support::random_scenario;
using testing_support::scratch_dir;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

SyntheticSpec small_spec(int scenarios, int days) {
    SyntheticSpec spec;
    spec.scenarios = scenarios;
    spec.days = days;
    spec.hours_per_day = 6;
    return spec;
}

}  // namespace

TEST_CASE("generate_synthetic is deterministic and satisfies invariants") {
    const SyntheticSpec spec = small_spec(2, 365);
    const ScenarioSet a = generate_synthetic(spec, 1);
    const ScenarioSet b = generate_synthetic(spec, 1);
    REQUIRE(a.size() == 2);
    for (const std::string& id : a.ids()) {
        const Scenario& x = a.get(id);
        const Scenario& y = b.get(id);
        CHECK(x.power_load == y.power_load);
        CHECK(x.gas_load == y.gas_load);
        CHECK(x.solar_cf == y.solar_cf);
        CHECK(x.onshore_cf == y.onshore_cf);
        CHECK(x.offshore_cf == y.offshore_cf);
        CHECK_NOTHROW(x.validate());
        CHECK(x.power_nodes() == 3);
        CHECK(x.gas_nodes() == 4);
        CHECK(x.days == 365);
    }
    const ScenarioSet c = generate_synthetic(spec, 2);
    CHECK(c.get(c.ids()[0]).power_load != a.get(a.ids()[0]).power_load);
}

TEST_CASE("synthetic solar is zero at night") {
    SyntheticSpec spec = small_spec(1, 30);
    spec.hours_per_day = 24;
    const ScenarioSet s = generate_synthetic(spec, 3);
    const Scenario& sc = s.get(s.ids()[0]);
    for (int d = 0; d < sc.days; ++d)
        for (int h : {0, 1, 2, 3, 22, 23})
            for (int n = 0; n < sc.power_nodes(); ++n) CHECK(sc.solar_cf(n, d * 24 + h) == 0.0);
}

TEST_CASE("synthetic correlation structure follows the targets") {
    SyntheticSpec spec = small_spec(1, 365);
    spec.corr_onshore_offshore = 0.8;
    const ScenarioSet s = generate_synthetic(spec, 1);
    const Scenario& sc = s.get(s.ids()[0]);
    std::vector<double> power, gas, solar, on, off;
    for (int d = 0; d < sc.days; ++d) {
        const DayData day = sc.day(d);
        power.push_back(day.power_load.mean());
        gas.push_back(day.gas_load.mean());
        solar.push_back(day.solar_cf.mean());
        on.push_back(day.onshore_cf.mean());
        off.push_back(day.offshore_cf.mean());
    }
    const double r_wind = pearson(on, off);
    CHECK(r_wind >= 0.6);
    CHECK(r_wind <= 0.95);
    CHECK(pearson(power, gas) > 0.0);
    CHECK(pearson(gas, solar) < 0.0);
}

TEST_CASE("synthetic spec validation") {
    SyntheticSpec spec = small_spec(1, 0);
    CHECK_THROWS_AS((void)generate_synthetic(spec, 1), SpecError);
    spec = small_spec(0, 10);
    CHECK_THROWS_AS((void)generate_synthetic(spec, 1), SpecError);
    spec = small_spec(1, 10);
    spec.hours_per_day = 5;
    CHECK_THROWS_AS((void)generate_synthetic(spec, 1), SpecError);

    nlohmann::json j = small_spec(3, 12);
    const SyntheticSpec back = j.get<SyntheticSpec>();
    CHECK(back.scenarios == 3);
    CHECK(back.days == 12);
    j["bogus"] = 1;
    CHECK_THROWS_AS((void)j.get<SyntheticSpec>(), SpecError);
}

TEST_CASE("CSV round trip and load errors") {
    const auto dir = scratch_dir("csv");
    const Scenario a = random_scenario("a", 2, 2, 3, 4, 7);
    const Scenario b = random_scenario("b", 2, 2, 3, 4, 8);
    write_scenario(dir, b);
    write_scenario(dir, a);
    const ScenarioSet s = load_scenarios(dir);
    REQUIRE(s.size() == 2);
    CHECK(s.ids() == std::vector<std::string>{"a", "b"});
    CHECK((s.get("a").power_load - a.power_load).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.get("b").gas_load - b.gas_load).cwiseAbs().maxCoeff() < 1e-12);

    LoadSchema schema;
    schema.power_nodes = 3;
    CHECK_THROWS_AS((void)load_scenarios(dir, schema), LoadError);

    const auto empty = scratch_dir("csv_empty");
    try {
        (void)load_scenarios(empty);
        FAIL("expected a load error");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("no scenarios found") != std::string::npos);
    }

    const auto bad = scratch_dir("csv_bad");
    Scenario c = random_scenario("c", 1, 1, 1, 2, 9);
    c.power_load.setConstant(100.0);
    c.gas_load.setConstant(100.0);
    c.solar_cf.setConstant(0.25);
    c.onshore_cf.setConstant(0.25);
    c.offshore_cf.setConstant(0.25);
    c.solar_cf(0, 1) = 0.5;
    write_scenario(bad, c);
    {
        std::ifstream in(bad / "c.csv");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto pos = text.rfind("0.5");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 3, "1.2");
        std::ofstream(bad / "c.csv") << text;
    }
    try {
        (void)load_scenarios(bad);
        FAIL("expected a range error");
    } catch (const LoadError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("c.csv") != std::string::npos);
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("solar_cf") != std::string::npos);
    }

    const auto nan = scratch_dir("csv_nan");
    write_scenario(nan, c);
    std::ofstream(nan / "c.gas.csv") << "day,node,gas_load\n0,0,nan\n";
    CHECK_THROWS_AS((void)load_scenarios(nan), LoadError);

    const auto missing = scratch_dir("csv_missing");
    std::ofstream(missing / "d.csv") << "day,hour,node,power_load,solar_cf,onshore_cf\n";
    std::ofstream(missing / "d.gas.csv") << "day,node,gas_load\n0,0,1\n";
    CHECK_THROWS_AS((void)load_scenarios(missing), LoadError);
}

TEST_CASE("split_scenarios sizes, disjointness and determinism") {
    std::vector<Scenario> v;
    for (int i = 0; i < 20; ++i) v.push_back(random_scenario("s" + std::to_string(10 + i), 1, 1, 1, 1, i));
    const ScenarioSet s(std::move(v));
    const ScenarioSplit sp = split_scenarios(s, {5, 10, 5}, 42);
    CHECK(sp.train.size() == 5);
    CHECK(sp.validation.size() == 10);
    CHECK(sp.test.size() == 5);
    std::set<std::string> all(sp.train.begin(), sp.train.end());
    all.insert(sp.validation.begin(), sp.validation.end());
    all.insert(sp.test.begin(), sp.test.end());
    CHECK(all.size() == 20);
    const ScenarioSplit again = split_scenarios(s, {5, 10, 5}, 42);
    CHECK(again.train == sp.train);
    CHECK(again.validation == sp.validation);
    CHECK_THROWS_AS((void)split_scenarios(s, {5, 10, 4}, 42), SplitError);

    std::vector<Scenario> three;
    for (int i = 0; i < 3; ++i) three.push_back(random_scenario("t" + std::to_string(i), 1, 1, 1, 1, i));
    const ScenarioSplit one = split_scenarios(ScenarioSet(std::move(three)), {1, 1, 1}, 5);
    CHECK(one.train.size() == 1);
    CHECK(one.validation.size() == 1);
    CHECK(one.test.size() == 1);
}

TEST_CASE("sample set pools training days only") {
    std::vector<Scenario> v;
    for (int i = 0; i < 4; ++i) v.push_back(random_scenario("s" + std::to_string(i), 2, 2, 5, 4, 100 + i));
    ScenarioSet s(std::move(v));
    auto tracer = std::make_shared<AccessTracer>();
    s.attach_tracer(tracer);
    ScenarioSplit sp;
    sp.train = {"s1", "s3"};
    sp.validation = {"s0"};
    sp.test = {"s2"};
    tracer->set_phase("clustering");
    const SampleSet ss = build_sample_set(s, sp);
    CHECK(ss.size() == 10);
    CHECK(ss.days_per_scenario == 5);
    for (const auto& e : tracer->events()) {
        CHECK(e.phase == "clustering");
        CHECK((e.scenario_id == "s1" || e.scenario_id == "s3"));
    }
    CHECK_FALSE(tracer->events().empty());

    int covered = 0;
    for (const GroupSlice& g : ss.group_slices) {
        CHECK(g.offset == covered);
        covered += g.length;
    }
    CHECK(covered == ss.profiles.front().feature.size());
    for (const DayProfile& p : ss.profiles) {
        CHECK(p.feature.size() == covered);
        CHECK(p.feature.minCoeff() >= 0.0);
        CHECK(p.feature.maxCoeff() <= 1.0);
        const Eigen::VectorXd back = ss.stats.denormalize(p.feature);
        for (Eigen::Index i = 0; i < back.size(); ++i)
            CHECK(std::abs(back[i] - p.raw[i]) <= 1e-9 * std::max(1.0, std::abs(p.raw[i])));
    }

    const SampleSet twice = renormalize(ss);
    for (std::size_t i = 0; i < ss.size(); ++i)
        CHECK((twice.profiles[i].feature - ss.profiles[i].feature).cwiseAbs().maxCoeff() <= 1e-12);

    ScenarioSplit empty_train = sp;
    empty_train.train.clear();
    CHECK_THROWS_AS((void)build_sample_set(s, empty_train), SplitError);
}

TEST_CASE("constant series normalize to zero") {
    Scenario c = random_scenario("c", 1, 1, 2, 2, 1);
    c.power_load.setConstant(100.0);
    c.gas_load.setConstant(5.0);
    c.solar_cf.setConstant(0.5);
    c.onshore_cf.setConstant(0.25);
    c.offshore_cf.setConstant(0.75);
    const ScenarioSet s({c});
    const SampleSet ss = build_sample_set(s.select({"c"}));
    REQUIRE(ss.size() == 2);
    for (const DayProfile& p : ss.profiles) {
        CHECK(p.feature.allFinite());
        CHECK(p.feature.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("features equal hand-normalized raw profile") {
    Scenario a = random_scenario("a", 1, 1, 2, 2, 11);
    Scenario b = random_scenario("b", 1, 1, 2, 2, 12);
    const ScenarioSet s({a, b});
    const SampleSet ss = build_sample_set(s.select({"a", "b"}));
    REQUIRE(ss.size() == 4);
    // Raw layout for 1 power node, 1 gas node, 2 hours:
    // [load h0, load h1 | gas | solar h0, h1 | offshore h0, h1 | onshore h0, h1]
    auto raw = [](const Scenario& sc, int d) {
        std::vector<double> r{sc.power_load(0, 2 * d), sc.power_load(0, 2 * d + 1), sc.gas_load(0, d),
                              sc.solar_cf(0, 2 * d),   sc.solar_cf(0, 2 * d + 1),   sc.offshore_cf(0, 2 * d),
                              sc.offshore_cf(0, 2 * d + 1), sc.onshore_cf(0, 2 * d), sc.onshore_cf(0, 2 * d + 1)};
        return r;
    };
    std::vector<std::vector<double>> all{raw(a, 0), raw(a, 1), raw(b, 0), raw(b, 1)};
    const int idx = ss.find("b", 1);
    REQUIRE(idx >= 0);
    const Eigen::VectorXd& f = ss.profiles[idx].feature;
    REQUIRE(f.size() == 9);
    for (int i = 0; i < 9; ++i) {
        double lo = all[0][i], hi = all[0][i];
        for (const auto& r : all) {
            lo = std::min(lo, r[i]);
            hi = std::max(hi, r[i]);
        }
        const double expected = hi > lo ? (all[3][i] - lo) / (hi - lo) : 0.0;
        CHECK(f[i] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("scenario set rejects inconsistent dimensions") {
    const Scenario a = random_scenario("a", 2, 1, 2, 2, 1);
    const Scenario b = random_scenario("b", 1, 1, 2, 2, 2);
    CHECK_THROWS_AS(ScenarioSet({a, b}), LoadError);
    Scenario c = a;
    c.onshore_cf(0, 0) = -0.1;
    CHECK_THROWS_AS(c.validate(), LoadError);
    const ScenarioSet ok({a});
    CHECK_THROWS_AS((void)ok.get("zz"), LoadError);
}
