#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "stochcep/errors.hpp"
#include "stochcep/rpc.hpp"
#include "oracles.hpp"

using namespace stochcep;
using namespace stochcep::rpc;
using data::DayProfile;
using data::SampleSet;
using oracles::brute_force_kmedoids;
using oracles::euclid;
using oracles::medoid_cost;
using oracles::point_sample;

namespace {

constexpr Weights kPowerOnly{1.0, 0.0, 0.0, 0.0, 0.0};

double weight_sum(const RepresentativeDaySet& r) {
    double s = 0.0;
    for (double w : r.weights) s += w;
    return s;
}

}  // namespace

TEST_CASE("weighted distance examples") {
    SampleSet s;
    for (int g = 0; g < data::kGroups; ++g) s.group_slices[g] = {2 * g, 2};
    DayProfile a, b;
    a.feature = Eigen::VectorXd::Zero(10);
    b.feature = a.feature;
    const Weights uniform{0.2, 0.2, 0.2, 0.2, 0.2};
    CHECK(weighted_distance(a, a, uniform, s.group_slices) == 0.0);

    b.feature[1] = 1.0;
    CHECK(weighted_distance(a, b, kPowerOnly, s.group_slices) == doctest::Approx(1.0));

    b.feature.setZero();
    b.feature[0] = 3.0;
    b.feature[1] = 4.0;
    b.feature[3] = 1.0;
    const Weights half{0.5, 0.5, 0.0, 0.0, 0.0};
    CHECK(weighted_distance(a, b, half, s.group_slices) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(weighted_distance(b, a, half, s.group_slices) == weighted_distance(a, b, half, s.group_slices));

    CHECK_THROWS_AS((void)weighted_distance(a, b, Weights{0.5, 0.6, 0, 0, 0}, s.group_slices), ParameterError);
    CHECK_THROWS_AS((void)weighted_distance(a, b, Weights{1.5, -0.5, 0, 0, 0}, s.group_slices), ParameterError);
}

TEST_CASE("canonicalization divides by the sum with a uniform fallback") {
    const Weights w = canonicalize_weights({2.0, 1.0, 1.0, 0.0, 0.0});
    CHECK(w[0] == doctest::Approx(0.5));
    CHECK(w[1] == doctest::Approx(0.25));
    const Weights u = canonicalize_weights({0.0, 0.0, 0.0, 0.0, 0.0});
    for (double v : u) CHECK(v == doctest::Approx(0.2));
    CHECK_THROWS_AS((void)canonicalize_weights({-1.0, 1.0, 0, 0, 0}), ParameterError);
}

TEST_CASE("hyperparameter validation and JSON") {
    Hyperparameters h;
    CHECK_NOTHROW(h.validate());
    CHECK(h.total_days() == 80);
    h.extreme_days = 10;
    CHECK(h.total_days() == 100);
    h.rep_days = 4;
    CHECK_THROWS_AS(h.validate(), ParameterError);
    h.rep_days = 20;
    h.extreme_days = 11;
    CHECK_THROWS_AS(h.validate(), ParameterError);
    h.extreme_days = 3;
    h.group_weights = {0.1, 0.2, 0.3, 0.2, 0.2};
    const nlohmann::json j = h;
    const Hyperparameters back = j.get<Hyperparameters>();
    CHECK(back.group_weights == h.group_weights);
    CHECK(back.rep_days == 20);
    CHECK(back.extreme_days == 3);
}

TEST_CASE("extreme day selection") {
    const std::vector<std::vector<double>> pts(6, std::vector<double>{0.0});
    // Day 2 tops both power and gas; gas must fall back to its second-highest day (4).
    const SampleSet s = point_sample(pts, 6, {1, 5, 9, 2, 3, 4}, {10, 20, 90, 30, 80, 40});
    const ExtremeDaySelection none = select_extreme_days(s, 0);
    CHECK(none.power.empty());
    CHECK(none.gas.empty());
    const ExtremeDaySelection one = select_extreme_days(s, 1);
    CHECK(one.power == std::vector<int>{2});
    CHECK(one.gas == std::vector<int>{4});
    const ExtremeDaySelection three = select_extreme_days(s, 3);
    CHECK(three.power == std::vector<int>{2, 1, 5});
    CHECK(three.gas == std::vector<int>{4, 3, 0});
    std::set<int> distinct(three.power.begin(), three.power.end());
    distinct.insert(three.gas.begin(), three.gas.end());
    CHECK(distinct.size() == 6);
    CHECK_THROWS_AS((void)select_extreme_days(s, 4), SelectionError);

    // Ties resolve to the earlier day.
    const SampleSet tie = point_sample(pts, 6, {7, 7, 7, 1, 1, 1}, {3, 3, 3, 3, 3, 3});
    const ExtremeDaySelection t = select_extreme_days(tie, 2);
    CHECK(t.power == std::vector<int>{0, 1});
    CHECK(t.gas == std::vector<int>{2, 3});
}

TEST_CASE("saturated clustering puts every day in its own cluster") {
    const std::vector<std::vector<double>> pts{{0.0}, {1.0}, {3.0}, {7.0}};
    const SampleSet s = point_sample(pts, 2);
    const DistanceCache cache(s);
    const RepresentativeDaySet r = cluster_kmedoids(s, 4, cache, kPowerOnly, {}, 1);
    CHECK(r.size() == 4);
    CHECK(r.objective == 0.0);
    for (double w : r.weights) CHECK(w == doctest::Approx(2.0 / 4.0));
    CHECK(weight_sum(r) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("two separated triples match the exhaustive optimum") {
    const std::vector<std::vector<double>> pts{{0.0, 0.0}, {0.2, 0.1}, {0.1, 0.3},
                                               {5.0, 5.0}, {5.3, 5.1}, {4.9, 5.2}};
    const SampleSet s = point_sample(pts, 6);
    const DistanceCache cache(s);
    const RepresentativeDaySet r = cluster_kmedoids(s, 2, cache, kPowerOnly, {}, 3);
    CHECK(r.objective == doctest::Approx(brute_force_kmedoids(euclid(pts), 2)).epsilon(1e-12));
    CHECK(r.weights[0] == doctest::Approx(3.0));
    CHECK(r.weights[1] == doctest::Approx(3.0));
}

TEST_CASE("weight rule on clusters of four and two") {
    const std::vector<std::vector<double>> pts{{0.0}, {0.1}, {0.2}, {0.3}, {9.0}, {9.1}};
    const SampleSet s = point_sample(pts, 3);
    const RepresentativeDaySet r = cluster_kmedoids(s, 2, DistanceCache(s), kPowerOnly, {}, 1);
    REQUIRE(r.size() == 2);
    CHECK(r.weights[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(r.weights[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("PAM against brute force on random small instances") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> size(4, 10), kk(1, 3), dim(1, 3);
    int exact = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = size(rng), k = std::min(kk(rng), n), d = dim(rng);
        std::vector<std::vector<double>> pts(n, std::vector<double>(d));
        for (auto& p : pts)
            for (double& v : p) v = u(rng);
        const Eigen::MatrixXd D = euclid(pts);
        const PamResult p = pam(D, k, static_cast<std::uint64_t>(trial));
        const double opt = brute_force_kmedoids(D, k);
        CHECK(p.objective >= opt - 1e-12);
        if (p.objective <= opt + 1e-9) ++exact;
        CHECK(p.objective == doctest::Approx(medoid_cost(D, p.medoids)).epsilon(1e-12));

        // No single swap improves the terminal medoid set.
        for (std::size_t m = 0; m < p.medoids.size(); ++m)
            for (int h = 0; h < n; ++h) {
                if (std::find(p.medoids.begin(), p.medoids.end(), h) != p.medoids.end()) continue;
                std::vector<int> swapped = p.medoids;
                swapped[m] = h;
                CHECK(medoid_cost(D, swapped) >= p.objective - 1e-9);
            }

        const SampleSet s = point_sample(pts, 365);
        const RepresentativeDaySet r = cluster_kmedoids(s, k, DistanceCache(s), kPowerOnly, {}, trial);
        CHECK(std::abs(weight_sum(r) - 365.0) <= 1e-9);
    }
    CHECK(exact >= 90);
}

TEST_CASE("cluster membership and extreme singletons") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> pts(30, std::vector<double>(2));
    std::vector<double> power(30), gas(30);
    for (int i = 0; i < 30; ++i) {
        pts[i] = {u(rng), u(rng)};
        power[i] = u(rng);
        gas[i] = u(rng);
    }
    const SampleSet s = point_sample(pts, 15, power, gas);
    const DistanceCache cache(s);
    const ExtremeDaySelection ext = select_extreme_days(s, 2);
    const RepresentativeDaySet r = cluster_kmedoids(s, 5, cache, kPowerOnly, ext, 4);
    REQUIRE(r.size() == 9);
    CHECK(r.extreme_count == 4);
    CHECK(std::abs(weight_sum(r) - 15.0) <= 1e-9);
    for (std::size_t i = 0; i < r.size(); ++i) {
        // Each representative belongs to its own cluster.
        CHECK(r.assignment[r.sample_index[i]] == static_cast<int>(i));
        if (r.days[i].extreme) {
            CHECK(r.weights[i] == 1.0);
            CHECK(std::count(r.assignment.begin(), r.assignment.end(), static_cast<int>(i)) == 1);
        }
    }
    for (int a : r.assignment) CHECK((a >= 0 && a < static_cast<int>(r.size())));
    for (std::size_t i = 0; i + 1 < 5; ++i) CHECK(r.sample_index[i] < r.sample_index[i + 1]);

    CHECK_THROWS_AS((void)cluster_kmedoids(s, 27, cache, kPowerOnly, ext, 4), ClusteringError);
    CHECK_THROWS_AS((void)cluster_kmedoids(s, 0, cache, kPowerOnly, ext, 4), ClusteringError);
}

TEST_CASE("assignment is invariant to weight scaling") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SampleSet s;
    for (int g = 0; g < data::kGroups; ++g) s.group_slices[g] = {2 * g, 2};
    s.days_per_scenario = 40;
    for (int i = 0; i < 40; ++i) {
        DayProfile p;
        p.data.scenario_id = "s";
        p.data.day = i;
        p.feature.resize(10);
        for (Eigen::Index j = 0; j < 10; ++j) p.feature[j] = u(rng);
        s.profiles.push_back(p);
    }
    const DistanceCache cache(s);
    const Weights raw{0.3, 0.1, 0.4, 0.05, 0.7};
    Weights scaled = raw;
    for (double& v : scaled) v *= 3.7;
    const RepresentativeDaySet a = cluster_kmedoids(s, 6, cache, canonicalize_weights(raw), {}, 8);
    const RepresentativeDaySet b = cluster_kmedoids(s, 6, cache, canonicalize_weights(scaled), {}, 8);
    CHECK(a.assignment == b.assignment);
    CHECK(a.sample_index == b.sample_index);
}

TEST_CASE("run_rpc on pooled synthetic days") {
    data::SyntheticSpec spec;
    spec.scenarios = 2;
    spec.days = 365;
    spec.hours_per_day = 4;
    const data::ScenarioSet set = data::generate_synthetic(spec, 7);
    const SampleSet s = data::build_sample_set(set.select(set.ids()));
    const DistanceCache cache(s);
    Hyperparameters base1;
    const RepresentativeDaySet r1 = run_rpc(base1, s, cache, 1);
    CHECK(r1.size() == 80);
    CHECK(r1.extreme_count == 0);
    CHECK(std::abs(weight_sum(r1) - 365.0) <= 1e-9);

    Hyperparameters base2 = base1;
    base2.extreme_days = 10;
    const RepresentativeDaySet r2 = run_rpc(base2, s, cache, 1);
    CHECK(r2.size() == 100);
    CHECK(std::count(r2.weights.begin(), r2.weights.end(), 1.0) >= 20);
    int flagged = 0;
    for (const DayRef& d : r2.days) flagged += d.extreme ? 1 : 0;
    CHECK(flagged == 20);
    CHECK(std::abs(weight_sum(r2) - 365.0) <= 1e-9);

    const RepresentativeDaySet again = run_rpc(base2, s, cache, 1);
    CHECK(again.sample_index == r2.sample_index);
    CHECK(again.weights == r2.weights);

    const nlohmann::json j = r2;
    const RepresentativeDaySet back = j.get<RepresentativeDaySet>();
    CHECK(back.sample_index == r2.sample_index);
    CHECK(back.weights == r2.weights);
    CHECK(back.assignment == r2.assignment);
    CHECK(back.days.back().extreme);
}

TEST_CASE("saturated run_rpc gives equal non-extreme weights") {
    const std::vector<std::vector<double>> pts{{0.0}, {0.5}, {1.0}, {2.0}, {4.0}};
    const SampleSet s = point_sample(pts, 5, {1, 2, 3, 4, 5}, {5, 4, 3, 2, 1});
    Hyperparameters h;
    h.rep_days = 3;
    h.extreme_days = 1;
    const RepresentativeDaySet r = run_rpc(h, s, 2);
    REQUIRE(r.size() == 5);
    for (int i = 0; i < 3; ++i) CHECK(r.weights[i] == doctest::Approx(1.0));
    CHECK(std::abs(weight_sum(r) - 5.0) <= 1e-12);
}
