#include "stochcep/rpc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "stochcep/errors.hpp"

namespace stochcep::rpc {

using nlohmann::json;

void Hyperparameters::validate(const HyperparameterBounds& b) const {
    double sum = 0.0;
    for (double w : group_weights) {
        if (!(w >= 0.0 && w <= 1.0)) throw ParameterError("distance weights must lie in [0,1]");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("distance weights must sum to 1");
    if (rep_days < b.rep_days_min || rep_days > b.rep_days_max)
        throw ParameterError("rep_days " + std::to_string(rep_days) + " outside [" +
                             std::to_string(b.rep_days_min) + ", " + std::to_string(b.rep_days_max) + "]");
    if (extreme_days < b.extreme_days_min || extreme_days > b.extreme_days_max)
        throw ParameterError("extreme_days " + std::to_string(extreme_days) + " outside [" +
                             std::to_string(b.extreme_days_min) + ", " +
                             std::to_string(b.extreme_days_max) + "]");
}

void to_json(json& j, const Hyperparameters& h) {
    j = json{{"weights", h.group_weights}, {"rep_days", h.rep_days}, {"extreme_days", h.extreme_days}};
}

void from_json(const json& j, Hyperparameters& h) {
    j.at("weights").get_to(h.group_weights);
    j.at("rep_days").get_to(h.rep_days);
    j.at("extreme_days").get_to(h.extreme_days);
}

Weights canonicalize_weights(const Weights& raw) {
    double sum = 0.0;
    for (double w : raw) {
        if (!(w >= 0.0)) throw ParameterError("distance weights must be non-negative");
        sum += w;
    }
    Weights out;
    for (int g = 0; g < data::kGroups; ++g) out[g] = sum < 1e-9 ? 1.0 / data::kGroups : raw[g] / sum;
    return out;
}

namespace {

void check_simplex(const Weights& w) {
    double sum = 0.0;
    for (double v : w) {
        if (!(v >= 0.0)) throw ParameterError("distance weights must be non-negative");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("distance weights are not on the simplex");
}

}  // namespace

double weighted_distance(const data::DayProfile& a, const data::DayProfile& b, const Weights& w,
                         const std::array<data::GroupSlice, data::kGroups>& slices) {
    check_simplex(w);
    double d = 0.0;
    for (int g = 0; g < data::kGroups; ++g) {
        if (w[g] == 0.0) continue;
        const auto& s = slices[g];
        d += w[g] * (a.feature.segment(s.offset, s.length) - b.feature.segment(s.offset, s.length)).norm();
    }
    return d;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t packed_index(std::size_t n, std::size_t i, std::size_t j) {
    // i < j; row i of the strict upper triangle starts after sum_{r<i} (n-1-r) entries.
    return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

}  // namespace

DistanceCache::DistanceCache(const data::SampleSet& s) : n_(s.size()) {
    const std::size_t pairs = n_ * (n_ > 0 ? n_ - 1 : 0) / 2;
    for (int g = 0; g < data::kGroups; ++g) {
        const auto& sl = s.group_slices[g];
        std::vector<double>& out = packed_[g];
        out.resize(pairs);
        Eigen::MatrixXd block(sl.length, n_);
        for (std::size_t i = 0; i < n_; ++i) block.col(i) = s.profiles[i].feature.segment(sl.offset, sl.length);
        std::size_t k = 0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = i + 1; j < n_; ++j) out[k++] = (block.col(i) - block.col(j)).norm();
    }
}

double DistanceCache::group_distance(int g, std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    return packed_[g][packed_index(n_, i, j)];
}

Eigen::MatrixXd DistanceCache::combined(const Weights& w, const std::vector<int>& subset) const {
    check_simplex(w);
    const Eigen::Index m = static_cast<Eigen::Index>(subset.size());
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = a + 1; b < m; ++b) {
            std::size_t i = subset[a], j = subset[b];
            if (i > j) std::swap(i, j);
            const std::size_t k = packed_index(n_, i, j);
            double d = 0.0;
            for (int g = 0; g < data::kGroups; ++g)
                if (w[g] != 0.0) d += w[g] * packed_[g][k];
            D(a, b) = D(b, a) = d;
        }
    return D;
}

// ---------------------------------------------------------------------------

std::vector<int> ExtremeDaySelection::all() const {
    std::vector<int> out = power;
    out.insert(out.end(), gas.begin(), gas.end());
    std::sort(out.begin(), out.end());
    return out;
}

ExtremeDaySelection select_extreme_days(const data::SampleSet& s, int count) {
    if (count < 0) throw SelectionError("extreme day count must be non-negative");
    if (2 * static_cast<std::size_t>(count) > s.size())
        throw SelectionError("cannot select " + std::to_string(2 * count) + " extreme days from " +
                             std::to_string(s.size()) + " samples");
    ExtremeDaySelection out;
    if (count == 0) return out;
    const int n = static_cast<int>(s.size());
    auto ranked = [&](auto total) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return total(a) > total(b); });
        return order;
    };
    const auto by_power = ranked([&](int i) { return s.profiles[i].data.total_power_load(); });
    const auto by_gas = ranked([&](int i) { return s.profiles[i].data.total_gas_load(); });
    out.power.assign(by_power.begin(), by_power.begin() + count);
    for (int i : by_gas) {
        if (static_cast<int>(out.gas.size()) == count) break;
        if (std::find(out.power.begin(), out.power.end(), i) == out.power.end()) out.gas.push_back(i);
    }
    return out;
}

// ---------------------------------------------------------------------------

PamResult pam(const Eigen::MatrixXd& D, int k, std::uint64_t seed) {
    const int n = static_cast<int>(D.rows());
    if (k < 1 || k > n)
        throw ClusteringError("cannot form " + std::to_string(k) + " clusters from " + std::to_string(n) + " points");
    PamResult r;
    std::vector<char> is_medoid(n, 0);
    std::vector<double> near(n, std::numeric_limits<double>::infinity());

    // BUILD
    {
        int first = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            const double s = D.col(i).sum();
            if (s < best) {
                best = s;
                first = i;
            }
        }
        is_medoid[first] = 1;
        for (int o = 0; o < n; ++o) near[o] = D(o, first);
        for (int m = 1; m < k; ++m) {
            int pick = -1;
            double gain_best = -1.0;
            for (int c = 0; c < n; ++c) {
                if (is_medoid[c]) continue;
                double gain = 0.0;
                for (int o = 0; o < n; ++o) gain += std::max(0.0, near[o] - D(o, c));
                if (gain > gain_best) {
                    gain_best = gain;
                    pick = c;
                }
            }
            is_medoid[pick] = 1;
            for (int o = 0; o < n; ++o) near[o] = std::min(near[o], D(o, pick));
        }
    }

    std::vector<int> medoids;
    for (int i = 0; i < n; ++i)
        if (is_medoid[i]) medoids.push_back(i);

    std::vector<int> nearest(n), order(n);
    std::vector<double> dn(n), ds(n);
    auto refresh = [&]() {
        for (int o = 0; o < n; ++o) {
            double a = std::numeric_limits<double>::infinity(), b = a;
            int ia = -1;
            for (int m = 0; m < k; ++m) {
                const double d = D(o, medoids[m]);
                if (d < a) {
                    b = a;
                    a = d;
                    ia = m;
                } else if (d < b) {
                    b = d;
                }
            }
            nearest[o] = ia;
            dn[o] = a;
            ds[o] = b;
        }
    };
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    // SWAP (best improvement; deltas for all medoids per candidate at once).
    std::vector<double> removal(k), delta(k);
    while (true) {
        refresh();
        std::fill(removal.begin(), removal.end(), 0.0);
        double total = 0.0;
        for (int o = 0; o < n; ++o) {
            total += dn[o];
            if (k > 1) removal[nearest[o]] += ds[o] - dn[o];
        }
        double best_delta = 0.0;
        int best_m = -1, best_h = -1;
        for (int h : order) {
            if (is_medoid[h]) continue;
            delta = removal;
            double shared = 0.0;
            for (int o = 0; o < n; ++o) {
                const double doh = D(o, h);
                if (doh < dn[o]) {
                    shared += doh - dn[o];
                    delta[nearest[o]] += dn[o] - ds[o];
                } else if (doh < ds[o]) {
                    delta[nearest[o]] += doh - ds[o];
                }
            }
            if (k == 1) {
                // Single medoid: replacing it reassigns every point to h.
                double c = 0.0;
                for (int o = 0; o < n; ++o) c += D(o, h);
                delta[0] = c - total;
                shared = 0.0;
            }
            for (int m = 0; m < k; ++m) {
                const double dm = delta[m] + shared;
                if (dm < best_delta) {
                    best_delta = dm;
                    best_m = m;
                    best_h = h;
                }
            }
        }
        if (best_m < 0 || best_delta > -1e-12 * (1.0 + total)) {
            r.objective = total;
            break;
        }
        is_medoid[medoids[best_m]] = 0;
        is_medoid[best_h] = 1;
        medoids[best_m] = best_h;
        std::sort(medoids.begin(), medoids.end());
        ++r.swaps;
    }
    refresh();
    r.medoids = medoids;
    r.assignment = nearest;
    r.objective = 0.0;
    for (int o = 0; o < n; ++o) r.objective += dn[o];
    return r;
}

// ---------------------------------------------------------------------------

double RepresentativeDaySet::total_weight() const {
    return std::accumulate(weights.begin(), weights.end(), 0.0);
}

void to_json(json& j, const RepresentativeDaySet& r) {
    json days = json::array();
    for (std::size_t i = 0; i < r.days.size(); ++i)
        days.push_back({{"scenario", r.days[i].scenario_id},
                        {"day", r.days[i].day},
                        {"weight", r.weights[i]},
                        {"extreme", r.days[i].extreme},
                        {"sample_index", r.sample_index[i]}});
    j = json{{"days", days}, {"assignment", r.assignment}, {"objective", r.objective},
             {"extreme_count", r.extreme_count}};
}

void from_json(const json& j, RepresentativeDaySet& r) {
    r = {};
    for (const json& d : j.at("days")) {
        r.days.push_back({d.at("scenario").get<std::string>(), d.at("day").get<int>(),
                          d.at("extreme").get<bool>()});
        r.weights.push_back(d.at("weight").get<double>());
        r.sample_index.push_back(d.value("sample_index", -1));
    }
    j.at("assignment").get_to(r.assignment);
    r.objective = j.value("objective", 0.0);
    r.extreme_count = j.value("extreme_count", 0);
}

RepresentativeDaySet cluster_kmedoids(const data::SampleSet& s, int k, const DistanceCache& cache,
                                      const Weights& w, const ExtremeDaySelection& extremes,
                                      std::uint64_t seed) {
    const int n = static_cast<int>(s.size());
    const std::vector<int> fixed = extremes.all();
    const int E = static_cast<int>(fixed.size());
    if (k < 1) throw ClusteringError("k must be at least 1");
    if (k + E > n)
        throw ClusteringError("k + extreme days = " + std::to_string(k + E) + " exceeds the " +
                              std::to_string(n) + " samples");
    const int T = s.days_per_scenario;
    if (E >= T)
        throw ClusteringError(std::to_string(E) + " extreme days leave no weight for " +
                              std::to_string(T) + "-day scenarios");

    std::vector<int> pool;
    for (int i = 0; i < n; ++i)
        if (!std::binary_search(fixed.begin(), fixed.end(), i)) pool.push_back(i);
    const Eigen::MatrixXd D = cache.combined(w, pool);
    const PamResult p = pam(D, k, seed);

    RepresentativeDaySet r;
    r.assignment.assign(n, -1);
    r.objective = p.objective;
    r.extreme_count = E;
    std::vector<int> size(k, 0);
    for (std::size_t a = 0; a < pool.size(); ++a) {
        r.assignment[pool[a]] = p.assignment[a];
        ++size[p.assignment[a]];
    }
    const double pool_n = static_cast<double>(pool.size());
    for (int m = 0; m < k; ++m) {
        const int idx = pool[p.medoids[m]];
        r.sample_index.push_back(idx);
        r.days.push_back({s.profiles[idx].data.scenario_id, s.profiles[idx].data.day, false});
        r.weights.push_back(static_cast<double>(T - E) * size[m] / pool_n);
    }
    for (int idx : fixed) {
        r.assignment[idx] = static_cast<int>(r.days.size());
        r.sample_index.push_back(idx);
        r.days.push_back({s.profiles[idx].data.scenario_id, s.profiles[idx].data.day, true});
        r.weights.push_back(1.0);
    }
    return r;
}

RepresentativeDaySet run_rpc(const Hyperparameters& theta, const data::SampleSet& s,
                             const DistanceCache& cache, std::uint64_t seed) {
    const Weights w = canonicalize_weights(theta.group_weights);
    if (theta.rep_days < 1) throw ParameterError("rep_days must be at least 1");
    const ExtremeDaySelection ext = select_extreme_days(s, theta.extreme_days);
    return cluster_kmedoids(s, theta.rep_days, cache, w, ext, seed);
}

RepresentativeDaySet run_rpc(const Hyperparameters& theta, const data::SampleSet& s, std::uint64_t seed) {
    return run_rpc(theta, s, DistanceCache(s), seed);
}

}  // namespace stochcep::rpc
