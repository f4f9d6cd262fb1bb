#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "stochcep/scenario_data.hpp"

namespace stochcep::rpc {

using Weights = std::array<double, data::kGroups>;

struct HyperparameterBounds {
    int rep_days_min = 5;
    int rep_days_max = 80;
    int extreme_days_min = 0;
    int extreme_days_max = 10;
};

/// Distance weights (power load, gas load, solar, offshore wind, onshore
/// wind), representative-day count and extreme-day count.
struct Hyperparameters {
    Weights group_weights{0.2, 0.2, 0.2, 0.2, 0.2};
    int rep_days = 80;
    int extreme_days = 0;

    [[nodiscard]] int total_days() const { return rep_days + 2 * extreme_days; }
    /// Throws ParameterError when weights are off the simplex or counts out of bounds.
    void validate(const HyperparameterBounds& bounds = {}) const;
};

void to_json(nlohmann::json& j, const Hyperparameters& h);
void from_json(const nlohmann::json& j, Hyperparameters& h);

/// Divides raw box weights by their sum; a sum below 1e-9 maps to uniform weights.
[[nodiscard]] Weights canonicalize_weights(const Weights& raw);

/// sum_g w_g * ||a_g - b_g||_2 over normalized group sub-vectors.
[[nodiscard]] double weighted_distance(const data::DayProfile& a, const data::DayProfile& b,
                                       const Weights& w,
                                       const std::array<data::GroupSlice, data::kGroups>& slices);

/// Per-group pairwise distances of a sample set, computed once and combined
/// for any weight vector.
class DistanceCache {
public:
    explicit DistanceCache(const data::SampleSet& s);

    [[nodiscard]] std::size_t size() const { return n_; }
    [[nodiscard]] double group_distance(int g, std::size_t i, std::size_t j) const;
    /// Full weighted matrix restricted to `subset` (indices into the sample set).
    [[nodiscard]] Eigen::MatrixXd combined(const Weights& w, const std::vector<int>& subset) const;

private:
    std::size_t n_ = 0;
    std::array<std::vector<double>, data::kGroups> packed_;  // strict upper triangles
};

struct ExtremeDaySelection {
    std::vector<int> power;  // sample-set indices
    std::vector<int> gas;

    [[nodiscard]] std::vector<int> all() const;
};

[[nodiscard]] ExtremeDaySelection select_extreme_days(const data::SampleSet& s, int count);

struct PamResult {
    std::vector<int> medoids;     // positions in the distance matrix, ascending
    std::vector<int> assignment;  // position -> index into `medoids`
    double objective = 0.0;
    int swaps = 0;
};

/// PAM: greedy BUILD followed by best-improvement SWAP until no swap improves.
/// `seed` only orders candidates, which breaks ties among equal-cost swaps.
[[nodiscard]] PamResult pam(const Eigen::MatrixXd& dist, int k, std::uint64_t seed);

struct DayRef {
    std::string scenario_id;
    int day = 0;
    bool extreme = false;
};

struct RepresentativeDaySet {
    std::vector<int> sample_index;  // medoids then extreme days, each in sample order
    std::vector<DayRef> days;
    std::vector<double> weights;
    /// Sample-set index -> position in `days`.
    std::vector<int> assignment;
    double objective = 0.0;  // within-cluster distance of the non-extreme pool
    int extreme_count = 0;

    [[nodiscard]] std::size_t size() const { return days.size(); }
    [[nodiscard]] double total_weight() const;
};

void to_json(nlohmann::json& j, const RepresentativeDaySet& r);
void from_json(const nlohmann::json& j, RepresentativeDaySet& r);

/// Clusters the sample set minus the fixed extreme days into k medoids and
/// appends the extremes as singleton clusters of weight 1. Non-extreme weights
/// are (|T| - 2E) |C_i| / (|S| - 2E), so all weights sum to |T|.
[[nodiscard]] RepresentativeDaySet cluster_kmedoids(const data::SampleSet& s, int k,
                                                    const DistanceCache& cache, const Weights& w,
                                                    const ExtremeDaySelection& extremes,
                                                    std::uint64_t seed);

[[nodiscard]] RepresentativeDaySet run_rpc(const Hyperparameters& theta, const data::SampleSet& s,
                                           const DistanceCache& cache, std::uint64_t seed);
[[nodiscard]] RepresentativeDaySet run_rpc(const Hyperparameters& theta, const data::SampleSet& s,
                                           std::uint64_t seed);

}  // namespace stochcep::rpc
