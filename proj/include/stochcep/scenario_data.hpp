#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stochcep::data {

/// Operating data of one day. Matrices are [node x hour].
struct DayData {
    std::string scenario_id;
    int day = 0;
    Eigen::MatrixXd power_load;
    Eigen::VectorXd gas_load;
    Eigen::MatrixXd solar_cf;
    Eigen::MatrixXd onshore_cf;
    Eigen::MatrixXd offshore_cf;

    [[nodiscard]] int hours() const { return static_cast<int>(power_load.cols()); }
    [[nodiscard]] double total_power_load() const { return power_load.sum(); }
    [[nodiscard]] double total_gas_load() const { return gas_load.sum(); }
};

/// One year-long projection. Power matrices are [power node x hour of horizon],
/// gas load is [gas node x day].
struct Scenario {
    std::string id;
    int hours_per_day = 24;
    int days = 365;
    Eigen::MatrixXd power_load;
    Eigen::MatrixXd gas_load;
    Eigen::MatrixXd solar_cf;
    Eigen::MatrixXd onshore_cf;
    Eigen::MatrixXd offshore_cf;

    [[nodiscard]] int power_nodes() const { return static_cast<int>(power_load.rows()); }
    [[nodiscard]] int gas_nodes() const { return static_cast<int>(gas_load.rows()); }
    [[nodiscard]] DayData day(int d) const;

    /// Throws LoadError describing the first violated invariant.
    void validate() const;
};

/// Records which scenarios were read and under which phase label. Shared by
/// all copies of a ScenarioSet; thread-safe.
class AccessTracer {
public:
    struct Event {
        std::string phase;
        std::string scenario_id;
    };

    void set_phase(std::string phase);
    [[nodiscard]] std::string phase() const;
    void record(const std::string& scenario_id);
    [[nodiscard]] std::vector<Event> events() const;
    void clear();

private:
    mutable std::mutex mutex_;
    std::string phase_ = "unlabeled";
    std::vector<Event> events_;
};

class ScenarioSet {
public:
    ScenarioSet() = default;
    explicit ScenarioSet(std::vector<Scenario> scenarios);

    [[nodiscard]] std::size_t size() const { return scenarios_.size(); }
    [[nodiscard]] bool empty() const { return scenarios_.empty(); }
    /// Metadata reads; not traced.
    [[nodiscard]] std::vector<std::string> ids() const;
    [[nodiscard]] bool contains(std::string_view id) const;
    [[nodiscard]] int power_nodes() const;
    [[nodiscard]] int gas_nodes() const;
    [[nodiscard]] int hours_per_day() const;
    [[nodiscard]] int days() const;

    /// Data reads; recorded on the tracer when one is attached.
    [[nodiscard]] const Scenario& get(std::string_view id) const;
    [[nodiscard]] std::vector<const Scenario*> select(const std::vector<std::string>& ids) const;

    void attach_tracer(std::shared_ptr<AccessTracer> tracer) { tracer_ = std::move(tracer); }
    [[nodiscard]] const std::shared_ptr<AccessTracer>& tracer() const { return tracer_; }

private:
    std::vector<Scenario> scenarios_;
    std::shared_ptr<AccessTracer> tracer_;
};

struct LoadSchema {
    std::optional<int> power_nodes;
    std::optional<int> gas_nodes;
    std::optional<int> hours_per_day;
    std::optional<int> days;
};

/// Reads `<id>.csv` (day,hour,node,power_load,solar_cf,onshore_cf,offshore_cf)
/// and `<id>.gas.csv` (day,node,gas_load) for every scenario in `dir`.
/// Indices are 0-based. Scenarios are ordered by id.
[[nodiscard]] ScenarioSet load_scenarios(const std::filesystem::path& dir,
                                         const LoadSchema& schema = {});
void write_scenario(const std::filesystem::path& dir, const Scenario& s);

struct SyntheticSpec {
    int scenarios = 20;
    int power_nodes = 3;
    int gas_nodes = 4;
    int days = 365;
    int hours_per_day = 24;
    /// Mean hourly power load per node (MW); cycled when shorter than power_nodes.
    std::vector<double> power_load_mw{1800.0, 1200.0, 900.0};
    /// Mean daily gas load per gas node (MMBtu/day).
    std::vector<double> gas_load_mmbtu{120000.0, 90000.0, 70000.0, 50000.0};
    double power_seasonal = 0.18;  // winter-peak amplitude (fraction of mean)
    double power_summer = 0.08;    // secondary summer peak
    double power_diurnal = 0.15;
    double gas_seasonal = 0.65;
    double solar_peak_cf = 0.85;
    double solar_seasonal = 0.35;
    double onshore_mean_cf = 0.33;
    double offshore_mean_cf = 0.45;
    double wind_seasonal = 0.25;
    /// Correlation targets of the daily weather anomalies.
    double corr_power_gas = 0.7;
    double corr_gas_solar = -0.4;
    double corr_onshore_offshore = 0.8;
    double noise_power = 0.05;
    double noise_gas = 0.12;
    double noise_solar = 0.25;
    double noise_wind = 0.9;
    /// Spread of scenario-level (weather-year) offsets.
    double year_spread = 0.04;
    /// Per-day persistence of the anomalies (AR(1) coefficient).
    double persistence = 0.6;

    void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);
[[nodiscard]] SyntheticSpec load_synthetic_spec(const std::filesystem::path& file);

[[nodiscard]] ScenarioSet generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct ScenarioSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
};

void to_json(nlohmann::json& j, const ScenarioSplit& s);
void from_json(const nlohmann::json& j, ScenarioSplit& s);

[[nodiscard]] ScenarioSplit split_scenarios(const ScenarioSet& s, std::array<int, 3> counts,
                                            std::uint64_t seed);

/// Parameter groups in feature-vector order; also the order of the five
/// distance weights.
enum class Group { power_load = 0, gas_load = 1, solar = 2, offshore = 3, onshore = 4 };
inline constexpr int kGroups = 5;
[[nodiscard]] std::string_view group_name(int g);

struct GroupSlice {
    int offset = 0;
    int length = 0;
};

struct NormalizationStats {
    Eigen::VectorXd min;
    Eigen::VectorXd max;

    [[nodiscard]] Eigen::VectorXd normalize(const Eigen::VectorXd& raw) const;
    [[nodiscard]] Eigen::VectorXd denormalize(const Eigen::VectorXd& feature) const;
};

struct DayProfile {
    DayData data;
    Eigen::VectorXd raw;      // concatenated groups in Group order
    Eigen::VectorXd feature;  // normalized raw
};

struct SampleSet {
    std::vector<DayProfile> profiles;
    std::array<GroupSlice, kGroups> group_slices{};
    NormalizationStats stats;
    int days_per_scenario = 0;
    std::vector<std::string> scenario_ids;

    [[nodiscard]] std::size_t size() const { return profiles.size(); }
    /// Index of (scenario, day) or -1.
    [[nodiscard]] int find(std::string_view scenario_id, int day) const;
};

/// Concatenates the groups of one day in Group order (row-major node x hour).
[[nodiscard]] Eigen::VectorXd day_features(const DayData& d);
[[nodiscard]] std::array<GroupSlice, kGroups> feature_slices(int power_nodes, int gas_nodes,
                                                             int hours);

/// Pools every day of the training scenarios; reads nothing else.
[[nodiscard]] SampleSet build_sample_set(const ScenarioSet& s, const ScenarioSplit& split);
/// Pools the given scenarios directly.
[[nodiscard]] SampleSet build_sample_set(const std::vector<const Scenario*>& scenarios);
/// Recomputes min-max statistics over the current features and applies them.
[[nodiscard]] SampleSet renormalize(const SampleSet& s);

}  // namespace stochcep::data
