#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stochcep/linear_program.hpp"
#include "stochcep/rpc.hpp"
#include "stochcep/scenario_data.hpp"

namespace stochcep::cep {

using solver::LinearProgram;
using solver::MilpProblem;

enum class Tech { solar = 0, onshore = 1, offshore = 2, gas = 3, ccs = 4 };
inline constexpr int kTechs = 5;
[[nodiscard]] std::string_view tech_name(int k);

/// Costs are $ per MW-year (annualized) and $ per MWh.
struct TechParams {
    double unit_mw = 100.0;
    double capex = 0.0;
    double fom = 0.0;
    double vom = 0.0;
    double heat_rate = 0.0;  // MMBtu/MWh, gas-fired only
    double ramp = 1.0;       // fraction of capacity per hour
};

struct StorageParams {
    double power_capex = 0.0;   // $/MW-yr
    double energy_capex = 0.0;  // $/MWh-yr
    double charge_eff = 0.9;
    double discharge_eff = 0.9;
    double min_duration = 1.0;  // h
    double max_duration = 8.0;  // h
    double vom = 0.0;           // $/MWh discharged
};

struct PowerNode {
    std::string name;
    int gas_node = 0;
    std::array<int, kTechs> existing{};
    std::array<int, kTechs> max_build{};
    double storage_max_mw = 0.0;
};

struct PowerEdge {
    int from = 0;
    int to = 0;
    double existing_mw = 0.0;
    double unit_mw = 0.0;
    double capex_per_unit = 0.0;  // $/yr
    int max_units = 0;
};

struct GasNode {
    std::string name;
    double import_cost = 0.0;  // $/MMBtu
    double max_import = 0.0;   // MMBtu/day
};

struct Pipeline {
    int from = 0;
    int to = 0;
    double capacity = 0.0;         // MMBtu/day
    double expansion_capex = 0.0;  // $ per MMBtu/day-yr
    double max_expansion = 0.0;
};

struct SystemTopology {
    std::vector<PowerNode> power_nodes;
    std::array<TechParams, kTechs> techs{};
    StorageParams storage;
    std::vector<PowerEdge> power_edges;
    std::vector<GasNode> gas_nodes;
    std::vector<Pipeline> pipelines;
    double emission_factor = 0.053;  // tCO2/MMBtu
    double ccs_capture = 0.9;
    double emission_cap = 0.0;       // tCO2/yr
    double power_shed_penalty = 5000.0;  // $/MWh
    double gas_shed_penalty = 100.0;     // $/MMBtu
    double transmission_cost = 0.5;      // $/MWh moved, breaks flow degeneracy
    double pipeline_cost = 0.01;         // $/MMBtu moved
    /// Model cost units per dollar; instance objectives are in these units.
    double cost_scale = 1e-6;

    void validate() const;
    /// Throws BuildError when node counts differ from the scenario data.
    void check_against(int power_nodes, int gas_nodes) const;
};

void to_json(nlohmann::json& j, const SystemTopology& t);
void from_json(const nlohmann::json& j, SystemTopology& t);
[[nodiscard]] SystemTopology load_topology(const std::filesystem::path& file);
void save_topology(const std::filesystem::path& file, const SystemTopology& t);

/// Synthetic default system: power nodes on a ring, gas nodes on
/// a line, each power node attached to gas node (n mod gas_nodes).
[[nodiscard]] SystemTopology default_topology(int power_nodes, int gas_nodes);

/// Stage-1 columns (all other stage-1 columns are slacks of the duration rows).
struct StageOneLayout {
    std::vector<std::array<int, kTechs>> built;
    std::vector<int> retired;
    std::vector<int> storage_power;
    std::vector<int> storage_energy;
    std::vector<int> lines;
    std::vector<int> pipelines;
    int num_cols = 0;
};

/// Per-day columns and rows; hourly entries are indexed [node * hours + hour].
struct DayLayout {
    int hours = 0;
    std::vector<int> vre, gas, ccs, charge, discharge, soc, shed;
    std::vector<int> flow_fwd, flow_rev;  // [edge * hours + hour]
    std::vector<int> gas_import, gas_shed, pipe_fwd, pipe_rev;
    std::vector<int> balance_row, soc_row, gas_balance_row;
    int num_cols = 0;
    int num_rows = 0;
};

/// upper(col) += coef * x[x_col]
struct BoundLink {
    int col = 0;
    int x_col = 0;
    double coef = 0.0;
};

/// rhs(row) += coef * x[x_col]
struct RowLink {
    int row = 0;
    int x_col = 0;
    double coef = 0.0;
};

struct DayBlock {
    std::string scenario_id;
    int day = 0;
    double cost_weight = 1.0;
    double emission_weight = 1.0;
    int group = 0;
    std::vector<double> rhs;
    std::vector<double> upper;
    std::vector<BoundLink> bound_links;
    std::vector<RowLink> row_links;
};

/// Block-structured instance: min c^T x + sum_t cw_t d^T y_t subject to the
/// stage-1 rows, per-day rows C y_t = q_t + (links) x with day bounds
/// 0 <= y_t <= u_t + (links) x, and one emissions row per group:
/// sum_{t in g} ew_t e^T y_t <= cap_g.
struct CepInstance {
    LinearProgram stage1;
    std::vector<bool> integer;
    LinearProgram day;  // C, d and default bounds; rhs unused
    std::vector<double> emissions;
    std::vector<DayBlock> blocks;
    std::vector<double> caps;
    StageOneLayout x_layout;
    DayLayout y_layout;
    double cost_scale = 1e-6;

    [[nodiscard]] int num_groups() const { return static_cast<int>(caps.size()); }
    /// Effective day rhs and upper bounds for a given stage-1 vector.
    void day_bounds(const DayBlock& b, const std::vector<double>& x, std::vector<double>& rhs,
                    std::vector<double>& upper) const;
    [[nodiscard]] long flat_nonzeros() const;
};

using RecourseInstance = CepInstance;

struct DimensionCounts {
    int stage1_cols = 0;
    int stage1_integer = 0;
    int stage1_rows = 0;
    int day_cols = 0;
    int day_rows = 0;
    int linked_cols = 0;
    int bound_links_per_day = 0;
    int row_links_per_day = 0;
    int flat_cols = 0;
    int flat_rows = 0;
};

/// Closed-form sizes for P power nodes, E power edges, G gas nodes, L pipelines,
/// H hours per day, D days and S emission groups. R counts the gas-fired
/// technologies whose ramp limit binds within one period (ramp * 24/H < 1, H > 1):
///   stage-1 cols = 10P + E + L   (5P built, P retired, 2P storage, 2P duration slacks)
///   stage-1 rows = 2P,  stage-1 integer = 6P + E
///   day cols     = 7PH + 2EH + 2G + 2L + 2RP(H-1)   (last term: ramp-row slacks)
///   day rows     = 2PH + G + 2RP(H-1)
///   linked cols  = 6PH + 2EH + 2L   (columns whose upper bound depends on x)
///   bound links  = 9PH + 2EH + 2L   (VRE 3, gas 2, CCS/charge/discharge/SoC 1 each)
///   row links    = 2P(H-1) (2 [gas ramp-limited] + 1 [CCS ramp-limited])
///   flat cols    = stage-1 cols + D (day cols + linked cols) + S
///   flat rows    = stage-1 rows + D (day rows + linked cols) + S
[[nodiscard]] DimensionCounts count_dimensions(const SystemTopology& top, int hours, int days,
                                               int groups);

/// Surrogate: one group, cost and emission weights equal to the rep-day weights.
[[nodiscard]] CepInstance build_surrogate(const SystemTopology& top,
                                          const rpc::RepresentativeDaySet& r,
                                          const data::SampleSet& sample);
/// Surrogate from explicit days and weights. Operating costs and emissions
/// are annualized by 365 / horizon_days, the identity for year-long scenarios.
[[nodiscard]] CepInstance build_surrogate(const SystemTopology& top,
                                          const std::vector<data::DayData>& days,
                                          const std::vector<double>& weights,
                                          int horizon_days = 365);

struct FullCepOptions {
    long max_nonzeros = 1'000'000;
};

/// Extensive form: every day of every scenario, cost weight 1/|scenarios|,
/// one emissions row per scenario.
[[nodiscard]] CepInstance build_full_cep(const SystemTopology& top,
                                         const std::vector<const data::Scenario*>& scenarios,
                                         const FullCepOptions& options = {});

/// Investment decision in natural units; integer components hold integral
/// values unless integrality was relaxed.
struct InvestmentDecision {
    std::vector<std::array<double, kTechs>> units_built;
    std::vector<double> units_retired;
    std::vector<double> lines_built;
    std::vector<double> storage_power;
    std::vector<double> storage_energy;
    std::vector<double> pipeline_expansion;

    [[nodiscard]] static InvestmentDecision zero(const SystemTopology& top);
};

void to_json(nlohmann::json& j, const InvestmentDecision& x);
void from_json(const nlohmann::json& j, InvestmentDecision& x);

[[nodiscard]] InvestmentDecision decode(const CepInstance& inst, const std::vector<double>& x);
/// Stage-1 vector (slacks filled in) for the decision.
[[nodiscard]] std::vector<double> encode(const SystemTopology& top, const InvestmentDecision& d);
/// Throws BuildError when the decision violates bounds or duration rows.
void check_decision(const SystemTopology& top, const InvestmentDecision& d);
/// c^T x + existing fixed costs, in dollars.
[[nodiscard]] double investment_cost(const SystemTopology& top, const InvestmentDecision& d);

/// Full-horizon operations of one scenario for a fixed decision; no stage-1 columns.
[[nodiscard]] RecourseInstance build_recourse(const SystemTopology& top, const InvestmentDecision& x,
                                              const data::Scenario& scenario);

/// Extensive form as one MILP: columns [x | y_1 .. y_D | emission slacks],
/// rows [stage-1 | per day: day rows then one row per bound link | emissions].
struct FlatInstance {
    MilpProblem problem;
    std::vector<int> col_block;  // -1 stage 1, -2 linking slack, else block index
    std::vector<int> row_block;  // -1 stage 1, -2 linking row, else block index
    std::vector<int> block_col_start;
    std::vector<int> linking_row_start;
};

[[nodiscard]] FlatInstance flatten(const CepInstance& inst);

struct AuditReport {
    bool ok = true;
    std::vector<std::string> violations;
};

/// Every day column may only touch its own day's rows and its group's
/// emissions row; stage-1 columns never touch emissions rows.
[[nodiscard]] AuditReport audit_structure(const FlatInstance& flat);

/// Sum over days of ew_t e^T y_t per group for a flat solution vector.
[[nodiscard]] std::vector<double> emissions_by_group(const CepInstance& inst, const FlatInstance& flat,
                                                     const std::vector<double>& solution);

/// Installed capacity (MW; storage also MWh) by technology after the decision.
struct CapacitySummary {
    std::array<double, kTechs> mw{};
    double storage_mw = 0.0;
    double storage_mwh = 0.0;
    double new_line_mw = 0.0;
    double pipeline_expansion = 0.0;
};

[[nodiscard]] CapacitySummary capacity_summary(const SystemTopology& top, const InvestmentDecision& d);

/// Operating cost breakdown (dollars) from weighted column totals of the day template.
struct OperatingBreakdown {
    double gas_fuel = 0.0;
    double variable_om = 0.0;
    double power_shedding = 0.0;
    double gas_shedding = 0.0;
    double network = 0.0;
    double shed_mwh = 0.0;
    double gas_shed_mmbtu = 0.0;
    double vre_mwh = 0.0;
    double gas_mwh = 0.0;
    double ccs_mwh = 0.0;
    double gas_import_mmbtu = 0.0;
};

[[nodiscard]] OperatingBreakdown operating_breakdown(const CepInstance& inst,
                                                    const std::vector<double>& column_totals);

}  // namespace stochcep::cep
