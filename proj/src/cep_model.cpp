#include "stochcep/cep_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "stochcep/errors.hpp"

namespace stochcep::cep {

namespace fs = std::filesystem;
using nlohmann::json;
using solver::kInf;
using solver::ModelBuilder;
using solver::RowSense;

namespace {

constexpr std::array<int, 3> kVre{static_cast<int>(Tech::solar), static_cast<int>(Tech::onshore),
                                  static_cast<int>(Tech::offshore)};
constexpr int kGas = static_cast<int>(Tech::gas);
constexpr int kCcs = static_cast<int>(Tech::ccs);

}  // namespace

std::string_view tech_name(int k) {
    static constexpr std::string_view names[kTechs] = {"solar", "onshore", "offshore", "gas", "ccs"};
    return names[k];
}

// ---------------------------------------------------------------------------
// Topology

void SystemTopology::validate() const {
    if (power_nodes.empty()) throw BuildError("topology has no power nodes");
    if (gas_nodes.empty()) throw BuildError("topology has no gas nodes");
    const int P = static_cast<int>(power_nodes.size()), G = static_cast<int>(gas_nodes.size());
    auto nonneg = [](double v, const std::string& what) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw BuildError(what + " must be a finite non-negative number");
    };
    for (int k = 0; k < kTechs; ++k) {
        const TechParams& t = techs[k];
        const std::string name(tech_name(k));
        if (!(t.unit_mw > 0.0)) throw BuildError(name + ".unit_mw must be positive");
        nonneg(t.capex, name + ".capex");
        nonneg(t.fom, name + ".fom");
        nonneg(t.vom, name + ".vom");
        nonneg(t.heat_rate, name + ".heat_rate");
        nonneg(t.ramp, name + ".ramp");
    }
    nonneg(storage.power_capex, "storage.power_capex");
    nonneg(storage.energy_capex, "storage.energy_capex");
    nonneg(storage.vom, "storage.vom");
    for (double e : {storage.charge_eff, storage.discharge_eff})
        if (!(e > 0.0 && e <= 1.0)) throw BuildError("storage efficiencies must lie in (0, 1]");
    if (!(storage.min_duration >= 0.0 && storage.max_duration >= storage.min_duration))
        throw BuildError("storage durations must satisfy 0 <= min <= max");
    for (const PowerNode& n : power_nodes) {
        if (n.gas_node < 0 || n.gas_node >= G)
            throw BuildError("power node " + n.name + " attaches to unknown gas node");
        for (int k = 0; k < kTechs; ++k)
            if (n.existing[k] < 0 || n.max_build[k] < 0)
                throw BuildError("power node " + n.name + " has negative unit counts");
        nonneg(n.storage_max_mw, n.name + ".storage_max_mw");
    }
    for (const PowerEdge& e : power_edges) {
        if (e.from < 0 || e.from >= P || e.to < 0 || e.to >= P || e.from == e.to)
            throw BuildError("power edge has invalid endpoints");
        nonneg(e.existing_mw, "edge.existing_mw");
        nonneg(e.unit_mw, "edge.unit_mw");
        nonneg(e.capex_per_unit, "edge.capex_per_unit");
        if (e.max_units < 0) throw BuildError("edge.max_units must be non-negative");
    }
    for (const GasNode& g : gas_nodes) {
        nonneg(g.import_cost, g.name + ".import_cost");
        nonneg(g.max_import, g.name + ".max_import");
    }
    for (const Pipeline& p : pipelines) {
        if (p.from < 0 || p.from >= G || p.to < 0 || p.to >= G || p.from == p.to)
            throw BuildError("pipeline has invalid endpoints");
        nonneg(p.capacity, "pipeline.capacity");
        nonneg(p.expansion_capex, "pipeline.expansion_capex");
        nonneg(p.max_expansion, "pipeline.max_expansion");
    }
    nonneg(emission_factor, "emission_factor");
    if (!(ccs_capture >= 0.0 && ccs_capture <= 1.0)) throw BuildError("ccs_capture must lie in [0, 1]");
    nonneg(emission_cap, "emission_cap");
    nonneg(power_shed_penalty, "power_shed_penalty");
    nonneg(gas_shed_penalty, "gas_shed_penalty");
    nonneg(transmission_cost, "transmission_cost");
    nonneg(pipeline_cost, "pipeline_cost");
    if (!(cost_scale > 0.0)) throw BuildError("cost_scale must be positive");
}

void SystemTopology::check_against(int p, int g) const {
    if (static_cast<int>(power_nodes.size()) != p || static_cast<int>(gas_nodes.size()) != g)
        throw BuildError("topology has " + std::to_string(power_nodes.size()) + " power / " +
                         std::to_string(gas_nodes.size()) + " gas nodes but the data has " +
                         std::to_string(p) + " / " + std::to_string(g));
}

namespace {

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

json tech_counts(const std::array<int, kTechs>& a) {
    json j = json::object();
    for (int k = 0; k < kTechs; ++k) j[std::string(tech_name(k))] = a[k];
    return j;
}

void read_counts(const json& j, const char* key, std::array<int, kTechs>& out) {
    if (!j.contains(key)) return;
    const json& c = j.at(key);
    for (int k = 0; k < kTechs; ++k) read(c, std::string(tech_name(k)).c_str(), out[k]);
}

}  // namespace

void to_json(json& j, const SystemTopology& t) {
    j = json::object();
    json techs = json::object();
    for (int k = 0; k < kTechs; ++k) {
        const TechParams& p = t.techs[k];
        techs[std::string(tech_name(k))] = {{"unit_mw", p.unit_mw}, {"capex", p.capex}, {"fom", p.fom},
                                            {"vom", p.vom}, {"heat_rate", p.heat_rate}, {"ramp", p.ramp}};
    }
    j["techs"] = techs;
    const StorageParams& s = t.storage;
    j["storage"] = {{"power_capex", s.power_capex},   {"energy_capex", s.energy_capex},
                    {"charge_eff", s.charge_eff},     {"discharge_eff", s.discharge_eff},
                    {"min_duration", s.min_duration}, {"max_duration", s.max_duration},
                    {"vom", s.vom}};
    json nodes = json::array();
    for (const PowerNode& n : t.power_nodes)
        nodes.push_back({{"name", n.name},
                         {"gas_node", n.gas_node},
                         {"existing", tech_counts(n.existing)},
                         {"max_build", tech_counts(n.max_build)},
                         {"storage_max_mw", n.storage_max_mw}});
    j["power_nodes"] = nodes;
    json edges = json::array();
    for (const PowerEdge& e : t.power_edges)
        edges.push_back({{"from", e.from}, {"to", e.to}, {"existing_mw", e.existing_mw},
                         {"unit_mw", e.unit_mw}, {"capex_per_unit", e.capex_per_unit},
                         {"max_units", e.max_units}});
    j["power_edges"] = edges;
    json gas = json::array();
    for (const GasNode& g : t.gas_nodes)
        gas.push_back({{"name", g.name}, {"import_cost", g.import_cost}, {"max_import", g.max_import}});
    j["gas_nodes"] = gas;
    json pipes = json::array();
    for (const Pipeline& p : t.pipelines)
        pipes.push_back({{"from", p.from}, {"to", p.to}, {"capacity", p.capacity},
                         {"expansion_capex", p.expansion_capex}, {"max_expansion", p.max_expansion}});
    j["pipelines"] = pipes;
    j["emission_factor"] = t.emission_factor;
    j["ccs_capture"] = t.ccs_capture;
    j["emission_cap"] = t.emission_cap;
    j["power_shed_penalty"] = t.power_shed_penalty;
    j["gas_shed_penalty"] = t.gas_shed_penalty;
    j["transmission_cost"] = t.transmission_cost;
    j["pipeline_cost"] = t.pipeline_cost;
    j["cost_scale"] = t.cost_scale;
}

void from_json(const json& j, SystemTopology& t) {
    t = SystemTopology{};
    if (j.contains("techs")) {
        for (int k = 0; k < kTechs; ++k) {
            const std::string name(tech_name(k));
            if (!j.at("techs").contains(name)) continue;
            const json& p = j.at("techs").at(name);
            TechParams& tp = t.techs[k];
            read(p, "unit_mw", tp.unit_mw);
            read(p, "capex", tp.capex);
            read(p, "fom", tp.fom);
            read(p, "vom", tp.vom);
            read(p, "heat_rate", tp.heat_rate);
            read(p, "ramp", tp.ramp);
        }
    }
    if (j.contains("storage")) {
        const json& s = j.at("storage");
        read(s, "power_capex", t.storage.power_capex);
        read(s, "energy_capex", t.storage.energy_capex);
        read(s, "charge_eff", t.storage.charge_eff);
        read(s, "discharge_eff", t.storage.discharge_eff);
        read(s, "min_duration", t.storage.min_duration);
        read(s, "max_duration", t.storage.max_duration);
        read(s, "vom", t.storage.vom);
    }
    for (const json& n : j.value("power_nodes", json::array())) {
        PowerNode p;
        read(n, "name", p.name);
        read(n, "gas_node", p.gas_node);
        read_counts(n, "existing", p.existing);
        read_counts(n, "max_build", p.max_build);
        read(n, "storage_max_mw", p.storage_max_mw);
        t.power_nodes.push_back(p);
    }
    for (const json& e : j.value("power_edges", json::array())) {
        PowerEdge p;
        read(e, "from", p.from);
        read(e, "to", p.to);
        read(e, "existing_mw", p.existing_mw);
        read(e, "unit_mw", p.unit_mw);
        read(e, "capex_per_unit", p.capex_per_unit);
        read(e, "max_units", p.max_units);
        t.power_edges.push_back(p);
    }
    for (const json& g : j.value("gas_nodes", json::array())) {
        GasNode p;
        read(g, "name", p.name);
        read(g, "import_cost", p.import_cost);
        read(g, "max_import", p.max_import);
        t.gas_nodes.push_back(p);
    }
    for (const json& e : j.value("pipelines", json::array())) {
        Pipeline p;
        read(e, "from", p.from);
        read(e, "to", p.to);
        read(e, "capacity", p.capacity);
        read(e, "expansion_capex", p.expansion_capex);
        read(e, "max_expansion", p.max_expansion);
        t.pipelines.push_back(p);
    }
    read(j, "emission_factor", t.emission_factor);
    read(j, "ccs_capture", t.ccs_capture);
    read(j, "emission_cap", t.emission_cap);
    read(j, "power_shed_penalty", t.power_shed_penalty);
    read(j, "gas_shed_penalty", t.gas_shed_penalty);
    read(j, "transmission_cost", t.transmission_cost);
    read(j, "pipeline_cost", t.pipeline_cost);
    read(j, "cost_scale", t.cost_scale);
}

SystemTopology load_topology(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw BuildError("cannot open topology file " + file.string());
    json j;
    try {
        in >> j;
        SystemTopology t = j.get<SystemTopology>();
        t.validate();
        return t;
    } catch (const json::exception& e) {
        throw BuildError(file.string() + ": " + e.what());
    }
}

void save_topology(const fs::path& file, const SystemTopology& t) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot write " + file.string());
    out << json(t).dump(2) << '\n';
}

SystemTopology default_topology(int power_nodes, int gas_nodes) {
    if (power_nodes <= 0 || gas_nodes <= 0) throw BuildError("node counts must be positive");
    SystemTopology t;
    t.techs[static_cast<int>(Tech::solar)] = {100.0, 60000.0, 15000.0, 0.0, 0.0, 1.0};
    t.techs[static_cast<int>(Tech::onshore)] = {100.0, 100000.0, 40000.0, 0.0, 0.0, 1.0};
    t.techs[static_cast<int>(Tech::offshore)] = {200.0, 200000.0, 80000.0, 0.0, 0.0, 1.0};
    t.techs[kGas] = {200.0, 80000.0, 20000.0, 3.0, 7.0, 0.6};
    t.techs[kCcs] = {200.0, 180000.0, 50000.0, 8.0, 8.0, 0.2};
    t.storage = {35000.0, 12000.0, 0.92, 0.92, 1.0, 8.0, 1.0};
    const double base_mw[] = {1800.0, 1200.0, 900.0};
    double total_mw = 0.0;
    for (int n = 0; n < power_nodes; ++n) {
        const double mw = base_mw[n % 3];
        total_mw += mw;
        PowerNode p;
        p.name = "p" + std::to_string(n);
        p.gas_node = n % gas_nodes;
        p.existing = {0, n % 3 == 2 ? 0 : 2, 0, static_cast<int>(std::ceil(1.1 * mw / 200.0)), 0};
        p.max_build = {40, 30, n % 2 == 0 ? 15 : 0, 10, 10};
        p.storage_max_mw = 2000.0;
        t.power_nodes.push_back(p);
    }
    if (power_nodes == 2) {
        t.power_edges.push_back({0, 1, 800.0, 500.0, 20e6, 4});
    } else if (power_nodes > 2) {
        for (int n = 0; n < power_nodes; ++n) t.power_edges.push_back({n, (n + 1) % power_nodes, 800.0, 500.0, 20e6, 4});
    }
    const double gas_import[] = {900000.0, 250000.0, 150000.0, 100000.0};
    for (int j = 0; j < gas_nodes; ++j)
        t.gas_nodes.push_back({"g" + std::to_string(j), 3.5 + 0.5 * (j % 4), gas_import[j % 4]});
    for (int j = 0; j + 1 < gas_nodes; ++j) t.pipelines.push_back({j, j + 1, 200000.0, 100.0, 300000.0});
    t.emission_factor = 0.053;
    t.ccs_capture = 0.9;
    // 40% of the emissions of serving the whole base load with gas plants.
    t.emission_cap = 0.4 * t.emission_factor * t.techs[kGas].heat_rate * 8760.0 * total_mw;
    t.power_shed_penalty = 5000.0;
    t.gas_shed_penalty = 250.0;
    return t;
}

// ---------------------------------------------------------------------------
// Stage 1

namespace {

struct StageOne {
    LinearProgram lp;
    std::vector<bool> integer;
    StageOneLayout layout;
    std::vector<int> min_slack, max_slack;
};

StageOne build_stage_one(const SystemTopology& top) {
    const double s = top.cost_scale;
    ModelBuilder mb;
    StageOne out;
    StageOneLayout& L = out.layout;
    double fixed = 0.0;
    for (const PowerNode& n : top.power_nodes) {
        std::array<int, kTechs> b{};
        for (int k = 0; k < kTechs; ++k) {
            const TechParams& t = top.techs[k];
            b[k] = mb.add_variable(t.unit_mw * (t.capex + t.fom) * s, 0.0, n.max_build[k],
                                   "built:" + n.name + ":" + std::string(tech_name(k)), true);
            fixed += n.existing[k] * t.unit_mw * t.fom * s;
        }
        L.built.push_back(b);
        L.retired.push_back(mb.add_variable(-top.techs[kGas].unit_mw * top.techs[kGas].fom * s, 0.0,
                                            n.existing[kGas], "retired:" + n.name, true));
        L.storage_power.push_back(
            mb.add_variable(top.storage.power_capex * s, 0.0, n.storage_max_mw, "storage_mw:" + n.name));
        L.storage_energy.push_back(mb.add_variable(top.storage.energy_capex * s, 0.0,
                                                   n.storage_max_mw * top.storage.max_duration,
                                                   "storage_mwh:" + n.name));
    }
    for (std::size_t e = 0; e < top.power_edges.size(); ++e) {
        const PowerEdge& pe = top.power_edges[e];
        L.lines.push_back(mb.add_variable(pe.capex_per_unit * s, 0.0, pe.max_units,
                                          "lines:" + std::to_string(e), true));
    }
    for (std::size_t p = 0; p < top.pipelines.size(); ++p) {
        const Pipeline& pl = top.pipelines[p];
        L.pipelines.push_back(
            mb.add_variable(pl.expansion_capex * s, 0.0, pl.max_expansion, "pipeline:" + std::to_string(p)));
    }
    for (std::size_t n = 0; n < top.power_nodes.size(); ++n) {
        const int P = L.storage_power[n], E = L.storage_energy[n];
        const int r1 = mb.add_row({{E, 1.0}, {P, -top.storage.min_duration}}, RowSense::greater_equal, 0.0,
                                  "min_duration:" + top.power_nodes[n].name);
        const int r2 = mb.add_row({{E, 1.0}, {P, -top.storage.max_duration}}, RowSense::less_equal, 0.0,
                                  "max_duration:" + top.power_nodes[n].name);
        out.min_slack.push_back(mb.slack_of(r1));
        out.max_slack.push_back(mb.slack_of(r2));
    }
    mb.add_objective_offset(fixed);
    MilpProblem m = mb.build_milp();
    out.lp = std::move(m.lp);
    out.integer = std::move(m.integer);
    L.num_cols = out.lp.num_cols();
    return out;
}

// ---------------------------------------------------------------------------
// Day template

struct DayTemplate {
    LinearProgram lp;
    std::vector<double> emissions;
    DayLayout layout;
    std::vector<int> ramp_rows;  // rows of ramp constraints
    std::vector<int> ramp_tech;  // tech of each ramp row
    std::vector<int> ramp_node;
};

bool ramp_limited(const SystemTopology& top, int k, int hours) {
    const double dt = 24.0 / hours;
    return hours > 1 && top.techs[k].ramp * dt < 1.0;
}

DayTemplate build_day_template(const SystemTopology& top, int H) {
    const int P = static_cast<int>(top.power_nodes.size());
    const int E = static_cast<int>(top.power_edges.size());
    const int G = static_cast<int>(top.gas_nodes.size());
    const int Lp = static_cast<int>(top.pipelines.size());
    const double dt = 24.0 / H, s = top.cost_scale;
    const TechParams& tg = top.techs[kGas];
    const TechParams& tc = top.techs[kCcs];
    DayTemplate T;
    DayLayout& L = T.layout;
    L.hours = H;
    ModelBuilder mb;
    std::vector<double> em;
    auto var = [&](std::vector<int>& into, double cost, double emission, const std::string& name) {
        into.push_back(mb.add_variable(cost, 0.0, kInf, name));
        em.push_back(emission);
    };
    auto tag = [&](const std::string& what, int a, int h) {
        return what + "[" + std::to_string(a) + "," + std::to_string(h) + "]";
    };
    for (int n = 0; n < P; ++n)
        for (int h = 0; h < H; ++h) var(L.vre, 0.0, 0.0, tag("vre", n, h));
    for (int n = 0; n < P; ++n)
        for (int h = 0; h < H; ++h)
            var(L.gas, dt * tg.vom * s, top.emission_factor * dt * tg.heat_rate, tag("gas", n, h));
    for (int n = 0; n < P; ++n)
        for (int h = 0; h < H; ++h)
            var(L.ccs, dt * tc.vom * s, top.emission_factor * dt * tc.heat_rate * (1.0 - top.ccs_capture),
                tag("ccs", n, h));
    for (int n = 0; n < P; ++n)
        for (int h = 0; h < H; ++h) var(L.charge, 0.0, 0.0, tag("charge", n, h));
    for (int n = 0; n < P; ++n)
        for (int h = 0; h < H; ++h) var(L.discharge, dt * top.storage.vom * s, 0.0, tag("discharge", n, h));
    for (int n = 0; n < P; ++n)
        for (int h = 0; h < H; ++h) var(L.soc, 0.0, 0.0, tag("soc", n, h));
    for (int n = 0; n < P; ++n)
        for (int h = 0; h < H; ++h) var(L.shed, dt * top.power_shed_penalty * s, 0.0, tag("shed", n, h));
    for (int e = 0; e < E; ++e)
        for (int h = 0; h < H; ++h) var(L.flow_fwd, dt * top.transmission_cost * s, 0.0, tag("flow+", e, h));
    for (int e = 0; e < E; ++e)
        for (int h = 0; h < H; ++h) var(L.flow_rev, dt * top.transmission_cost * s, 0.0, tag("flow-", e, h));
    for (int j = 0; j < G; ++j) var(L.gas_import, top.gas_nodes[j].import_cost * s, 0.0, "import[" + std::to_string(j) + "]");
    for (int j = 0; j < G; ++j) var(L.gas_shed, top.gas_shed_penalty * s, 0.0, "gas_shed[" + std::to_string(j) + "]");
    for (int p = 0; p < Lp; ++p) var(L.pipe_fwd, top.pipeline_cost * s, 0.0, "pipe+[" + std::to_string(p) + "]");
    for (int p = 0; p < Lp; ++p) var(L.pipe_rev, top.pipeline_cost * s, 0.0, "pipe-[" + std::to_string(p) + "]");

    const double eta_c = top.storage.charge_eff, eta_d = top.storage.discharge_eff;
    for (int n = 0; n < P; ++n)
        for (int h = 0; h < H; ++h) {
            const int i = n * H + h;
            std::vector<std::pair<int, double>> t{{L.vre[i], 1.0},       {L.gas[i], 1.0},
                                                  {L.ccs[i], 1.0},       {L.discharge[i], 1.0},
                                                  {L.charge[i], -1.0},   {L.shed[i], 1.0}};
            for (int e = 0; e < E; ++e) {
                const PowerEdge& pe = top.power_edges[e];
                const int f = e * H + h;
                if (pe.to == n) {
                    t.emplace_back(L.flow_fwd[f], 1.0);
                    t.emplace_back(L.flow_rev[f], -1.0);
                }
                if (pe.from == n) {
                    t.emplace_back(L.flow_fwd[f], -1.0);
                    t.emplace_back(L.flow_rev[f], 1.0);
                }
            }
            L.balance_row.push_back(mb.add_row(t, RowSense::equal, 0.0, tag("balance", n, h)));
        }
    for (int n = 0; n < P; ++n)
        for (int h = 0; h < H; ++h) {
            const int i = n * H + h, prev = n * H + (h + H - 1) % H;
            std::vector<std::pair<int, double>> t{{L.soc[i], 1.0},
                                                  {L.soc[prev], -1.0},
                                                  {L.charge[i], -eta_c * dt},
                                                  {L.discharge[i], dt / eta_d}};
            L.soc_row.push_back(mb.add_row(t, RowSense::equal, 0.0, tag("soc", n, h)));
        }
    for (int j = 0; j < G; ++j) {
        std::vector<std::pair<int, double>> t{{L.gas_import[j], 1.0}, {L.gas_shed[j], 1.0}};
        for (int p = 0; p < Lp; ++p) {
            const Pipeline& pl = top.pipelines[p];
            if (pl.to == j) {
                t.emplace_back(L.pipe_fwd[p], 1.0);
                t.emplace_back(L.pipe_rev[p], -1.0);
            }
            if (pl.from == j) {
                t.emplace_back(L.pipe_fwd[p], -1.0);
                t.emplace_back(L.pipe_rev[p], 1.0);
            }
        }
        for (int n = 0; n < P; ++n) {
            if (top.power_nodes[n].gas_node != j) continue;
            for (int h = 0; h < H; ++h) {
                t.emplace_back(L.gas[n * H + h], -dt * tg.heat_rate);
                t.emplace_back(L.ccs[n * H + h], -dt * tc.heat_rate);
            }
        }
        L.gas_balance_row.push_back(mb.add_row(t, RowSense::equal, 0.0, "gas_balance[" + std::to_string(j) + "]"));
    }
    for (int k : {kGas, kCcs}) {
        if (!ramp_limited(top, k, H)) continue;
        const std::vector<int>& g = k == kGas ? L.gas : L.ccs;
        for (int n = 0; n < P; ++n)
            for (int h = 1; h < H; ++h) {
                const int i = n * H + h;
                for (double sign : {1.0, -1.0}) {
                    const int r = mb.add_row({{g[i], sign}, {g[i - 1], -sign}}, RowSense::less_equal, 0.0,
                                             tag(sign > 0 ? "ramp_up" : "ramp_down", n, h));
                    T.ramp_rows.push_back(r);
                    T.ramp_tech.push_back(k);
                    T.ramp_node.push_back(n);
                    em.push_back(0.0);  // the slack column just added
                }
            }
    }
    T.lp = mb.build();
    T.emissions = std::move(em);
    L.num_cols = T.lp.num_cols();
    L.num_rows = T.lp.num_rows();
    for (int j = 0; j < L.num_cols; ++j) T.lp.upper[j] = kInf;
    return T;
}

/// Per-day bounds and links for one day's data.
DayBlock make_block(const SystemTopology& top, const DayTemplate& T, const StageOneLayout& X,
                    const data::DayData& d, double cost_weight, double emission_weight, int group) {
    const DayLayout& L = T.layout;
    const int P = static_cast<int>(top.power_nodes.size());
    const int H = L.hours;
    const double dt = 24.0 / H;
    if (d.hours() != H || d.power_load.rows() != P || d.gas_load.size() != static_cast<Eigen::Index>(top.gas_nodes.size()))
        throw BuildError("day " + std::to_string(d.day) + " of " + d.scenario_id +
                         " does not match the topology dimensions");
    DayBlock b;
    b.scenario_id = d.scenario_id;
    b.day = d.day;
    b.cost_weight = cost_weight;
    b.emission_weight = emission_weight;
    b.group = group;
    b.rhs.assign(L.num_rows, 0.0);
    b.upper.assign(L.num_cols, kInf);
    const TechParams& tg = top.techs[kGas];
    const TechParams& tc = top.techs[kCcs];
    for (int n = 0; n < P; ++n) {
        const PowerNode& pn = top.power_nodes[n];
        for (int h = 0; h < H; ++h) {
            const int i = n * H + h;
            b.rhs[L.balance_row[i]] = d.power_load(n, h);
            const double cf[3] = {d.solar_cf(n, h), d.onshore_cf(n, h), d.offshore_cf(n, h)};
            double vre = 0.0;
            for (int v = 0; v < 3; ++v) {
                const int k = kVre[v];
                vre += cf[v] * top.techs[k].unit_mw * pn.existing[k];
                b.bound_links.push_back({L.vre[i], X.built[n][k], cf[v] * top.techs[k].unit_mw});
            }
            b.upper[L.vre[i]] = vre;
            b.upper[L.gas[i]] = tg.unit_mw * pn.existing[kGas];
            b.bound_links.push_back({L.gas[i], X.built[n][kGas], tg.unit_mw});
            b.bound_links.push_back({L.gas[i], X.retired[n], -tg.unit_mw});
            b.upper[L.ccs[i]] = tc.unit_mw * pn.existing[kCcs];
            b.bound_links.push_back({L.ccs[i], X.built[n][kCcs], tc.unit_mw});
            b.upper[L.charge[i]] = 0.0;
            b.bound_links.push_back({L.charge[i], X.storage_power[n], 1.0});
            b.upper[L.discharge[i]] = 0.0;
            b.bound_links.push_back({L.discharge[i], X.storage_power[n], 1.0});
            b.upper[L.soc[i]] = 0.0;
            b.bound_links.push_back({L.soc[i], X.storage_energy[n], 1.0});
            b.upper[L.shed[i]] = d.power_load(n, h);
        }
    }
    for (std::size_t e = 0; e < top.power_edges.size(); ++e) {
        const PowerEdge& pe = top.power_edges[e];
        for (int h = 0; h < H; ++h) {
            for (int col : {L.flow_fwd[e * H + h], L.flow_rev[e * H + h]}) {
                b.upper[col] = pe.existing_mw;
                b.bound_links.push_back({col, X.lines[e], pe.unit_mw});
            }
        }
    }
    for (std::size_t j = 0; j < top.gas_nodes.size(); ++j) {
        b.rhs[L.gas_balance_row[j]] = d.gas_load[static_cast<Eigen::Index>(j)];
        b.upper[L.gas_import[j]] = top.gas_nodes[j].max_import;
        b.upper[L.gas_shed[j]] = d.gas_load[static_cast<Eigen::Index>(j)];
    }
    for (std::size_t p = 0; p < top.pipelines.size(); ++p)
        for (int col : {L.pipe_fwd[p], L.pipe_rev[p]}) {
            b.upper[col] = top.pipelines[p].capacity;
            b.bound_links.push_back({col, X.pipelines[p], 1.0});
        }
    for (std::size_t r = 0; r < T.ramp_rows.size(); ++r) {
        const int k = T.ramp_tech[r], n = T.ramp_node[r];
        const TechParams& t = top.techs[k];
        const double c = t.ramp * dt * t.unit_mw;
        b.rhs[T.ramp_rows[r]] = c * top.power_nodes[n].existing[k];
        b.row_links.push_back({T.ramp_rows[r], X.built[n][k], c});
        if (k == kGas) b.row_links.push_back({T.ramp_rows[r], X.retired[n], -c});
    }
    return b;
}

CepInstance make_instance(const SystemTopology& top, int hours) {
    top.validate();
    if (hours <= 0 || 24 % hours != 0) throw BuildError("hours per day must divide 24");
    CepInstance inst;
    StageOne s1 = build_stage_one(top);
    inst.stage1 = std::move(s1.lp);
    inst.integer = std::move(s1.integer);
    inst.x_layout = s1.layout;
    DayTemplate T = build_day_template(top, hours);
    inst.day = std::move(T.lp);
    inst.emissions = std::move(T.emissions);
    inst.y_layout = T.layout;
    inst.cost_scale = top.cost_scale;
    return inst;
}

void append_days(CepInstance& inst, const SystemTopology& top, const std::vector<data::DayData>& days,
                 const std::vector<double>& cost_weights, const std::vector<double>& emission_weights,
                 int group) {
    const DayTemplate T = build_day_template(top, inst.y_layout.hours);
    for (std::size_t i = 0; i < days.size(); ++i)
        inst.blocks.push_back(make_block(top, T, inst.x_layout, days[i], cost_weights[i], emission_weights[i], group));
}

}  // namespace

void CepInstance::day_bounds(const DayBlock& b, const std::vector<double>& x, std::vector<double>& rhs,
                             std::vector<double>& upper) const {
    rhs = b.rhs;
    upper = b.upper;
    for (const RowLink& l : b.row_links) rhs[l.row] += l.coef * x[l.x_col];
    for (const BoundLink& l : b.bound_links) upper[l.col] += l.coef * x[l.x_col];
    for (std::size_t j = 0; j < upper.size(); ++j) upper[j] = std::max(upper[j], day.lower[j]);
}

long CepInstance::flat_nonzeros() const {
    long per_day = day.A.nonzeros();
    if (!blocks.empty()) per_day += 2L * static_cast<long>(blocks.front().bound_links.size()) +
                                    static_cast<long>(blocks.front().row_links.size());
    long em = 0;
    for (double e : emissions) em += e != 0.0 ? 1 : 0;
    return stage1.A.nonzeros() + static_cast<long>(blocks.size()) * (per_day + em) + num_groups();
}

DimensionCounts count_dimensions(const SystemTopology& top, int H, int D, int S) {
    const int P = static_cast<int>(top.power_nodes.size());
    const int E = static_cast<int>(top.power_edges.size());
    const int G = static_cast<int>(top.gas_nodes.size());
    const int L = static_cast<int>(top.pipelines.size());
    const bool rg = ramp_limited(top, kGas, H), rc = ramp_limited(top, kCcs, H);
    const int R = (rg ? 1 : 0) + (rc ? 1 : 0);
    DimensionCounts c;
    c.stage1_cols = 10 * P + E + L;
    c.stage1_rows = 2 * P;
    c.stage1_integer = 6 * P + E;
    c.day_cols = 7 * P * H + 2 * E * H + 2 * G + 2 * L + 2 * R * P * (H - 1);
    c.day_rows = 2 * P * H + G + 2 * R * P * (H - 1);
    c.linked_cols = 6 * P * H + 2 * E * H + 2 * L;
    c.bound_links_per_day = 9 * P * H + 2 * E * H + 2 * L;
    c.row_links_per_day = 2 * P * (H - 1) * ((rg ? 2 : 0) + (rc ? 1 : 0));
    c.flat_cols = c.stage1_cols + D * (c.day_cols + c.linked_cols) + S;
    c.flat_rows = c.stage1_rows + D * (c.day_rows + c.linked_cols) + S;
    return c;
}

CepInstance build_surrogate(const SystemTopology& top, const std::vector<data::DayData>& days,
                            const std::vector<double>& weights, int horizon_days) {
    if (days.empty()) throw BuildError("surrogate needs at least one representative day");
    if (days.size() != weights.size()) throw BuildError("one weight per representative day is required");
    if (horizon_days <= 0) throw BuildError("horizon must be positive");
    for (double w : weights)
        if (!(w > 0.0)) throw BuildError("representative-day weights must be positive");
    top.check_against(static_cast<int>(days.front().power_load.rows()),
                      static_cast<int>(days.front().gas_load.size()));
    CepInstance inst = make_instance(top, days.front().hours());
    const double annual = 365.0 / horizon_days;
    std::vector<double> w(weights.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = annual * weights[i];
    append_days(inst, top, days, w, w, 0);
    inst.caps = {top.emission_cap};
    return inst;
}

CepInstance build_surrogate(const SystemTopology& top, const rpc::RepresentativeDaySet& r,
                            const data::SampleSet& sample) {
    if (r.days.empty()) throw BuildError("representative day set is empty");
    std::vector<data::DayData> days;
    for (std::size_t i = 0; i < r.days.size(); ++i) {
        int idx = i < r.sample_index.size() ? r.sample_index[i] : -1;
        if (idx < 0 || idx >= static_cast<int>(sample.size()) ||
            sample.profiles[idx].data.scenario_id != r.days[i].scenario_id ||
            sample.profiles[idx].data.day != r.days[i].day)
            idx = sample.find(r.days[i].scenario_id, r.days[i].day);
        if (idx < 0)
            throw BuildError("representative day " + std::to_string(r.days[i].day) + " references unknown scenario '" +
                             r.days[i].scenario_id + "'");
        days.push_back(sample.profiles[idx].data);
    }
    return build_surrogate(top, days, r.weights, sample.days_per_scenario);
}

CepInstance build_full_cep(const SystemTopology& top, const std::vector<const data::Scenario*>& scenarios,
                           const FullCepOptions& options) {
    if (scenarios.empty()) throw BuildError("extensive form needs at least one scenario");
    const data::Scenario& first = *scenarios.front();
    top.check_against(first.power_nodes(), first.gas_nodes());
    CepInstance inst = make_instance(top, first.hours_per_day);
    const DimensionCounts c = count_dimensions(top, first.hours_per_day, first.days * static_cast<int>(scenarios.size()),
                                               static_cast<int>(scenarios.size()));
    const long estimate = static_cast<long>(c.flat_cols) * 3;
    if (estimate > options.max_nonzeros)
        throw BuildError("extensive form with about " + std::to_string(estimate) +
                         " nonzeros exceeds the guard of " + std::to_string(options.max_nonzeros) +
                         "; use the surrogate path");
    const double annual = 365.0 / first.days;
    const double prob = 1.0 / static_cast<double>(scenarios.size());
    for (std::size_t g = 0; g < scenarios.size(); ++g) {
        const data::Scenario& s = *scenarios[g];
        std::vector<data::DayData> days;
        for (int d = 0; d < s.days; ++d) days.push_back(s.day(d));
        append_days(inst, top, days, std::vector<double>(days.size(), annual * prob),
                    std::vector<double>(days.size(), annual), static_cast<int>(g));
        inst.caps.push_back(top.emission_cap);
    }
    if (inst.flat_nonzeros() > options.max_nonzeros)
        throw BuildError("extensive form with " + std::to_string(inst.flat_nonzeros()) +
                         " nonzeros exceeds the guard of " + std::to_string(options.max_nonzeros) +
                         "; use the surrogate path");
    return inst;
}

// ---------------------------------------------------------------------------
// Decisions

InvestmentDecision InvestmentDecision::zero(const SystemTopology& top) {
    InvestmentDecision d;
    const std::size_t P = top.power_nodes.size();
    d.units_built.assign(P, {});
    d.units_retired.assign(P, 0.0);
    d.lines_built.assign(top.power_edges.size(), 0.0);
    d.storage_power.assign(P, 0.0);
    d.storage_energy.assign(P, 0.0);
    d.pipeline_expansion.assign(top.pipelines.size(), 0.0);
    return d;
}

void to_json(json& j, const InvestmentDecision& x) {
    j = json{{"units_built", x.units_built},   {"units_retired", x.units_retired},
             {"lines_built", x.lines_built},   {"storage_power", x.storage_power},
             {"storage_energy", x.storage_energy}, {"pipeline_expansion", x.pipeline_expansion}};
}

void from_json(const json& j, InvestmentDecision& x) {
    j.at("units_built").get_to(x.units_built);
    j.at("units_retired").get_to(x.units_retired);
    j.at("lines_built").get_to(x.lines_built);
    j.at("storage_power").get_to(x.storage_power);
    j.at("storage_energy").get_to(x.storage_energy);
    j.at("pipeline_expansion").get_to(x.pipeline_expansion);
}

InvestmentDecision decode(const CepInstance& inst, const std::vector<double>& x) {
    const StageOneLayout& L = inst.x_layout;
    InvestmentDecision d;
    for (std::size_t n = 0; n < L.built.size(); ++n) {
        std::array<double, kTechs> b{};
        for (int k = 0; k < kTechs; ++k) b[k] = x[L.built[n][k]];
        d.units_built.push_back(b);
        d.units_retired.push_back(x[L.retired[n]]);
        d.storage_power.push_back(x[L.storage_power[n]]);
        d.storage_energy.push_back(x[L.storage_energy[n]]);
    }
    for (int c : L.lines) d.lines_built.push_back(x[c]);
    for (int c : L.pipelines) d.pipeline_expansion.push_back(x[c]);
    return d;
}

std::vector<double> encode(const SystemTopology& top, const InvestmentDecision& d) {
    const StageOne s1 = build_stage_one(top);
    const StageOneLayout& L = s1.layout;
    const std::size_t P = top.power_nodes.size();
    if (d.units_built.size() != P || d.units_retired.size() != P || d.storage_power.size() != P ||
        d.storage_energy.size() != P || d.lines_built.size() != top.power_edges.size() ||
        d.pipeline_expansion.size() != top.pipelines.size())
        throw BuildError("investment decision does not match the topology");
    std::vector<double> x(L.num_cols, 0.0);
    for (std::size_t n = 0; n < P; ++n) {
        for (int k = 0; k < kTechs; ++k) x[L.built[n][k]] = d.units_built[n][k];
        x[L.retired[n]] = d.units_retired[n];
        x[L.storage_power[n]] = d.storage_power[n];
        x[L.storage_energy[n]] = d.storage_energy[n];
        x[s1.min_slack[n]] = d.storage_energy[n] - top.storage.min_duration * d.storage_power[n];
        x[s1.max_slack[n]] = top.storage.max_duration * d.storage_power[n] - d.storage_energy[n];
    }
    for (std::size_t e = 0; e < L.lines.size(); ++e) x[L.lines[e]] = d.lines_built[e];
    for (std::size_t p = 0; p < L.pipelines.size(); ++p) x[L.pipelines[p]] = d.pipeline_expansion[p];
    return x;
}

void check_decision(const SystemTopology& top, const InvestmentDecision& d) {
    const StageOne s1 = build_stage_one(top);
    const std::vector<double> x = encode(top, d);
    const double tol = 1e-6;
    for (int j = 0; j < s1.lp.num_cols(); ++j)
        if (x[j] < s1.lp.lower[j] - tol || x[j] > s1.lp.upper[j] + tol)
            throw BuildError("investment component " + s1.lp.col_names[j] + " = " + std::to_string(x[j]) +
                             " violates its bounds");
}

double investment_cost(const SystemTopology& top, const InvestmentDecision& d) {
    const StageOne s1 = build_stage_one(top);
    const std::vector<double> x = encode(top, d);
    return s1.lp.objective(x) / top.cost_scale;
}

RecourseInstance build_recourse(const SystemTopology& top, const InvestmentDecision& x,
                                const data::Scenario& scenario) {
    top.check_against(scenario.power_nodes(), scenario.gas_nodes());
    check_decision(top, x);
    const std::vector<double> xv = encode(top, x);
    CepInstance full = make_instance(top, scenario.hours_per_day);
    std::vector<data::DayData> days;
    for (int d = 0; d < scenario.days; ++d) days.push_back(scenario.day(d));
    const double annual = 365.0 / scenario.days;
    append_days(full, top, days, std::vector<double>(days.size(), annual),
                std::vector<double>(days.size(), annual), 0);
    RecourseInstance r;
    for (DayBlock& b : full.blocks) {
        std::vector<double> rhs, upper;
        full.day_bounds(b, xv, rhs, upper);
        b.rhs = std::move(rhs);
        b.upper = std::move(upper);
        b.bound_links.clear();
        b.row_links.clear();
        r.blocks.push_back(std::move(b));
    }
    r.day = std::move(full.day);
    r.emissions = std::move(full.emissions);
    r.y_layout = full.y_layout;
    r.cost_scale = full.cost_scale;
    r.caps = {top.emission_cap};
    r.stage1 = LinearProgram{};
    r.stage1.A.rows = 0;
    r.stage1.A.cols = 0;
    return r;
}

// ---------------------------------------------------------------------------
// Flat form

FlatInstance flatten(const CepInstance& inst) {
    FlatInstance f;
    LinearProgram& lp = f.problem.lp;
    std::vector<std::tuple<int, int, double>> trip;
    const int n1 = inst.stage1.num_cols(), m1 = inst.stage1.num_rows();
    auto add_col = [&](double cost, double lo, double up, bool integer, int block) {
        lp.cost.push_back(cost);
        lp.lower.push_back(lo);
        lp.upper.push_back(up);
        f.problem.integer.push_back(integer);
        f.col_block.push_back(block);
        return static_cast<int>(lp.cost.size()) - 1;
    };
    auto add_row = [&](double rhs, int block) {
        lp.rhs.push_back(rhs);
        f.row_block.push_back(block);
        return static_cast<int>(lp.rhs.size()) - 1;
    };
    for (int j = 0; j < n1; ++j)
        add_col(inst.stage1.cost[j], inst.stage1.lower[j], inst.stage1.upper[j],
                j < static_cast<int>(inst.integer.size()) && inst.integer[j], -1);
    for (int i = 0; i < m1; ++i) add_row(inst.stage1.rhs[i], -1);
    for (int j = 0; j < n1; ++j)
        for (int k = inst.stage1.A.col_start[j]; k < inst.stage1.A.col_start[j + 1]; ++k)
            trip.emplace_back(inst.stage1.A.row_index[k], j, inst.stage1.A.value[k]);

    const int nd = inst.day.num_cols(), md = inst.day.num_rows();
    std::vector<std::vector<std::pair<int, double>>> em_terms(inst.num_groups());
    for (std::size_t b = 0; b < inst.blocks.size(); ++b) {
        const DayBlock& blk = inst.blocks[b];
        const int bi = static_cast<int>(b);
        std::set<int> linked;
        for (const BoundLink& l : blk.bound_links) linked.insert(l.col);
        const int c0 = static_cast<int>(lp.cost.size());
        f.block_col_start.push_back(c0);
        for (int j = 0; j < nd; ++j)
            add_col(blk.cost_weight * inst.day.cost[j], inst.day.lower[j],
                    linked.count(j) ? kInf : blk.upper[j], false, bi);
        const int r0 = static_cast<int>(lp.rhs.size());
        for (int i = 0; i < md; ++i) add_row(blk.rhs[i], bi);
        for (int j = 0; j < nd; ++j)
            for (int k = inst.day.A.col_start[j]; k < inst.day.A.col_start[j + 1]; ++k)
                trip.emplace_back(r0 + inst.day.A.row_index[k], c0 + j, inst.day.A.value[k]);
        for (const RowLink& l : blk.row_links) trip.emplace_back(r0 + l.row, l.x_col, -l.coef);
        for (int col : linked) {
            const int r = add_row(blk.upper[col], bi);
            const int s = add_col(0.0, 0.0, kInf, false, bi);
            trip.emplace_back(r, c0 + col, 1.0);
            trip.emplace_back(r, s, 1.0);
            for (const BoundLink& l : blk.bound_links)
                if (l.col == col) trip.emplace_back(r, l.x_col, -l.coef);
        }
        for (int j = 0; j < nd; ++j)
            if (inst.emissions[j] != 0.0)
                em_terms[blk.group].emplace_back(c0 + j, blk.emission_weight * inst.emissions[j]);
    }
    for (int g = 0; g < inst.num_groups(); ++g) {
        const int r = add_row(inst.caps[g], -2);
        f.linking_row_start.push_back(r);
        const int s = add_col(0.0, 0.0, kInf, false, -2);
        trip.emplace_back(r, s, 1.0);
        for (const auto& [c, v] : em_terms[g]) trip.emplace_back(r, c, v);
    }
    lp.objective_offset = inst.stage1.objective_offset;
    lp.A = solver::SparseMatrix::from_triplets(static_cast<int>(lp.rhs.size()), static_cast<int>(lp.cost.size()),
                                               std::move(trip));
    return f;
}

AuditReport audit_structure(const FlatInstance& flat) {
    AuditReport r;
    const solver::SparseMatrix& A = flat.problem.lp.A;
    for (int j = 0; j < A.cols; ++j) {
        const int cb = flat.col_block[j];
        for (int k = A.col_start[j]; k < A.col_start[j + 1]; ++k) {
            const int rb = flat.row_block[A.row_index[k]];
            bool ok = true;
            if (cb >= 0) ok = rb == cb || rb == -2;
            else if (cb == -1) ok = rb != -2;
            else ok = rb == -2;
            if (!ok) {
                r.ok = false;
                if (r.violations.size() < 20)
                    r.violations.push_back("column " + std::to_string(j) + " (block " + std::to_string(cb) +
                                           ") touches row " + std::to_string(A.row_index[k]) + " (block " +
                                           std::to_string(rb) + ")");
            }
        }
    }
    return r;
}

std::vector<double> emissions_by_group(const CepInstance& inst, const FlatInstance& flat,
                                       const std::vector<double>& solution) {
    std::vector<double> out(inst.num_groups(), 0.0);
    for (std::size_t b = 0; b < inst.blocks.size(); ++b) {
        const DayBlock& blk = inst.blocks[b];
        const int c0 = flat.block_col_start[b];
        double e = 0.0;
        for (int j = 0; j < inst.day.num_cols(); ++j) e += inst.emissions[j] * solution[c0 + j];
        out[blk.group] += blk.emission_weight * e;
    }
    return out;
}

CapacitySummary capacity_summary(const SystemTopology& top, const InvestmentDecision& d) {
    CapacitySummary c;
    for (std::size_t n = 0; n < top.power_nodes.size(); ++n) {
        const PowerNode& pn = top.power_nodes[n];
        for (int k = 0; k < kTechs; ++k) {
            double units = pn.existing[k] + d.units_built[n][k];
            if (k == kGas) units -= d.units_retired[n];
            c.mw[k] += units * top.techs[k].unit_mw;
        }
        c.storage_mw += d.storage_power[n];
        c.storage_mwh += d.storage_energy[n];
    }
    for (std::size_t e = 0; e < top.power_edges.size(); ++e) c.new_line_mw += d.lines_built[e] * top.power_edges[e].unit_mw;
    for (double p : d.pipeline_expansion) c.pipeline_expansion += p;
    return c;
}

OperatingBreakdown operating_breakdown(const CepInstance& inst, const std::vector<double>& totals) {
    OperatingBreakdown o;
    const DayLayout& L = inst.y_layout;
    const double dt = 24.0 / L.hours, inv = 1.0 / inst.cost_scale;
    auto cost = [&](const std::vector<int>& cols) {
        double c = 0.0;
        for (int j : cols) c += inst.day.cost[j] * totals[j];
        return c * inv;
    };
    auto sum = [&](const std::vector<int>& cols) {
        double c = 0.0;
        for (int j : cols) c += totals[j];
        return c;
    };
    o.gas_fuel = cost(L.gas_import);
    o.variable_om = cost(L.gas) + cost(L.ccs) + cost(L.discharge) + cost(L.vre);
    o.power_shedding = cost(L.shed);
    o.gas_shedding = cost(L.gas_shed);
    o.network = cost(L.flow_fwd) + cost(L.flow_rev) + cost(L.pipe_fwd) + cost(L.pipe_rev);
    o.shed_mwh = sum(L.shed) * dt;
    o.gas_shed_mmbtu = sum(L.gas_shed);
    o.vre_mwh = sum(L.vre) * dt;
    o.gas_mwh = sum(L.gas) * dt;
    o.ccs_mwh = sum(L.ccs) * dt;
    o.gas_import_mmbtu = sum(L.gas_import);
    return o;
}

}  // namespace stochcep::cep
