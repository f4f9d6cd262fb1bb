#include "stochcep/scenario_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stochcep/errors.hpp"

namespace stochcep::data {

namespace fs = std::filesystem;
using nlohmann::json;

DayData Scenario::day(int d) const {
    if (d < 0 || d >= days) throw LoadError("day " + std::to_string(d) + " out of range for " + id);
    const int H = hours_per_day;
    DayData out;
    out.scenario_id = id;
    out.day = d;
    out.power_load = power_load.middleCols(static_cast<Eigen::Index>(d) * H, H);
    out.solar_cf = solar_cf.middleCols(static_cast<Eigen::Index>(d) * H, H);
    out.onshore_cf = onshore_cf.middleCols(static_cast<Eigen::Index>(d) * H, H);
    out.offshore_cf = offshore_cf.middleCols(static_cast<Eigen::Index>(d) * H, H);
    out.gas_load = gas_load.col(d);
    return out;
}

void Scenario::validate() const {
    const Eigen::Index cols = static_cast<Eigen::Index>(days) * hours_per_day;
    if (days <= 0 || hours_per_day <= 0) throw LoadError(id + ": days and hours_per_day must be positive");
    auto check = [&](const Eigen::MatrixXd& m, const char* name, Eigen::Index rows, Eigen::Index c,
                     bool unit) {
        if (m.rows() != rows || m.cols() != c)
            throw LoadError(id + ": " + name + " has shape " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                const double v = m(i, j);
                if (!std::isfinite(v) || v < 0.0 || (unit && v > 1.0))
                    throw LoadError(id + ": " + name + " value " + std::to_string(v) + " at node " +
                                    std::to_string(i) + ", column " + std::to_string(j));
            }
    };
    const Eigen::Index P = power_load.rows();
    if (P <= 0 || gas_load.rows() <= 0) throw LoadError(id + ": no nodes");
    check(power_load, "power_load", P, cols, false);
    check(solar_cf, "solar_cf", P, cols, true);
    check(onshore_cf, "onshore_cf", P, cols, true);
    check(offshore_cf, "offshore_cf", P, cols, true);
    check(gas_load, "gas_load", gas_load.rows(), days, false);
}

void AccessTracer::set_phase(std::string phase) {
    std::lock_guard lock(mutex_);
    phase_ = std::move(phase);
}

std::string AccessTracer::phase() const {
    std::lock_guard lock(mutex_);
    return phase_;
}

void AccessTracer::record(const std::string& scenario_id) {
    std::lock_guard lock(mutex_);
    events_.push_back({phase_, scenario_id});
}

std::vector<AccessTracer::Event> AccessTracer::events() const {
    std::lock_guard lock(mutex_);
    return events_;
}

void AccessTracer::clear() {
    std::lock_guard lock(mutex_);
    events_.clear();
}

ScenarioSet::ScenarioSet(std::vector<Scenario> scenarios) : scenarios_(std::move(scenarios)) {
    for (const Scenario& s : scenarios_) {
        s.validate();
        const Scenario& f = scenarios_.front();
        if (s.power_nodes() != f.power_nodes() || s.gas_nodes() != f.gas_nodes() ||
            s.days != f.days || s.hours_per_day != f.hours_per_day)
            throw LoadError("scenario " + s.id + " has dimensions different from " + f.id);
    }
    for (std::size_t i = 0; i < scenarios_.size(); ++i)
        for (std::size_t j = i + 1; j < scenarios_.size(); ++j)
            if (scenarios_[i].id == scenarios_[j].id) throw LoadError("duplicate scenario id " + scenarios_[i].id);
}

std::vector<std::string> ScenarioSet::ids() const {
    std::vector<std::string> out;
    for (const Scenario& s : scenarios_) out.push_back(s.id);
    return out;
}

bool ScenarioSet::contains(std::string_view id) const {
    return std::any_of(scenarios_.begin(), scenarios_.end(), [&](const Scenario& s) { return s.id == id; });
}

int ScenarioSet::power_nodes() const { return empty() ? 0 : scenarios_.front().power_nodes(); }
int ScenarioSet::gas_nodes() const { return empty() ? 0 : scenarios_.front().gas_nodes(); }
int ScenarioSet::hours_per_day() const { return empty() ? 0 : scenarios_.front().hours_per_day; }
int ScenarioSet::days() const { return empty() ? 0 : scenarios_.front().days; }

const Scenario& ScenarioSet::get(std::string_view id) const {
    for (const Scenario& s : scenarios_) {
        if (s.id == id) {
            if (tracer_) tracer_->record(s.id);
            return s;
        }
    }
    throw LoadError("unknown scenario " + std::string(id));
}

std::vector<const Scenario*> ScenarioSet::select(const std::vector<std::string>& ids) const {
    std::vector<const Scenario*> out;
    for (const std::string& id : ids) out.push_back(&get(id));
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const fs::path& file, const std::vector<std::string>& required) {
    std::ifstream in(file);
    if (!in) throw LoadError("cannot open " + file.string());
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw LoadError(file.string() + ": empty file");
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        std::istringstream ss(s);
        while (std::getline(ss, cur, ',')) {
            while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
            while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
            out.push_back(cur);
        }
        return out;
    };
    t.header = split(line);
    std::vector<int> index;
    for (const std::string& name : required) {
        auto it = std::find(t.header.begin(), t.header.end(), name);
        if (it == t.header.end()) throw LoadError(file.string() + ": missing column " + name);
        index.push_back(static_cast<int>(it - t.header.begin()));
    }
    int row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line);
        std::vector<double> row;
        for (std::size_t k = 0; k < required.size(); ++k) {
            const int c = index[k];
            if (c >= static_cast<int>(cells.size()) || cells[c].empty())
                throw LoadError(file.string() + ": row " + std::to_string(row_no) + ", column " +
                                required[k] + ": missing value");
            double v = 0.0;
            const std::string& cell = cells[c];
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
                throw LoadError(file.string() + ": row " + std::to_string(row_no) + ", column " +
                                required[k] + ": invalid value '" + cell + "'");
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

int as_index(double v, const fs::path& file, std::size_t row, const char* col) {
    if (v < 0 || v != std::floor(v) || v > 1e8)
        throw LoadError(file.string() + ": row " + std::to_string(row + 2) + ", column " + col +
                        ": not a non-negative integer");
    return static_cast<int>(v);
}

}  // namespace

ScenarioSet load_scenarios(const fs::path& dir, const LoadSchema& schema) {
    if (!fs::is_directory(dir)) throw LoadError("not a directory: " + dir.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 4 && name.ends_with(".csv") && !name.ends_with(".gas.csv"))
            ids.push_back(name.substr(0, name.size() - 4));
    }
    if (ids.empty()) throw LoadError("no scenarios found in " + dir.string());
    std::sort(ids.begin(), ids.end());

    std::vector<Scenario> scenarios;
    for (const std::string& id : ids) {
        const fs::path pfile = dir / (id + ".csv");
        const fs::path gfile = dir / (id + ".gas.csv");
        if (!fs::exists(gfile)) throw LoadError("missing file " + gfile.string());
        static const std::vector<std::string> pcols{"day", "hour", "node", "power_load",
                                                    "solar_cf", "onshore_cf", "offshore_cf"};
        const CsvTable pt = read_csv(pfile, pcols);
        const CsvTable gt = read_csv(gfile, {"day", "node", "gas_load"});
        int D = 0, H = 0, P = 0, G = 0;
        for (std::size_t r = 0; r < pt.rows.size(); ++r) {
            D = std::max(D, as_index(pt.rows[r][0], pfile, r, "day") + 1);
            H = std::max(H, as_index(pt.rows[r][1], pfile, r, "hour") + 1);
            P = std::max(P, as_index(pt.rows[r][2], pfile, r, "node") + 1);
        }
        for (std::size_t r = 0; r < gt.rows.size(); ++r) {
            D = std::max(D, as_index(gt.rows[r][0], gfile, r, "day") + 1);
            G = std::max(G, as_index(gt.rows[r][1], gfile, r, "node") + 1);
        }
        if (schema.power_nodes && *schema.power_nodes != P)
            throw LoadError(pfile.string() + ": expected " + std::to_string(*schema.power_nodes) + " power nodes");
        if (schema.gas_nodes && *schema.gas_nodes != G)
            throw LoadError(gfile.string() + ": expected " + std::to_string(*schema.gas_nodes) + " gas nodes");
        if (schema.hours_per_day && *schema.hours_per_day != H)
            throw LoadError(pfile.string() + ": expected " + std::to_string(*schema.hours_per_day) + " hours per day");
        if (schema.days && *schema.days != D)
            throw LoadError(pfile.string() + ": expected " + std::to_string(*schema.days) + " days");

        Scenario s;
        s.id = id;
        s.days = D;
        s.hours_per_day = H;
        const Eigen::Index cols = static_cast<Eigen::Index>(D) * H;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        s.power_load = Eigen::MatrixXd::Constant(P, cols, nan);
        s.solar_cf = s.power_load;
        s.onshore_cf = s.power_load;
        s.offshore_cf = s.power_load;
        s.gas_load = Eigen::MatrixXd::Constant(G, D, nan);
        for (std::size_t r = 0; r < pt.rows.size(); ++r) {
            const auto& v = pt.rows[r];
            const int d = static_cast<int>(v[0]), h = static_cast<int>(v[1]), n = static_cast<int>(v[2]);
            const Eigen::Index c = static_cast<Eigen::Index>(d) * H + h;
            const char* names[] = {"solar_cf", "onshore_cf", "offshore_cf"};
            for (int k = 0; k < 3; ++k)
                if (v[4 + k] < 0.0 || v[4 + k] > 1.0)
                    throw LoadError(pfile.string() + ": row " + std::to_string(r + 2) + ", column " +
                                    names[k] + ": capacity factor " + std::to_string(v[4 + k]) +
                                    " outside [0,1]");
            if (v[3] < 0.0)
                throw LoadError(pfile.string() + ": row " + std::to_string(r + 2) +
                                ", column power_load: negative load");
            s.power_load(n, c) = v[3];
            s.solar_cf(n, c) = v[4];
            s.onshore_cf(n, c) = v[5];
            s.offshore_cf(n, c) = v[6];
        }
        for (std::size_t r = 0; r < gt.rows.size(); ++r) {
            const auto& v = gt.rows[r];
            if (v[2] < 0.0)
                throw LoadError(gfile.string() + ": row " + std::to_string(r + 2) +
                                ", column gas_load: negative load");
            s.gas_load(static_cast<int>(v[1]), static_cast<int>(v[0])) = v[2];
        }
        auto missing = [&](const Eigen::MatrixXd& m, const fs::path& f, const char* what) {
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j)
                    if (std::isnan(m(i, j)))
                        throw LoadError(f.string() + ": missing " + what + " for node " +
                                        std::to_string(i) + ", column " + std::to_string(j));
        };
        missing(s.power_load, pfile, "power row");
        missing(s.gas_load, gfile, "gas row");
        scenarios.push_back(std::move(s));
    }
    return ScenarioSet(std::move(scenarios));
}

void write_scenario(const fs::path& dir, const Scenario& s) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream p(dir / (s.id + ".csv"));
    std::ofstream g(dir / (s.id + ".gas.csv"));
    if (!p || !g) throw IoError("cannot write scenario files in " + dir.string());
    p.precision(17);
    g.precision(17);
    p << "day,hour,node,power_load,solar_cf,onshore_cf,offshore_cf\n";
    for (int d = 0; d < s.days; ++d)
        for (int h = 0; h < s.hours_per_day; ++h)
            for (int n = 0; n < s.power_nodes(); ++n) {
                const Eigen::Index c = static_cast<Eigen::Index>(d) * s.hours_per_day + h;
                p << d << ',' << h << ',' << n << ',' << s.power_load(n, c) << ',' << s.solar_cf(n, c)
                  << ',' << s.onshore_cf(n, c) << ',' << s.offshore_cf(n, c) << '\n';
            }
    g << "day,node,gas_load\n";
    for (int d = 0; d < s.days; ++d)
        for (int n = 0; n < s.gas_nodes(); ++n) g << d << ',' << n << ',' << s.gas_load(n, d) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SyntheticSpec::validate() const {
    if (scenarios <= 0) throw SpecError("scenarios must be positive");
    if (power_nodes <= 0) throw SpecError("power_nodes must be positive");
    if (gas_nodes <= 0) throw SpecError("gas_nodes must be positive");
    if (days <= 0) throw SpecError("days must be positive");
    if (hours_per_day <= 0 || 24 % hours_per_day != 0)
        throw SpecError("hours_per_day must be a positive divisor of 24");
    if (power_load_mw.empty() || gas_load_mmbtu.empty()) throw SpecError("base loads must be given");
    for (double v : power_load_mw)
        if (!(v >= 0.0)) throw SpecError("power loads must be non-negative");
    for (double v : gas_load_mmbtu)
        if (!(v >= 0.0)) throw SpecError("gas loads must be non-negative");
    for (double c : {corr_power_gas, corr_gas_solar, corr_onshore_offshore})
        if (!(c > -1.0 && c < 1.0)) throw SpecError("correlation targets must lie in (-1, 1)");
    if (!(persistence >= 0.0 && persistence < 1.0)) throw SpecError("persistence must lie in [0, 1)");
}

#define STOCHCEP_SPEC_FIELDS(X)                                                              \
    X(scenarios) X(power_nodes) X(gas_nodes) X(days) X(hours_per_day) X(power_load_mw)       \
    X(gas_load_mmbtu) X(power_seasonal) X(power_summer) X(power_diurnal) X(gas_seasonal)     \
    X(solar_peak_cf) X(solar_seasonal) X(onshore_mean_cf) X(offshore_mean_cf)                \
    X(wind_seasonal) X(corr_power_gas) X(corr_gas_solar) X(corr_onshore_offshore)            \
    X(noise_power) X(noise_gas) X(noise_solar) X(noise_wind) X(year_spread) X(persistence)

void to_json(json& j, const SyntheticSpec& s) {
    j = json::object();
#define X(f) j[#f] = s.f;
    STOCHCEP_SPEC_FIELDS(X)
#undef X
}

void from_json(const json& j, SyntheticSpec& s) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
#define X(f) known = known || it.key() == #f;
        STOCHCEP_SPEC_FIELDS(X)
#undef X
        if (!known) throw SpecError("unknown synthetic spec field '" + it.key() + "'");
    }
    try {
#define X(f) \
    if (j.contains(#f)) j.at(#f).get_to(s.f);
        STOCHCEP_SPEC_FIELDS(X)
#undef X
    } catch (const json::exception& e) {
        throw SpecError(std::string("invalid synthetic spec: ") + e.what());
    }
}

#undef STOCHCEP_SPEC_FIELDS

SyntheticSpec load_synthetic_spec(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw SpecError("cannot open " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SpecError(file.string() + ": " + e.what());
    }
    SyntheticSpec s = j.get<SyntheticSpec>();
    s.validate();
    return s;
}

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

ScenarioSet generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int P = spec.power_nodes, G = spec.gas_nodes, D = spec.days, H = spec.hours_per_day;
    const double block = 24.0 / H;

    // Daily anomaly correlation: power, gas, solar, onshore, offshore.
    Eigen::Matrix<double, 5, 5> R = Eigen::Matrix<double, 5, 5>::Identity();
    R(0, 1) = R(1, 0) = spec.corr_power_gas;
    R(1, 2) = R(2, 1) = spec.corr_gas_solar;
    R(0, 2) = R(2, 0) = spec.corr_power_gas * spec.corr_gas_solar;
    R(3, 4) = R(4, 3) = spec.corr_onshore_offshore;
    Eigen::LLT<Eigen::Matrix<double, 5, 5>> llt(R);
    if (llt.info() != Eigen::Success) throw SpecError("correlation targets are not jointly feasible");
    const Eigen::Matrix<double, 5, 5> L = llt.matrixL();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Fixed geography shared by all scenarios.
    std::vector<double> solar_site(P), on_site(P), off_site(P), load_base(P), gas_base(G);
    for (int n = 0; n < P; ++n) {
        load_base[n] = spec.power_load_mw[n % spec.power_load_mw.size()];
        solar_site[n] = 0.9 + 0.2 * unif(rng);
        on_site[n] = 0.3 * (unif(rng) - 0.5);
        off_site[n] = 0.3 * (unif(rng) - 0.5);
    }
    for (int j = 0; j < G; ++j) gas_base[j] = spec.gas_load_mmbtu[j % spec.gas_load_mmbtu.size()];

    const int width = spec.scenarios > 100 ? 3 : 2;
    std::vector<Scenario> out;
    for (int w = 0; w < spec.scenarios; ++w) {
        Scenario s;
        std::ostringstream id;
        id << 's' << std::setw(width) << std::setfill('0') << w;
        s.id = id.str();
        s.days = D;
        s.hours_per_day = H;
        const Eigen::Index cols = static_cast<Eigen::Index>(D) * H;
        s.power_load.resize(P, cols);
        s.solar_cf.resize(P, cols);
        s.onshore_cf.resize(P, cols);
        s.offshore_cf.resize(P, cols);
        s.gas_load.resize(G, D);

        const double year_power = 1.0 + spec.year_spread * normal(rng);
        const double year_gas = 1.0 + 2.0 * spec.year_spread * normal(rng);
        const double year_wind = 0.5 * spec.year_spread * 5.0 * normal(rng);
        const double phi = spec.persistence, innov = std::sqrt(1.0 - phi * phi);
        Eigen::Matrix<double, 5, 1> u;
        for (int k = 0; k < 5; ++k) u[k] = normal(rng);
        u = (L * u).eval();
        std::vector<double> on_hour(P, 0.0), off_hour(P, 0.0);

        for (int d = 0; d < D; ++d) {
            if (d > 0) {
                Eigen::Matrix<double, 5, 1> e;
                for (int k = 0; k < 5; ++k) e[k] = normal(rng);
                u = phi * u + innov * (L * e);
            }
            const double c = std::cos(2.0 * std::numbers::pi * ((d % 365) - 15) / 365.0);
            const double summer = std::max(0.0, -c) * std::max(0.0, -c);
            const double half_daylight = 6.0 - 1.5 * c;
            const double clearness =
                std::clamp(0.72 + 0.1 * (-c) + spec.noise_solar * 0.5 * u[2], 0.05, 1.0);
            const double solar_level = spec.solar_peak_cf * (1.0 - spec.solar_seasonal * 0.5 * (c + 1.0));
            const double on_day = logit(spec.onshore_mean_cf) + spec.wind_seasonal * c + year_wind +
                                  spec.noise_wind * u[3];
            const double off_day = logit(spec.offshore_mean_cf) + spec.wind_seasonal * c + year_wind +
                                   spec.noise_wind * u[4];

            for (int j = 0; j < G; ++j) {
                const double v = gas_base[j] * year_gas *
                                 (1.0 + spec.gas_seasonal * c + spec.noise_gas * u[1] + 0.03 * normal(rng));
                s.gas_load(j, d) = std::max(0.05 * gas_base[j], v);
            }
            for (int h = 0; h < H; ++h) {
                const Eigen::Index col = static_cast<Eigen::Index>(d) * H + h;
                const double tau = (h + 0.5) * block;
                const double diurnal = -std::cos(2.0 * std::numbers::pi * (tau - 18.0) / 24.0);
                const double sun = std::abs(tau - 12.0) < half_daylight
                                       ? std::cos(std::numbers::pi * (tau - 12.0) / (2.0 * half_daylight))
                                       : 0.0;
                for (int n = 0; n < P; ++n) {
                    const double load = load_base[n] * year_power *
                                        (1.0 + spec.power_seasonal * c + spec.power_summer * summer +
                                         spec.power_diurnal * diurnal + spec.noise_power * u[0] +
                                         0.02 * normal(rng));
                    s.power_load(n, col) = std::max(0.0, load);
                    s.solar_cf(n, col) = std::clamp(solar_level * clearness * sun * solar_site[n], 0.0, 1.0);
                    on_hour[n] = 0.5 * on_hour[n] + 0.3 * normal(rng);
                    off_hour[n] = 0.5 * off_hour[n] + 0.3 * normal(rng);
                    s.onshore_cf(n, col) = sigmoid(on_day + on_site[n] + on_hour[n]);
                    s.offshore_cf(n, col) = sigmoid(off_day + off_site[n] + off_hour[n]);
                }
            }
        }
        out.push_back(std::move(s));
    }
    return ScenarioSet(std::move(out));
}

// ---------------------------------------------------------------------------
// Splits and sample sets

void to_json(json& j, const ScenarioSplit& s) {
    j = json{{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

void from_json(const json& j, ScenarioSplit& s) {
    j.at("train").get_to(s.train);
    j.at("validation").get_to(s.validation);
    j.at("test").get_to(s.test);
}

ScenarioSplit split_scenarios(const ScenarioSet& s, std::array<int, 3> counts, std::uint64_t seed) {
    for (int c : counts)
        if (c < 0) throw SplitError("split counts must be non-negative");
    if (counts[0] + counts[1] + counts[2] != static_cast<int>(s.size()))
        throw SplitError("split counts " + std::to_string(counts[0]) + "/" + std::to_string(counts[1]) +
                         "/" + std::to_string(counts[2]) + " do not add up to " +
                         std::to_string(s.size()) + " scenarios");
    std::vector<std::string> ids = s.ids();
    std::mt19937_64 rng(seed);
    for (std::size_t i = ids.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(ids[i - 1], ids[pick(rng)]);
    }
    ScenarioSplit out;
    auto take = [&](int from, int n) {
        std::vector<std::string> part(ids.begin() + from, ids.begin() + from + n);
        std::sort(part.begin(), part.end());
        return part;
    };
    out.train = take(0, counts[0]);
    out.validation = take(counts[0], counts[1]);
    out.test = take(counts[0] + counts[1], counts[2]);
    return out;
}

std::string_view group_name(int g) {
    static constexpr std::string_view names[kGroups] = {"power_load", "gas_load", "solar",
                                                        "offshore_wind", "onshore_wind"};
    return names[g];
}

std::array<GroupSlice, kGroups> feature_slices(int power_nodes, int gas_nodes, int hours) {
    const int ph = power_nodes * hours;
    std::array<GroupSlice, kGroups> s{};
    s[0] = {0, ph};
    s[1] = {ph, gas_nodes};
    s[2] = {ph + gas_nodes, ph};
    s[3] = {2 * ph + gas_nodes, ph};
    s[4] = {3 * ph + gas_nodes, ph};
    return s;
}

Eigen::VectorXd day_features(const DayData& d) {
    const Eigen::Index P = d.power_load.rows(), H = d.power_load.cols(), G = d.gas_load.size();
    Eigen::VectorXd v(4 * P * H + G);
    Eigen::Index k = 0;
    auto put = [&](const Eigen::MatrixXd& m) {
        for (Eigen::Index n = 0; n < P; ++n)
            for (Eigen::Index h = 0; h < H; ++h) v[k++] = m(n, h);
    };
    put(d.power_load);
    for (Eigen::Index j = 0; j < G; ++j) v[k++] = d.gas_load[j];
    put(d.solar_cf);
    put(d.offshore_cf);
    put(d.onshore_cf);
    return v;
}

Eigen::VectorXd NormalizationStats::normalize(const Eigen::VectorXd& raw) const {
    Eigen::VectorXd f(raw.size());
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        const double span = max[i] - min[i];
        f[i] = span > 0.0 ? (raw[i] - min[i]) / span : 0.0;
    }
    return f;
}

Eigen::VectorXd NormalizationStats::denormalize(const Eigen::VectorXd& feature) const {
    Eigen::VectorXd r(feature.size());
    for (Eigen::Index i = 0; i < feature.size(); ++i) r[i] = min[i] + feature[i] * (max[i] - min[i]);
    return r;
}

int SampleSet::find(std::string_view scenario_id, int day) const {
    for (std::size_t i = 0; i < profiles.size(); ++i)
        if (profiles[i].data.day == day && profiles[i].data.scenario_id == scenario_id)
            return static_cast<int>(i);
    return -1;
}

namespace {

void apply_stats(SampleSet& s, bool from_raw) {
    const Eigen::Index dim = s.profiles.front().raw.size();
    s.stats.min = Eigen::VectorXd::Constant(dim, std::numeric_limits<double>::infinity());
    s.stats.max = Eigen::VectorXd::Constant(dim, -std::numeric_limits<double>::infinity());
    for (const DayProfile& p : s.profiles) {
        const Eigen::VectorXd& v = from_raw ? p.raw : p.feature;
        s.stats.min = s.stats.min.cwiseMin(v);
        s.stats.max = s.stats.max.cwiseMax(v);
    }
    for (DayProfile& p : s.profiles) p.feature = s.stats.normalize(from_raw ? p.raw : p.feature);
}

}  // namespace

SampleSet build_sample_set(const std::vector<const Scenario*>& scenarios) {
    if (scenarios.empty()) throw SplitError("sample set needs at least one training scenario");
    SampleSet out;
    const Scenario& first = *scenarios.front();
    out.group_slices = feature_slices(first.power_nodes(), first.gas_nodes(), first.hours_per_day);
    out.days_per_scenario = first.days;
    for (const Scenario* s : scenarios) {
        out.scenario_ids.push_back(s->id);
        for (int d = 0; d < s->days; ++d) {
            DayProfile p;
            p.data = s->day(d);
            p.raw = day_features(p.data);
            out.profiles.push_back(std::move(p));
        }
    }
    apply_stats(out, true);
    return out;
}

SampleSet build_sample_set(const ScenarioSet& s, const ScenarioSplit& split) {
    if (split.train.empty()) throw SplitError("split has no training scenarios");
    return build_sample_set(s.select(split.train));
}

SampleSet renormalize(const SampleSet& s) {
    SampleSet out = s;
    if (!out.profiles.empty()) apply_stats(out, false);
    return out;
}

}  // namespace stochcep::data
