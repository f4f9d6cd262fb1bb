#include "stochcep/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "stochcep/errors.hpp"

namespace stochcep::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Shortest round-trip text of a double.
std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
    if (!std::isfinite(v)) return num(v);
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

fs::path resolve(const fs::path& p, const fs::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

std::ofstream open_out(const fs::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot write " + file.string());
    return out;
}

void close_out(std::ofstream& out, const fs::path& file) {
    out.close();
    if (!out) throw IoError("write to " + file.string() + " failed");
}

/// Reads a JSON-lines log and rewrites it without a torn final line so that
/// later appends start on a fresh line.
std::vector<json> load_and_repair(const fs::path& file) {
    if (!fs::exists(file)) return {};
    std::vector<json> lines = eval::read_log(file);
    std::ofstream out = open_out(file);
    for (const json& j : lines) out << j.dump() << '\n';
    close_out(out, file);
    return lines;
}

json breakdown_to_json(const cep::OperatingBreakdown& b) {
    return json{{"gas_fuel", b.gas_fuel},       {"variable_om", b.variable_om},
                {"power_shedding", b.power_shedding}, {"gas_shedding", b.gas_shedding},
                {"network", b.network},         {"shed_mwh", b.shed_mwh},
                {"gas_shed_mmbtu", b.gas_shed_mmbtu}, {"vre_mwh", b.vre_mwh},
                {"gas_mwh", b.gas_mwh},         {"ccs_mwh", b.ccs_mwh},
                {"gas_import_mmbtu", b.gas_import_mmbtu}};
}

cep::OperatingBreakdown breakdown_from_json(const json& j) {
    cep::OperatingBreakdown b;
    j.at("gas_fuel").get_to(b.gas_fuel);
    j.at("variable_om").get_to(b.variable_om);
    j.at("power_shedding").get_to(b.power_shedding);
    j.at("gas_shedding").get_to(b.gas_shedding);
    j.at("network").get_to(b.network);
    j.at("shed_mwh").get_to(b.shed_mwh);
    j.at("gas_shed_mmbtu").get_to(b.gas_shed_mmbtu);
    j.at("vre_mwh").get_to(b.vre_mwh);
    j.at("gas_mwh").get_to(b.gas_mwh);
    j.at("ccs_mwh").get_to(b.ccs_mwh);
    j.at("gas_import_mmbtu").get_to(b.gas_import_mmbtu);
    return b;
}

json test_to_json(const eval::TestEvaluation& t) {
    return json{{"per_scenario_op_cost", t.per_scenario_op_cost},
                {"mean_op_cost", t.mean_op_cost},
                {"total_cost", t.total_cost},
                {"mean_breakdown", breakdown_to_json(t.mean_breakdown)}};
}

eval::TestEvaluation test_from_json(const json& j) {
    eval::TestEvaluation t;
    j.at("per_scenario_op_cost").get_to(t.per_scenario_op_cost);
    j.at("mean_op_cost").get_to(t.mean_op_cost);
    j.at("total_cost").get_to(t.total_cost);
    t.mean_breakdown = breakdown_from_json(j.at("mean_breakdown"));
    return t;
}

std::string theta_key(const rpc::Hyperparameters& h) { return json(h).dump(); }

/// Settings that change results; output location and thread counts do not.
json fingerprint(const ExperimentConfig& cfg) {
    json j = config_to_json(cfg);
    j.erase("output");
    j.erase("workers");
    return j;
}

fs::path runs_dir(const ExperimentConfig& cfg) { return cfg.output / "runs"; }

fs::path trial_log(const ExperimentConfig& cfg, const std::string& tag, int trial) {
    return runs_dir(cfg) / (tag + "_trial" + std::to_string(trial) + ".jsonl");
}

/// Runs job(i) for i in [0, n) on `workers` threads, in index order per thread.
template <class Job>
void run_jobs(std::size_t n, int workers, Job job) {
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) job(i);
    };
    if (threads <= 1) {
        run();
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(run);
    for (std::thread& t : pool) t.join();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
    if (methods.empty()) throw ConfigError("no methods configured");
    if (trials < 1) throw ConfigError("trials must be at least 1");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    for (const MethodConfig& m : methods) {
        if (m.method.kind == bo::Method::Kind::baseline)
            throw ConfigError("baselines always run; list only searched methods");
        if (m.budget.initial < 1 || m.budget.iterations < 0) throw ConfigError("budget of " + m.method.tag() + " is not positive");
    }
    for (std::size_t i = 0; i < methods.size(); ++i)
        for (std::size_t k = i + 1; k < methods.size(); ++k)
            if (methods[i].method.tag() == methods[k].method.tag())
                throw ConfigError("method " + methods[i].method.tag() + " listed twice");
    if (synthetic.has_value() == !data_directory.empty())
        throw ConfigError("exactly one of data directory and synthetic spec must be given");
    if (!data_directory.empty() && !fs::is_directory(data_directory))
        throw ConfigError("data directory " + data_directory.string() + " does not exist");
    if (synthetic) {
        try {
            synthetic->validate();
        } catch (const Error& e) {
            throw ConfigError(std::string("synthetic spec: ") + e.what());
        }
    }
    if (!topology.empty() && !fs::is_regular_file(topology))
        throw ConfigError("topology file " + topology.string() + " does not exist");
    for (int c : split)
        if (c < 1) throw ConfigError("every split count must be at least 1");
    try {
        space.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("search space: ") + e.what());
    }
    if (output.empty()) throw ConfigError("output directory is empty");
}

ExperimentConfig config_from_json(const json& j, const fs::path& base) {
    ExperimentConfig c;
    try {
        c.seed = j.value("seed", std::uint64_t{0});
        const json& d = j.at("data");
        if (d.contains("directory")) c.data_directory = resolve(d.at("directory").get<std::string>(), base);
        if (d.contains("synthetic")) {
            const json& s = d.at("synthetic");
            c.synthetic = s.is_string() ? data::load_synthetic_spec(resolve(s.get<std::string>(), base))
                                        : s.get<data::SyntheticSpec>();
        }
        if (d.contains("seed")) c.synthetic_seed = d.at("seed").get<std::uint64_t>();
        if (j.contains("split")) {
            const json& s = j.at("split");
            s.at("counts").get_to(c.split);
            if (s.contains("seed")) c.split_seed = s.at("seed").get<std::uint64_t>();
        }
        if (j.contains("topology")) c.topology = resolve(j.at("topology").get<std::string>(), base);
        if (j.contains("space")) {
            const json& s = j.at("space");
            rpc::HyperparameterBounds b;
            if (s.contains("rep_days")) {
                b.rep_days_min = s.at("rep_days").at(0);
                b.rep_days_max = s.at("rep_days").at(1);
            }
            if (s.contains("extreme_days")) {
                b.extreme_days_min = s.at("extreme_days").at(0);
                b.extreme_days_max = s.at("extreme_days").at(1);
            }
            c.space = bo::SearchSpace::from_bounds(b);
        }
        for (const json& m : j.at("methods")) {
            MethodConfig mc;
            mc.method = bo::Method::parse(m.at("method").get<std::string>());
            mc.budget.initial = m.value("initial", 20);
            mc.budget.iterations = m.value("iterations", 80);
            c.methods.push_back(mc);
        }
        c.trials = j.value("trials", 4);
        if (j.contains("solver")) {
            const json& s = j.at("solver");
            auto& sur = c.evaluation.surrogate;
            sur.gap_tol = s.value("gap_tol", sur.gap_tol);
            sur.master.node_limit = s.value("node_limit", sur.master.node_limit);
            sur.max_iterations = s.value("max_iterations", sur.max_iterations);
            sur.relax_integrality = s.value("relax_integrality", sur.relax_integrality);
        }
        if (j.contains("search")) {
            const json& s = j.at("search");
            c.search.acquisition.n_starts = s.value("n_starts", c.search.acquisition.n_starts);
            c.search.acquisition.max_steps = s.value("max_steps", c.search.acquisition.max_steps);
            c.search.acquisition.use_sigma = s.value("use_sigma", c.search.acquisition.use_sigma);
            c.search.jitter = s.value("jitter", c.search.jitter);
            c.search.initial_sentinel = s.value("initial_sentinel", c.search.initial_sentinel);
        }
        const std::string sel = j.value("selection", std::string("validation"));
        if (sel == "validation") c.selection = Selection::validation;
        else if (sel == "test") c.selection = Selection::test;
        else throw ConfigError("selection must be 'validation' or 'test'");
        if (j.contains("sweep")) {
            const json& s = j.at("sweep");
            if (s.contains("rep_days")) s.at("rep_days").get_to(c.sweep.rep_days);
            if (s.contains("weights")) s.at("weights").get_to(c.sweep.weights);
            c.sweep.extreme_days = s.value("extreme_days", 0);
            c.sweep.training_scenario = s.value("training_scenario", std::string());
        }
        if (j.contains("output")) c.output = resolve(j.at("output").get<std::string>(), base);
        c.workers = j.value("workers", 1);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed experiment config: ") + e.what());
    }
    c.evaluation.bounds = c.space.bounds();
    c.evaluation.workers = c.workers;
    c.search.acquisition.workers = c.workers;
    return c;
}

ExperimentConfig load_config(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config " + file.string());
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(file.string() + " is not valid JSON");
    return config_from_json(j, file.parent_path());
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    json d = json::object();
    if (!c.data_directory.empty()) d["directory"] = c.data_directory.string();
    if (c.synthetic) d["synthetic"] = *c.synthetic;
    if (c.synthetic_seed) d["seed"] = *c.synthetic_seed;
    j["data"] = d;
    j["split"] = {{"counts", c.split}};
    if (c.split_seed) j["split"]["seed"] = *c.split_seed;
    if (!c.topology.empty()) j["topology"] = c.topology.string();
    const rpc::HyperparameterBounds b = c.space.bounds();
    j["space"] = {{"rep_days", {b.rep_days_min, b.rep_days_max}},
                  {"extreme_days", {b.extreme_days_min, b.extreme_days_max}}};
    j["methods"] = json::array();
    for (const MethodConfig& m : c.methods)
        j["methods"].push_back(
            {{"method", m.method.tag()}, {"initial", m.budget.initial}, {"iterations", m.budget.iterations}});
    j["trials"] = c.trials;
    const auto& sur = c.evaluation.surrogate;
    j["solver"] = {{"gap_tol", sur.gap_tol},
                   {"node_limit", sur.master.node_limit},
                   {"max_iterations", sur.max_iterations},
                   {"relax_integrality", sur.relax_integrality}};
    j["search"] = {{"n_starts", c.search.acquisition.n_starts},
                   {"max_steps", c.search.acquisition.max_steps},
                   {"use_sigma", c.search.acquisition.use_sigma},
                   {"jitter", c.search.jitter},
                   {"initial_sentinel", c.search.initial_sentinel}};
    j["selection"] = c.selection == Selection::validation ? "validation" : "test";
    j["sweep"] = {{"rep_days", c.sweep.rep_days},
                  {"weights", c.sweep.weights},
                  {"extreme_days", c.sweep.extreme_days},
                  {"training_scenario", c.sweep.training_scenario}};
    j["output"] = c.output.string();
    j["workers"] = c.workers;
    return j;
}

SeedPlan SeedPlan::from(const ExperimentConfig& cfg) {
    SeedPlan p;
    p.base = cfg.seed;
    p.synthetic = cfg.synthetic_seed.value_or(bo::derive_seed(cfg.seed, 300));
    p.split = cfg.split_seed.value_or(bo::derive_seed(cfg.seed, 400));
    p.clustering = bo::derive_seed(cfg.seed, 200);
    return p;
}

std::uint64_t SeedPlan::trial(int t) const { return bo::derive_seed(base, 100, static_cast<std::uint64_t>(t)); }

void ensure_writable(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
    const fs::path probe = dir / ".write_probe";
    {
        std::ofstream out(probe);
        if (!out || !(out << "ok") || (out.close(), !out)) throw IoError("directory " + dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
}

// ---------------------------------------------------------------------------
// Experiment

struct Experiment::Cache {
    std::mutex mutex;
    std::map<std::string, eval::EvaluationRecord> records;
    fs::path log;
};

Experiment::Experiment(ExperimentConfig cfg)
    : cfg_(std::move(cfg)), seeds_(SeedPlan::from(cfg_)), tracer_(std::make_shared<data::AccessTracer>()) {
    cfg_.validate();
    scenarios_ = cfg_.synthetic ? data::generate_synthetic(*cfg_.synthetic, seeds_.synthetic)
                                : data::load_scenarios(cfg_.data_directory);
    split_ = data::split_scenarios(scenarios_, cfg_.split, seeds_.split);
    top_ = cfg_.topology.empty() ? cep::default_topology(scenarios_.power_nodes(), scenarios_.gas_nodes())
                                 : cep::load_topology(cfg_.topology);
    top_.check_against(scenarios_.power_nodes(), scenarios_.gas_nodes());

    scenarios_.attach_tracer(tracer_);
    tracer_->set_phase("sample");
    data::SampleSet sample = data::build_sample_set(scenarios_, split_);
    tracer_->set_phase("search");
    cfg_.evaluation.bounds = cfg_.space.bounds();
    evaluator_ = std::make_unique<eval::Evaluator>(top_, std::move(sample), scenarios_, split_.validation,
                                                   cfg_.evaluation);
    cache_ = std::make_shared<Cache>();
}

eval::EvaluationRecord Experiment::evaluate(const rpc::Hyperparameters& theta) const {
    eval::EvaluationRecord r = try_evaluate(theta);
    if (r.failed) throw EvaluationError(r.failure_message);
    return r;
}

eval::EvaluationRecord Experiment::try_evaluate(const rpc::Hyperparameters& theta) const {
    const std::string key = theta_key(theta);
    {
        std::lock_guard lock(cache_->mutex);
        const auto it = cache_->records.find(key);
        if (it != cache_->records.end()) return it->second;
    }
    eval::EvaluationRecord r = evaluator_->try_evaluate(theta, seeds_.clustering);
    std::lock_guard lock(cache_->mutex);
    const auto [it, inserted] = cache_->records.emplace(key, r);
    if (inserted && !cache_->log.empty()) eval::append_record(cache_->log, json(r));
    return it->second;
}

void Experiment::remember(const eval::EvaluationRecord& record) const {
    std::lock_guard lock(cache_->mutex);
    cache_->records.emplace(theta_key(record.theta), record);
}

void Experiment::log_evaluations(const fs::path& file) const {
    for (const json& j : load_and_repair(file)) remember(j.get<eval::EvaluationRecord>());
    std::lock_guard lock(cache_->mutex);
    cache_->log = file;
}

eval::TestEvaluation Experiment::evaluate_test(const eval::EvaluationRecord& record) const {
    if (record.failed) throw EvaluationError("cannot test a failed evaluation");
    const std::string previous = tracer_->phase();
    tracer_->set_phase("test");
    eval::TestEvaluation t;
    try {
        t = eval::evaluate_on_test(record.investment, record.invest_cost, top_, scenarios_.select(split_.test),
                                   cfg_.evaluation);
    } catch (...) {
        tracer_->set_phase(previous);
        throw;
    }
    tracer_->set_phase(previous);
    return t;
}

rpc::Hyperparameters base1(const rpc::HyperparameterBounds& b) {
    rpc::Hyperparameters h;
    h.group_weights = {0.2, 0.2, 0.2, 0.2, 0.2};
    h.rep_days = b.rep_days_max;
    h.extreme_days = 0;
    return h;
}

rpc::Hyperparameters base2(const rpc::HyperparameterBounds& b) {
    rpc::Hyperparameters h = base1(b);
    h.extreme_days = b.extreme_days_max;
    return h;
}

std::vector<BaselineResult> run_baselines(const Experiment& ex) {
    std::vector<BaselineResult> out;
    for (const auto& [name, theta] : {std::pair{"Base.1", base1(ex.config().space.bounds())},
                                     std::pair{"Base.2", base2(ex.config().space.bounds())}}) {
        BaselineResult b;
        b.name = name;
        b.record = ex.evaluate(theta);
        out.push_back(std::move(b));
    }
    // Test reads happen only after both validation evaluations.
    for (BaselineResult& b : out) b.test = ex.evaluate_test(b.record);
    return out;
}

// ---------------------------------------------------------------------------
// Searches

std::vector<TrialResult> run_searches(const Experiment& ex, const MethodConfig& m, std::optional<int> trial,
                                      const RunHooks& hooks) {
    const ExperimentConfig& cfg = ex.config();
    std::vector<int> trials;
    if (trial) {
        if (*trial < 0 || *trial >= cfg.trials) throw ConfigError("trial index out of range");
        trials.push_back(*trial);
    } else {
        for (int t = 0; t < cfg.trials; ++t) trials.push_back(t);
    }
    const std::string tag = m.method.tag();
    const json snapshot = fingerprint(cfg);
    std::vector<TrialResult> out(trials.size());
    run_jobs(trials.size(), cfg.workers, [&](std::size_t i) {
        TrialResult& r = out[i];
        r.method = tag;
        r.trial = trials[i];
        r.seed = ex.seeds().trial(trials[i]);
        const fs::path log = trial_log(cfg, tag, trials[i]);
        try {
            std::vector<bo::TraceEntry> resume;
            for (const json& j : load_and_repair(log)) {
                bo::TraceEntry e = j.get<bo::TraceEntry>();
                if (e.record.is_object()) ex.remember(e.record.get<eval::EvaluationRecord>());
                resume.push_back(std::move(e));
            }
            const bo::EvalFn fn = [&](const eval::RawPoint& raw, int) {
                const eval::EvaluationRecord rec = ex.try_evaluate(cfg.space.canonicalize(raw));
                return bo::Observation{rec.failed ? kInf : rec.f_value, rec.theta, json(rec)};
            };
            const bo::EntryFn on_entry = [&](const bo::TraceEntry& e) {
                eval::append_record(log, json(e));
                if (hooks.on_entry) hooks.on_entry(tag, r.trial, e);
            };
            r.trace = bo::run_search(m.method, m.budget, cfg.space, fn, r.seed, cfg.search, resume, on_entry);
            r.trace.config = snapshot;
        } catch (const Error& e) {
            r.failed = true;
            r.error = std::string(e.code()) + ": " + e.what();
        }
    });
    return out;
}

double improvement_percent(double best_baseline, double method) {
    return (best_baseline - method) / best_baseline * 100.0;
}

std::vector<Histogram> distribution_histograms(const data::SampleSet& sample, const rpc::RepresentativeDaySet& rep,
                                               int bins) {
    if (bins < 1) throw ParameterError("bins must be at least 1");
    std::vector<Histogram> out;
    for (int g = 0; g < data::kGroups; ++g) {
        const data::GroupSlice sl = sample.group_slices[g];
        auto day_value = [&](const data::DayProfile& p) { return p.raw.segment(sl.offset, sl.length).mean(); };
        std::vector<double> values;
        for (const data::DayProfile& p : sample.profiles) values.push_back(day_value(p));
        Histogram h;
        h.group = std::string(data::group_name(g));
        const double lo = *std::min_element(values.begin(), values.end());
        double hi = *std::max_element(values.begin(), values.end());
        if (hi <= lo) hi = lo + 1.0;
        for (int b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * b / bins);
        auto bin_of = [&](double v) { return std::clamp(static_cast<int>((v - lo) / (hi - lo) * bins), 0, bins - 1); };
        h.sample_fraction.assign(bins, 0.0);
        h.repday_fraction.assign(bins, 0.0);
        for (double v : values) h.sample_fraction[bin_of(v)] += 1.0 / static_cast<double>(values.size());
        const double total = rep.total_weight();
        for (std::size_t i = 0; i < rep.size(); ++i)
            h.repday_fraction[bin_of(day_value(sample.profiles[rep.sample_index[i]]))] += rep.weights[i] / total;
        out.push_back(std::move(h));
    }
    return out;
}

namespace {

/// Test evaluations, logged so that a resumed run does not touch the test set again.
class TestLog {
public:
    explicit TestLog(fs::path file) : file_(std::move(file)) {
        for (const json& j : load_and_repair(file_)) entries_[j.at("key").get<std::string>()] = j;
    }

    eval::TestEvaluation get(const Experiment& ex, const std::string& label, const eval::EvaluationRecord& rec) {
        const std::string key = label + "|" + theta_key(rec.theta);
        const auto it = entries_.find(key);
        if (it != entries_.end()) return test_from_json(it->second.at("test"));
        const eval::TestEvaluation t = ex.evaluate_test(rec);
        json j{{"key", key}, {"test", test_to_json(t)}};
        eval::append_record(file_, j);
        entries_[key] = j;
        return t;
    }

private:
    fs::path file_;
    std::map<std::string, json> entries_;
};

MethodResult make_row(const Experiment& ex, std::string name, bool baseline, const eval::EvaluationRecord& rec,
                      const eval::TestEvaluation& test) {
    MethodResult m;
    m.method = std::move(name);
    m.baseline = baseline;
    m.record = rec;
    m.test = test;
    m.f_val = rec.f_value;
    m.f_test = test.total_cost;
    m.capacity = cep::capacity_summary(ex.topology(), rec.investment);
    m.distributions = distribution_histograms(ex.evaluator().sample(), rec.rep_days);
    return m;
}

void check_output_matches(const ExperimentConfig& cfg) {
    const fs::path snap = runs_dir(cfg) / "config.json";
    const json want = fingerprint(cfg);
    if (fs::exists(snap)) {
        std::ifstream in(snap);
        const json have = json::parse(in, nullptr, false);
        if (have != want)
            throw ConfigError("output directory " + cfg.output.string() +
                              " holds runs of a different configuration");
        return;
    }
    fs::create_directories(runs_dir(cfg));
    std::ofstream out = open_out(snap);
    out << want.dump(2) << '\n';
    close_out(out, snap);
}

}  // namespace

ExperimentReport run_experiment(const Experiment& ex, const RunHooks& hooks) {
    const ExperimentConfig& cfg = ex.config();
    ensure_writable(cfg.output);
    check_output_matches(cfg);
    ex.log_evaluations(runs_dir(cfg) / "evaluations.jsonl");

    ExperimentReport rep;
    rep.selection = cfg.selection;

    // Validation phase: baselines, then every search.
    const eval::EvaluationRecord b1 = ex.evaluate(base1(cfg.space.bounds()));
    const eval::EvaluationRecord b2 = ex.evaluate(base2(cfg.space.bounds()));
    for (const MethodConfig& m : cfg.methods) {
        std::vector<TrialResult> t = run_searches(ex, m, std::nullopt, hooks);
        rep.trials.insert(rep.trials.end(), t.begin(), t.end());
    }

    // Test phase: one evaluation per reported configuration.
    TestLog tests(runs_dir(cfg) / "test.jsonl");
    rep.methods.push_back(make_row(ex, "Base.1", true, b1, tests.get(ex, "Base.1", b1)));
    rep.methods.push_back(make_row(ex, "Base.2", true, b2, tests.get(ex, "Base.2", b2)));
    for (const MethodConfig& m : cfg.methods) {
        const std::string tag = m.method.tag();
        int ok = 0, failed = 0;
        int best_trial = -1;
        eval::EvaluationRecord best;
        eval::TestEvaluation best_test;
        double best_score = kInf;
        for (const TrialResult& t : rep.trials) {
            if (t.method != tag) continue;
            if (t.failed || t.trace.entries.empty()) {
                ++failed;
                continue;
            }
            ++ok;
            const bo::TraceEntry& e = t.trace.best();
            if (e.failed || !e.record.is_object()) continue;
            const eval::EvaluationRecord rec = e.record.get<eval::EvaluationRecord>();
            if (cfg.selection == Selection::validation) {
                if (rec.f_value < best_score) best_score = rec.f_value, best = rec, best_trial = t.trial;
            } else {
                const eval::TestEvaluation te = tests.get(ex, tag + "/trial" + std::to_string(t.trial), rec);
                if (te.total_cost < best_score) best_score = te.total_cost, best = rec, best_test = te, best_trial = t.trial;
            }
        }
        MethodResult row;
        if (best_trial < 0) {
            row.method = tag;
            row.failed = true;
            row.f_val = row.f_test = kInf;
        } else {
            if (cfg.selection == Selection::validation) best_test = tests.get(ex, tag, best);
            row = make_row(ex, tag, false, best, best_test);
            row.best_trial = best_trial;
        }
        row.trials_ok = ok;
        row.trials_failed = failed;
        rep.methods.push_back(std::move(row));
    }

    rep.best_baseline_val = std::min(rep.methods[0].f_val, rep.methods[1].f_val);
    rep.best_baseline_test = std::min(rep.methods[0].f_test, rep.methods[1].f_test);
    for (MethodResult& m : rep.methods) {
        m.improvement_val = improvement_percent(rep.best_baseline_val, m.f_val);
        m.improvement_test = improvement_percent(rep.best_baseline_test, m.f_test);
    }
    ex.tracer()->set_phase("search");
    return rep;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks) {
    cfg.validate();
    ensure_writable(cfg.output);
    const Experiment ex(cfg);
    return run_experiment(ex, hooks);
}

// ---------------------------------------------------------------------------
// Rep-day sweep

std::vector<SweepRow> sweep_rep_days(const Experiment& ex, const SweepConfig& sweep) {
    const data::ScenarioSplit& split = ex.split();
    const std::string id = sweep.training_scenario.empty() ? split.train.front() : sweep.training_scenario;
    if (std::find(split.train.begin(), split.train.end(), id) == split.train.end())
        throw ConfigError("sweep scenario " + id + " is not a training scenario");
    const std::string previous = ex.tracer()->phase();
    ex.tracer()->set_phase("sweep");
    data::SampleSet sample = data::build_sample_set({&ex.scenarios().get(id)});
    eval::EvaluationSettings settings = ex.config().evaluation;
    settings.bounds = {1, static_cast<int>(sample.size()), 0, std::max(0, static_cast<int>(sample.size()) / 2)};
    const eval::Evaluator evaluator(ex.topology(), std::move(sample), ex.scenarios(), split.validation, settings);

    std::vector<SweepRow> rows;
    for (int r : sweep.rep_days) {
        SweepRow row;
        row.rep_days = r;
        rpc::Hyperparameters h;
        h.group_weights = rpc::canonicalize_weights(sweep.weights);
        h.rep_days = r;
        h.extreme_days = sweep.extreme_days;
        const eval::EvaluationRecord rec = evaluator.try_evaluate(h, ex.seeds().clustering);
        row.failed = rec.failed;
        row.error = rec.failure_message;
        row.in_sample_cost = rec.failed ? kInf : rec.surrogate_objective;
        row.out_of_sample_cost = rec.f_value;
        rows.push_back(row);
    }
    ex.tracer()->set_phase(previous);
    return rows;
}

void write_sweep_csv(const fs::path& file, const std::vector<SweepRow>& rows) {
    if (file.has_parent_path()) ensure_writable(file.parent_path());
    std::ofstream out = open_out(file);
    out << "rep_days,in_sample_cost,out_of_sample_cost,status\n";
    for (const SweepRow& r : rows)
        out << r.rep_days << ',' << num(r.in_sample_cost) << ',' << num(r.out_of_sample_cost) << ','
            << (r.failed ? "failed" : "ok") << '\n';
    close_out(out, file);
}

bool non_monotone(const std::vector<SweepRow>& rows) {
    std::vector<SweepRow> sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](const SweepRow& a, const SweepRow& b) { return a.rep_days < b.rep_days; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (!sorted[i].failed && !sorted[i - 1].failed &&
            sorted[i].out_of_sample_cost > sorted[i - 1].out_of_sample_cost)
            return true;
    return false;
}

// ---------------------------------------------------------------------------
// Report files

void emit_report(const ExperimentReport& report, const fs::path& dir) {
    ensure_writable(dir);
    ensure_writable(dir / "convergence");
    ensure_writable(dir / "distributions");

    {
        const fs::path f = dir / "summary.csv";
        std::ofstream out = open_out(f);
        out << "method,w_power_load,w_gas_load,w_solar,w_offshore,w_onshore,rep_days,extreme_days,"
               "invest_cost,f_val,f_test,improvement_val_pct,improvement_test_pct,best_trial,trials_ok,"
               "trials_failed,status\n";
        for (const MethodResult& m : report.methods) {
            out << m.method;
            for (double w : m.record.theta.group_weights) out << ',' << num(w);
            out << ',' << m.record.theta.rep_days << ',' << m.record.theta.extreme_days << ','
                << num(m.record.invest_cost) << ',' << num(m.f_val) << ',' << num(m.f_test) << ','
                << num(m.improvement_val) << ',' << num(m.improvement_test) << ',' << m.best_trial << ','
                << m.trials_ok << ',' << m.trials_failed << ',' << (m.failed ? "failed" : "ok") << '\n';
        }
        close_out(out, f);
    }
    {
        const fs::path f = dir / "summary.txt";
        std::ofstream out = open_out(f);
        out << "Configuration selected by "
            << (report.selection == Selection::validation
                    ? "lowest validation cost across trials"
                    : "lowest test cost across trials (reporting convention; leaks test information)")
            << ".\nCosts in $bn; improvements in % against the best baseline on each set.\n\n";
        out << std::left << std::setw(12) << "Method";
        for (const char* h : {"th1", "th2", "th3", "th4", "th5"}) out << std::right << std::setw(7) << h;
        out << std::setw(5) << "th6" << std::setw(5) << "th7" << std::setw(11) << "f_val" << std::setw(9)
            << "Improv." << std::setw(11) << "f_test" << std::setw(9) << "Improv." << '\n';
        for (const MethodResult& m : report.methods) {
            out << std::left << std::setw(12) << m.method << std::right;
            if (m.failed) {
                out << "  all trials failed\n";
                continue;
            }
            for (double w : m.record.theta.group_weights) out << std::setw(7) << fixed(w, 3);
            out << std::setw(5) << m.record.theta.rep_days << std::setw(5) << m.record.theta.extreme_days
                << std::setw(11) << fixed(m.f_val / 1e9, 4) << std::setw(9) << fixed(m.improvement_val, 2)
                << std::setw(11) << fixed(m.f_test / 1e9, 4) << std::setw(9) << fixed(m.improvement_test, 2)
                << '\n';
        }
        close_out(out, f);
    }
    {
        const fs::path f = dir / "trials.csv";
        std::ofstream out = open_out(f);
        out << "method,trial,seed,status,evaluations,failed_evaluations,best_f,error\n";
        for (const TrialResult& t : report.trials) {
            int failed_evals = 0;
            for (const bo::TraceEntry& e : t.trace.entries) failed_evals += e.failed ? 1 : 0;
            const double best = t.trace.entries.empty() ? kInf : t.trace.entries.back().best_so_far;
            std::string err = t.error;
            std::replace(err.begin(), err.end(), ',', ';');
            std::replace(err.begin(), err.end(), '\n', ' ');
            out << t.method << ',' << t.trial << ',' << t.seed << ',' << (t.failed ? "failed" : "ok") << ','
                << t.trace.entries.size() << ',' << failed_evals << ',' << num(best) << ',' << err << '\n';
        }
        close_out(out, f);
    }
    for (const TrialResult& t : report.trials)
        bo::write_trace_csv(dir / "convergence" / (t.method + "_trial" + std::to_string(t.trial) + ".csv"), t.trace);
    for (const MethodResult& m : report.methods) {
        for (const Histogram& h : m.distributions) {
            const fs::path f = dir / "distributions" / (m.method + "_" + h.group + ".csv");
            std::ofstream out = open_out(f);
            out << "bin_lo,bin_hi,sample_fraction,repday_fraction\n";
            for (std::size_t b = 0; b < h.sample_fraction.size(); ++b)
                out << num(h.edges[b]) << ',' << num(h.edges[b + 1]) << ',' << num(h.sample_fraction[b]) << ','
                    << num(h.repday_fraction[b]) << '\n';
            close_out(out, f);
        }
    }
    {
        const fs::path f = dir / "investments.csv";
        std::ofstream out = open_out(f);
        out << "method";
        for (int k = 0; k < cep::kTechs; ++k) out << ",mw_" << cep::tech_name(k);
        out << ",storage_mw,storage_mwh,new_line_mw,pipeline_expansion,invest_cost,gas_fuel,variable_om,"
               "power_shedding,gas_shedding,network,shed_mwh,gas_shed_mmbtu,mean_op_cost,total_cost\n";
        for (const MethodResult& m : report.methods) {
            if (m.failed) continue;
            const cep::CapacitySummary& c = m.capacity;
            const cep::OperatingBreakdown& b = m.test.mean_breakdown;
            out << m.method;
            for (double mw : c.mw) out << ',' << num(mw);
            out << ',' << num(c.storage_mw) << ',' << num(c.storage_mwh) << ',' << num(c.new_line_mw) << ','
                << num(c.pipeline_expansion) << ',' << num(m.record.invest_cost) << ',' << num(b.gas_fuel) << ','
                << num(b.variable_om) << ',' << num(b.power_shedding) << ',' << num(b.gas_shedding) << ','
                << num(b.network) << ',' << num(b.shed_mwh) << ',' << num(b.gas_shed_mmbtu) << ','
                << num(m.test.mean_op_cost) << ',' << num(m.test.total_cost) << '\n';
        }
        close_out(out, f);
    }
}

}  // namespace stochcep::harness
