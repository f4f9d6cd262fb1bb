// Command-line front end: data generation, single steps and full experiments.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stochcep/errors.hpp"
#include "stochcep/harness.hpp"

using namespace stochcep;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool relax = false;
    std::optional<int> workers;
};

harness::ExperimentConfig load(const Globals& g) {
    if (g.config.empty()) throw ConfigError("--config is required");
    harness::ExperimentConfig cfg = harness::load_config(g.config);
    if (g.seed) cfg.seed = *g.seed;
    if (!g.out.empty()) cfg.output = g.out;
    if (g.relax) cfg.evaluation.surrogate.relax_integrality = true;
    if (g.workers) {
        cfg.workers = *g.workers;
        cfg.evaluation.workers = *g.workers;
        cfg.search.acquisition.workers = *g.workers;
    }
    return cfg;
}

rpc::Hyperparameters parse_theta(const std::string& text, const bo::SearchSpace& space) {
    eval::RawPoint raw{};
    std::stringstream ss(text);
    std::string cell;
    int i = 0;
    while (std::getline(ss, cell, ',')) {
        if (i >= bo::kDims) throw ParameterError("--theta takes 7 comma-separated values");
        try {
            raw[i++] = std::stod(cell);
        } catch (const std::exception&) {
            throw ParameterError("--theta value '" + cell + "' is not a number");
        }
    }
    if (i != bo::kDims) throw ParameterError("--theta takes 7 comma-separated values");
    return space.canonicalize(raw);
}

void write_json(const fs::path& file, const json& j) {
    harness::ensure_writable(file.parent_path().empty() ? fs::path(".") : file.parent_path());
    std::ofstream out(file);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write to " + file.string() + " failed");
    std::cout << file.string() << '\n';
}

json report_line(const harness::MethodResult& m) {
    return json{{"method", m.method}, {"f_val", m.f_val}, {"f_test", m.f_test},
                {"improvement_val_pct", m.improvement_val}, {"improvement_test_pct", m.improvement_test}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperparameter search for representative-day capacity expansion"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "Experiment config (JSON)");
    app.add_option("--seed", g.seed, "Override the experiment seed");
    app.add_option("--out", g.out, "Override the output directory");
    app.add_flag("--relax-integrality", g.relax, "Solve surrogates as LPs");
    app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);

    std::string spec_file;
    auto* synth = app.add_subcommand("synth", "Generate synthetic scenarios as CSV files");
    synth->add_option("--spec", spec_file, "Synthetic spec (JSON); defaults to the config's spec");

    app.add_subcommand("split", "Write the train/validation/test split");

    std::string theta = "0.2,0.2,0.2,0.2,0.2,80,0";
    auto* cluster = app.add_subcommand("cluster", "Representative days for one hyperparameter vector");
    auto* solve = app.add_subcommand("solve-surrogate", "Investment from the surrogate for one vector");
    auto* evaluate = app.add_subcommand("evaluate", "Validation cost of one vector");
    for (CLI::App* s : {cluster, solve, evaluate})
        s->add_option("--theta", theta, "w1,w2,w3,w4,w5,rep_days,extreme_days");

    std::string method;
    std::optional<int> trial;
    auto* search = app.add_subcommand("search", "Run searches (all configured methods and trials by default)");
    search->add_option("--method", method, "Method tag, e.g. BO_10 or random");
    search->add_option("--trial", trial, "Single trial index");

    app.add_subcommand("sweep-repdays", "Cost against the number of representative days");
    app.add_subcommand("baselines", "Evaluate both baselines on validation and test");
    app.add_subcommand("report", "Run (or resume) the full experiment and write the report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }

    try {
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "synth") {
            data::SyntheticSpec spec;
            std::uint64_t seed = g.seed.value_or(0);
            if (!spec_file.empty()) {
                spec = data::load_synthetic_spec(spec_file);
            } else {
                const harness::ExperimentConfig cfg = load(g);
                if (!cfg.synthetic) throw ConfigError("config has no synthetic spec; pass --spec");
                spec = *cfg.synthetic;
                seed = harness::SeedPlan::from(cfg).synthetic;
            }
            const fs::path dir = g.out.empty() ? fs::path("scenarios") : fs::path(g.out);
            harness::ensure_writable(dir);
            const data::ScenarioSet set = data::generate_synthetic(spec, seed);
            for (const std::string& id : set.ids()) data::write_scenario(dir, set.get(id));
            std::cout << json{{"scenarios", set.size()}, {"directory", dir.string()}}.dump() << '\n';
            return 0;
        }

        const harness::ExperimentConfig cfg = load(g);
        if (cmd == "report") {
            const harness::ExperimentReport rep = harness::run_experiment(cfg);
            harness::emit_report(rep, cfg.output / "report");
            for (const harness::MethodResult& m : rep.methods) std::cout << report_line(m).dump() << '\n';
            return 0;
        }

        harness::ensure_writable(cfg.output);
        const harness::Experiment ex(cfg);
        if (cmd == "split") {
            write_json(cfg.output / "split.json", json(ex.split()));
        } else if (cmd == "cluster") {
            const rpc::Hyperparameters h = parse_theta(theta, cfg.space);
            h.validate(cfg.space.bounds());
            const rpc::RepresentativeDaySet r = rpc::run_rpc(h, ex.evaluator().sample(), ex.seeds().clustering);
            write_json(cfg.output / "repdays.json", json{{"theta", h}, {"rep_days", r}});
        } else if (cmd == "solve-surrogate") {
            const rpc::Hyperparameters h = parse_theta(theta, cfg.space);
            h.validate(cfg.space.bounds());
            const data::SampleSet& sample = ex.evaluator().sample();
            const rpc::RepresentativeDaySet r = rpc::run_rpc(h, sample, ex.seeds().clustering);
            const cep::CepInstance inst = cep::build_surrogate(ex.topology(), r, sample);
            const solver::CepSolution sol = solver::solve_cep(inst, cfg.evaluation.surrogate);
            if (sol.x.empty()) throw SolverError("surrogate ended with status " + solver::to_string(sol.status));
            const cep::InvestmentDecision x = cep::decode(inst, sol.x);
            write_json(cfg.output / "surrogate.json",
                       json{{"theta", h},
                            {"status", solver::to_string(sol.status)},
                            {"gap", sol.gap},
                            {"objective", sol.objective / inst.cost_scale},
                            {"invest_cost", cep::investment_cost(ex.topology(), x)},
                            {"investment", x}});
        } else if (cmd == "evaluate") {
            const eval::EvaluationRecord r = ex.evaluate(parse_theta(theta, cfg.space));
            write_json(cfg.output / "evaluation.json", json(r));
        } else if (cmd == "search") {
            std::vector<harness::MethodConfig> methods;
            for (const harness::MethodConfig& m : cfg.methods)
                if (method.empty() || m.method.tag() == method) methods.push_back(m);
            if (methods.empty()) throw ConfigError("method " + method + " is not configured");
            ex.log_evaluations(cfg.output / "runs" / "evaluations.jsonl");
            for (const harness::MethodConfig& m : methods) {
                for (const harness::TrialResult& t : harness::run_searches(ex, m, trial)) {
                    const std::string name = t.method + "_trial" + std::to_string(t.trial);
                    if (!t.failed) {
                        bo::write_trace_jsonl(cfg.output / "traces" / (name + ".jsonl"), t.trace);
                        bo::write_trace_csv(cfg.output / "traces" / (name + ".csv"), t.trace);
                    }
                    std::cout << json{{"method", t.method},
                                      {"trial", t.trial},
                                      {"failed", t.failed},
                                      {"error", t.error},
                                      {"best_f", t.trace.entries.empty() ? json(nullptr)
                                                                         : json(t.trace.best().f)}}
                                     .dump()
                              << '\n';
                }
            }
        } else if (cmd == "sweep-repdays") {
            const std::vector<harness::SweepRow> rows = harness::sweep_rep_days(ex, cfg.sweep);
            harness::write_sweep_csv(cfg.output / "sweep.csv", rows);
            std::cout << (cfg.output / "sweep.csv").string() << '\n'
                      << json{{"non_monotone", harness::non_monotone(rows)}}.dump() << '\n';
        } else if (cmd == "baselines") {
            json out = json::array();
            for (const harness::BaselineResult& b : harness::run_baselines(ex))
                out.push_back({{"name", b.name},
                               {"record", b.record},
                               {"test_total_cost", b.test.total_cost},
                               {"test_per_scenario_op_cost", b.test.per_scenario_op_cost}});
            write_json(cfg.output / "baselines.json", out);
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << json{{"error", e.code()}, {"message", e.what()}}.dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
}
