// Command line front-end: pf, simulate, gramian, place, estimate,
// robustness, sweep, compare.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pmuplace/case.hpp"
#include "pmuplace/dynamics.hpp"
#include "pmuplace/errors.hpp"
#include "pmuplace/estimation.hpp"
#include "pmuplace/experiments.hpp"
#include "pmuplace/gramian.hpp"
#include "pmuplace/network.hpp"
#include "pmuplace/parallel.hpp"
#include "pmuplace/placement.hpp"
#include "pmuplace/robustness.hpp"
#include "pmuplace/synthetic.hpp"
#include "pmuplace/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pmuplace;

namespace {

struct Globals {
    std::string case_path;
    std::size_t synthetic = 0;
    std::string model = "m1";
    std::uint64_t seed = 1;
    std::string out;
    std::optional<unsigned> threads;
    bool quiet = false;

    unsigned thread_count() const { return threads ? std::max(1u, *threads) : default_thread_count(); }
};

struct Loaded {
    PowerSystemCase c;
    std::string label;
    std::string fingerprint;
};

Loaded load(const Globals& g)
{
    Loaded l;
    if (g.synthetic) {
        SyntheticOptions so;
        so.generators = g.synthetic;
        l.c = synthetic_case(g.seed, so);
        l.label = "synthetic:" + std::to_string(g.synthetic);
    } else {
        if (g.case_path.empty())
            throw ValidationError("--case is required (or --synthetic N)");
        l.c = load_case(g.case_path);
        l.label = g.case_path;
    }
    l.fingerprint = fingerprint(to_json(l.c).dump());
    return l;
}

PowerFlowSolution converged_pf(const PowerSystemCase& c)
{
    PowerFlowSolution pf = solve_power_flow(c);
    if (!pf.converged)
        throw NumericalError("power flow did not converge after " + std::to_string(pf.iterations) +
                             " iterations (mismatch " + format_double(pf.max_mismatch) + ")");
    return pf;
}

ExperimentManifest manifest(const Globals& g, const Loaded& l, std::string sub, json settings)
{
    ExperimentManifest m;
    m.subcommand = std::move(sub);
    m.case_path = l.label;
    m.case_fingerprint = l.fingerprint;
    m.model = g.model;
    m.settings = std::move(settings);
    m.seed = g.seed;
    m.output = g.out;
    return m;
}

void log(const Globals& g, const std::string& msg)
{
    if (!g.quiet)
        std::cerr << msg << '\n';
}

void emit_json(const Globals& g, json j)
{
    const std::string text = j.dump(2) + "\n";
    if (g.out.empty())
        std::cout << text;
    else
        write_text(g.out, text);
}

// CSV outputs carry their manifest in a sidecar file.
void emit_csv(const Globals& g, const std::string& csv, const ExperimentManifest& m)
{
    if (g.out.empty()) {
        std::cout << csv;
        return;
    }
    write_text(g.out, csv);
    write_text(g.out + ".manifest.json", json{{"manifest", m.to_json()}}.dump(2) + "\n");
}

std::pair<int, int> parse_branch(const std::string& text)
{
    const auto [a, b] = parse_range(text);
    return {a, b};
}

json num(double v)
{
    return std::isfinite(v) ? json(v) : json(format_double(v));
}

GramianConfig gramian_config(double dt, double horizon, unsigned threads)
{
    GramianConfig cfg;
    cfg.dt = dt;
    cfg.horizon = horizon;
    cfg.threads = threads;
    return cfg;
}

std::string trajectory_csv(const std::vector<std::string>& names, const std::vector<double>& t,
                           const std::vector<const Eigen::MatrixXd*>& blocks)
{
    std::ostringstream os;
    os << "t";
    for (const std::string& n : names)
        os << ',' << n;
    os << '\n';
    for (std::size_t k = 0; k < t.size(); ++k) {
        os << format_double(t[k]);
        for (const Eigen::MatrixXd* b : blocks)
            for (Eigen::Index r = 0; r < b->rows(); ++r)
                os << ',' << format_double((*b)(r, static_cast<Eigen::Index>(k)));
        os << '\n';
    }
    return os.str();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Optimal PMU placement by empirical observability Gramians"};
    app.set_version_flag("--version", std::string(tool_version()));
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand
    Globals g;
    app.add_option("--case", g.case_path, "Case file (JSON)");
    app.add_option("--synthetic", g.synthetic, "Use a seeded synthetic system with N generators instead of --case");
    app.add_option("--model", g.model, "Dynamic model")->check(CLI::IsMember({"m1", "m2"}));
    app.add_option("--seed", g.seed, "Global seed");
    app.add_option("--out", g.out, "Output file or directory");
    app.add_option("--threads", g.threads, "Worker threads (default: PMUPLACE_THREADS or 1)");
    app.add_flag("--quiet", g.quiet, "Suppress progress messages");

    // pf
    auto* pf_cmd = app.add_subcommand("pf", "Solve the power flow");
    PowerFlowOptions pf_opts;
    pf_cmd->add_option("--tol", pf_opts.tol, "Mismatch tolerance (per unit)")->check(CLI::PositiveNumber);
    pf_cmd->add_option("--max-iter", pf_opts.max_iter, "Newton iterations")->check(CLI::PositiveNumber);

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Simulate the dynamic model and write a trajectory CSV");
    double sim_horizon = 5.0, sim_dt = 1.0 / 120.0;
    std::string sim_fault, sim_perturb;
    sim_cmd->add_option("--horizon", sim_horizon, "Seconds")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--dt", sim_dt, "Integration step")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--fault", sim_fault, "Three-phase fault on branch from:to");
    sim_cmd->add_option("--perturb", sim_perturb, "Angle perturbation gen:fraction, e.g. 1:-1");

    // gramian
    auto* gram_cmd = app.add_subcommand("gramian", "Empirical observability Gramian of a placement");
    std::string gram_placement;
    double g_dt = 1.0 / 30.0, g_horizon = 5.0;
    gram_cmd->add_option("--placement,--pmu-at", gram_placement, "Generator ids, e.g. 2,3")->required();
    gram_cmd->add_option("--dt", g_dt, "Gramian time step")->check(CLI::PositiveNumber);
    gram_cmd->add_option("--horizon,--tf", g_horizon, "Gramian horizon")->check(CLI::PositiveNumber);

    // place
    auto* place_cmd = app.add_subcommand("place", "Optimal placement for a given number of PMUs");
    int place_k = 1;
    std::string place_solver = "mads", place_pinned;
    std::optional<std::size_t> place_budget;
    place_cmd->add_option("--pmus", place_k, "Number of PMUs")->required();
    place_cmd->add_option("--solver", place_solver)->check(CLI::IsMember({"exhaustive", "greedy", "mads"}));
    place_cmd->add_option("--budget", place_budget, "MADS evaluation budget (default 200 g)");
    place_cmd->add_option("--pinned", place_pinned, "Existing PMUs to keep, e.g. 1,4");
    place_cmd->add_option("--dt", g_dt, "Gramian time step")->check(CLI::PositiveNumber);
    place_cmd->add_option("--horizon", g_horizon, "Gramian horizon")->check(CLI::PositiveNumber);

    // estimate
    auto* est_cmd = app.add_subcommand("estimate", "SR-UKF validation runs");
    std::string est_placement, est_scenario = "method1", est_fault;
    std::size_t est_runs = 50;
    est_cmd->add_option("--placement", est_placement, "Generator ids")->required();
    est_cmd->add_option("--scenario", est_scenario)->check(CLI::IsMember({"method1", "method2"}));
    est_cmd->add_option("--fault", est_fault, "Branch from:to for method2");
    est_cmd->add_option("--runs", est_runs, "Number of runs")->check(CLI::PositiveNumber);

    // robustness
    auto* rob_cmd = app.add_subcommand("robustness", "Placement stability under load fluctuation or contingency");
    std::string rob_mode = "fluctuation", rob_range = "1:2", rob_solver = "exhaustive";
    std::size_t rob_cases = 6;
    double rob_gamma = 1.05;
    rob_cmd->add_option("--mode", rob_mode)->check(CLI::IsMember({"fluctuation", "contingency"}));
    rob_cmd->add_option("--cases", rob_cases)->check(CLI::PositiveNumber);
    rob_cmd->add_option("--gamma", rob_gamma);
    rob_cmd->add_option("--pmus-range", rob_range);
    rob_cmd->add_option("--solver", rob_solver)->check(CLI::IsMember({"exhaustive", "greedy", "mads"}));

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Best logdet and smallest eigenvalue against the number of PMUs");
    std::string sweep_range, sweep_solver = "mads";
    bool sweep_no_timing = false;
    sweep_cmd->add_option("--pmus-range", sweep_range, "lo:hi (default 1:g)");
    sweep_cmd->add_option("--solver", sweep_solver)->check(CLI::IsMember({"exhaustive", "greedy", "mads"}));
    sweep_cmd->add_flag("--no-timing", sweep_no_timing, "Write time_s = 0 so reruns are byte-identical");
    sweep_cmd->add_option("--dt", g_dt, "Gramian time step")->check(CLI::PositiveNumber);

    // compare
    auto* cmp_cmd = app.add_subcommand("compare", "Optimal versus random placements");
    std::string cmp_range, cmp_solver = "mads", cmp_scenario = "method1";
    std::size_t cmp_runs = 50;
    cmp_cmd->add_option("--pmus-range", cmp_range, "lo:hi (default 1:g)");
    cmp_cmd->add_option("--runs", cmp_runs)->check(CLI::PositiveNumber);
    cmp_cmd->add_option("--solver", cmp_solver)->check(CLI::IsMember({"exhaustive", "greedy", "mads"}));
    cmp_cmd->add_option("--scenario", cmp_scenario)->check(CLI::IsMember({"method1", "method2"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const ModelKind kind = parse_model_kind(g.model);
        const unsigned threads = g.thread_count();

        if (*pf_cmd) {
            const Loaded l = load(g);
            const PowerFlowSolution pf = solve_power_flow(l.c, pf_opts);
            json buses = json::array();
            for (std::size_t i = 0; i < l.c.buses.size(); ++i)
                buses.push_back({{"id", l.c.buses[i].id},
                                 {"v_mag", pf.v_mag(static_cast<Eigen::Index>(i))},
                                 {"v_angle_deg", pf.v_ang(static_cast<Eigen::Index>(i)) * 180.0 / M_PI},
                                 {"p_inj", pf.p_inj(static_cast<Eigen::Index>(i))},
                                 {"q_inj", pf.q_inj(static_cast<Eigen::Index>(i))}});
            json flows = json::array();
            if (pf.converged)
                for (const BranchFlow& f : branch_flows(l.c, pf))
                    flows.push_back({{"from", f.from}, {"to", f.to}, {"p_from", f.p_from}, {"q_from", f.q_from}});
            emit_json(g, {{"manifest", manifest(g, l, "pf", {{"tol", pf_opts.tol}, {"max_iter", pf_opts.max_iter}}).to_json()},
                          {"converged", pf.converged},
                          {"iterations", pf.iterations},
                          {"max_mismatch", pf.max_mismatch},
                          {"buses", buses},
                          {"branch_flows", flows}});
            if (!pf.converged)
                throw NumericalError("power flow did not converge");
            return 0;
        }

        if (*sim_cmd) {
            const Loaded l = load(g);
            const PowerFlowSolution pf = converged_pf(l.c);
            const ReducedModel model = init_steady_state(l.c, pf, kind);
            Eigen::VectorXd x = model.x0;
            json settings{{"horizon", sim_horizon}, {"dt", sim_dt}};
            if (!sim_perturb.empty()) {
                const auto colon = sim_perturb.find(':');
                if (colon == std::string::npos)
                    throw ValidationError("--perturb expects gen:fraction");
                const int gen = std::stoi(sim_perturb.substr(0, colon));
                const double frac = std::stod(sim_perturb.substr(colon + 1));
                const std::vector<int> id{gen};
                instrumented_positions(model, id);
                x(static_cast<Eigen::Index>(model.layout.delta(static_cast<std::size_t>(gen - 1)))) *= 1.0 + frac;
                settings["perturb"] = sim_perturb;
            }
            Trajectory tr;
            if (!sim_fault.empty()) {
                const auto [a, b] = parse_branch(sim_fault);
                check_fault_branch(l.c, a, b);
                tr = simulate(build_fault_schedule(l.c, pf, a, b, kind), x, sim_horizon, sim_dt);
                settings["fault"] = sim_fault;
            } else {
                tr = simulate(model, x, sim_horizon, sim_dt);
            }
            emit_csv(g, trajectory_csv(state_names(model), tr.time, {&tr.states}),
                     manifest(g, l, "simulate", settings));
            return 0;
        }

        if (*gram_cmd) {
            const Loaded l = load(g);
            const PowerFlowSolution pf = converged_pf(l.c);
            const ReducedModel model = init_steady_state(l.c, pf, kind);
            const std::vector<int> ids = parse_id_list(gram_placement);
            const GramianConfig cfg = gramian_config(g_dt, g_horizon, threads);
            const Gramian w = empirical_gramian(model, ids, cfg);
            json j = gramian_report(w.matrix, w.fingerprint);
            j["placement"] = w.instrumented;
            j["manifest"] = manifest(g, l, "gramian", {{"gramian", cfg.to_json()}, {"placement", ids}}).to_json();
            emit_json(g, j);
            return 0;
        }

        if (*place_cmd) {
            const Loaded l = load(g);
            const PowerFlowSolution pf = converged_pf(l.c);
            const ReducedModel model = init_steady_state(l.c, pf, kind);
            const GramianConfig cfg = gramian_config(g_dt, g_horizon, threads);
            const Solver solver = parse_solver(place_solver);
            MadsOptions mo;
            mo.seed = g.seed;
            mo.budget = place_budget;
            const auto t0 = std::chrono::steady_clock::now();
            const GramianBank bank = per_generator_bank(model, cfg);
            const std::vector<int> pinned = place_pinned.empty() ? std::vector<int>{} : parse_id_list(place_pinned);
            const Placement p = pinned.empty() ? solve_placement(bank, place_k, solver, mo)
                                               : incremental(bank, pinned, place_k, solver, mo);
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            json settings{{"pmus", place_k}, {"solver", place_solver}, {"gramian", cfg.to_json()}};
            if (place_budget)
                settings["budget"] = *place_budget;
            if (!pinned.empty())
                settings["pinned"] = pinned;
            emit_json(g, {{"manifest", manifest(g, l, "place", settings).to_json()},
                          {"placement", p.generators},
                          {"logdet", num(p.objective)},
                          {"sigma_min", min_max_eigenvalue(bank.sum(p.generators)).min},
                          {"solver", place_solver},
                          {"evaluations", p.evaluations},
                          {"converged", p.converged},
                          {"wall_time_s", wall}});
            log(g, "placement " + format_id_list(p.generators) + " logdet " + format_double(p.objective));
            return 0;
        }

        if (*est_cmd) {
            const Loaded l = load(g);
            const PowerFlowSolution pf = converged_pf(l.c);
            const ReducedModel model = init_steady_state(l.c, pf, kind);
            const std::vector<int> ids = parse_id_list(est_placement);
            const EstimatorConfig ecfg = EstimatorConfig::defaults(model);
            std::optional<Scenario> fixed;
            if (est_scenario == "method2") {
                if (est_fault.empty())
                    throw ValidationError("method2 needs --fault from:to");
                const auto [a, b] = parse_branch(est_fault);
                fixed = method2_scenario(l.c, pf, a, b, kind, ecfg, g.seed);
            }
            std::vector<EstimationRun> runs(est_runs);
            std::vector<Scenario> scenarios(fixed ? 0 : est_runs);
            parallel_for(est_runs, threads, [&](std::size_t r) {
                if (!fixed)
                    scenarios[r] = method1_scenario(model, ecfg, derive_seed(g.seed, 2 * r));
                runs[r] = run_estimation(fixed ? *fixed : scenarios[r], ids, ecfg, derive_seed(g.seed, 2 * r + 1));
            });
            const ReducedModel& fm = fixed ? fixed->filter_model : model;
            std::vector<std::string> names;
            for (const std::string& s : state_names(fm))
                names.push_back("true_" + s);
            for (const std::string& s : state_names(fm))
                names.push_back("est_" + s);
            json settings{{"placement", ids}, {"scenario", est_scenario}, {"runs", est_runs},
                          {"estimator", ecfg.to_json()}};
            if (!est_fault.empty())
                settings["fault"] = est_fault;
            const ExperimentManifest m = manifest(g, l, "estimate", settings);
            double ed = 0, eo = 0, nd = 0;
            std::size_t ok = 0, diverged = 0;
            json per_run = json::array();
            for (std::size_t r = 0; r < runs.size(); ++r) {
                const EstimationRun& run = runs[r];
                per_run.push_back({{"run", r},
                                   {"noise_seed", run.seed},
                                   {"perturbed", fixed ? json(nullptr) : json(scenarios[r].perturbed)},
                                   {"offsets", fixed ? json(nullptr) : json(scenarios[r].offsets)},
                                   {"diverged", run.diverged},
                                   {"e_delta", num(run.e_delta)},
                                   {"e_omega", num(run.e_omega)},
                                   {"n_delta", run.n_delta}});
                if (run.diverged) {
                    ++diverged;
                } else {
                    ed += run.e_delta;
                    eo += run.e_omega;
                    nd += run.n_delta;
                    ++ok;
                }
                if (!g.out.empty()) {
                    char name[32];
                    std::snprintf(name, sizeof name, "run_%04zu.csv", r);
                    write_text(fs::path(g.out) / name,
                               trajectory_csv(names, run.time, {&run.truth, &run.estimate}));
                }
            }
            const double nan = std::nan("");
            json summary{{"manifest", m.to_json()},
                         {"e_delta_mean", num(ok ? ed / static_cast<double>(ok) : nan)},
                         {"e_omega_mean", num(ok ? eo / static_cast<double>(ok) : nan)},
                         {"n_delta_mean", num(ok ? nd / static_cast<double>(ok) : nan)},
                         {"diverged_count", diverged},
                         {"runs", per_run}};
            if (g.out.empty())
                std::cout << summary.dump(2) << '\n';
            else
                write_text(fs::path(g.out) / "summary.json", summary.dump(2) + "\n");
            return 0;
        }

        if (*rob_cmd) {
            const Loaded l = load(g);
            RobustnessOptions o;
            o.cases = rob_cases;
            o.gamma = rob_gamma;
            o.seed = g.seed;
            std::tie(o.k_min, o.k_max) = parse_range(rob_range);
            o.solver = parse_solver(rob_solver);
            o.mads.seed = g.seed;
            o.threads = threads;
            const GramianConfig cfg = gramian_config(1.0 / 30.0, 5.0, threads);
            const RobustnessReport rep = rob_mode == "fluctuation" ? fluctuation_study(l.c, kind, cfg, o)
                                                                   : contingency_study(l.c, kind, cfg, o);
            json j = rep.to_json();
            j["manifest"] = manifest(g, l, "robustness",
                                     {{"mode", rob_mode},
                                      {"cases", rob_cases},
                                      {"gamma", rob_gamma},
                                      {"pmus_range", rob_range},
                                      {"solver", rob_solver},
                                      {"gramian", cfg.to_json()}})
                                .to_json();
            emit_json(g, j);
            return 0;
        }

        if (*sweep_cmd) {
            const Loaded l = load(g);
            const PowerFlowSolution pf = converged_pf(l.c);
            const ReducedModel model = init_steady_state(l.c, pf, kind);
            const GramianConfig cfg = gramian_config(g_dt, 5.0, threads);
            SweepOptions so;
            if (!sweep_range.empty())
                std::tie(so.k_min, so.k_max) = parse_range(sweep_range);
            so.solver = parse_solver(sweep_solver);
            so.seed = g.seed;
            so.record_time = !sweep_no_timing;
            const SweepReport rep = run_sweep(per_generator_bank(model, cfg), so);
            emit_csv(g, rep.csv(),
                     manifest(g, l, "sweep",
                              {{"pmus_range", sweep_range.empty() ? "1:" + std::to_string(l.c.generator_count())
                                                                  : sweep_range},
                               {"solver", sweep_solver},
                               {"timing", so.record_time},
                               {"gramian", cfg.to_json()}}));
            return 0;
        }

        if (*cmp_cmd) {
            const Loaded l = load(g);
            const PowerFlowSolution pf = converged_pf(l.c);
            const ReducedModel model = init_steady_state(l.c, pf, kind);
            ComparisonOptions co;
            if (!cmp_range.empty())
                std::tie(co.k_min, co.k_max) = parse_range(cmp_range);
            co.runs = cmp_runs;
            co.seed = g.seed;
            co.solver = parse_solver(cmp_solver);
            co.scenario = cmp_scenario;
            co.threads = threads;
            const GramianConfig cfg = gramian_config(1.0 / 30.0, 5.0, threads);
            const EstimatorConfig ecfg = EstimatorConfig::defaults(model);
            const ComparisonReport rep = run_comparison(l.c, kind, cfg, ecfg, co);
            const ExperimentManifest m = manifest(g, l, "compare",
                                                  {{"pmus_range", cmp_range},
                                                   {"runs", cmp_runs},
                                                   {"solver", cmp_solver},
                                                   {"scenario", cmp_scenario},
                                                   {"estimator", ecfg.to_json()}});
            json j = rep.to_json();
            j["manifest"] = m.to_json();
            if (g.out.empty()) {
                std::cout << j.dump(2) << '\n';
            } else {
                write_text(fs::path(g.out) / "comparison.json", j.dump(2) + "\n");
                write_text(fs::path(g.out) / "comparison.csv", rep.csv());
            }
            return 0;
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const GuardError& e) {
        std::cerr << "guard: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
