#include "pmuplace/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "pmuplace/errors.hpp"
#include "pmuplace/parallel.hpp"
#include "pmuplace/robustness.hpp"
#include "pmuplace/util.hpp"

namespace pmuplace {

std::string_view tool_version()
{
    return PMUPLACE_VERSION;
}

std::string ExperimentManifest::config_fingerprint() const
{
    const nlohmann::json j{{"subcommand", subcommand}, {"case", case_fingerprint}, {"model", model},
                           {"settings", settings},     {"seed", seed},             {"version", version}};
    return fingerprint(j.dump());
}

nlohmann::json ExperimentManifest::to_json() const
{
    return {{"subcommand", subcommand}, {"case_path", case_path},     {"case_fingerprint", case_fingerprint},
            {"model", model},           {"settings", settings},       {"seed", seed},
            {"output", output},         {"tool_version", version},    {"config_fingerprint", config_fingerprint()}};
}

namespace {

nlohmann::json num(double v)
{
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(format_double(v));
}

std::string ids_text(const std::vector<int>& ids)
{
    return format_id_list(ids, ' ');
}

std::pair<int, int> resolve_range(int lo, int hi, std::size_t g)
{
    if (hi == 0)
        hi = static_cast<int>(g);
    if (lo < 1 || hi < lo || static_cast<std::size_t>(hi) > g)
        throw ValidationError("PMU range " + std::to_string(lo) + ":" + std::to_string(hi) + " outside 1:" +
                              std::to_string(g));
    return {lo, hi};
}

} // namespace

std::string SweepReport::csv() const
{
    std::ostringstream os;
    os << "g_bar,logdet,sigma_min,placement,time_s\n";
    for (const SweepRow& r : rows)
        os << r.k << ',' << format_double(r.logdet) << ',' << format_double(r.sigma_min) << ',' << ids_text(r.placement)
           << ',' << format_double(r.time_s) << '\n';
    return os.str();
}

nlohmann::json SweepReport::to_json() const
{
    nlohmann::json arr = nlohmann::json::array();
    for (const SweepRow& r : rows)
        arr.push_back({{"g_bar", r.k},
                       {"placement", r.placement},
                       {"logdet", num(r.logdet)},
                       {"sigma_min", num(r.sigma_min)},
                       {"time_s", r.time_s},
                       {"evaluations", r.evaluations},
                       {"converged", r.converged}});
    return {{"rows", arr}};
}

SweepReport run_sweep(const GramianBank& bank, const SweepOptions& opts)
{
    const auto [lo, hi] = resolve_range(opts.k_min, opts.k_max, bank.size());
    SweepReport rep;
    for (int k = lo; k <= hi; ++k) {
        MadsOptions mo;
        mo.seed = derive_seed(opts.seed, static_cast<std::uint64_t>(k));
        mo.budget = opts.budget;
        const auto t0 = std::chrono::steady_clock::now();
        const Placement p = solve_placement(bank, k, opts.solver, mo);
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        SweepRow row;
        row.k = k;
        row.placement = p.generators;
        row.logdet = p.objective;
        row.sigma_min = min_max_eigenvalue(bank.sum(p.generators)).min;
        row.time_s = opts.record_time ? elapsed : 0.0;
        row.evaluations = p.evaluations;
        row.converged = p.converged;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

std::string ComparisonReport::csv() const
{
    std::ostringstream os;
    os << "g_bar,optimal,e_delta_optimal,n_delta_optimal,e_delta_random,n_delta_random,diverged_optimal,"
          "diverged_random\n";
    for (const ComparisonRow& r : rows)
        os << r.k << ',' << ids_text(r.optimal) << ',' << format_double(r.e_delta_optimal) << ','
           << format_double(r.n_delta_optimal) << ',' << format_double(r.e_delta_random) << ','
           << format_double(r.n_delta_random) << ',' << r.diverged_optimal << ',' << r.diverged_random << '\n';
    return os.str();
}

nlohmann::json ComparisonReport::to_json() const
{
    nlohmann::json arr = nlohmann::json::array();
    for (const ComparisonRow& r : rows)
        arr.push_back({{"g_bar", r.k},
                       {"optimal", r.optimal},
                       {"e_delta_optimal", num(r.e_delta_optimal)},
                       {"n_delta_optimal", num(r.n_delta_optimal)},
                       {"e_delta_random", num(r.e_delta_random)},
                       {"n_delta_random", num(r.n_delta_random)},
                       {"diverged_optimal", r.diverged_optimal},
                       {"diverged_random", r.diverged_random}});
    return {{"rows", arr}};
}

ComparisonReport run_comparison(const PowerSystemCase& c, ModelKind kind, const GramianConfig& gcfg,
                                const EstimatorConfig& ecfg, const ComparisonOptions& opts)
{
    const std::size_t g = c.generator_count();
    const auto [lo, hi] = resolve_range(opts.k_min, opts.k_max, g);
    if (opts.scenario != "method1" && opts.scenario != "method2")
        throw ValidationError("scenario must be method1 or method2");
    const PowerFlowSolution pf = solve_power_flow(c);
    if (!pf.converged)
        throw NumericalError("power flow did not converge");
    const ReducedModel model = init_steady_state(c, pf, kind);
    const GramianBank bank = per_generator_bank(model, gcfg);
    std::vector<BranchFlow> branches;
    if (opts.scenario == "method2") {
        branches = rank_contingency_branches(c, pf);
        if (branches.empty())
            throw GuardError("no branch without a generator terminal is available for method2");
    }

    // Scenarios are shared across PMU counts.
    std::vector<Scenario> scenarios(opts.runs);
    parallel_for(opts.runs, opts.threads, [&](std::size_t r) {
        const std::uint64_t s = derive_seed(opts.seed, 3 * r);
        if (opts.scenario == "method1") {
            scenarios[r] = method1_scenario(model, ecfg, s);
        } else {
            const BranchFlow& br = branches[r % branches.size()];
            scenarios[r] = method2_scenario(c, pf, br.from, br.to, kind, ecfg, s);
        }
    });

    ComparisonReport rep;
    for (int k = lo; k <= hi; ++k) {
        MadsOptions mo;
        mo.seed = derive_seed(opts.seed, 1000003ULL + static_cast<std::uint64_t>(k));
        const Placement best = solve_placement(bank, k, opts.solver, mo);
        std::vector<EstimationRun> opt_runs(opts.runs), rnd_runs(opts.runs);
        parallel_for(opts.runs, opts.threads, [&](std::size_t r) {
            const std::uint64_t noise = derive_seed(opts.seed, 3 * r + 1);
            std::mt19937_64 rng(derive_seed(derive_seed(opts.seed, 3 * r + 2), static_cast<std::uint64_t>(k)));
            std::vector<int> pool(g);
            for (std::size_t i = 0; i < g; ++i)
                pool[i] = static_cast<int>(i) + 1;
            for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, g - 1);
                std::swap(pool[i], pool[pick(rng)]);
            }
            std::vector<int> random_ids(pool.begin(), pool.begin() + k);
            std::sort(random_ids.begin(), random_ids.end());
            opt_runs[r] = run_estimation(scenarios[r], best.generators, ecfg, noise);
            rnd_runs[r] = run_estimation(scenarios[r], random_ids, ecfg, noise);
        });
        auto average = [](const std::vector<EstimationRun>& runs, double& e, double& n, std::size_t& div) {
            double se = 0.0, sn = 0.0;
            std::size_t ok = 0;
            for (const EstimationRun& run : runs) {
                if (run.diverged) {
                    ++div;
                    continue;
                }
                se += run.e_delta;
                sn += run.n_delta;
                ++ok;
            }
            e = ok ? se / static_cast<double>(ok) : std::nan("");
            n = ok ? sn / static_cast<double>(ok) : std::nan("");
        };
        ComparisonRow row;
        row.k = k;
        row.optimal = best.generators;
        average(opt_runs, row.e_delta_optimal, row.n_delta_optimal, row.diverged_optimal);
        average(rnd_runs, row.e_delta_random, row.n_delta_random, row.diverged_random);
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os)
            throw ValidationError("cannot write " + path.string());
        os << text;
        if (!os)
            throw ValidationError("write failed for " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace pmuplace
