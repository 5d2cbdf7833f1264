#include "pmuplace/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pmuplace/errors.hpp"
#include "pmuplace/parallel.hpp"
#include "pmuplace/util.hpp"

namespace pmuplace {

using Eigen::VectorXd;

FluctuationCase fluctuation_case(const PowerSystemCase& c, ModelKind kind, double gamma, std::uint64_t seed)
{
    if (!(gamma >= 1.0 && gamma < 2.0))
        throw ValidationError("load fluctuation gamma must lie in [1, 2)");
    FluctuationCase fc;
    fc.seed = seed;
    fc.load_buses = load_bus_ids(c);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(2.0 - gamma, gamma);
    for (std::size_t i = 0; i < fc.load_buses.size(); ++i)
        fc.alpha.push_back(gamma == 1.0 ? 1.0 : u(rng));
    fc.scaled = apply_load_scaling(c, fc.alpha);
    try {
        fc.pf = solve_power_flow(fc.scaled);
    } catch (const NumericalError&) {
        fc.pf.converged = false;
    }
    if (fc.pf.converged)
        fc.model = init_steady_state(fc.scaled, fc.pf, kind);
    return fc;
}

ContingencyCase contingency_case(const PowerSystemCase& c, const PowerFlowSolution& pf, int from_bus, int to_bus,
                                 ModelKind kind, const FaultTiming& timing, double sim_dt)
{
    check_fault_branch(c, from_bus, to_bus);
    const ReducedModel base = init_steady_state(c, pf, kind);
    const FaultSchedule schedule = build_fault_schedule(c, pf, from_bus, to_bus, kind, timing);
    ContingencyCase cc;
    cc.from_bus = from_bus;
    cc.to_bus = to_bus;
    cc.model = schedule.final_model();
    // An already-open branch leaves every stage on the base network.
    cc.null_contingency = std::none_of(c.branches.begin(), c.branches.end(), [&](const Branch& br) {
        return br.status && ((br.from == from_bus && br.to == to_bus) || (br.from == to_bus && br.to == from_bus));
    });
    const auto steps = static_cast<std::size_t>(std::llround(timing.t_clear_remote / sim_dt));
    if (steps == 0) {
        cc.x0 = base.x0;
    } else {
        const Trajectory tr = simulate(schedule, base.x0, static_cast<double>(steps) * sim_dt, sim_dt);
        cc.x0 = tr.states.col(static_cast<Eigen::Index>(steps));
    }
    return cc;
}

std::vector<BranchFlow> rank_contingency_branches(const PowerSystemCase& c, const PowerFlowSolution& pf)
{
    std::vector<BranchFlow> flows = branch_flows(c, pf);
    std::vector<BranchFlow> out;
    for (std::size_t i = 0; i < flows.size(); ++i) {
        const Branch& br = c.branches[i];
        if (!br.status || c.is_generator_bus(br.from) || c.is_generator_bus(br.to))
            continue;
        out.push_back(flows[i]);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const BranchFlow& a, const BranchFlow& b) { return std::abs(a.p_from) > std::abs(b.p_from); });
    return out;
}

double overlap_ratio(std::span<const int> a, std::span<const int> b)
{
    if (a.size() != b.size())
        throw ValidationError("overlap ratio needs placements of equal size (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    if (a.empty())
        throw ValidationError("overlap ratio of empty placements");
    std::size_t shared = 0;
    for (int x : a)
        shared += static_cast<std::size_t>(std::count(b.begin(), b.end(), x) > 0);
    return static_cast<double>(shared) / static_cast<double>(a.size());
}

double overlap_ratio(const Placement& a, const Placement& b)
{
    return overlap_ratio(a.generators, b.generators);
}

double cross_evaluate(std::span<const int> placement, const GramianBank& disturbed)
{
    return evaluate(selection_from_ids(disturbed.size(), placement), disturbed);
}

namespace {

nlohmann::json num(double v)
{
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(format_double(v));
}

void check_range(const PowerSystemCase& c, const RobustnessOptions& o)
{
    if (o.k_min < 1 || o.k_max < o.k_min || static_cast<std::size_t>(o.k_max) > c.generator_count())
        throw ValidationError("PMU range must satisfy 1 <= min <= max <= " + std::to_string(c.generator_count()));
}

GramianConfig single_threaded(GramianConfig cfg)
{
    cfg.threads = 1;
    return cfg;
}

void fill_entries(RobustnessCaseResult& res, const GramianBank& bank, const std::vector<Placement>& base,
                  const RobustnessOptions& o)
{
    for (const Placement& b : base) {
        const Placement p = solve_placement(bank, b.cardinality, o.solver, o.mads);
        RobustnessEntry e;
        e.k = b.cardinality;
        e.placement = p.generators;
        e.logdet = p.objective;
        e.base_cross = cross_evaluate(b.generators, bank);
        e.ratio = overlap_ratio(b, p);
        res.entries.push_back(std::move(e));
    }
}

RobustnessReport start_report(const PowerSystemCase& c, ModelKind kind, const GramianConfig& cfg,
                              const RobustnessOptions& o, std::string mode, const ReducedModel& base_model)
{
    check_range(c, o);
    RobustnessReport rep;
    rep.mode = std::move(mode);
    rep.model = kind;
    rep.options = o;
    rep.gramian_fingerprint = cfg.fingerprint();
    GramianConfig inner = cfg;
    inner.threads = std::max(1u, o.threads);
    const GramianBank bank = per_generator_bank(base_model, inner);
    for (int k = o.k_min; k <= o.k_max; ++k)
        rep.base.push_back(solve_placement(bank, k, o.solver, o.mads));
    return rep;
}

void finish_report(RobustnessReport& rep)
{
    const std::size_t nk = rep.base.size();
    rep.mean_ratio.assign(nk, 0.0);
    std::size_t used = 0;
    for (const RobustnessCaseResult& cr : rep.cases) {
        if (cr.skipped)
            continue;
        ++used;
        for (std::size_t j = 0; j < nk; ++j)
            rep.mean_ratio[j] += cr.entries[j].ratio;
    }
    for (double& r : rep.mean_ratio)
        r = used ? r / static_cast<double>(used) : std::nan("");
}

} // namespace

RobustnessReport fluctuation_study(const PowerSystemCase& c, ModelKind kind, const GramianConfig& cfg,
                                   const RobustnessOptions& o)
{
    const PowerFlowSolution pf = solve_power_flow(c);
    if (!pf.converged)
        throw NumericalError("base power flow did not converge");
    RobustnessReport rep = start_report(c, kind, cfg, o, "fluctuation", init_steady_state(c, pf, kind));
    rep.cases.resize(o.cases);
    const GramianConfig inner = single_threaded(cfg);
    parallel_for(o.cases, o.threads, [&](std::size_t i) {
        RobustnessCaseResult& res = rep.cases[i];
        const std::uint64_t seed = derive_seed(o.seed, i);
        const FluctuationCase fc = fluctuation_case(c, kind, o.gamma, seed);
        res.descriptor = "fluctuation " + std::to_string(i + 1);
        res.params = {{"seed", seed}, {"load_buses", fc.load_buses}, {"alpha", fc.alpha}};
        if (!fc.model) {
            res.skipped = true;
            res.skip_reason = "power flow did not converge";
            return;
        }
        fill_entries(res, per_generator_bank(*fc.model, inner), rep.base, o);
    });
    finish_report(rep);
    return rep;
}

RobustnessReport contingency_study(const PowerSystemCase& c, ModelKind kind, const GramianConfig& cfg,
                                   const RobustnessOptions& o)
{
    const PowerFlowSolution pf = solve_power_flow(c);
    if (!pf.converged)
        throw NumericalError("base power flow did not converge");
    RobustnessReport rep = start_report(c, kind, cfg, o, "contingency", init_steady_state(c, pf, kind));
    std::vector<BranchFlow> ranked = rank_contingency_branches(c, pf);
    if (ranked.size() > o.cases)
        ranked.resize(o.cases);
    rep.cases.resize(ranked.size());
    const GramianConfig inner = single_threaded(cfg);
    parallel_for(ranked.size(), o.threads, [&](std::size_t i) {
        RobustnessCaseResult& res = rep.cases[i];
        const BranchFlow& br = ranked[i];
        res.descriptor = std::to_string(br.from) + "-" + std::to_string(br.to);
        res.params = {{"from_bus", br.from}, {"to_bus", br.to}, {"p_from", br.p_from}, {"rank", i + 1}};
        try {
            const ContingencyCase cc = contingency_case(c, pf, br.from, br.to, kind);
            res.params["x0"] = std::vector<double>(cc.x0.data(), cc.x0.data() + cc.x0.size());
            fill_entries(res, per_generator_bank(cc.model, inner, cc.x0), rep.base, o);
        } catch (const NumericalError& e) {
            res.skipped = true;
            res.skip_reason = e.what();
        }
    });
    finish_report(rep);
    return rep;
}

nlohmann::json RobustnessReport::to_json() const
{
    nlohmann::json j;
    j["mode"] = mode;
    j["model"] = std::string(to_string(model));
    j["gamma"] = options.gamma;
    j["seed"] = options.seed;
    j["solver"] = std::string(to_string(options.solver));
    j["gramian_fingerprint"] = gramian_fingerprint;
    nlohmann::json base_j = nlohmann::json::array();
    for (const Placement& p : base)
        base_j.push_back({{"k", p.cardinality}, {"placement", p.generators}, {"logdet", num(p.objective)}});
    j["base"] = base_j;
    nlohmann::json cases_j = nlohmann::json::array();
    for (const RobustnessCaseResult& cr : cases) {
        nlohmann::json cj{{"case", cr.descriptor}, {"params", cr.params}, {"skipped", cr.skipped}};
        if (cr.skipped)
            cj["skip_reason"] = cr.skip_reason;
        nlohmann::json ej = nlohmann::json::array();
        for (const RobustnessEntry& e : cr.entries)
            ej.push_back({{"k", e.k},
                          {"placement", e.placement},
                          {"logdet", num(e.logdet)},
                          {"base_placement_logdet", num(e.base_cross)},
                          {"ratio", e.ratio}});
        cj["results"] = ej;
        cases_j.push_back(cj);
    }
    j["cases"] = cases_j;
    nlohmann::json mr = nlohmann::json::object();
    for (std::size_t i = 0; i < mean_ratio.size(); ++i)
        mr[std::to_string(base[i].cardinality)] = num(mean_ratio[i]);
    j["mean_ratio"] = mr;
    return j;
}

} // namespace pmuplace
