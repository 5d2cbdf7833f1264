#include "pmuplace/placement.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "pmuplace/errors.hpp"

namespace pmuplace {

using Eigen::MatrixXd;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Objective restricted to a subset of candidate generators, on top of a fixed
// base matrix (pinned sensors). Positions index `candidates`.
class Objective {
public:
    Objective(const GramianBank& bank, std::vector<int> candidates, MatrixXd base, bool cache)
        : bank_(bank), candidates_(std::move(candidates)), base_(std::move(base)), use_cache_(cache),
          has_base_(base_.size() > 0 && base_.cwiseAbs().maxCoeff() > 0.0)
    {
    }

    std::size_t size() const { return candidates_.size(); }
    std::size_t evaluations() const { return evaluations_; }

    double operator()(const Selection& z)
    {
        if (use_cache_) {
            auto it = cache_.find(z);
            if (it != cache_.end())
                return it->second;
        }
        MatrixXd w = base_;
        bool any = has_base_;
        for (std::size_t i = 0; i < z.size(); ++i) {
            if (z[i]) {
                w += bank_.per_generator[static_cast<std::size_t>(candidates_[i] - 1)];
                any = true;
            }
        }
        const double v = any ? logdet(w) : kNegInf;
        ++evaluations_;
        visited_.insert(z);
        if (use_cache_)
            cache_.emplace(z, v);
        return v;
    }

    // Distinct points evaluated so far. The search budget counts these, so
    // turning the cache off changes only the work done, never the result.
    std::size_t distinct() const { return visited_.size(); }
    bool seen(const Selection& z) const { return visited_.count(z) > 0; }

    std::vector<int> ids(const Selection& z) const
    {
        std::vector<int> out;
        for (std::size_t i = 0; i < z.size(); ++i)
            if (z[i])
                out.push_back(candidates_[i]);
        return out;
    }

private:
    const GramianBank& bank_;
    std::vector<int> candidates_;
    MatrixXd base_;
    bool use_cache_;
    bool has_base_;
    std::size_t evaluations_ = 0;
    std::map<Selection, double> cache_;
    std::set<Selection> visited_;
};

// Lexicographically smallest generator-id set wins ties.
bool better(double a, const Selection& za, double b, const Selection& zb)
{
    if (a != b)
        return a > b;
    // Compare sorted index lists: the set whose first differing member is
    // smaller is lexicographically smaller.
    for (std::size_t i = 0; i < za.size(); ++i)
        if (za[i] != zb[i])
            return za[i] > zb[i];
    return false;
}

void check_cardinality(std::size_t g, int k)
{
    if (k < 1 || static_cast<std::size_t>(k) > g)
        throw ValidationError("number of PMUs must be between 1 and " + std::to_string(g) + ", got " +
                              std::to_string(k));
}

Selection run_exhaustive(Objective& obj, int k, double& best_value)
{
    const std::size_t g = obj.size();
    if (binomial(g, static_cast<std::size_t>(k)) > kMaxEnumeration)
        throw GuardError("exhaustive enumeration of C(" + std::to_string(g) + "," + std::to_string(k) +
                         ") placements exceeds 1e6; use the mads solver");
    // Lexicographic enumeration of index combinations.
    std::vector<std::size_t> idx(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    Selection best;
    best_value = kNegInf;
    while (true) {
        Selection z(g, 0);
        for (std::size_t i : idx)
            z[i] = 1;
        const double v = obj(z);
        if (best.empty() || better(v, z, best_value, best)) {
            best = z;
            best_value = v;
        }
        std::size_t pos = idx.size();
        while (pos > 0 && idx[pos - 1] == g - idx.size() + pos - 1)
            --pos;
        if (pos == 0)
            break;
        ++idx[pos - 1];
        for (std::size_t j = pos; j < idx.size(); ++j)
            idx[j] = idx[j - 1] + 1;
    }
    return best;
}

Selection run_greedy(Objective& obj, int k, double& value)
{
    const std::size_t g = obj.size();
    Selection z(g, 0);
    value = kNegInf;
    for (int step = 0; step < k; ++step) {
        std::size_t pick = g;
        double pick_value = kNegInf;
        for (std::size_t i = 0; i < g; ++i) {
            if (z[i])
                continue;
            z[i] = 1;
            const double v = obj(z);
            z[i] = 0;
            if (pick == g || v > pick_value) {
                pick = i;
                pick_value = v;
            }
        }
        z[pick] = 1;
        value = pick_value;
    }
    return z;
}

struct MadsResult {
    Selection z;
    double value = kNegInf;
    bool converged = false;
};

class SwapSearch {
public:
    SwapSearch(Objective& obj, std::size_t budget, std::uint64_t seed, double tau)
        : obj_(obj), budget_(budget), start_evals_(obj.distinct()), rng_(seed), tau_(tau)
    {
    }

    bool exhausted() const { return obj_.distinct() - start_evals_ >= budget_; }

    // Evaluates a trial point unless the budget is spent (cached points are
    // free). Returns false when the point could not be evaluated.
    bool try_eval(const Selection& z, double& v)
    {
        if (!obj_.seen(z) && exhausted())
            return false;
        v = obj_(z);
        return true;
    }

    struct PollOutcome {
        bool improved = false;
        bool out_of_budget = false;
    };

    // Poll around `center` at mesh size `delta` (number of simultaneous
    // swaps); moves center to the best trial point on improvement.
    PollOutcome poll(Selection& center, double& value, std::size_t delta)
    {
        PollOutcome out;
        Selection best = center;
        double best_v = value;
        auto consider = [&](const Selection& trial) {
            double v = 0.0;
            if (!try_eval(trial, v)) {
                out.out_of_budget = true;
                return false;
            }
            if (better(v, trial, best_v, best)) {
                best = trial;
                best_v = v;
                out.improved = true;
            }
            return true;
        };
        const std::vector<std::size_t> in = members(center, 1);
        const std::vector<std::size_t> off = members(center, 0);
        if (delta <= 1) {
            // Complete single-swap neighborhood in fixed order.
            for (std::size_t a = 0; a < in.size() && !out.out_of_budget; ++a) {
                for (std::size_t b = 0; b < off.size(); ++b) {
                    Selection trial = center;
                    trial[in[a]] = 0;
                    trial[off[b]] = 1;
                    if (!consider(trial))
                        break;
                }
            }
        } else {
            // Sampled directions of `delta` simultaneous swaps.
            const std::size_t directions = in.size() + off.size();
            for (std::size_t d = 0; d < directions; ++d)
                if (!consider(random_swaps(center, delta)))
                    break;
        }
        if (out.improved) {
            center = best;
            value = best_v;
        }
        return out;
    }

    // Poll/update loop. Returns true at a local optimum of the single-swap
    // neighborhood, false when the budget ran out first.
    bool descend(Selection& z, double& value)
    {
        const double max_delta = static_cast<double>(std::max<std::size_t>(1, std::min(count(z, 1), count(z, 0))));
        double delta = 1.0;
        while (true) {
            const auto d = static_cast<std::size_t>(std::llround(delta));
            const PollOutcome o = poll(z, value, d);
            if (o.out_of_budget)
                return false;
            if (o.improved)
                delta = std::min(max_delta, delta * tau_);
            else if (d > 1)
                delta = std::max(1.0, delta / tau_);
            else
                return true;
        }
    }

    Selection random_swaps(const Selection& center, std::size_t j)
    {
        Selection z = center;
        std::vector<std::size_t> in = members(z, 1);
        std::vector<std::size_t> out = members(z, 0);
        std::shuffle(in.begin(), in.end(), rng_);
        std::shuffle(out.begin(), out.end(), rng_);
        const std::size_t swaps = std::min({j, in.size(), out.size()});
        for (std::size_t s = 0; s < swaps; ++s) {
            z[in[s]] = 0;
            z[out[s]] = 1;
        }
        return z;
    }

    static std::vector<std::size_t> members(const Selection& z, std::uint8_t bit)
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < z.size(); ++i)
            if (z[i] == bit)
                out.push_back(i);
        return out;
    }

    static std::size_t count(const Selection& z, std::uint8_t bit)
    {
        return static_cast<std::size_t>(std::count(z.begin(), z.end(), bit));
    }

private:
    Objective& obj_;
    std::size_t budget_;
    std::size_t start_evals_;
    std::mt19937_64 rng_;
    double tau_;
};

MadsResult run_mads(Objective& obj, int k, const MadsOptions& opts)
{
    const std::size_t g = obj.size();
    const std::size_t budget = opts.budget.value_or(200 * g);

    MadsResult res;
    res.z = run_greedy(obj, k, res.value);
    SwapSearch search(obj, budget, opts.seed, opts.tau);
    if (search.exhausted())
        return res;

    if (!search.descend(res.z, res.value))
        return res;

    const std::size_t cap = std::min<std::size_t>(static_cast<std::size_t>(k), g - static_cast<std::size_t>(k));
    std::size_t j = 2;
    while (j <= cap) {
        Selection trial = search.random_swaps(res.z, j);
        double v = 0.0;
        if (!search.try_eval(trial, v))
            return res;
        const bool finished = search.descend(trial, v);
        if (better(v, trial, res.value, res.z)) {
            res.z = trial;
            res.value = v;
            j = 2;
        } else {
            ++j;
        }
        if (!finished)
            return res;
    }
    res.converged = true;
    return res;
}

Placement make_placement(const Objective& obj, const Selection& local, std::size_t g_total,
                         const std::vector<int>& pinned, double value, Solver solver, bool converged)
{
    std::vector<int> ids = obj.ids(local);
    ids.insert(ids.end(), pinned.begin(), pinned.end());
    std::sort(ids.begin(), ids.end());
    Placement p;
    p.z = selection_from_ids(g_total, ids);
    p.generators = ids;
    p.cardinality = static_cast<int>(ids.size());
    p.objective = value;
    p.solver = solver;
    p.evaluations = obj.evaluations();
    p.converged = converged;
    return p;
}

std::vector<int> all_ids(std::size_t g)
{
    std::vector<int> ids(g);
    for (std::size_t i = 0; i < g; ++i)
        ids[i] = static_cast<int>(i) + 1;
    return ids;
}

MatrixXd zero_base(const GramianBank& bank)
{
    const auto n = static_cast<Eigen::Index>(bank.state_dim());
    return MatrixXd::Zero(n, n);
}

} // namespace

std::string_view to_string(Solver s)
{
    switch (s) {
    case Solver::exhaustive: return "exhaustive";
    case Solver::greedy: return "greedy";
    case Solver::mads: return "mads";
    }
    return "?";
}

Solver parse_solver(std::string_view s)
{
    if (s == "exhaustive") return Solver::exhaustive;
    if (s == "greedy") return Solver::greedy;
    if (s == "mads") return Solver::mads;
    throw ValidationError("unknown solver '" + std::string(s) + "' (exhaustive|greedy|mads)");
}

Selection selection_from_ids(std::size_t g, std::span<const int> ids)
{
    Selection z(g, 0);
    for (int id : ids) {
        if (id < 1 || static_cast<std::size_t>(id) > g)
            throw ValidationError("generator " + std::to_string(id) + " out of range 1.." + std::to_string(g));
        if (z[static_cast<std::size_t>(id - 1)])
            throw ValidationError("generator " + std::to_string(id) + " listed twice");
        z[static_cast<std::size_t>(id - 1)] = 1;
    }
    return z;
}

std::vector<int> ids_from_selection(const Selection& z)
{
    std::vector<int> ids;
    for (std::size_t i = 0; i < z.size(); ++i)
        if (z[i])
            ids.push_back(static_cast<int>(i) + 1);
    return ids;
}

double evaluate(const Selection& z, const GramianBank& bank)
{
    if (z.size() != bank.size())
        throw ValidationError("selection length " + std::to_string(z.size()) + " does not match bank size " +
                              std::to_string(bank.size()));
    const std::vector<int> ids = ids_from_selection(z);
    if (ids.empty())
        return kNegInf;
    return logdet(bank.sum(ids));
}

Placement exhaustive(const GramianBank& bank, int k)
{
    check_cardinality(bank.size(), k);
    Objective obj(bank, all_ids(bank.size()), zero_base(bank), true);
    double v = 0.0;
    const Selection z = run_exhaustive(obj, k, v);
    return make_placement(obj, z, bank.size(), {}, v, Solver::exhaustive, true);
}

Placement greedy(const GramianBank& bank, int k)
{
    check_cardinality(bank.size(), k);
    Objective obj(bank, all_ids(bank.size()), zero_base(bank), true);
    double v = 0.0;
    const Selection z = run_greedy(obj, k, v);
    return make_placement(obj, z, bank.size(), {}, v, Solver::greedy, true);
}

Placement mads(const GramianBank& bank, int k, const MadsOptions& opts)
{
    check_cardinality(bank.size(), k);
    Objective obj(bank, all_ids(bank.size()), zero_base(bank), opts.use_cache);
    const MadsResult r = run_mads(obj, k, opts);
    return make_placement(obj, r.z, bank.size(), {}, r.value, Solver::mads, r.converged);
}

Placement incremental(const GramianBank& bank, std::span<const int> pinned, int k_total, Solver solver,
                      const MadsOptions& opts)
{
    const std::size_t g = bank.size();
    const Selection pin = selection_from_ids(g, pinned);
    const int free_k = k_total - static_cast<int>(pinned.size());
    if (free_k < 0)
        throw ValidationError("total PMU count " + std::to_string(k_total) + " is below the " +
                              std::to_string(pinned.size()) + " pinned PMUs");
    if (static_cast<std::size_t>(k_total) > g)
        throw ValidationError("total PMU count exceeds the number of generators");
    std::vector<int> pinned_ids(pinned.begin(), pinned.end());
    std::sort(pinned_ids.begin(), pinned_ids.end());

    if (pinned.empty())
        return solve_placement(bank, k_total, solver, opts);

    std::vector<int> candidates;
    for (std::size_t i = 0; i < g; ++i)
        if (!pin[i])
            candidates.push_back(static_cast<int>(i) + 1);
    const MatrixXd base = bank.sum(pinned_ids);
    Objective obj(bank, candidates, base, opts.use_cache);

    if (free_k == 0) {
        const double v = logdet(base);
        Placement p = make_placement(obj, Selection(candidates.size(), 0), g, pinned_ids, v, solver, true);
        p.evaluations = 1;
        return p;
    }

    Selection z;
    double v = kNegInf;
    bool converged = true;
    switch (solver) {
    case Solver::exhaustive: z = run_exhaustive(obj, free_k, v); break;
    case Solver::greedy: z = run_greedy(obj, free_k, v); break;
    case Solver::mads: {
        const MadsResult r = run_mads(obj, free_k, opts);
        z = r.z;
        v = r.value;
        converged = r.converged;
        break;
    }
    }
    return make_placement(obj, z, g, pinned_ids, v, solver, converged);
}

Placement solve_placement(const GramianBank& bank, int k, Solver solver, const MadsOptions& opts)
{
    switch (solver) {
    case Solver::exhaustive: return exhaustive(bank, k);
    case Solver::greedy: return greedy(bank, k);
    case Solver::mads: return mads(bank, k, opts);
    }
    throw ValidationError("unknown solver");
}

GramianBank random_bank(std::size_t g, std::size_t n, std::size_t rank, std::uint64_t seed, double ridge)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    GramianBank bank;
    const auto ni = static_cast<Eigen::Index>(n);
    for (std::size_t i = 0; i < g; ++i) {
        MatrixXd b(ni, static_cast<Eigen::Index>(rank));
        for (Eigen::Index c = 0; c < b.cols(); ++c)
            for (Eigen::Index r = 0; r < ni; ++r)
                b(r, c) = normal(rng);
        MatrixXd w = b * b.transpose() + ridge * MatrixXd::Identity(ni, ni);
        bank.per_generator.push_back(0.5 * (w + w.transpose()));
    }
    bank.fingerprint = "random:" + std::to_string(seed);
    return bank;
}

double binomial(std::size_t n, std::size_t k)
{
    if (k > n)
        return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i)
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return std::round(r);
}

} // namespace pmuplace
