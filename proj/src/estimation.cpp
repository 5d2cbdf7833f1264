#include "pmuplace/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "pmuplace/errors.hpp"
#include "pmuplace/parallel.hpp"
#include "pmuplace/util.hpp"

namespace pmuplace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Weights {
    double lambda = 0.0;
    double gamma = 0.0;
    double wm0 = 0.0;
    double wc0 = 0.0;
    double wi = 0.0;
};

Weights unscented_weights(Index n, const UnscentedParams& ut)
{
    const auto nd = static_cast<double>(n);
    Weights w;
    w.lambda = ut.alpha * ut.alpha * (nd + ut.kappa) - nd;
    w.gamma = std::sqrt(nd + w.lambda);
    w.wm0 = w.lambda / (nd + w.lambda);
    w.wc0 = w.wm0 + (1.0 - ut.alpha * ut.alpha + ut.beta);
    w.wi = 1.0 / (2.0 * (nd + w.lambda));
    return w;
}

MatrixXd sigma_points(const VectorXd& mean, const MatrixXd& s, double gamma)
{
    const Index n = mean.size();
    MatrixXd x(n, 2 * n + 1);
    x.col(0) = mean;
    for (Index i = 0; i < n; ++i) {
        x.col(1 + i) = mean + gamma * s.col(i);
        x.col(1 + n + i) = mean - gamma * s.col(i);
    }
    return x;
}

// Weighted mean written relative to the centre point; the weights sum to 1
// and wm0 is large and negative for small alpha.
VectorXd weighted_mean(const MatrixXd& pts, const Weights& w)
{
    VectorXd acc = VectorXd::Zero(pts.rows());
    for (Index i = 1; i < pts.cols(); ++i)
        acc += pts.col(i) - pts.col(0);
    return pts.col(0) + w.wi * acc;
}

// Lower-triangular factor with a positive diagonal from the R of a QR
// decomposition of `compound` (rows are weighted deviations).
MatrixXd triangular_factor(const MatrixXd& compound)
{
    const Index n = compound.cols();
    Eigen::HouseholderQR<MatrixXd> qr(compound);
    MatrixXd r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    for (Index i = 0; i < n; ++i)
        if (r(i, i) < 0.0)
            r.row(i) *= -1.0;
    return r.transpose();
}

bool finite(const MatrixXd& m) { return m.allFinite(); }

// Factor of S S^T + sign * sum_j u_j u_j^T; falls back to refactoring the
// full matrix if a downdate fails.
void apply_updates(MatrixXd& s, const MatrixXd& u, double sign, SrukfStepInfo* info)
{
    MatrixXd work = s;
    try {
        for (Index j = 0; j < u.cols(); ++j)
            cholupdate(work, u.col(j), sign);
        s = std::move(work);
        return;
    } catch (const NumericalError&) {
    }
    if (info)
        ++info->refactorizations;
    MatrixXd p = s * s.transpose() + sign * u * u.transpose();
    p = 0.5 * (p + p.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(p);
    const double floor = std::max(1e-14, 1e-12 * es.eigenvalues().cwiseAbs().maxCoeff());
    const VectorXd lam = es.eigenvalues().cwiseMax(floor);
    MatrixXd rebuilt = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
    Eigen::LLT<MatrixXd> llt(0.5 * (rebuilt + rebuilt.transpose()));
    if (llt.info() != Eigen::Success)
        throw NumericalError("covariance refactorization failed");
    s = llt.matrixL();
}

MatrixXd sqrt_diag(const MatrixXd& m)
{
    Eigen::LLT<MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw ValidationError("noise covariance is not positive definite");
    return llt.matrixL();
}

} // namespace

NoiseLevels NoiseLevels::defaults(double omega0)
{
    NoiseLevels n;
    n.r_delta = 0.5 * std::numbers::pi / 180.0;
    n.r_omega = 1e-3 * omega0;
    return n;
}

EstimatorConfig EstimatorConfig::defaults(const ReducedModel& model)
{
    EstimatorConfig cfg;
    cfg.noise = NoiseLevels::defaults(model.omega0);
    return cfg;
}

std::size_t EstimatorConfig::sample_count() const
{
    return static_cast<std::size_t>(std::llround(horizon * sample_rate)) + 1;
}

MatrixXd EstimatorConfig::p0(const ReducedModel& model) const
{
    const StateLayout& lay = model.layout;
    VectorXd d(static_cast<Index>(lay.dim()));
    for (std::size_t i = 0; i < lay.g; ++i) {
        d(static_cast<Index>(lay.delta(i))) = noise.r_delta * noise.r_delta;
        d(static_cast<Index>(lay.omega(i))) = noise.r_omega * noise.r_omega;
    }
    for (std::size_t k = 0; k < lay.fourth.size(); ++k) {
        d(static_cast<Index>(lay.eq_prime(k))) = noise.r_eq_prime * noise.r_eq_prime;
        d(static_cast<Index>(lay.ed_prime(k))) = noise.r_ed_prime * noise.r_ed_prime;
    }
    return d.asDiagonal();
}

MatrixXd EstimatorConfig::q(std::size_t n) const
{
    const auto ni = static_cast<Index>(n);
    return q_scale * MatrixXd::Identity(ni, ni);
}

MatrixXd EstimatorConfig::r(ModelKind kind, std::size_t instrumented) const
{
    const auto m = static_cast<Index>(instrumented);
    std::vector<double> levels;
    if (kind == ModelKind::m1)
        levels = {noise.r_delta, noise.r_omega};
    else
        levels = {noise.r_eR, noise.r_eI, noise.r_iR, noise.r_iI};
    VectorXd d(m * static_cast<Index>(levels.size()));
    for (std::size_t b = 0; b < levels.size(); ++b)
        d.segment(static_cast<Index>(b) * m, m).setConstant(levels[b] * levels[b]);
    return d.asDiagonal();
}

void EstimatorConfig::validate() const
{
    if (!(ut.alpha > 0.0) || !(sample_rate > 0.0) || substeps == 0 || !(horizon > 0.0) || !(q_scale > 0.0))
        throw ValidationError("estimator config: alpha, sample_rate, substeps, horizon and q_scale must be positive");
    const double levels[] = {noise.r_delta, noise.r_omega, noise.r_eq_prime, noise.r_ed_prime,
                             noise.r_eR,    noise.r_eI,    noise.r_iR,       noise.r_iI};
    for (double v : levels)
        if (!(v > 0.0))
            throw ValidationError("estimator config: noise levels must be positive");
    if (tail > horizon)
        throw ValidationError("estimator config: convergence tail longer than the horizon");
}

nlohmann::json EstimatorConfig::to_json() const
{
    return {{"alpha", ut.alpha},
            {"beta", ut.beta},
            {"kappa", ut.kappa},
            {"q_scale", q_scale},
            {"sample_rate", sample_rate},
            {"substeps", substeps},
            {"horizon", horizon},
            {"epsilon_percent", epsilon_percent},
            {"tail", tail},
            {"noise",
             {{"r_delta", noise.r_delta},
              {"r_omega", noise.r_omega},
              {"r_eq_prime", noise.r_eq_prime},
              {"r_ed_prime", noise.r_ed_prime},
              {"r_eR", noise.r_eR},
              {"r_eI", noise.r_eI},
              {"r_iR", noise.r_iR},
              {"r_iI", noise.r_iI}}}};
}

void cholupdate(MatrixXd& l, VectorXd x, double sign)
{
    const Index n = l.rows();
    const double sg = sign < 0.0 ? -1.0 : 1.0;
    for (Index k = 0; k < n; ++k) {
        const double lkk = l(k, k);
        const double r2 = lkk * lkk + sg * x(k) * x(k);
        if (!(r2 > 0.0) || !std::isfinite(r2) || lkk == 0.0)
            throw NumericalError("Cholesky downdate lost positive definiteness");
        const double r = std::sqrt(r2);
        const double c = r / lkk;
        const double s = x(k) / lkk;
        l(k, k) = r;
        if (k + 1 < n) {
            const Index m = n - k - 1;
            l.col(k).tail(m) = (l.col(k).tail(m) + sg * s * x.tail(m)) / c;
            x.tail(m) = c * x.tail(m) - s * l.col(k).tail(m);
        }
    }
}

SrukfState srukf_predict(const SrukfState& prior, const TransitionFn& f, const MatrixXd& sqrt_q,
                         const UnscentedParams& ut, SrukfStepInfo* info)
{
    const Index n = prior.mean.size();
    const Weights w = unscented_weights(n, ut);
    const MatrixXd x = sigma_points(prior.mean, prior.sqrt_cov, w.gamma);
    MatrixXd xp(n, x.cols());
    for (Index i = 0; i < x.cols(); ++i)
        xp.col(i) = f(x.col(i));
    if (!finite(xp))
        throw NumericalError("non-finite sigma point after propagation");

    SrukfState out;
    out.mean = weighted_mean(xp, w);
    MatrixXd compound(2 * n + n, n);
    const double sw = std::sqrt(w.wi);
    for (Index i = 1; i < xp.cols(); ++i)
        compound.row(i - 1) = sw * (xp.col(i) - out.mean).transpose();
    compound.bottomRows(n) = sqrt_q.transpose();
    out.sqrt_cov = triangular_factor(compound);
    apply_updates(out.sqrt_cov, std::sqrt(std::abs(w.wc0)) * (xp.col(0) - out.mean), w.wc0 < 0.0 ? -1.0 : 1.0,
                  info);
    return out;
}

SrukfState srukf_update(const SrukfState& prior, const VectorXd& y, const MeasurementFn& h, const MatrixXd& sqrt_r,
                        const UnscentedParams& ut, SrukfStepInfo* info)
{
    const Index n = prior.mean.size();
    const Index m = y.size();
    const Weights w = unscented_weights(n, ut);
    const MatrixXd x = sigma_points(prior.mean, prior.sqrt_cov, w.gamma);
    MatrixXd yp(m, x.cols());
    for (Index i = 0; i < x.cols(); ++i)
        yp.col(i) = h(x.col(i));
    if (!finite(yp))
        throw NumericalError("non-finite predicted measurement");

    const VectorXd y_mean = weighted_mean(yp, w);
    MatrixXd compound(2 * n + m, m);
    const double sw = std::sqrt(w.wi);
    for (Index i = 1; i < yp.cols(); ++i)
        compound.row(i - 1) = sw * (yp.col(i) - y_mean).transpose();
    compound.bottomRows(m) = sqrt_r.transpose();
    MatrixXd sy = triangular_factor(compound);
    apply_updates(sy, std::sqrt(std::abs(w.wc0)) * (yp.col(0) - y_mean), w.wc0 < 0.0 ? -1.0 : 1.0, info);

    MatrixXd pxy = w.wc0 * (x.col(0) - prior.mean) * (yp.col(0) - y_mean).transpose();
    for (Index i = 1; i < x.cols(); ++i)
        pxy += w.wi * (x.col(i) - prior.mean) * (yp.col(i) - y_mean).transpose();

    // K = Pxy (Sy Sy^T)^-1 via two triangular solves.
    const MatrixXd tmp = sy.triangularView<Eigen::Lower>().solve(pxy.transpose());
    const MatrixXd gain = sy.transpose().triangularView<Eigen::Upper>().solve(tmp).transpose();

    SrukfState out;
    out.mean = prior.mean + gain * (y - y_mean);
    out.sqrt_cov = prior.sqrt_cov;
    apply_updates(out.sqrt_cov, gain * sy, -1.0, info);
    if (!out.mean.allFinite() || !finite(out.sqrt_cov))
        throw NumericalError("non-finite posterior");
    return out;
}

SrukfState srukf_step(const SrukfState& prior, const VectorXd& y, const TransitionFn& f, const MeasurementFn& h,
                      const MatrixXd& sqrt_q, const MatrixXd& sqrt_r, const UnscentedParams& ut, SrukfStepInfo* info)
{
    return srukf_update(srukf_predict(prior, f, sqrt_q, ut, info), y, h, sqrt_r, ut, info);
}

MatrixXd Scenario::truth_samples() const
{
    const Index k = (truth.states.cols() - 1) / static_cast<Index>(substeps) + 1;
    MatrixXd out(truth.states.rows(), k);
    for (Index j = 0; j < k; ++j)
        out.col(j) = truth.states.col(j * static_cast<Index>(substeps));
    return out;
}

std::vector<double> Scenario::sample_times() const
{
    std::vector<double> t;
    for (std::size_t j = 0; j < truth.time.size(); j += substeps)
        t.push_back(truth.time[j]);
    return t;
}

namespace {

Scenario perturbed_scenario(const ReducedModel& model, const EstimatorConfig& cfg, std::vector<int> ids,
                            std::vector<double> offsets, std::uint64_t seed)
{
    cfg.validate();
    Scenario s;
    s.kind = "method1";
    s.filter_model = model;
    s.substeps = cfg.substeps;
    s.filter_mean0 = model.x0;
    s.seed = seed;
    VectorXd x = model.x0;
    for (std::size_t j = 0; j < ids.size(); ++j)
        x(static_cast<Index>(model.layout.delta(static_cast<std::size_t>(ids[j] - 1)))) += offsets[j];
    s.perturbed = std::move(ids);
    s.offsets = std::move(offsets);
    s.truth = simulate(model, x, cfg.horizon, cfg.sim_dt());
    return s;
}

} // namespace

Scenario method1_scenario(const ReducedModel& model, const EstimatorConfig& cfg, std::uint64_t seed,
                          std::size_t n_perturbed)
{
    const std::size_t g = model.generator_count();
    if (n_perturbed > g)
        throw ValidationError("cannot perturb " + std::to_string(n_perturbed) + " of " + std::to_string(g) +
                              " generators");
    std::mt19937_64 rng(seed);
    std::vector<int> pool(g);
    for (std::size_t i = 0; i < g; ++i)
        pool[i] = static_cast<int>(i) + 1;
    // Partial Fisher-Yates: uniform selection without replacement.
    for (std::size_t i = 0; i < n_perturbed; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, g - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    std::vector<int> ids(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_perturbed));
    std::vector<double> offsets;
    for (int id : ids) {
        const double d0 = std::abs(model.x0(static_cast<Index>(model.layout.delta(static_cast<std::size_t>(id - 1)))));
        std::uniform_real_distribution<double> u(-d0, d0);
        offsets.push_back(d0 > 0.0 ? u(rng) : 0.0);
    }
    return perturbed_scenario(model, cfg, std::move(ids), std::move(offsets), seed);
}

Scenario method1_fixed(const ReducedModel& model, const EstimatorConfig& cfg, int generator, double fraction)
{
    instrumented_positions(model, std::span<const int>(&generator, 1));
    const double d0 = model.x0(static_cast<Index>(model.layout.delta(static_cast<std::size_t>(generator - 1))));
    return perturbed_scenario(model, cfg, {generator}, {fraction * d0}, 0);
}

Scenario method2_scenario(const PowerSystemCase& c, const PowerFlowSolution& pf, int from_bus, int to_bus,
                          ModelKind kind, const EstimatorConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    check_fault_branch(c, from_bus, to_bus);
    const ReducedModel base = init_steady_state(c, pf, kind);
    FaultSchedule schedule = build_fault_schedule(c, pf, from_bus, to_bus, kind);
    Scenario s;
    s.kind = "method2";
    s.filter_model = schedule.final_model();
    s.substeps = cfg.substeps;
    s.filter_mean0 = base.x0;
    s.seed = seed;
    s.truth = simulate(schedule, base.x0, cfg.horizon, cfg.sim_dt());
    s.schedule = std::move(schedule);
    return s;
}

std::string_view to_string(StateType t)
{
    switch (t) {
    case StateType::delta: return "delta";
    case StateType::omega: return "omega";
    case StateType::eq_prime: return "eq_prime";
    case StateType::ed_prime: return "ed_prime";
    }
    return "?";
}

std::vector<Index> state_rows(const ReducedModel& model, StateType t)
{
    const StateLayout& lay = model.layout;
    std::vector<Index> rows;
    switch (t) {
    case StateType::delta:
        for (std::size_t i = 0; i < lay.g; ++i)
            rows.push_back(static_cast<Index>(lay.delta(i)));
        break;
    case StateType::omega:
        for (std::size_t i = 0; i < lay.g; ++i)
            rows.push_back(static_cast<Index>(lay.omega(i)));
        break;
    case StateType::eq_prime:
        for (std::size_t k = 0; k < lay.fourth.size(); ++k)
            rows.push_back(static_cast<Index>(lay.eq_prime(k)));
        break;
    case StateType::ed_prime:
        for (std::size_t k = 0; k < lay.fourth.size(); ++k)
            rows.push_back(static_cast<Index>(lay.ed_prime(k)));
        break;
    }
    return rows;
}

double state_error(const MatrixXd& truth, const MatrixXd& estimate, std::span<const Index> rows)
{
    if (rows.empty() || truth.cols() == 0)
        return kNaN;
    double acc = 0.0;
    for (Index r : rows)
        acc += (estimate.row(r) - truth.row(r)).squaredNorm();
    return std::sqrt(acc / (static_cast<double>(rows.size()) * static_cast<double>(truth.cols())));
}

double state_error(const EstimationRun& run, const ReducedModel& model, StateType t)
{
    if (run.diverged)
        return kNaN;
    const std::vector<Index> rows = state_rows(model, t);
    return state_error(run.truth, run.estimate, rows);
}

int count_convergent(const MatrixXd& truth, const MatrixXd& estimate, std::span<const Index> rows,
                     std::size_t tail_begin, double epsilon_percent)
{
    int count = 0;
    for (Index r : rows) {
        bool ok = true;
        for (Index k = static_cast<Index>(tail_begin); k < truth.cols() && ok; ++k) {
            const double x = truth(r, k);
            const double err = std::abs(estimate(r, k) - x);
            const double bound = std::abs(x) < kAbsoluteConvergenceFloor ? kAbsoluteConvergenceFloor
                                                                          : epsilon_percent / 100.0 * std::abs(x);
            ok = err < bound;
        }
        if (ok)
            ++count;
    }
    return count;
}

int count_convergent(const EstimationRun& run, const ReducedModel& model, StateType t, const EstimatorConfig& cfg)
{
    if (run.diverged)
        return -1;
    const double t_end = run.time.back();
    std::size_t begin = 0;
    while (begin < run.time.size() && run.time[begin] < t_end - cfg.tail - 1e-9)
        ++begin;
    const std::vector<Index> rows = state_rows(model, t);
    return count_convergent(run.truth, run.estimate, rows, begin, cfg.epsilon_percent);
}

EstimationRun run_estimation(const Scenario& scenario, std::span<const int> placement, const EstimatorConfig& cfg,
                             std::uint64_t noise_seed, bool track_covariance)
{
    cfg.validate();
    const ReducedModel& model = scenario.filter_model;
    instrumented_positions(model, placement);

    EstimationRun run;
    run.placement.assign(placement.begin(), placement.end());
    std::sort(run.placement.begin(), run.placement.end());
    run.seed = noise_seed;
    run.time = scenario.sample_times();
    run.truth = scenario.truth_samples();

    // Clean outputs come from whichever network is active at each sample.
    MatrixXd clean = scenario.schedule
                         ? trajectory_outputs(*scenario.schedule, scenario.truth, placement, cfg.sim_dt())
                         : trajectory_outputs(model, scenario.truth, placement);
    const Index k_count = run.truth.cols();
    const MatrixXd r = cfg.r(model.kind, placement.size());
    const MatrixXd sqrt_r = sqrt_diag(r);
    const MatrixXd sqrt_q = sqrt_diag(cfg.q(model.state_dim()));
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    run.measurements.resize(clean.rows(), k_count);
    for (Index k = 0; k < k_count; ++k) {
        VectorXd z(clean.rows());
        for (Index i = 0; i < z.size(); ++i)
            z(i) = normal(rng);
        run.measurements.col(k) = clean.col(k * static_cast<Index>(scenario.substeps)) + sqrt_r * z;
    }

    const double dt = cfg.sim_dt();
    const std::size_t substeps = cfg.substeps;
    const TransitionFn f = [&model, dt, substeps](const VectorXd& x) {
        VectorXd s = x;
        for (std::size_t i = 0; i < substeps; ++i)
            s = modified_euler_step(model, s, dt);
        return s;
    };
    const MeasurementFn h = [&model, placement](const VectorXd& x) { return measure(model, x, placement); };

    run.estimate = MatrixXd::Constant(run.truth.rows(), k_count, kNaN);
    SrukfState st{scenario.filter_mean0, sqrt_diag(cfg.p0(model))};
    run.estimate.col(0) = st.mean;
    run.min_cov_eigenvalue = std::numeric_limits<double>::infinity();
    auto track = [&](const MatrixXd& s) {
        if (!track_covariance)
            return;
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(s * s.transpose(), Eigen::EigenvaluesOnly);
        run.min_cov_eigenvalue = std::min(run.min_cov_eigenvalue, es.eigenvalues().minCoeff());
    };
    track(st.sqrt_cov);
    SrukfStepInfo info;
    try {
        for (Index k = 1; k < k_count; ++k) {
            st = srukf_step(st, run.measurements.col(k), f, h, sqrt_q, sqrt_r, cfg.ut, &info);
            run.estimate.col(k) = st.mean;
            track(st.sqrt_cov);
        }
    } catch (const NumericalError& e) {
        run.diverged = true;
        run.divergence_reason = e.what();
    }
    run.refactorizations = info.refactorizations;

    if (run.diverged) {
        run.e_delta = run.e_omega = kNaN;
        run.n_delta = run.n_omega = -1;
    } else {
        run.e_delta = state_error(run, model, StateType::delta);
        run.e_omega = state_error(run, model, StateType::omega);
        run.n_delta = count_convergent(run, model, StateType::delta, cfg);
        run.n_omega = count_convergent(run, model, StateType::omega, cfg);
    }
    return run;
}

nlohmann::json BatchSummary::to_json() const
{
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"placement", placement},     {"runs", runs},
            {"diverged_count", diverged}, {"e_delta_mean", num(e_delta_mean)},
            {"e_omega_mean", num(e_omega_mean)}, {"n_delta_mean", num(n_delta_mean)}};
}

BatchSummary method1_batch(const ReducedModel& model, std::span<const int> placement, const EstimatorConfig& cfg,
                           std::size_t runs, std::uint64_t seed, unsigned threads, bool keep_runs)
{
    instrumented_positions(model, placement);
    std::vector<EstimationRun> results(runs);
    parallel_for(runs, threads, [&](std::size_t r) {
        const Scenario sc = method1_scenario(model, cfg, derive_seed(seed, 2 * r));
        results[r] = run_estimation(sc, placement, cfg, derive_seed(seed, 2 * r + 1));
    });
    BatchSummary s;
    s.placement.assign(placement.begin(), placement.end());
    std::sort(s.placement.begin(), s.placement.end());
    s.runs = runs;
    double ed = 0.0, eo = 0.0, nd = 0.0;
    std::size_t ok = 0;
    for (const EstimationRun& run : results) {
        if (run.diverged) {
            ++s.diverged;
            continue;
        }
        ed += run.e_delta;
        eo += run.e_omega;
        nd += run.n_delta;
        ++ok;
    }
    s.e_delta_mean = ok ? ed / static_cast<double>(ok) : kNaN;
    s.e_omega_mean = ok ? eo / static_cast<double>(ok) : kNaN;
    s.n_delta_mean = ok ? nd / static_cast<double>(ok) : kNaN;
    if (keep_runs)
        s.details = std::move(results);
    return s;
}

} // namespace pmuplace
