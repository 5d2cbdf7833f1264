#include "pmuplace/gramian.hpp"

#include <cmath>
#include <limits>

#include <unsupported/Eigen/MatrixFunctions>

#include "pmuplace/errors.hpp"
#include "pmuplace/parallel.hpp"
#include "pmuplace/util.hpp"

namespace pmuplace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void GramianConfig::validate(std::size_t n) const
{
    if (!(horizon > 0.0))
        throw ValidationError("gramian horizon must be positive");
    if (!(dt > 0.0) || dt > horizon)
        throw ValidationError("gramian dt must be positive and not exceed the horizon");
    if (sizes.empty())
        throw ValidationError("gramian needs at least one perturbation size");
    for (double c : sizes)
        if (!(c > 0.0))
            throw ValidationError("perturbation sizes must be positive");
    for (const MatrixXd& t : directions) {
        if (static_cast<std::size_t>(t.rows()) != n || static_cast<std::size_t>(t.cols()) != n)
            throw ValidationError("perturbation direction matrix has wrong dimension");
        const double err = (t.transpose() * t - MatrixXd::Identity(t.rows(), t.cols())).cwiseAbs().maxCoeff();
        if (err > 1e-12)
            throw ValidationError("perturbation direction matrix is not orthogonal");
    }
}

std::vector<MatrixXd> GramianConfig::resolved_directions(std::size_t n) const
{
    if (!directions.empty())
        return directions;
    const MatrixXd eye = MatrixXd::Identity(static_cast<Index>(n), static_cast<Index>(n));
    return {eye, -eye};
}

nlohmann::json GramianConfig::to_json() const
{
    nlohmann::json j;
    j["sizes"] = sizes;
    j["horizon"] = horizon;
    j["dt"] = dt;
    if (directions.empty()) {
        j["directions"] = "identity_pm";
    } else {
        nlohmann::json dirs = nlohmann::json::array();
        for (const MatrixXd& t : directions)
            dirs.push_back(std::vector<double>(t.data(), t.data() + t.size()));
        j["directions"] = dirs;
    }
    return j;
}

std::string GramianConfig::fingerprint() const
{
    return pmuplace::fingerprint(to_json().dump());
}

MatrixXd GramianBank::sum(std::span<const int> ids) const
{
    const Index n = static_cast<Index>(state_dim());
    MatrixXd w = MatrixXd::Zero(n, n);
    for (int id : ids) {
        if (id < 1 || id > static_cast<int>(size()))
            throw ValidationError("generator " + std::to_string(id) + " is not in the Gramian bank");
        w += per_generator[static_cast<std::size_t>(id - 1)];
    }
    return w;
}

std::vector<MatrixXd> empirical_gramian_groups(const VectorField& f, const OutputMap& h, const VectorXd& x_ref,
                                               const GramianConfig& cfg,
                                               const std::vector<std::vector<Index>>& groups)
{
    const Index n = x_ref.size();
    cfg.validate(static_cast<std::size_t>(n));
    const std::vector<MatrixXd> dirs = cfg.resolved_directions(static_cast<std::size_t>(n));

    auto outputs_of = [&](const Trajectory& tr, Index steps) {
        const VectorXd y0 = h(tr.states.col(0));
        MatrixXd y(y0.size(), steps);
        y.col(0) = y0;
        for (Index k = 1; k < steps; ++k)
            y.col(k) = h(tr.states.col(k));
        return y;
    };

    const Trajectory ref_traj = simulate(f, x_ref, cfg.horizon, cfg.dt);
    // Left Riemann: samples k = 0..K-1.
    const Index steps = static_cast<Index>(ref_traj.samples()) - 1;
    const MatrixXd y_ref = outputs_of(ref_traj, steps);
    const Index p = y_ref.rows();
    for (const auto& grp : groups)
        for (Index r : grp)
            if (r < 0 || r >= p)
                throw ValidationError("output group row out of range");

    const std::size_t r_count = dirs.size();
    const std::size_t s_count = cfg.sizes.size();
    const std::size_t jobs = r_count * s_count * static_cast<std::size_t>(n);
    std::vector<MatrixXd> deviations(jobs);

    parallel_for(jobs, cfg.threads, [&](std::size_t job) {
        const std::size_t i = job % static_cast<std::size_t>(n);
        const std::size_t m = (job / static_cast<std::size_t>(n)) % s_count;
        const std::size_t l = job / (static_cast<std::size_t>(n) * s_count);
        const VectorXd x0 = x_ref + cfg.sizes[m] * dirs[l].col(static_cast<Index>(i));
        try {
            const Trajectory tr = simulate(f, x0, cfg.horizon, cfg.dt);
            deviations[job] = outputs_of(tr, steps) - y_ref;
        } catch (const IntegrationBlowup& e) {
            throw NumericalError("gramian perturbation (direction " + std::to_string(l + 1) + ", size " +
                                 std::to_string(m + 1) + ", state " + std::to_string(i + 1) + ") blew up: " +
                                 e.what());
        }
    });

    std::vector<MatrixXd> w(groups.size(), MatrixXd::Zero(n, n));
    const double rs = static_cast<double>(r_count * s_count);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& rows = groups[gi];
        const Index nr = static_cast<Index>(rows.size());
        MatrixXd z(nr * steps, n);
        // One partial per direction, summed afterwards, so reordering a
        // pair of directions leaves the result bit-identical.
        for (std::size_t l = 0; l < r_count; ++l) {
            MatrixXd partial = MatrixXd::Zero(n, n);
            for (std::size_t m = 0; m < s_count; ++m) {
                const double c = cfg.sizes[m];
                const double weight = cfg.dt / (rs * c * c);
                for (Index i = 0; i < n; ++i) {
                    const MatrixXd& dev = deviations[(l * s_count + m) * static_cast<std::size_t>(n) +
                                                     static_cast<std::size_t>(i)];
                    for (Index k = 0; k < steps; ++k)
                        for (Index r = 0; r < nr; ++r)
                            z(k * nr + r, i) = dev(rows[r], k);
                }
                MatrixXd psi = MatrixXd::Zero(n, n);
                psi.selfadjointView<Eigen::Lower>().rankUpdate(z.transpose());
                psi = psi.selfadjointView<Eigen::Lower>();
                partial.noalias() += weight * (dirs[l] * psi * dirs[l].transpose());
            }
            w[gi] += partial;
        }
    }
    for (MatrixXd& wi : w) {
        if (!wi.allFinite())
            throw NumericalError("gramian accumulation produced non-finite entries");
        wi = 0.5 * (wi + wi.transpose()).eval();
    }
    return w;
}

MatrixXd empirical_gramian(const VectorField& f, const OutputMap& h, const VectorXd& x_ref, const GramianConfig& cfg)
{
    const Index p = h(x_ref).size();
    std::vector<Index> all(static_cast<std::size_t>(p));
    for (Index r = 0; r < p; ++r)
        all[static_cast<std::size_t>(r)] = r;
    return empirical_gramian_groups(f, h, x_ref, cfg, {all}).front();
}

Gramian empirical_gramian(const ReducedModel& model, std::span<const int> instrumented, const GramianConfig& cfg,
                          const std::optional<VectorXd>& x_ref)
{
    instrumented_positions(model, instrumented);
    const std::vector<int> ids(instrumented.begin(), instrumented.end());
    const VectorField f = [&](const VectorXd& x) { return derivative(model, x); };
    const OutputMap h = [&](const VectorXd& x) { return measure(model, x, ids); };
    const VectorXd xr = x_ref ? *x_ref : model.x0;

    const Index p = static_cast<Index>(outputs_per_generator(model.kind) * ids.size());
    std::vector<Index> all(static_cast<std::size_t>(p));
    for (Index r = 0; r < p; ++r)
        all[static_cast<std::size_t>(r)] = r;

    Gramian g;
    g.matrix = empirical_gramian_groups(f, h, xr, cfg, {all}).front();
    g.instrumented = ids;
    g.fingerprint = cfg.fingerprint();
    return g;
}

GramianBank per_generator_bank(const ReducedModel& model, const GramianConfig& cfg,
                               const std::optional<VectorXd>& x_ref)
{
    const std::size_t g = model.generator_count();
    std::vector<int> ids(g);
    for (std::size_t i = 0; i < g; ++i)
        ids[i] = static_cast<int>(i) + 1;
    const VectorField f = [&](const VectorXd& x) { return derivative(model, x); };
    const OutputMap h = [&](const VectorXd& x) { return measure(model, x, ids); };
    const VectorXd xr = x_ref ? *x_ref : model.x0;

    std::vector<std::vector<Index>> groups;
    for (std::size_t i = 0; i < g; ++i)
        groups.push_back(output_rows(model.kind, g, i));

    GramianBank bank;
    bank.per_generator = empirical_gramian_groups(f, h, xr, cfg, groups);
    bank.fingerprint = cfg.fingerprint();
    return bank;
}

void check_symmetric(const MatrixXd& w, double rel_tol)
{
    if (w.rows() != w.cols())
        throw ValidationError("matrix is not square");
    const double scale = w.size() ? w.cwiseAbs().maxCoeff() : 0.0;
    const double asym = w.size() ? (w - w.transpose()).cwiseAbs().maxCoeff() : 0.0;
    if (asym > rel_tol * std::max(scale, std::numeric_limits<double>::min()))
        throw ValidationError("matrix is not symmetric (relative asymmetry " + std::to_string(asym / scale) + ")");
}

double logdet(const MatrixXd& w)
{
    check_symmetric(w);
    if (w.rows() == 0)
        return 0.0;
    Eigen::LLT<MatrixXd> llt(w);
    const double neg_inf = -std::numeric_limits<double>::infinity();
    if (llt.info() != Eigen::Success)
        return neg_inf;
    const MatrixXd& l = llt.matrixLLT();
    double sum = 0.0;
    for (Index i = 0; i < l.rows(); ++i) {
        const double d = l(i, i);
        if (!(d * d > 1e-300))
            return neg_inf;
        sum += std::log(d);
    }
    return 2.0 * sum;
}

EigenRange min_max_eigenvalue(const MatrixXd& w)
{
    check_symmetric(w);
    if (w.rows() == 0)
        throw ValidationError("min_max_eigenvalue of an empty matrix");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(w, Eigen::EigenvaluesOnly);
    return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

MatrixXd linear_gramian_oracle(const MatrixXd& a, const MatrixXd& c, double horizon, double dt)
{
    if (a.rows() != a.cols() || c.cols() != a.rows())
        throw ValidationError("linear_gramian_oracle: dimension mismatch");
    if (!(horizon > 0.0) || !(dt > 0.0))
        throw ValidationError("linear_gramian_oracle: horizon and dt must be positive");
    Index intervals = static_cast<Index>(std::ceil(horizon / dt));
    if (intervals % 2)
        ++intervals;
    const double h = horizon / static_cast<double>(intervals);
    const MatrixXd step = (a * h).exp();
    const MatrixXd ctc = c.transpose() * c;
    MatrixXd phi = MatrixXd::Identity(a.rows(), a.cols());
    MatrixXd w = MatrixXd::Zero(a.rows(), a.cols());
    for (Index k = 0; k <= intervals; ++k) {
        const double coef = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        w += coef * (phi.transpose() * ctc * phi);
        phi = step * phi;
    }
    w *= h / 3.0;
    return 0.5 * (w + w.transpose());
}

nlohmann::json gramian_report(const MatrixXd& w, const std::string& fp)
{
    nlohmann::json j;
    j["n"] = w.rows();
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < w.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(w.cols()));
        for (Index k = 0; k < w.cols(); ++k)
            row[static_cast<std::size_t>(k)] = w(i, k);
        rows.push_back(row);
    }
    j["matrix"] = rows;
    j["config_fingerprint"] = fp;
    const double ld = logdet(w);
    j["logdet"] = std::isfinite(ld) ? nlohmann::json(ld) : nlohmann::json("-inf");
    const EigenRange er = min_max_eigenvalue(w);
    j["sigma_min"] = er.min;
    j["sigma_max"] = er.max;
    j["trace"] = w.trace();
    j["condition_number"] = er.min > 0.0 ? nlohmann::json(er.max / er.min) : nlohmann::json("inf");
    return j;
}

} // namespace pmuplace
