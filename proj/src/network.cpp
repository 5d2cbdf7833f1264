#include "pmuplace/network.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <sstream>

#include "pmuplace/dynamics.hpp"
#include "pmuplace/errors.hpp"

namespace pmuplace {

using cd = std::complex<double>;
using Eigen::Index;

std::string_view to_string(ModelKind k)
{
    return k == ModelKind::m1 ? "m1" : "m2";
}

ModelKind parse_model_kind(std::string_view s)
{
    if (s == "m1" || s == "M1") return ModelKind::m1;
    if (s == "m2" || s == "M2") return ModelKind::m2;
    throw ValidationError("unknown model '" + std::string(s) + "' (m1|m2)");
}

ComplexMatrix build_ybus(const PowerSystemCase& c)
{
    const Index n = static_cast<Index>(c.buses.size());
    ComplexMatrix y = ComplexMatrix::Zero(n, n);
    for (const Branch& br : c.branches) {
        if (!br.status)
            continue;
        if (br.r == 0.0 && br.x == 0.0)
            throw SingularMatrixError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                                      " has zero impedance");
        const Index f = static_cast<Index>(c.bus_index(br.from));
        const Index t = static_cast<Index>(c.bus_index(br.to));
        const cd ys = 1.0 / cd(br.r, br.x);
        const cd ysh(0.0, br.b_charging / 2.0);
        y(f, f) += ys + ysh;
        y(t, t) += ys + ysh;
        y(f, t) -= ys;
        y(t, f) -= ys;
    }
    for (Index i = 0; i < n; ++i)
        y(i, i) += cd(c.buses[i].shunt_g, c.buses[i].shunt_b);
    return y;
}

ComplexVector PowerFlowSolution::voltage() const
{
    ComplexVector v(v_mag.size());
    for (Index i = 0; i < v.size(); ++i)
        v(i) = std::polar(v_mag(i), v_ang(i));
    return v;
}

PowerFlowSolution solve_power_flow(const PowerSystemCase& c, const PowerFlowOptions& opts)
{
    const ComplexMatrix y = build_ybus(c);
    const Index n = y.rows();

    Eigen::VectorXd p_spec = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd q_spec = Eigen::VectorXd::Zero(n);
    std::vector<Index> pvpq, pq;
    PowerFlowSolution sol;
    sol.v_mag = Eigen::VectorXd::Ones(n);
    sol.v_ang = Eigen::VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i) {
        const Bus& b = c.buses[i];
        p_spec(i) = -b.p_load;
        q_spec(i) = -b.q_load;
        if (b.kind != BusKind::pq)
            sol.v_mag(i) = b.v_setpoint;
        if (b.kind != BusKind::slack)
            pvpq.push_back(i);
        if (b.kind == BusKind::pq)
            pq.push_back(i);
    }
    for (const Generator& g : c.generators)
        p_spec(static_cast<Index>(c.bus_index(g.bus))) += g.p_gen;

    const Index npvpq = static_cast<Index>(pvpq.size());
    const Index npq = static_cast<Index>(pq.size());
    const Index m = npvpq + npq;

    auto mismatch = [&](const ComplexVector& v, ComplexVector& s) {
        s = v.cwiseProduct((y * v).conjugate());
        Eigen::VectorXd f(m);
        for (Index k = 0; k < npvpq; ++k)
            f(k) = p_spec(pvpq[k]) - s(pvpq[k]).real();
        for (Index k = 0; k < npq; ++k)
            f(npvpq + k) = q_spec(pq[k]) - s(pq[k]).imag();
        return f;
    };

    ComplexVector v = sol.voltage();
    ComplexVector s;
    Eigen::VectorXd f = mismatch(v, s);
    sol.max_mismatch = m > 0 ? f.cwiseAbs().maxCoeff() : 0.0;

    while (sol.max_mismatch > opts.tol && sol.iterations < opts.max_iter) {
        // Polar Jacobian from complex power derivatives.
        const ComplexVector current = y * v;
        ComplexMatrix ds_dang = ComplexMatrix::Zero(n, n);
        ComplexMatrix ds_dmag = ComplexMatrix::Zero(n, n);
        for (Index i = 0; i < n; ++i) {
            const cd vn = v(i) / std::abs(v(i));
            for (Index k = 0; k < n; ++k) {
                ds_dang(i, k) = cd(0, 1) * v(i) * std::conj(-y(i, k) * v(k));
                ds_dmag(i, k) = v(i) * std::conj(y(i, k) * v(k) / std::abs(v(k)));
            }
            ds_dang(i, i) += cd(0, 1) * v(i) * std::conj(current(i));
            ds_dmag(i, i) += std::conj(current(i)) * vn;
        }
        Eigen::MatrixXd jac(m, m);
        for (Index r = 0; r < npvpq; ++r) {
            for (Index k = 0; k < npvpq; ++k)
                jac(r, k) = ds_dang(pvpq[r], pvpq[k]).real();
            for (Index k = 0; k < npq; ++k)
                jac(r, npvpq + k) = ds_dmag(pvpq[r], pq[k]).real();
        }
        for (Index r = 0; r < npq; ++r) {
            for (Index k = 0; k < npvpq; ++k)
                jac(npvpq + r, k) = ds_dang(pq[r], pvpq[k]).imag();
            for (Index k = 0; k < npq; ++k)
                jac(npvpq + r, npvpq + k) = ds_dmag(pq[r], pq[k]).imag();
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible())
            throw SingularMatrixError("power flow Jacobian is singular at iteration " +
                                      std::to_string(sol.iterations + 1));
        const Eigen::VectorXd dx = lu.solve(f);
        for (Index k = 0; k < npvpq; ++k)
            sol.v_ang(pvpq[k]) += dx(k);
        for (Index k = 0; k < npq; ++k)
            sol.v_mag(pq[k]) += dx(npvpq + k);
        ++sol.iterations;

        v = sol.voltage();
        f = mismatch(v, s);
        sol.max_mismatch = f.cwiseAbs().maxCoeff();
        if (!std::isfinite(sol.max_mismatch))
            break;
    }
    sol.converged = std::isfinite(sol.max_mismatch) && sol.max_mismatch <= opts.tol;
    s = v.cwiseProduct((y * v).conjugate());
    sol.p_inj = s.real();
    sol.q_inj = s.imag();
    return sol;
}

ComplexMatrix kron_reduce(const ComplexMatrix& y, std::span<const Index> keep)
{
    const Index n = y.rows();
    if (y.cols() != n)
        throw ValidationError("kron_reduce: matrix is not square");
    std::vector<bool> kept(static_cast<std::size_t>(n), false);
    for (Index k : keep) {
        if (k < 0 || k >= n)
            throw ValidationError("kron_reduce: keep index " + std::to_string(k) + " out of range");
        if (kept[k])
            throw ValidationError("kron_reduce: duplicate keep index " + std::to_string(k));
        kept[k] = true;
    }
    std::vector<Index> elim;
    for (Index i = 0; i < n; ++i)
        if (!kept[i])
            elim.push_back(i);

    const Index nk = static_cast<Index>(keep.size());
    const Index ne = static_cast<Index>(elim.size());
    ComplexMatrix ykk(nk, nk), yke(nk, ne), yek(ne, nk), yee(ne, ne);
    for (Index a = 0; a < nk; ++a) {
        for (Index b = 0; b < nk; ++b)
            ykk(a, b) = y(keep[a], keep[b]);
        for (Index b = 0; b < ne; ++b) {
            yke(a, b) = y(keep[a], elim[b]);
            yek(b, a) = y(elim[b], keep[a]);
        }
    }
    if (ne == 0)
        return ykk;
    for (Index a = 0; a < ne; ++a)
        for (Index b = 0; b < ne; ++b)
            yee(a, b) = y(elim[a], elim[b]);

    Eigen::FullPivLU<ComplexMatrix> lu(yee);
    if (!lu.isInvertible()) {
        std::ostringstream msg;
        msg << "kron_reduce: eliminated block is singular (nodes";
        for (Index e : elim)
            msg << ' ' << e;
        msg << ')';
        throw SingularMatrixError(msg.str());
    }
    return ykk - yke * lu.solve(yek);
}

namespace {

ComplexVector generator_currents(const PowerSystemCase& c, const PowerFlowSolution& pf)
{
    const ComplexVector v = pf.voltage();
    ComplexVector it(static_cast<Index>(c.generators.size()));
    for (std::size_t k = 0; k < c.generators.size(); ++k) {
        const Index b = static_cast<Index>(c.bus_index(c.generators[k].bus));
        const Bus& bus = c.buses[b];
        const cd s_gen(pf.p_inj(b) + bus.p_load, pf.q_inj(b) + bus.q_load);
        it(static_cast<Index>(k)) = std::conj(s_gen / v(b));
    }
    return it;
}

} // namespace

ComplexMatrix augmented_admittance(const PowerSystemCase& c, const PowerFlowSolution& pf,
                                   const ComplexMatrix& ybus)
{
    const Index nb = static_cast<Index>(c.buses.size());
    const Index g = static_cast<Index>(c.generators.size());
    ComplexMatrix ya = ComplexMatrix::Zero(nb + g, nb + g);
    ya.topLeftCorner(nb, nb) = ybus;
    for (Index i = 0; i < nb; ++i) {
        const Bus& b = c.buses[i];
        const double vm2 = pf.v_mag(i) * pf.v_mag(i);
        ya(i, i) += cd(b.p_load, -b.q_load) / vm2;
    }
    for (Index k = 0; k < g; ++k) {
        const Generator& gen = c.generators[k];
        const Index b = static_cast<Index>(c.bus_index(gen.bus));
        const cd yint = 1.0 / cd(0.0, gen.x_d_prime);
        const Index node = nb + k;
        ya(node, node) += yint;
        ya(b, b) += yint;
        ya(node, b) -= yint;
        ya(b, node) -= yint;
    }
    return ya;
}

ComplexMatrix reduce_to_internal_nodes(const PowerSystemCase& c, const PowerFlowSolution& pf,
                                       const ComplexMatrix& ybus)
{
    const Index nb = static_cast<Index>(c.buses.size());
    std::vector<Index> keep(c.generators.size());
    std::iota(keep.begin(), keep.end(), nb);
    return kron_reduce(augmented_admittance(c, pf, ybus), keep);
}

ReducedModel init_steady_state(const PowerSystemCase& c, const PowerFlowSolution& pf, ModelKind kind)
{
    if (!pf.converged)
        throw ValidationError("init_steady_state: power flow did not converge");

    ReducedModel m;
    m.kind = kind;
    m.omega0 = c.omega0();
    m.y_reduced = reduce_to_internal_nodes(c, pf, build_ybus(c));

    const std::size_t g = c.generators.size();
    m.layout.g = g;
    for (std::size_t k = 0; k < g; ++k) {
        const Generator& gen = c.generators[k];
        Machine mc{gen.id, gen.model_order, gen.H, gen.K_D, gen.x_d, gen.x_q,
                   gen.x_d_prime, gen.x_q_prime, gen.T_d0_prime, gen.T_q0_prime};
        if (kind == ModelKind::m1)
            mc.order = MachineOrder::second;
        if (mc.order == MachineOrder::fourth)
            m.layout.fourth.push_back(k);
        m.machines.push_back(mc);
    }

    const ComplexVector v = pf.voltage();
    const ComplexVector it = generator_currents(c, pf);
    const Index gi = static_cast<Index>(g);
    m.e_mag = Eigen::VectorXd::Zero(gi);
    m.t_m = Eigen::VectorXd::Zero(gi);
    m.e_fd = Eigen::VectorXd::Zero(gi);
    m.eq_fixed = Eigen::VectorXd::Zero(gi);
    m.ed_fixed = Eigen::VectorXd::Zero(gi);
    m.x0 = Eigen::VectorXd::Zero(static_cast<Index>(m.layout.dim()));

    for (Index k = 0; k < gi; ++k) {
        const Machine& mc = m.machines[k];
        const cd vt = v(static_cast<Index>(c.bus_index(c.generators[k].bus)));
        const cd psi = vt + cd(0.0, mc.x_d_prime) * it(k);
        m.e_mag(k) = std::abs(psi);
        m.x0(static_cast<Index>(m.layout.omega(k))) = m.omega0;
        if (mc.order == MachineOrder::second) {
            m.x0(static_cast<Index>(m.layout.delta(k))) = std::arg(psi);
            m.eq_fixed(k) = std::abs(psi);
        }
    }
    for (std::size_t j = 0; j < m.layout.fourth.size(); ++j) {
        const Index k = static_cast<Index>(m.layout.fourth[j]);
        const Machine& mc = m.machines[k];
        const cd vt = v(static_cast<Index>(c.bus_index(c.generators[k].bus)));
        const cd psi = vt + cd(0.0, mc.x_d_prime) * it(k);
        // q-axis placed so that e'_d settles at (x_q - x'_q) i_q with the
        // network seeing psi behind x'_d.
        const double delta = std::arg(vt + cd(0.0, mc.x_d_prime + mc.x_q - mc.x_q_prime) * it(k));
        const cd rot = psi * std::polar(1.0, -delta);
        m.x0(static_cast<Index>(m.layout.delta(k))) = delta;
        m.x0(static_cast<Index>(m.layout.eq_prime(j))) = rot.real();
        m.x0(static_cast<Index>(m.layout.ed_prime(j))) = -rot.imag();
    }

    if (kind == ModelKind::m1) {
        m.t_m = electrical_torque_m1(m, m.x0);
    } else {
        const MachineAlgebra alg = algebraic_chain(m, m.x0);
        m.t_m = alg.t_e;
        for (std::size_t j = 0; j < m.layout.fourth.size(); ++j) {
            const Index k = static_cast<Index>(m.layout.fourth[j]);
            const Machine& mc = m.machines[k];
            m.e_fd(k) = m.x0(static_cast<Index>(m.layout.eq_prime(j))) + (mc.x_d - mc.x_d_prime) * alg.i_d(k);
        }
    }
    return m;
}

ReducedModel with_network(const ReducedModel& base, ComplexMatrix y_reduced)
{
    if (y_reduced.rows() != base.y_reduced.rows() || y_reduced.cols() != base.y_reduced.cols())
        throw ValidationError("with_network: reduced admittance dimension mismatch");
    ReducedModel m = base;
    m.y_reduced = std::move(y_reduced);
    return m;
}

std::vector<int> load_bus_ids(const PowerSystemCase& c)
{
    std::vector<int> ids;
    for (const Bus& b : c.buses)
        if (b.p_load != 0.0 || b.q_load != 0.0)
            ids.push_back(b.id);
    return ids;
}

PowerSystemCase apply_load_scaling(const PowerSystemCase& c, std::span<const double> alpha)
{
    const std::vector<int> ids = load_bus_ids(c);
    if (alpha.size() != ids.size())
        throw ValidationError("apply_load_scaling: expected " + std::to_string(ids.size()) +
                              " factors, got " + std::to_string(alpha.size()));
    PowerSystemCase out = c;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (!(alpha[k] > 0.0))
            throw ValidationError("apply_load_scaling: factors must be positive");
        Bus& b = out.buses[out.bus_index(ids[k])];
        b.p_load *= alpha[k];
        b.q_load *= alpha[k];
    }
    return out;
}

std::vector<BranchFlow> branch_flows(const PowerSystemCase& c, const PowerFlowSolution& pf)
{
    const ComplexVector v = pf.voltage();
    std::vector<BranchFlow> flows;
    for (const Branch& br : c.branches) {
        BranchFlow fl{br.from, br.to, 0.0, 0.0};
        if (br.status) {
            const cd vf = v(static_cast<Index>(c.bus_index(br.from)));
            const cd vt = v(static_cast<Index>(c.bus_index(br.to)));
            const cd i = (vf - vt) / cd(br.r, br.x) + vf * cd(0.0, br.b_charging / 2.0);
            const cd s = vf * std::conj(i);
            fl.p_from = s.real();
            fl.q_from = s.imag();
        }
        flows.push_back(fl);
    }
    return flows;
}

} // namespace pmuplace
