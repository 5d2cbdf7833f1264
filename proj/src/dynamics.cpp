#include "pmuplace/dynamics.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <set>

#include "pmuplace/errors.hpp"

namespace pmuplace {

using cd = std::complex<double>;
using Eigen::Index;
using Eigen::VectorXd;

namespace {

void check_dim(const ReducedModel& model, const VectorXd& x)
{
    if (static_cast<std::size_t>(x.size()) != model.state_dim())
        throw ValidationError("state dimension " + std::to_string(x.size()) + " does not match model dimension " +
                              std::to_string(model.state_dim()));
}

// x'_q seen by the stator equations; classical machines have a single
// transient reactance.
double effective_xq_prime(const Machine& m)
{
    return m.order == MachineOrder::fourth ? m.x_q_prime : m.x_d_prime;
}

} // namespace

VectorXd electrical_torque_m1(const ReducedModel& model, const VectorXd& x)
{
    const Index g = static_cast<Index>(model.generator_count());
    VectorXd te(g);
    for (Index i = 0; i < g; ++i) {
        const double ei = model.e_mag(i);
        double t = ei * ei * model.y_reduced(i, i).real();
        for (Index j = 0; j < g; ++j) {
            if (j == i)
                continue;
            const double dij = x(i) - x(j);
            const cd yij = model.y_reduced(i, j);
            t += ei * model.e_mag(j) * (yij.real() * std::cos(dij) + yij.imag() * std::sin(dij));
        }
        te(i) = t;
    }
    return te;
}

MachineAlgebra algebraic_chain(const ReducedModel& model, const VectorXd& x)
{
    const Index g = static_cast<Index>(model.generator_count());
    const StateLayout& lay = model.layout;
    VectorXd eqp = model.eq_fixed;
    VectorXd edp = model.ed_fixed;
    for (std::size_t j = 0; j < lay.fourth.size(); ++j) {
        eqp(static_cast<Index>(lay.fourth[j])) = x(static_cast<Index>(lay.eq_prime(j)));
        edp(static_cast<Index>(lay.fourth[j])) = x(static_cast<Index>(lay.ed_prime(j)));
    }

    ComplexVector psi(g);
    VectorXd s(g), c(g);
    for (Index i = 0; i < g; ++i) {
        s(i) = std::sin(x(i));
        c(i) = std::cos(x(i));
        psi(i) = cd(edp(i) * s(i) + eqp(i) * c(i), eqp(i) * s(i) - edp(i) * c(i));
    }
    const ComplexVector it = model.y_reduced * psi;

    MachineAlgebra a;
    a.i_R = it.real();
    a.i_I = it.imag();
    a.i_q.resize(g);
    a.i_d.resize(g);
    a.e_q.resize(g);
    a.e_d.resize(g);
    a.t_e.resize(g);
    for (Index i = 0; i < g; ++i) {
        const Machine& m = model.machines[i];
        a.i_q(i) = a.i_I(i) * s(i) + a.i_R(i) * c(i);
        a.i_d(i) = a.i_R(i) * s(i) - a.i_I(i) * c(i);
        a.e_q(i) = eqp(i) - m.x_d_prime * a.i_d(i);
        a.e_d(i) = edp(i) + effective_xq_prime(m) * a.i_q(i);
        a.t_e(i) = a.e_q(i) * a.i_q(i) + a.e_d(i) * a.i_d(i);
    }
    return a;
}

VectorXd derivative_m1(const VectorXd& x, const ReducedModel& model)
{
    if (model.kind != ModelKind::m1)
        throw ValidationError("derivative_m1 called on an M2 model");
    check_dim(model, x);
    const Index g = static_cast<Index>(model.generator_count());
    const VectorXd te = electrical_torque_m1(model, x);
    VectorXd dx(2 * g);
    for (Index i = 0; i < g; ++i) {
        dx(i) = x(g + i) - model.omega0;
        dx(g + i) = model.omega0 / (2.0 * model.machines[i].H) * (model.t_m(i) - te(i));
    }
    return dx;
}

VectorXd derivative_m2(const VectorXd& x, const ReducedModel& model)
{
    if (model.kind != ModelKind::m2)
        throw ValidationError("derivative_m2 called on an M1 model");
    check_dim(model, x);
    const StateLayout& lay = model.layout;
    const Index g = static_cast<Index>(lay.g);
    const MachineAlgebra a = algebraic_chain(model, x);
    VectorXd dx(x.size());
    const double w0 = model.omega0;
    for (Index i = 0; i < g; ++i) {
        const Machine& m = model.machines[i];
        const double slip = x(g + i) - w0;
        dx(i) = slip;
        dx(g + i) = w0 / (2.0 * m.H) * (model.t_m(i) - a.t_e(i) - m.K_D / w0 * slip);
    }
    for (std::size_t j = 0; j < lay.fourth.size(); ++j) {
        const Index i = static_cast<Index>(lay.fourth[j]);
        const Machine& m = model.machines[i];
        const Index iq = static_cast<Index>(lay.eq_prime(j));
        const Index id = static_cast<Index>(lay.ed_prime(j));
        dx(iq) = (model.e_fd(i) - x(iq) - (m.x_d - m.x_d_prime) * a.i_d(i)) / m.T_d0_prime;
        dx(id) = (-x(id) + (m.x_q - m.x_q_prime) * a.i_q(i)) / m.T_q0_prime;
    }
    return dx;
}

VectorXd derivative(const ReducedModel& model, const VectorXd& x)
{
    return model.kind == ModelKind::m1 ? derivative_m1(x, model) : derivative_m2(x, model);
}

std::size_t outputs_per_generator(ModelKind kind)
{
    return kind == ModelKind::m1 ? 2 : 4;
}

std::vector<std::size_t> instrumented_positions(const ReducedModel& model, std::span<const int> ids)
{
    if (ids.empty())
        throw ValidationError("instrumented generator set is empty: no outputs defined");
    std::set<int> seen;
    std::vector<std::size_t> pos;
    for (int id : ids) {
        if (id < 1 || id > static_cast<int>(model.generator_count()))
            throw ValidationError("instrumented generator " + std::to_string(id) + " does not exist");
        if (!seen.insert(id).second)
            throw ValidationError("generator " + std::to_string(id) + " instrumented twice");
        pos.push_back(static_cast<std::size_t>(id - 1));
    }
    return pos;
}

VectorXd measure(const ReducedModel& model, const VectorXd& x, std::span<const int> instrumented)
{
    check_dim(model, x);
    const std::vector<std::size_t> pos = instrumented_positions(model, instrumented);
    const Index p = static_cast<Index>(pos.size());
    const Index g = static_cast<Index>(model.generator_count());
    if (model.kind == ModelKind::m1) {
        VectorXd y(2 * p);
        for (Index j = 0; j < p; ++j) {
            y(j) = x(static_cast<Index>(pos[j]));
            y(p + j) = x(g + static_cast<Index>(pos[j]));
        }
        return y;
    }
    const MachineAlgebra a = algebraic_chain(model, x);
    VectorXd y(4 * p);
    for (Index j = 0; j < p; ++j) {
        const Index i = static_cast<Index>(pos[j]);
        const double s = std::sin(x(i));
        const double c = std::cos(x(i));
        y(j) = a.e_d(i) * s + a.e_q(i) * c;
        y(p + j) = a.e_q(i) * s - a.e_d(i) * c;
        y(2 * p + j) = a.i_R(i);
        y(3 * p + j) = a.i_I(i);
    }
    return y;
}

std::vector<Index> output_rows(ModelKind kind, std::size_t instrumented_count, std::size_t j)
{
    const std::size_t per = outputs_per_generator(kind);
    std::vector<Index> rows;
    for (std::size_t k = 0; k < per; ++k)
        rows.push_back(static_cast<Index>(k * instrumented_count + j));
    return rows;
}

VectorXd modified_euler_step(const VectorField& f, const VectorXd& x, double dt, std::size_t step_index)
{
    if (!(dt > 0.0))
        throw ValidationError("integration step must be positive");
    const VectorXd f0 = f(x);
    const VectorXd x_pred = x + f0 * dt;
    const VectorXd f_avg = 0.5 * (f(x_pred) + f0);
    VectorXd x_next = x + f_avg * dt;
    if (!x_next.allFinite())
        throw IntegrationBlowup("integration produced a non-finite state at step " + std::to_string(step_index),
                                step_index);
    return x_next;
}

VectorXd modified_euler_step(const ReducedModel& model, const VectorXd& x, double dt)
{
    return modified_euler_step([&](const VectorXd& s) { return derivative(model, s); }, x, dt);
}

namespace {

std::size_t step_count(double horizon, double dt)
{
    if (!(horizon > 0.0))
        throw ValidationError("simulation horizon must be positive");
    if (!(dt > 0.0))
        throw ValidationError("integration step must be positive");
    return static_cast<std::size_t>(std::llround(horizon / dt));
}

std::size_t grid_index(double t, double dt)
{
    if (std::isinf(t))
        return std::numeric_limits<std::size_t>::max();
    return static_cast<std::size_t>(std::llround(t / dt));
}

template <class StepFn>
Trajectory rollout(const VectorXd& x_init, double horizon, double dt, StepFn&& step)
{
    const std::size_t k_max = step_count(horizon, dt);
    Trajectory tr;
    tr.time.resize(k_max + 1);
    tr.states.resize(x_init.size(), static_cast<Index>(k_max + 1));
    tr.states.col(0) = x_init;
    tr.time[0] = 0.0;
    VectorXd x = x_init;
    for (std::size_t k = 0; k < k_max; ++k) {
        x = step(k, x);
        tr.states.col(static_cast<Index>(k + 1)) = x;
        tr.time[k + 1] = static_cast<double>(k + 1) * dt;
    }
    return tr;
}

} // namespace

Trajectory simulate(const VectorField& f, const VectorXd& x_init, double horizon, double dt)
{
    return rollout(x_init, horizon, dt,
                   [&](std::size_t k, const VectorXd& x) { return modified_euler_step(f, x, dt, k); });
}

Trajectory simulate(const ReducedModel& model, const VectorXd& x_init, double horizon, double dt)
{
    check_dim(model, x_init);
    const VectorField f = [&](const VectorXd& s) { return derivative(model, s); };
    return simulate(f, x_init, horizon, dt);
}

const ReducedModel& FaultSchedule::model_for_step(std::size_t k, double dt) const
{
    for (const FaultStage& st : stages)
        if (k >= grid_index(st.t_begin, dt) && k < grid_index(st.t_end, dt))
            return st.model;
    return stages.back().model;
}

Trajectory simulate(const FaultSchedule& schedule, const VectorXd& x_init, double horizon, double dt)
{
    if (schedule.stages.empty())
        throw ValidationError("fault schedule has no stages");
    check_dim(schedule.final_model(), x_init);
    return rollout(x_init, horizon, dt, [&](std::size_t k, const VectorXd& x) {
        const ReducedModel& model = schedule.model_for_step(k, dt);
        return modified_euler_step([&](const VectorXd& s) { return derivative(model, s); }, x, dt, k);
    });
}

Eigen::MatrixXd trajectory_outputs(const ReducedModel& model, const Trajectory& traj, std::span<const int> instrumented)
{
    const Index p = static_cast<Index>(outputs_per_generator(model.kind) * instrumented.size());
    Eigen::MatrixXd y(p, traj.states.cols());
    for (Index k = 0; k < traj.states.cols(); ++k)
        y.col(k) = measure(model, traj.states.col(k), instrumented);
    return y;
}

Eigen::MatrixXd trajectory_outputs(const FaultSchedule& schedule, const Trajectory& traj,
                                   std::span<const int> instrumented, double dt)
{
    const ReducedModel& last = schedule.final_model();
    const Index p = static_cast<Index>(outputs_per_generator(last.kind) * instrumented.size());
    Eigen::MatrixXd y(p, traj.states.cols());
    for (Index k = 0; k < traj.states.cols(); ++k)
        y.col(k) = measure(schedule.model_for_step(static_cast<std::size_t>(k), dt), traj.states.col(k), instrumented);
    return y;
}

void check_fault_branch(const PowerSystemCase& c, int from_bus, int to_bus)
{
    c.bus_index(from_bus);
    c.bus_index(to_bus);
    if (c.is_generator_bus(from_bus) || c.is_generator_bus(to_bus))
        throw GuardError("branch " + std::to_string(from_bus) + "-" + std::to_string(to_bus) +
                         " touches a generator terminal bus; faults there are not considered");
}

FaultSchedule build_fault_schedule(const PowerSystemCase& c, const PowerFlowSolution& pf, int from_bus, int to_bus,
                                   ModelKind kind, const FaultTiming& timing, double fault_admittance)
{
    check_fault_branch(c, from_bus, to_bus);
    if (!(timing.t_fault >= 0.0) || timing.t_clear_near < timing.t_fault || timing.t_clear_remote < timing.t_clear_near)
        throw ValidationError("fault timing must satisfy 0 <= t_fault <= t_clear_near <= t_clear_remote");

    const Branch* branch = nullptr;
    for (const Branch& br : c.branches)
        if ((br.from == from_bus && br.to == to_bus) || (br.from == to_bus && br.to == from_bus))
            branch = &br;
    if (!branch)
        throw ValidationError("no branch " + std::to_string(from_bus) + "-" + std::to_string(to_bus) + " in case");

    const ReducedModel base = init_steady_state(c, pf, kind);
    FaultSchedule sch;
    sch.from_bus = from_bus;
    sch.to_bus = to_bus;
    sch.timing = timing;

    const ComplexMatrix y_full = build_ybus(c);
    const Index f = static_cast<Index>(c.bus_index(from_bus));
    const Index t = static_cast<Index>(c.bus_index(to_bus));

    ComplexMatrix y_on_fault = y_full;
    ComplexMatrix y_near_open = y_full;
    ComplexMatrix y_cleared = y_full;
    if (branch->status) {
        PowerSystemCase opened = c;
        for (Branch& br : opened.branches)
            if (&br - opened.branches.data() == branch - c.branches.data())
                br.status = false;
        y_cleared = build_ybus(opened);

        y_on_fault(f, f) += fault_admittance;

        // Fault point sits at the line's near end: it carries the near-end
        // charging and the fault shunt, and reaches the remote bus through
        // the series branch. Eliminate it onto the remote bus.
        const cd ys = 1.0 / cd(branch->r, branch->x);
        const cd ysh(0.0, branch->b_charging / 2.0);
        y_near_open = y_cleared;
        y_near_open(t, t) += ys + ysh - ys * ys / (ys + ysh + fault_admittance);
    }

    const double inf = std::numeric_limits<double>::infinity();
    auto add = [&](double t0, double t1, const ComplexMatrix& y) {
        if (t1 > t0)
            sch.stages.push_back({t0, t1, with_network(base, reduce_to_internal_nodes(c, pf, y))});
    };
    add(0.0, timing.t_fault, y_full);
    add(timing.t_fault, timing.t_clear_near, y_on_fault);
    add(timing.t_clear_near, timing.t_clear_remote, y_near_open);
    add(timing.t_clear_remote, inf, y_cleared);
    return sch;
}

std::vector<std::string> state_names(const ReducedModel& model)
{
    std::vector<std::string> names;
    const std::size_t g = model.generator_count();
    for (std::size_t i = 0; i < g; ++i)
        names.push_back("delta_" + std::to_string(model.machines[i].id));
    for (std::size_t i = 0; i < g; ++i)
        names.push_back("omega_" + std::to_string(model.machines[i].id));
    for (std::size_t k : model.layout.fourth)
        names.push_back("eqp_" + std::to_string(model.machines[k].id));
    for (std::size_t k : model.layout.fourth)
        names.push_back("edp_" + std::to_string(model.machines[k].id));
    return names;
}

std::vector<std::string> output_names(const ReducedModel& model, std::span<const int> instrumented)
{
    std::vector<std::string> prefixes = model.kind == ModelKind::m1
                                            ? std::vector<std::string>{"delta_", "omega_"}
                                            : std::vector<std::string>{"eR_", "eI_", "iR_", "iI_"};
    std::vector<std::string> names;
    for (const std::string& p : prefixes)
        for (int id : instrumented)
            names.push_back(p + std::to_string(id));
    return names;
}

} // namespace pmuplace
