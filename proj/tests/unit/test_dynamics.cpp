#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "pmuplace/errors.hpp"

using namespace pmuplace;
using cd = std::complex<double>;
using Eigen::Index;
using Eigen::VectorXd;

namespace {

/// Classical model over a hand-written reduced network.
ReducedModel classical(const Eigen::MatrixXcd& y, const VectorXd& e, const VectorXd& h, double omega0 = 100.0)
{
    ReducedModel m;
    m.kind = ModelKind::m1;
    m.omega0 = omega0;
    m.y_reduced = y;
    m.layout.g = static_cast<std::size_t>(y.rows());
    for (Index i = 0; i < y.rows(); ++i) {
        Machine mc;
        mc.id = static_cast<int>(i) + 1;
        mc.H = h(i);
        mc.x_d_prime = 0.2;
        m.machines.push_back(mc);
    }
    m.e_mag = e;
    m.x0 = VectorXd::Zero(2 * y.rows());
    m.x0.tail(y.rows()).setConstant(omega0);
    m.t_m = electrical_torque_m1(m, m.x0);
    return m;
}

VectorXd random_state_near(const ReducedModel& m, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    VectorXd x = m.x0;
    const std::size_t g = m.generator_count();
    for (std::size_t i = 0; i < g; ++i) {
        x(static_cast<Index>(m.layout.delta(i))) += 0.2 * n(rng);
        x(static_cast<Index>(m.layout.omega(i))) += 0.5 * n(rng);
    }
    for (std::size_t j = 0; j < m.layout.fourth.size(); ++j) {
        x(static_cast<Index>(m.layout.eq_prime(j))) += 0.05 * n(rng);
        x(static_cast<Index>(m.layout.ed_prime(j))) += 0.05 * n(rng);
    }
    return x;
}

} // namespace

TEST_CASE("equilibrium derivatives vanish for both models")
{
    for (ModelKind kind : {ModelKind::m1, ModelKind::m2}) {
        const ReducedModel& m = fixtures::wscc_model(kind);
        CHECK(derivative(m, m.x0).lpNorm<Eigen::Infinity>() < 1e-8);
    }
}

TEST_CASE("state dimensions follow the machine orders")
{
    CHECK(fixtures::wscc_model(ModelKind::m1).state_dim() == 6);
    CHECK(fixtures::wscc_model(ModelKind::m2).state_dim() == 12);
    PowerSystemCase c = fixtures::wscc();
    c.generators[1].model_order = MachineOrder::second;
    const ReducedModel mixed = init_steady_state(c, fixtures::wscc_pf(), ModelKind::m2);
    CHECK(mixed.state_dim() == 4 * 2 + 2 * 1);
    CHECK(derivative(mixed, mixed.x0).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK_THROWS_AS(derivative(mixed, VectorXd::Zero(12)), ValidationError);
}

TEST_CASE("two identical machines on a lossless line are symmetric")
{
    Eigen::MatrixXcd y(2, 2);
    y << cd(0.0, -5.0), cd(0.0, 5.0), cd(0.0, 5.0), cd(0.0, -5.0);
    ReducedModel m = classical(y, VectorXd::Constant(2, 1.1), VectorXd::Constant(2, 3.0));
    m.t_m = VectorXd::Constant(2, 0.4);
    VectorXd x = m.x0;
    x(0) = x(1) = 0.3;
    const VectorXd te = electrical_torque_m1(m, x);
    CHECK(te(0) == doctest::Approx(te(1)));
    const VectorXd dx = derivative(m, x);
    CHECK(dx(2) == doctest::Approx(dx(3)));
}

TEST_CASE("speed deviation drives only its own angle")
{
    const ReducedModel& m = fixtures::wscc_model(ModelKind::m2);
    VectorXd x = m.x0;
    x(static_cast<Index>(m.layout.omega(1))) += 1.0;
    const VectorXd dx = derivative(m, x);
    CHECK(dx(1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(dx(0)) < 1e-12);
    CHECK(std::abs(dx(2)) < 1e-12);
}

TEST_CASE("derivatives agree with central differences of the integrator")
{
    const double h = 1e-5;
    std::mt19937_64 rng(11);
    for (ModelKind kind : {ModelKind::m1, ModelKind::m2}) {
        const ReducedModel& m = fixtures::wscc_model(kind);
        const VectorField fwd = [&](const VectorXd& s) { return derivative(m, s); };
        const VectorField bwd = [&](const VectorXd& s) { return VectorXd(-derivative(m, s)); };
        for (int trial = 0; trial < 10; ++trial) {
            const VectorXd x = random_state_near(m, rng);
            const VectorXd central = (modified_euler_step(fwd, x, h) - modified_euler_step(bwd, x, h)) / (2.0 * h);
            const VectorXd exact = derivative(m, x);
            CHECK((central - exact).norm() <= 1e-4 * exact.norm());
        }
    }
}

TEST_CASE("transient voltage equation matches a direct phasor computation")
{
    const PowerSystemCase c = fixtures::smib_case();
    const ReducedModel m = init_steady_state(c, solve_power_flow(c), ModelKind::m2);
    VectorXd x = m.x0;
    x(static_cast<Index>(m.layout.eq_prime(0))) += 0.05;
    x(static_cast<Index>(m.layout.ed_prime(1))) -= 0.02;
    x(0) += 0.1;

    // psi = (e'_q - j e'_d) e^{j delta}; I = Y psi; i_q - j i_d = I e^{-j delta}.
    Eigen::VectorXcd psi(2);
    for (Index i = 0; i < 2; ++i) {
        const double eq = x(static_cast<Index>(m.layout.eq_prime(static_cast<std::size_t>(i))));
        const double ed = x(static_cast<Index>(m.layout.ed_prime(static_cast<std::size_t>(i))));
        psi(i) = cd(eq, -ed) * std::polar(1.0, x(i));
    }
    const Eigen::VectorXcd cur = m.y_reduced * psi;
    const VectorXd dx = derivative(m, x);
    for (Index i = 0; i < 2; ++i) {
        const cd dq = cur(i) * std::polar(1.0, -x(i));
        const double i_q = dq.real();
        const double i_d = -dq.imag();
        const Machine& mc = m.machines[static_cast<std::size_t>(i)];
        const double eq = x(static_cast<Index>(m.layout.eq_prime(static_cast<std::size_t>(i))));
        const double ed = x(static_cast<Index>(m.layout.ed_prime(static_cast<std::size_t>(i))));
        const double deq = (m.e_fd(i) - eq - (mc.x_d - mc.x_d_prime) * i_d) / mc.T_d0_prime;
        const double ded = (-ed + (mc.x_q - mc.x_q_prime) * i_q) / mc.T_q0_prime;
        CHECK(dx(static_cast<Index>(m.layout.eq_prime(static_cast<std::size_t>(i)))) ==
              doctest::Approx(deq).epsilon(1e-12));
        CHECK(dx(static_cast<Index>(m.layout.ed_prime(static_cast<std::size_t>(i)))) ==
              doctest::Approx(ded).epsilon(1e-12));
    }
}

TEST_CASE("measurements")
{
    SUBCASE("M1 with every generator reorders the state")
    {
        const ReducedModel& m = fixtures::wscc_model(ModelKind::m1);
        const std::vector<int> all{1, 2, 3};
        VectorXd x = m.x0;
        x(0) += 0.1;
        CHECK(measure(m, x, all) == x);
        const std::vector<int> swapped{3, 1};
        const VectorXd y = measure(m, x, swapped);
        CHECK(y(0) == x(2));
        CHECK(y(1) == x(0));
        CHECK(y(2) == x(5));
        CHECK(y(3) == x(3));
    }
    SUBCASE("M2 rotation at ninety degrees")
    {
        ReducedModel m = fixtures::wscc_model(ModelKind::m2);
        m.y_reduced.setZero(); // no current, terminal voltage equals the transient one
        VectorXd x = m.x0;
        x(0) = std::numbers::pi / 2.0;
        x(static_cast<Index>(m.layout.eq_prime(0))) = 1.07;
        x(static_cast<Index>(m.layout.ed_prime(0))) = 0.0;
        const std::vector<int> one{1};
        const VectorXd y = measure(m, x, one);
        CHECK(std::abs(y(0)) < 1e-15);
        CHECK(y(1) == doctest::Approx(1.07));
    }
    SUBCASE("empty or invalid instrumented set")
    {
        const ReducedModel& m = fixtures::wscc_model(ModelKind::m1);
        CHECK_THROWS_AS(measure(m, m.x0, std::vector<int>{}), ValidationError);
        CHECK_THROWS_AS(measure(m, m.x0, std::vector<int>{4}), ValidationError);
        CHECK_THROWS_AS(measure(m, m.x0, std::vector<int>{2, 2}), ValidationError);
    }
    SUBCASE("output rows group by generator")
    {
        CHECK(output_rows(ModelKind::m1, 3, 1) == std::vector<Index>{1, 4});
        CHECK(output_rows(ModelKind::m2, 2, 0) == std::vector<Index>{0, 2, 4, 6});
    }
}

TEST_CASE("M2 terminal voltages at steady state")
{
    const std::vector<int> all{1, 2, 3};
    SUBCASE("round rotor: equal to the power-flow voltages")
    {
        PowerSystemCase c = fixtures::wscc();
        for (Generator& g : c.generators)
            g.x_q_prime = g.x_d_prime;
        const PowerFlowSolution pf = solve_power_flow(c);
        const ReducedModel m = init_steady_state(c, pf, ModelKind::m2);
        const VectorXd y = measure(m, m.x0, all);
        for (Index i = 0; i < 3; ++i) {
            const cd v = std::polar(pf.v_mag(i), pf.v_ang(i));
            CHECK(std::abs(cd(y(i), y(3 + i)) - v) < 1e-6);
        }
    }
    SUBCASE("salient: mismatch is the transient saliency drop")
    {
        const PowerSystemCase& c = fixtures::wscc();
        const ReducedModel& m = fixtures::wscc_model(ModelKind::m2);
        const VectorXd y = measure(m, m.x0, all);
        const MachineAlgebra a = algebraic_chain(m, m.x0);
        for (Index i = 0; i < 3; ++i) {
            const cd v = std::polar(fixtures::wscc_pf().v_mag(i), fixtures::wscc_pf().v_ang(i));
            const Generator& g = c.generators[static_cast<std::size_t>(i)];
            const double drop = std::abs(g.x_q_prime - g.x_d_prime) * std::abs(a.i_q(i));
            CHECK(std::abs(cd(y(i), y(3 + i)) - v) == doctest::Approx(drop).epsilon(1e-9));
        }
    }
}

TEST_CASE("Heun step")
{
    const VectorField decay = [](const VectorXd& x) { return VectorXd(-x); };
    const VectorField still = [](const VectorXd& x) { return VectorXd(VectorXd::Zero(x.size())); };
    SUBCASE("scalar decay matches 1 - dt + dt^2/2")
    {
        const VectorXd x1 = modified_euler_step(decay, VectorXd::Ones(1), 0.1);
        CHECK(x1(0) == doctest::Approx(0.905).epsilon(1e-15));
    }
    SUBCASE("stationary field")
    {
        const VectorXd x = VectorXd::LinSpaced(4, -1.0, 2.0);
        CHECK(modified_euler_step(still, x, 0.3) == x);
    }
    SUBCASE("non-finite result carries the step index")
    {
        const VectorField explode = [](const VectorXd& x) { return VectorXd(x.array().square() * 1e300); };
        try {
            simulate(explode, VectorXd::Constant(1, 10.0), 1.0, 0.1);
            FAIL("expected a blowup");
        } catch (const IntegrationBlowup& e) {
            CHECK(e.step() == 0);
        }
    }
    SUBCASE("invalid step")
    {
        CHECK_THROWS_AS(modified_euler_step(decay, VectorXd::Ones(1), 0.0), ValidationError);
        CHECK_THROWS_AS(simulate(decay, VectorXd::Ones(1), -1.0, 0.1), ValidationError);
    }
}

TEST_CASE("step halving converges at second order")
{
    // Worst-case state error against a dt = 1/3840 reference: halving the
    // step must cut it by four, and dt = 1/120 must stay within a few
    // percent of the swing.
    for (ModelKind kind : {ModelKind::m1, ModelKind::m2}) {
        const ReducedModel& m = fixtures::wscc_model(kind);
        VectorXd x = m.x0;
        x(0) += 0.05;
        const Trajectory ref = simulate(m, x, 5.0, 1.0 / 3840.0);
        auto error_at = [&](int rate) {
            const Trajectory tr = simulate(m, x, 5.0, 1.0 / rate);
            const Index stride = 3840 / rate;
            double worst = 0.0;
            for (Index k = 0; k < tr.states.cols(); ++k)
                worst = std::max(worst, (tr.states.col(k) - ref.states.col(stride * k)).lpNorm<Eigen::Infinity>());
            return worst;
        };
        const double e120 = error_at(120);
        const double e240 = error_at(240);
        const double e480 = error_at(480);
        CHECK(e120 / e240 == doctest::Approx(4.0).epsilon(0.15));
        CHECK(e240 / e480 == doctest::Approx(4.0).epsilon(0.15));

        const Trajectory coarse = simulate(m, x, 5.0, 1.0 / 120.0);
        double swing = 0.0;
        for (Index k = 0; k < coarse.states.cols(); ++k)
            swing = std::max(swing, (coarse.states.col(k) - m.x0).lpNorm<Eigen::Infinity>());
        CHECK(e120 < 0.1 * swing);
    }
}

TEST_CASE("simulation holds the equilibrium and is deterministic")
{
    for (ModelKind kind : {ModelKind::m1, ModelKind::m2}) {
        const ReducedModel& m = fixtures::wscc_model(kind);
        const Trajectory tr = simulate(m, m.x0, 5.0, 1.0 / 120.0);
        CHECK(tr.samples() == 601);
        CHECK(tr.time.back() == doctest::Approx(5.0));
        for (Index k = 0; k < tr.states.cols(); ++k)
            CHECK((tr.states.col(k) - m.x0).lpNorm<Eigen::Infinity>() < 1e-7);

        VectorXd x = m.x0;
        x(1) += 0.2;
        const Trajectory a = simulate(m, x, 2.0, 1.0 / 120.0);
        const Trajectory b = simulate(m, x, 2.0, 1.0 / 120.0);
        CHECK(a.states == b.states);
    }
}

TEST_CASE("angle perturbation stays bounded")
{
    const ReducedModel& m = fixtures::wscc_model(ModelKind::m1);
    VectorXd x = m.x0;
    const double e = -m.x0(0);
    x(0) += e;
    const Trajectory tr = simulate(m, x, 5.0, 1.0 / 120.0);
    REQUIRE(tr.states.allFinite());
    double swing = 0.0;
    for (Index k = 0; k < tr.states.cols(); ++k)
        for (Index i = 0; i < 3; ++i)
            swing = std::max(swing, std::abs(tr.states(i, k) - m.x0(i)));
    CHECK(swing <= 10.0 * std::abs(e));
}

TEST_CASE("lossless classical network conserves energy")
{
    Eigen::MatrixXcd y(3, 3);
    y << cd(0.0, -6.0), cd(0.0, 4.0), cd(0.0, 2.0),
         cd(0.0, 4.0), cd(0.0, -7.0), cd(0.0, 3.0),
         cd(0.0, 2.0), cd(0.0, 3.0), cd(0.0, -5.0);
    VectorXd e(3), h(3);
    e << 1.05, 1.02, 1.0;
    h << 6.0, 3.0, 2.0;
    ReducedModel m = classical(y, e, h, 2.0 * std::numbers::pi * 60.0);
    m.t_m << 0.5, -0.2, -0.3;

    auto energy = [&](const VectorXd& x) {
        double w = 0.0;
        for (Index i = 0; i < 3; ++i) {
            const double slip = x(3 + i) - m.omega0;
            w += h(i) * slip * slip / m.omega0 - m.t_m(i) * x(i);
            for (Index j = i + 1; j < 3; ++j)
                w -= e(i) * e(j) * y(i, j).imag() * std::cos(x(i) - x(j));
        }
        return w;
    };
    VectorXd x = m.x0;
    x(0) += 0.3;
    auto drift_at = [&](double dt) {
        const Trajectory tr = simulate(m, x, 5.0, dt);
        const double w0 = energy(tr.states.col(0));
        double drift = 0.0;
        for (Index k = 0; k < tr.states.cols(); ++k)
            drift = std::max(drift, std::abs(energy(tr.states.col(k)) - w0));
        return drift;
    };
    // Heun is not symplectic: the drift is a second-order integration
    // error, not a modeling one.
    const double d1 = drift_at(1.0 / 120.0);
    const double d2 = drift_at(1.0 / 240.0);
    CHECK(d1 / d2 > 3.5);
    CHECK(drift_at(1.0 / 1920.0) < 1e-4);
}

TEST_CASE("round-rotor fourth-order torque equals the classical torque")
{
    const ReducedModel& m1 = fixtures::wscc_model(ModelKind::m1);
    ReducedModel m2 = m1;
    m2.kind = ModelKind::m2;
    for (std::size_t i = 0; i < 3; ++i) {
        m2.machines[i].order = MachineOrder::fourth;
        m2.machines[i].x_q_prime = m2.machines[i].x_d_prime;
        m2.layout.fourth.push_back(i);
    }
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int trial = 0; trial < 5; ++trial) {
        VectorXd x(12);
        x.setZero();
        for (Index i = 0; i < 3; ++i) {
            x(i) = m1.x0(i) + u(rng);
            x(3 + i) = m1.omega0;
            x(6 + i) = m1.e_mag(i);
        }
        const VectorXd te1 = electrical_torque_m1(m1, x.head(6));
        const VectorXd te2 = algebraic_chain(m2, x).t_e;
        CHECK((te1 - te2).lpNorm<Eigen::Infinity>() < 1e-8);
    }
}

TEST_CASE("fault schedule")
{
    const PowerSystemCase& c = fixtures::wscc();
    const PowerFlowSolution& pf = fixtures::wscc_pf();

    SUBCASE("three stages tiling the horizon")
    {
        const FaultSchedule s = build_fault_schedule(c, pf, 5, 7, ModelKind::m1);
        REQUIRE(s.stages.size() == 3);
        CHECK(s.stages[0].t_begin == 0.0);
        CHECK(s.stages[0].t_end == s.stages[1].t_begin);
        CHECK(s.stages[1].t_end == s.stages[2].t_begin);
        CHECK(s.stages[2].t_begin == doctest::Approx(0.1));
        CHECK(std::isinf(s.stages[2].t_end));
        const double dt = 1.0 / 120.0;
        CHECK(&s.model_for_step(5, dt) == &s.stages[0].model);
        CHECK(&s.model_for_step(6, dt) == &s.stages[1].model);
        CHECK(&s.model_for_step(12, dt) == &s.stages[2].model);
    }
    SUBCASE("post-clearing network is the case without the branch")
    {
        const FaultSchedule s = build_fault_schedule(c, pf, 5, 7, ModelKind::m1);
        PowerSystemCase removed = c;
        removed.branches.erase(removed.branches.begin() + 3);
        const Eigen::MatrixXcd ref = reduce_to_internal_nodes(removed, pf, build_ybus(removed));
        CHECK(fixtures::rel_frobenius(s.final_model().y_reduced, ref) < 1e-13);
    }
    SUBCASE("bolted stage equals elimination with a large shunt")
    {
        const FaultSchedule s = build_fault_schedule(c, pf, 5, 7, ModelKind::m1);
        Eigen::MatrixXcd ya = augmented_admittance(c, pf, build_ybus(c));
        ya(4, 4) += 1e6;
        const Eigen::MatrixXcd ref = fixtures::eliminate_nodes(ya, {9, 10, 11});
        CHECK(fixtures::rel_frobenius(s.stages[0].model.y_reduced, ref) < 1e-9);
    }
    SUBCASE("zero-duration fault equals the post-clearing run")
    {
        const FaultTiming instant{0.0, 0.0, 0.0};
        const FaultSchedule s = build_fault_schedule(c, pf, 6, 9, ModelKind::m2, instant);
        REQUIRE(s.stages.size() == 1);
        PowerSystemCase removed = c;
        removed.branches.erase(removed.branches.begin() + 4);
        const ReducedModel post = with_network(fixtures::wscc_model(ModelKind::m2),
                                               reduce_to_internal_nodes(removed, pf, build_ybus(removed)));
        const ReducedModel& m = fixtures::wscc_model(ModelKind::m2);
        const Trajectory a = simulate(s, m.x0, 1.0, 1.0 / 120.0);
        const Trajectory b = simulate(post, m.x0, 1.0, 1.0 / 120.0);
        CHECK((a.states - b.states).lpNorm<Eigen::Infinity>() < 1e-12);
    }
    SUBCASE("guards")
    {
        CHECK_THROWS_AS(build_fault_schedule(c, pf, 1, 4, ModelKind::m1), GuardError);
        CHECK_THROWS_AS(build_fault_schedule(c, pf, 7, 2, ModelKind::m1), GuardError);
        CHECK_THROWS_AS(build_fault_schedule(c, pf, 5, 9, ModelKind::m1), ValidationError);
        const FaultTiming backwards{0.0, 0.1, 0.05};
        CHECK_THROWS_AS(build_fault_schedule(c, pf, 5, 7, ModelKind::m1, backwards), ValidationError);
    }
    SUBCASE("faulted trajectory moves away from the equilibrium")
    {
        const FaultSchedule s = build_fault_schedule(c, pf, 5, 7, ModelKind::m1);
        const ReducedModel& m = fixtures::wscc_model(ModelKind::m1);
        const Trajectory tr = simulate(s, m.x0, 5.0, 1.0 / 120.0);
        CHECK(tr.states.allFinite());
        CHECK((tr.states.col(12) - m.x0).norm() > 1e-3);
    }
}

TEST_CASE("state and output names")
{
    const ReducedModel& m = fixtures::wscc_model(ModelKind::m2);
    const std::vector<std::string> names = state_names(m);
    REQUIRE(names.size() == 12);
    CHECK(names[0] == "delta_1");
    CHECK(names[5] == "omega_3");
    CHECK(names[6] == "eqp_1");
    CHECK(names[11] == "edp_3");
    const std::vector<int> ids{2, 3};
    CHECK(output_names(m, ids)[1] == "eR_3");
}
