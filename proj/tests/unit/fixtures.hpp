#pragma once

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmuplace/case.hpp"
#include "pmuplace/dynamics.hpp"
#include "pmuplace/gramian.hpp"
#include "pmuplace/network.hpp"

namespace fixtures {

using namespace pmuplace;

inline std::filesystem::path data_dir()
{
    return PMUPLACE_DATA_DIR;
}

inline const PowerSystemCase& wscc()
{
    static const PowerSystemCase c = load_case(data_dir() / "wscc9.json");
    return c;
}

inline const PowerFlowSolution& wscc_pf()
{
    static const PowerFlowSolution pf = solve_power_flow(wscc());
    return pf;
}

inline const ReducedModel& wscc_model(ModelKind kind)
{
    static const ReducedModel m1 = init_steady_state(wscc(), wscc_pf(), ModelKind::m1);
    static const ReducedModel m2 = init_steady_state(wscc(), wscc_pf(), ModelKind::m2);
    return kind == ModelKind::m1 ? m1 : m2;
}

inline const GramianBank& wscc_bank(ModelKind kind)
{
    static const GramianBank b1 = per_generator_bank(wscc_model(ModelKind::m1), GramianConfig{});
    static const GramianBank b2 = per_generator_bank(wscc_model(ModelKind::m2), GramianConfig{});
    return kind == ModelKind::m1 ? b1 : b2;
}

inline Generator machine(int id, int bus, MachineOrder order = MachineOrder::fourth)
{
    Generator g;
    g.id = id;
    g.bus = bus;
    g.model_order = order;
    g.H = 4.0;
    g.K_D = 0.0;
    g.x_d = 0.9;
    g.x_q = 0.8;
    g.x_d_prime = 0.25;
    g.x_q_prime = 0.35;
    g.T_d0_prime = 6.0;
    g.T_q0_prime = 0.5;
    return g;
}

/// Slack bus 1 with a generator, PQ bus 2, one branch r + jx.
inline PowerSystemCase two_bus_case(double p_load = 0.0, double q_load = 0.0, double r = 0.0, double x = 0.1)
{
    PowerSystemCase c;
    c.name = "two-bus";
    Bus b1;
    b1.id = 1;
    b1.kind = BusKind::slack;
    Bus b2;
    b2.id = 2;
    b2.kind = BusKind::pq;
    b2.p_load = p_load;
    b2.q_load = q_load;
    c.buses = {b1, b2};
    c.branches = {Branch{1, 2, r, x, 0.0, true}};
    c.generators = {machine(1, 1)};
    validate(c);
    return c;
}

/// Machine 1 feeding a stiff machine 2 (the infinite bus) over one line.
inline PowerSystemCase smib_case(MachineOrder order = MachineOrder::fourth)
{
    PowerSystemCase c;
    c.name = "smib";
    Bus b1;
    b1.id = 1;
    b1.kind = BusKind::pv;
    b1.v_setpoint = 1.02;
    Bus b2;
    b2.id = 2;
    b2.kind = BusKind::slack;
    c.buses = {b1, b2};
    c.branches = {Branch{1, 2, 0.01, 0.4, 0.0, true}};
    Generator g1 = machine(1, 1, order);
    g1.p_gen = 0.8;
    Generator g2 = machine(2, 2, order);
    g2.H = 1e4;
    c.generators = {g1, g2};
    validate(c);
    return c;
}

/// Eliminates every node outside `keep` one pivot at a time (textbook node
/// elimination), independent of the block Schur complement.
inline Eigen::MatrixXcd eliminate_nodes(Eigen::MatrixXcd y, const std::vector<Eigen::Index>& keep)
{
    std::vector<Eigen::Index> alive(static_cast<std::size_t>(y.rows()));
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        alive[static_cast<std::size_t>(i)] = i;
    for (Eigen::Index p = y.rows() - 1; p >= 0; --p) {
        bool kept = false;
        for (Eigen::Index k : keep)
            kept = kept || k == p;
        if (kept)
            continue;
        const std::complex<double> piv = y(p, p);
        for (Eigen::Index i = 0; i < y.rows(); ++i)
            for (Eigen::Index j = 0; j < y.cols(); ++j)
                if (i != p && j != p)
                    y(i, j) -= y(i, p) * y(p, j) / piv;
        y.row(p).setZero();
        y.col(p).setZero();
    }
    Eigen::MatrixXcd out(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t a = 0; a < keep.size(); ++a)
        for (std::size_t b = 0; b < keep.size(); ++b)
            out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = y(keep[a], keep[b]);
    return out;
}

inline double rel_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    return (a - b).norm() / b.norm();
}

inline double rel_frobenius(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b)
{
    return (a - b).norm() / b.norm();
}

} // namespace fixtures
