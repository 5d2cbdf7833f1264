#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pmuplace/case.hpp"

namespace pmuplace {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Which dynamic model is used: classical second-order (M1) with rotor
/// angle/speed outputs, or mixed fourth/second-order (M2) with terminal
/// voltage and current phasor outputs.
enum class ModelKind { m1, m2 };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);

ComplexMatrix build_ybus(const PowerSystemCase& c);

struct PowerFlowOptions {
    double tol = 1e-8;
    int max_iter = 30;
};

struct PowerFlowSolution {
    Eigen::VectorXd v_mag;
    Eigen::VectorXd v_ang; // radians, slack at 0
    Eigen::VectorXd p_inj;
    Eigen::VectorXd q_inj;
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;

    ComplexVector voltage() const;
};

/// Full Newton-Raphson from a flat start. Non-convergence is reported in
/// the result; a singular Jacobian throws SingularMatrixError.
PowerFlowSolution solve_power_flow(const PowerSystemCase& c, const PowerFlowOptions& opts = {});

/// Kron reduction onto `keep` (indices into y): Ykk - Yke Yee^-1 Yek.
ComplexMatrix kron_reduce(const ComplexMatrix& y, std::span<const Eigen::Index> keep);

/// Bus admittance augmented with constant-admittance loads (at the solved
/// voltages) and one internal node per generator behind x'_d. Internal
/// nodes follow the bus nodes, in generator id order.
ComplexMatrix augmented_admittance(const PowerSystemCase& c, const PowerFlowSolution& pf,
                                   const ComplexMatrix& ybus);

/// Reduced admittance over generator internal nodes for a given bus matrix.
ComplexMatrix reduce_to_internal_nodes(const PowerSystemCase& c, const PowerFlowSolution& pf,
                                       const ComplexMatrix& ybus);

struct Machine {
    int id = 0;
    MachineOrder order = MachineOrder::second;
    double H = 0.0;
    double K_D = 0.0;
    double x_d = 0.0;
    double x_q = 0.0;
    double x_d_prime = 0.0;
    double x_q_prime = 0.0;
    double T_d0_prime = 0.0;
    double T_q0_prime = 0.0;
};

/// Index map for the state vector [delta; omega; e'_q; e'_d]. Only
/// fourth-order machines carry e'_q/e'_d states.
struct StateLayout {
    std::size_t g = 0;
    std::vector<std::size_t> fourth; // machine positions with transient states

    std::size_t dim() const { return 2 * g + 2 * fourth.size(); }
    std::size_t delta(std::size_t i) const { return i; }
    std::size_t omega(std::size_t i) const { return g + i; }
    std::size_t eq_prime(std::size_t k) const { return 2 * g + k; }
    std::size_t ed_prime(std::size_t k) const { return 2 * g + fourth.size() + k; }
};

struct ReducedModel {
    ModelKind kind = ModelKind::m1;
    double omega0 = 0.0;
    ComplexMatrix y_reduced;
    std::vector<Machine> machines;
    StateLayout layout;

    Eigen::VectorXd e_mag;    // internal EMF magnitude behind x'_d
    Eigen::VectorXd t_m;      // mechanical torque
    Eigen::VectorXd e_fd;     // field voltage (fourth-order machines, M2)
    Eigen::VectorXd eq_fixed; // M2: frozen e'_q of second-order machines
    Eigen::VectorXd ed_fixed; // M2: frozen e'_d of second-order machines
    Eigen::VectorXd x0;

    std::size_t generator_count() const { return machines.size(); }
    std::size_t state_dim() const { return layout.dim(); }
};

/// Steady state and constant inputs from a converged power flow. Throws
/// ValidationError when pf did not converge.
ReducedModel init_steady_state(const PowerSystemCase& c, const PowerFlowSolution& pf, ModelKind kind);

/// Same inputs and steady state, different network (fault stages,
/// contingencies).
ReducedModel with_network(const ReducedModel& base, ComplexMatrix y_reduced);

/// Bus ids carrying a nonzero P or Q load, in bus order.
std::vector<int> load_bus_ids(const PowerSystemCase& c);

/// Scales P and Q at each load bus by its alpha (ordered as load_bus_ids).
PowerSystemCase apply_load_scaling(const PowerSystemCase& c, std::span<const double> alpha);

struct BranchFlow {
    int from = 0;
    int to = 0;
    double p_from = 0.0;
    double q_from = 0.0;
};

std::vector<BranchFlow> branch_flows(const PowerSystemCase& c, const PowerFlowSolution& pf);

} // namespace pmuplace
