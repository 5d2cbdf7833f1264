#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pmuplace/network.hpp"

namespace pmuplace {

using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Stator/network algebraic quantities of the fourth-order model, one entry
/// per machine.
struct MachineAlgebra {
    Eigen::VectorXd i_R, i_I; // terminal current, network frame
    Eigen::VectorXd i_d, i_q;
    Eigen::VectorXd e_q, e_d; // terminal voltage, machine frame
    Eigen::VectorXd t_e;
};

/// T_ei = E_i^2 G_ii + sum_j E_i E_j (G_ij cos d_ij + B_ij sin d_ij).
Eigen::VectorXd electrical_torque_m1(const ReducedModel& model, const Eigen::VectorXd& x);

MachineAlgebra algebraic_chain(const ReducedModel& model, const Eigen::VectorXd& x);

Eigen::VectorXd derivative_m1(const Eigen::VectorXd& x, const ReducedModel& model);
Eigen::VectorXd derivative_m2(const Eigen::VectorXd& x, const ReducedModel& model);
Eigen::VectorXd derivative(const ReducedModel& model, const Eigen::VectorXd& x);

/// Number of measured channels per instrumented generator (2 for M1, 4 for M2).
std::size_t outputs_per_generator(ModelKind kind);

/// Validates a set of 1-based generator ids and returns 0-based positions.
std::vector<std::size_t> instrumented_positions(const ReducedModel& model, std::span<const int> ids);

/// M1: [delta_P; omega_P]. M2: [e_R; e_I; i_R; i_I] over the instrumented
/// machines, in the order given.
Eigen::VectorXd measure(const ReducedModel& model, const Eigen::VectorXd& x, std::span<const int> instrumented);

/// Rows of the output vector that belong to the j-th instrumented machine.
std::vector<Eigen::Index> output_rows(ModelKind kind, std::size_t instrumented_count, std::size_t j);

/// Heun / modified Euler step with constant inputs. Throws IntegrationBlowup
/// tagged with `step_index` if the result is not finite.
Eigen::VectorXd modified_euler_step(const VectorField& f, const Eigen::VectorXd& x, double dt,
                                    std::size_t step_index = 0);
Eigen::VectorXd modified_euler_step(const ReducedModel& model, const Eigen::VectorXd& x, double dt);

struct Trajectory {
    std::vector<double> time;
    Eigen::MatrixXd states; // one column per time sample

    std::size_t samples() const { return time.size(); }
};

struct FaultTiming {
    double t_fault = 0.0;
    double t_clear_near = 0.05;
    double t_clear_remote = 0.1;
};

struct FaultStage {
    double t_begin = 0.0;
    double t_end = 0.0; // +inf for the final stage
    ReducedModel model;
};

/// Three-phase fault on a branch next to its `from_bus`: bolted fault with
/// full topology, then the near-end breaker open with the fault fed through
/// the line from the remote end, then the line out of service.
struct FaultSchedule {
    int from_bus = 0;
    int to_bus = 0;
    FaultTiming timing;
    std::vector<FaultStage> stages;

    const ReducedModel& final_model() const { return stages.back().model; }
    /// Stage active for the integration step starting at grid index k.
    const ReducedModel& model_for_step(std::size_t k, double dt) const;
};

inline constexpr double kFaultAdmittance = 1e6;

FaultSchedule build_fault_schedule(const PowerSystemCase& c, const PowerFlowSolution& pf, int from_bus, int to_bus,
                                   ModelKind kind, const FaultTiming& timing = {},
                                   double fault_admittance = kFaultAdmittance);

/// Throws GuardError when either endpoint is a generator terminal bus.
void check_fault_branch(const PowerSystemCase& c, int from_bus, int to_bus);

Trajectory simulate(const VectorField& f, const Eigen::VectorXd& x_init, double horizon, double dt);
Trajectory simulate(const ReducedModel& model, const Eigen::VectorXd& x_init, double horizon, double dt);
Trajectory simulate(const FaultSchedule& schedule, const Eigen::VectorXd& x_init, double horizon, double dt);

Eigen::MatrixXd trajectory_outputs(const ReducedModel& model, const Trajectory& traj,
                                   std::span<const int> instrumented);
Eigen::MatrixXd trajectory_outputs(const FaultSchedule& schedule, const Trajectory& traj,
                                   std::span<const int> instrumented, double dt);

/// Column names for trajectory export: delta_i, omega_i, eqp_i, edp_i.
std::vector<std::string> state_names(const ReducedModel& model);
std::vector<std::string> output_names(const ReducedModel& model, std::span<const int> instrumented);

} // namespace pmuplace
