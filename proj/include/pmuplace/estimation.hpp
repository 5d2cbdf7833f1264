#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pmuplace/dynamics.hpp"

namespace pmuplace {

struct UnscentedParams {
    double alpha = 1e-3;
    double beta = 2.0;
    double kappa = 0.0;
};

/// Standard deviations of the state and measurement errors.
struct NoiseLevels {
    double r_delta = 0.0;
    double r_omega = 0.0;
    double r_eq_prime = 1e-3;
    double r_ed_prime = 1e-3;
    double r_eR = 5e-2;
    double r_eI = 5e-2;
    double r_iR = 0.5;
    double r_iI = 0.5;

    static NoiseLevels defaults(double omega0);
};

struct EstimatorConfig {
    UnscentedParams ut;
    NoiseLevels noise;
    double q_scale = 1e-7;
    double sample_rate = 30.0; // measurement frames per second; also the filter rate
    std::size_t substeps = 4;  // integration steps per measurement period
    double horizon = 5.0;
    double epsilon_percent = 2.0;
    double tail = 1.0; // seconds used for convergence counting

    static EstimatorConfig defaults(const ReducedModel& model);

    double period() const { return 1.0 / sample_rate; }
    double sim_dt() const { return period() / static_cast<double>(substeps); }
    std::size_t sample_count() const; // including t = 0

    Eigen::MatrixXd p0(const ReducedModel& model) const;
    Eigen::MatrixXd q(std::size_t n) const;
    Eigen::MatrixXd r(ModelKind kind, std::size_t instrumented) const;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Rank-one update (sign > 0) or downdate (sign < 0) of a lower-triangular
/// factor: L L^T + sign x x^T. Throws NumericalError when a downdate loses
/// positive definiteness.
void cholupdate(Eigen::MatrixXd& l, Eigen::VectorXd x, double sign);

struct SrukfState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd sqrt_cov; // lower triangular, P = S S^T
};

using TransitionFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using MeasurementFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct SrukfStepInfo {
    std::size_t refactorizations = 0; // downdate fallbacks
};

/// One predict + update cycle of the square-root UKF with additive noise.
/// sqrt_q and sqrt_r are lower-triangular factors of Q and R. Sigma points
/// are redrawn from the predicted factor before the measurement update.
SrukfState srukf_step(const SrukfState& prior, const Eigen::VectorXd& y, const TransitionFn& f,
                      const MeasurementFn& h, const Eigen::MatrixXd& sqrt_q, const Eigen::MatrixXd& sqrt_r,
                      const UnscentedParams& ut, SrukfStepInfo* info = nullptr);

/// Measurement update only.
SrukfState srukf_update(const SrukfState& prior, const Eigen::VectorXd& y, const MeasurementFn& h,
                        const Eigen::MatrixXd& sqrt_r, const UnscentedParams& ut, SrukfStepInfo* info = nullptr);

/// Time update only.
SrukfState srukf_predict(const SrukfState& prior, const TransitionFn& f, const Eigen::MatrixXd& sqrt_q,
                         const UnscentedParams& ut, SrukfStepInfo* info = nullptr);

/// Truth and filter setup for one estimation experiment. The truth is
/// sampled on the integration grid; measurements are produced per placement
/// in run_estimation.
struct Scenario {
    std::string kind; // "method1" or "method2"
    ReducedModel filter_model;
    std::optional<FaultSchedule> schedule; // method 2 truth dynamics
    Trajectory truth;                      // integration grid
    std::size_t substeps = 1;
    Eigen::VectorXd filter_mean0;
    std::vector<int> perturbed; // method 1: generator ids
    std::vector<double> offsets;
    std::uint64_t seed = 0;

    /// Truth state columns at measurement instants.
    Eigen::MatrixXd truth_samples() const;
    std::vector<double> sample_times() const;
};

/// Perturbs n_perturbed distinct random generators' angles by
/// e ~ U(-|delta0|, |delta0|).
Scenario method1_scenario(const ReducedModel& model, const EstimatorConfig& cfg, std::uint64_t seed,
                          std::size_t n_perturbed = 1);

/// Deterministic Method-1 variant: delta_gen <- delta0 * (1 + fraction).
Scenario method1_fixed(const ReducedModel& model, const EstimatorConfig& cfg, int generator, double fraction);

/// Staged fault truth; the filter runs on the post-clearing model from the
/// pre-fault steady state.
Scenario method2_scenario(const PowerSystemCase& c, const PowerFlowSolution& pf, int from_bus, int to_bus,
                          ModelKind kind, const EstimatorConfig& cfg, std::uint64_t seed = 0);

enum class StateType { delta, omega, eq_prime, ed_prime };

std::string_view to_string(StateType t);

struct EstimationRun {
    std::vector<double> time; // measurement instants
    Eigen::MatrixXd truth;    // n x K
    Eigen::MatrixXd measurements;
    Eigen::MatrixXd estimate;
    std::vector<int> placement;
    std::uint64_t seed = 0;
    bool diverged = false;
    std::string divergence_reason;
    std::size_t refactorizations = 0;
    double min_cov_eigenvalue = 0.0; // smallest over all steps

    double e_delta = 0.0;
    double e_omega = 0.0;
    int n_delta = 0;
    int n_omega = 0;
};

/// Runs the filter over the scenario. Measurement noise uses `noise_seed`.
/// Divergence is flagged in the result, not thrown.
EstimationRun run_estimation(const Scenario& scenario, std::span<const int> placement, const EstimatorConfig& cfg,
                             std::uint64_t noise_seed, bool track_covariance = false);

/// Row indices of a state type within the state vector of `model`.
std::vector<Eigen::Index> state_rows(const ReducedModel& model, StateType t);

/// RMS error over the rows and all time samples; NaN for a diverged run.
double state_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate, std::span<const Eigen::Index> rows);
double state_error(const EstimationRun& run, const ReducedModel& model, StateType t);

inline constexpr double kAbsoluteConvergenceFloor = 1e-3;

/// Counts rows whose estimate stays within eps% of |truth| at every sample
/// from `tail_begin` on. Truth values below 1e-3 in magnitude use an
/// absolute 1e-3 threshold. Returns -1 for a diverged run.
int count_convergent(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate, std::span<const Eigen::Index> rows,
                     std::size_t tail_begin, double epsilon_percent);
int count_convergent(const EstimationRun& run, const ReducedModel& model, StateType t, const EstimatorConfig& cfg);

struct BatchSummary {
    std::vector<int> placement;
    std::size_t runs = 0;
    std::size_t diverged = 0;
    double e_delta_mean = 0.0;
    double e_omega_mean = 0.0;
    double n_delta_mean = 0.0;
    std::vector<EstimationRun> details; // kept only when requested

    nlohmann::json to_json() const;
};

/// Monte-Carlo over Method-1 scenarios; run r uses seeds derived from
/// (seed, r). Runs execute in parallel and are averaged in run order.
BatchSummary method1_batch(const ReducedModel& model, std::span<const int> placement, const EstimatorConfig& cfg,
                           std::size_t runs, std::uint64_t seed, unsigned threads = 1, bool keep_runs = false);

} // namespace pmuplace
