#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pmuplace/dynamics.hpp"

namespace pmuplace {

using OutputMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct GramianConfig {
    std::vector<Eigen::MatrixXd> directions; // empty: {I, -I}
    std::vector<double> sizes{0.25, 0.5, 0.75, 1.0};
    double horizon = 5.0;
    double dt = 1.0 / 30.0;
    unsigned threads = 1; // does not affect results

    /// Throws ValidationError: directions must be orthogonal n x n (1e-12),
    /// sizes and horizon positive.
    void validate(std::size_t n) const;
    std::vector<Eigen::MatrixXd> resolved_directions(std::size_t n) const;
    nlohmann::json to_json() const;
    std::string fingerprint() const;
};

struct Gramian {
    Eigen::MatrixXd matrix;
    std::vector<int> instrumented;
    std::string fingerprint;

    std::size_t n() const { return static_cast<std::size_t>(matrix.rows()); }
};

/// Per-generator Gramians W_i; any placement's Gramian is the sum over its
/// generators.
struct GramianBank {
    std::vector<Eigen::MatrixXd> per_generator;
    std::string fingerprint;

    std::size_t size() const { return per_generator.size(); }
    std::size_t state_dim() const { return per_generator.empty() ? 0 : per_generator.front().rows(); }
    /// Sum over 1-based generator ids.
    Eigen::MatrixXd sum(std::span<const int> ids) const;
};

/// Empirical observability Gramian of a generic system, one matrix per
/// group of output rows. The reference output is the trajectory from x_ref
/// (constant at an equilibrium). Quadrature is a left Riemann sum over the
/// integration grid. States are perturbed in their natural units.
std::vector<Eigen::MatrixXd> empirical_gramian_groups(const VectorField& f, const OutputMap& h,
                                                      const Eigen::VectorXd& x_ref, const GramianConfig& cfg,
                                                      const std::vector<std::vector<Eigen::Index>>& groups);

Eigen::MatrixXd empirical_gramian(const VectorField& f, const OutputMap& h, const Eigen::VectorXd& x_ref,
                                  const GramianConfig& cfg);

Gramian empirical_gramian(const ReducedModel& model, std::span<const int> instrumented, const GramianConfig& cfg,
                          const std::optional<Eigen::VectorXd>& x_ref = std::nullopt);

/// One perturbation sweep shared by every generator; W_i uses only the
/// outputs at generator i.
GramianBank per_generator_bank(const ReducedModel& model, const GramianConfig& cfg,
                               const std::optional<Eigen::VectorXd>& x_ref = std::nullopt);

/// Relative asymmetry ||W - W^T||_max / ||W||_max; throws ValidationError
/// above rel_tol.
void check_symmetric(const Eigen::MatrixXd& w, double rel_tol = 1e-10);

/// Natural log-determinant via Cholesky; -infinity when the matrix is not
/// numerically positive definite (any pivot <= 1e-300).
double logdet(const Eigen::MatrixXd& w);

struct EigenRange {
    double min = 0.0;
    double max = 0.0;
};

EigenRange min_max_eigenvalue(const Eigen::MatrixXd& w);

/// Finite-horizon linear observability Gramian, integral of
/// e^{A^T t} C^T C e^{A t}, by composite Simpson quadrature with exact
/// matrix exponentials. Test oracle.
Eigen::MatrixXd linear_gramian_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c, double horizon, double dt);

nlohmann::json gramian_report(const Eigen::MatrixXd& w, const std::string& fingerprint);

} // namespace pmuplace
