#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pmuplace/gramian.hpp"
#include "pmuplace/placement.hpp"

namespace pmuplace {

struct FluctuationCase {
    std::vector<int> load_buses;
    std::vector<double> alpha; // one factor per load bus
    std::uint64_t seed = 0;
    PowerSystemCase scaled;
    PowerFlowSolution pf;
    std::optional<ReducedModel> model; // empty when the power flow diverged
};

/// Scales every load by alpha_i ~ U(2 - gamma, gamma) and re-solves the
/// power flow. The new steady state is the Gramian reference.
FluctuationCase fluctuation_case(const PowerSystemCase& c, ModelKind kind, double gamma, std::uint64_t seed);

struct ContingencyCase {
    int from_bus = 0;
    int to_bus = 0;
    bool null_contingency = false; // branch already out of service
    ReducedModel model;            // post-clearing network
    Eigen::VectorXd x0;            // state at remote clearing
};

inline constexpr double kContingencySimDt = 1.0 / 120.0;

/// Simulates the staged fault from the base steady state and samples the
/// state at the remote clearing instant.
ContingencyCase contingency_case(const PowerSystemCase& c, const PowerFlowSolution& pf, int from_bus, int to_bus,
                                 ModelKind kind, const FaultTiming& timing = {}, double sim_dt = kContingencySimDt);

/// In-service branches with no generator terminal at either end, by
/// decreasing |P| at the from end.
std::vector<BranchFlow> rank_contingency_branches(const PowerSystemCase& c, const PowerFlowSolution& pf);

/// |A intersect B| / |A|; ValidationError when the cardinalities differ.
double overlap_ratio(std::span<const int> a, std::span<const int> b);
double overlap_ratio(const Placement& a, const Placement& b);

/// Objective of a fixed placement under another bank.
double cross_evaluate(std::span<const int> placement, const GramianBank& disturbed);

struct RobustnessOptions {
    std::size_t cases = 6;
    double gamma = 1.05;
    std::uint64_t seed = 1;
    int k_min = 1;
    int k_max = 2;
    Solver solver = Solver::exhaustive;
    MadsOptions mads;
    unsigned threads = 1;
};

struct RobustnessEntry {
    int k = 0;
    std::vector<int> placement;  // disturbed-case optimum
    double logdet = 0.0;         // disturbed optimum
    double base_cross = 0.0;     // base placement under the disturbed bank
    double ratio = 0.0;
};

struct RobustnessCaseResult {
    std::string descriptor;
    nlohmann::json params;
    bool skipped = false;
    std::string skip_reason;
    std::vector<RobustnessEntry> entries;
};

struct RobustnessReport {
    std::string mode; // fluctuation | contingency
    ModelKind model = ModelKind::m1;
    RobustnessOptions options;
    std::string gramian_fingerprint;
    std::vector<Placement> base; // one per k
    std::vector<RobustnessCaseResult> cases;
    std::vector<double> mean_ratio; // per k over non-skipped cases

    nlohmann::json to_json() const;
};

RobustnessReport fluctuation_study(const PowerSystemCase& c, ModelKind kind, const GramianConfig& cfg,
                                   const RobustnessOptions& opts);
RobustnessReport contingency_study(const PowerSystemCase& c, ModelKind kind, const GramianConfig& cfg,
                                   const RobustnessOptions& opts);

} // namespace pmuplace
