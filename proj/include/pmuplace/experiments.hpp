#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmuplace/estimation.hpp"
#include "pmuplace/gramian.hpp"
#include "pmuplace/placement.hpp"

namespace pmuplace {

std::string_view tool_version();

/// Provenance embedded in every result file.
struct ExperimentManifest {
    std::string subcommand;
    std::string case_path;
    std::string case_fingerprint;
    std::string model;
    nlohmann::json settings = nlohmann::json::object(); // solver and run settings
    std::uint64_t seed = 0;
    std::string output;
    std::string version{tool_version()};

    /// Hash over everything above except the output location.
    std::string config_fingerprint() const;
    nlohmann::json to_json() const;
};

struct SweepOptions {
    int k_min = 1;
    int k_max = 0; // 0: all generators
    Solver solver = Solver::mads;
    std::uint64_t seed = 1;
    std::optional<std::size_t> budget;
    bool record_time = true; // false writes time_s = 0 for byte-identical reruns
};

struct SweepRow {
    int k = 0;
    std::vector<int> placement;
    double logdet = 0.0;
    double sigma_min = 0.0;
    double time_s = 0.0;
    std::size_t evaluations = 0;
    bool converged = true;
};

struct SweepReport {
    std::vector<SweepRow> rows;

    /// Columns g_bar, logdet, sigma_min, placement, time_s. Placements are
    /// space separated so the file stays comma-delimited.
    std::string csv() const;
    nlohmann::json to_json() const;
};

SweepReport run_sweep(const GramianBank& bank, const SweepOptions& opts);

struct ComparisonOptions {
    int k_min = 1;
    int k_max = 0;
    std::size_t runs = 50;
    std::uint64_t seed = 1;
    Solver solver = Solver::mads;
    std::string scenario = "method1"; // or method2: runs cycle through ranked branches
    unsigned threads = 1;
};

struct ComparisonRow {
    int k = 0;
    std::vector<int> optimal;
    double e_delta_optimal = 0.0;
    double n_delta_optimal = 0.0;
    double e_delta_random = 0.0;
    double n_delta_random = 0.0;
    std::size_t diverged_optimal = 0;
    std::size_t diverged_random = 0;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;

    std::string csv() const;
    nlohmann::json to_json() const;
};

/// Optimal placement versus a fresh random placement of the same size for
/// every run; both see the same scenario and measurement noise.
ComparisonReport run_comparison(const PowerSystemCase& c, ModelKind kind, const GramianConfig& gcfg,
                                const EstimatorConfig& ecfg, const ComparisonOptions& opts);

/// Writes text atomically enough for our purposes (temp file + rename).
void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace pmuplace
