#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmuplace/gramian.hpp"

namespace pmuplace {

enum class Solver { exhaustive, greedy, mads };

std::string_view to_string(Solver s);
Solver parse_solver(std::string_view s);

/// Binary selection vector over generators 1..g.
using Selection = std::vector<std::uint8_t>;

struct Placement {
    Selection z;
    std::vector<int> generators; // selected 1-based ids, ascending
    int cardinality = 0;
    double objective = 0.0;      // logdet of the summed Gramian
    Solver solver = Solver::exhaustive;
    std::size_t evaluations = 0;
    bool converged = true;
};

Selection selection_from_ids(std::size_t g, std::span<const int> ids);
std::vector<int> ids_from_selection(const Selection& z);

/// logdet of the sum of W_i over z_i = 1; -infinity if singular or empty.
double evaluate(const Selection& z, const GramianBank& bank);

inline constexpr double kMaxEnumeration = 1e6;

/// Global optimum by enumeration. GuardError when C(g, k) > 1e6.
Placement exhaustive(const GramianBank& bank, int k);

/// Adds the generator with the largest marginal logdet until k are chosen;
/// ties go to the lowest id.
Placement greedy(const GramianBank& bank, int k);

struct MadsOptions {
    std::uint64_t seed = 1;
    std::optional<std::size_t> budget; // default 200 * g
    double tau = 2.0;        // mesh expansion factor
    bool use_cache = true;
};

/// Mesh adaptive direct search on the slice sum(z) = k. Poll directions are
/// swap moves; the mesh size counts simultaneous swaps and never drops
/// below 1. A failed poll at mesh size 1 triggers variable neighborhood
/// search: j random swaps (j starts at 2, grows by one per failed restart,
/// capped at min(k, g - k)) followed by a descent. Terminates when the strongest
/// perturbation fails or the budget is spent. Warm-started from greedy, whose
/// evaluations count towards the total but not the budget.
Placement mads(const GramianBank& bank, int k, const MadsOptions& opts = {});

/// Keeps `pinned` selected and places the remaining k_total - |pinned|
/// sensors with the chosen solver.
Placement incremental(const GramianBank& bank, std::span<const int> pinned, int k_total,
                      Solver solver = Solver::mads, const MadsOptions& opts = {});

/// Dispatch by solver kind.
Placement solve_placement(const GramianBank& bank, int k, Solver solver, const MadsOptions& opts = {});

/// Random bank of PD matrices, for solver tests: W_i = B_i B_i^T + ridge I
/// with B_i n x rank standard normal.
GramianBank random_bank(std::size_t g, std::size_t n, std::size_t rank, std::uint64_t seed, double ridge = 1e-3);

double binomial(std::size_t n, std::size_t k);

} // namespace pmuplace
