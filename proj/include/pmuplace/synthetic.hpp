#pragma once

#include <cstdint>

#include "pmuplace/case.hpp"

namespace pmuplace {

struct SyntheticOptions {
    std::size_t generators = 20;
    std::size_t chords = 0;               // extra transmission lines; 0 means g / 2
    double fourth_order_fraction = 0.55;  // share of machines with transient states
    double loading = 0.8;                 // mean per-unit load at each transmission bus
};

/// Seeded test system: each generator sits behind a step-up transformer on
/// its own terminal bus; the transmission buses form a ring with random
/// chords and carry all loads. Generator 1 is the slack. The result passes
/// validation and its power flow converges for the default options.
PowerSystemCase synthetic_case(std::uint64_t seed, const SyntheticOptions& opts = {});

} // namespace pmuplace
