#include "pmuplace/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <utility>

#include "pmuplace/errors.hpp"

namespace pmuplace {

PowerSystemCase synthetic_case(std::uint64_t seed, const SyntheticOptions& opts)
{
    const std::size_t g = opts.generators;
    if (g < 3)
        throw ValidationError("synthetic case needs at least 3 generators");
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

    PowerSystemCase c;
    c.name = "synthetic-" + std::to_string(g) + "-" + std::to_string(seed);
    c.base_mva = 100.0;
    c.frequency_hz = 60.0;

    // Terminal buses 1..g, transmission buses g+1..2g.
    const int hv0 = static_cast<int>(g);
    double total_load = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
        Bus b;
        b.id = static_cast<int>(i) + 1;
        b.kind = i == 0 ? BusKind::slack : BusKind::pv;
        b.v_setpoint = uniform(1.01, 1.04);
        c.buses.push_back(b);
    }
    for (std::size_t i = 0; i < g; ++i) {
        Bus b;
        b.id = hv0 + static_cast<int>(i) + 1;
        b.kind = BusKind::pq;
        b.p_load = opts.loading * uniform(0.5, 1.5);
        b.q_load = uniform(0.2, 0.35) * b.p_load;
        total_load += b.p_load;
        c.buses.push_back(b);
    }

    for (std::size_t i = 0; i < g; ++i)
        c.branches.push_back({static_cast<int>(i) + 1, hv0 + static_cast<int>(i) + 1, 0.0, uniform(0.05, 0.07), 0.0,
                              true});

    std::set<std::pair<int, int>> used;
    auto add_line = [&](int a, int b) {
        if (a == b || !used.insert({std::min(a, b), std::max(a, b)}).second)
            return false;
        c.branches.push_back({a, b, uniform(0.005, 0.015), uniform(0.05, 0.1), uniform(0.1, 0.2), true});
        return true;
    };
    for (std::size_t i = 0; i < g; ++i)
        add_line(hv0 + static_cast<int>(i) + 1, hv0 + static_cast<int>((i + 1) % g) + 1);
    const std::size_t chords = opts.chords ? opts.chords : g / 2;
    std::uniform_int_distribution<int> pick(1, static_cast<int>(g));
    for (std::size_t added = 0, tries = 0; added < chords && tries < 100 * chords; ++tries)
        if (add_line(hv0 + pick(rng), hv0 + pick(rng)))
            ++added;

    // Dispatch roughly matches the load; the slack absorbs the remainder.
    const double share = total_load / static_cast<double>(g);
    for (std::size_t i = 0; i < g; ++i) {
        Generator gen;
        gen.id = static_cast<int>(i) + 1;
        gen.bus = gen.id;
        gen.p_gen = i == 0 ? 0.0 : share * uniform(0.8, 1.2);
        const bool fourth = uniform(0.0, 1.0) < opts.fourth_order_fraction;
        gen.model_order = fourth ? MachineOrder::fourth : MachineOrder::second;
        gen.H = uniform(3.0, 9.0);
        gen.K_D = 0.0;
        gen.x_d = uniform(0.8, 1.4);
        gen.x_q = gen.x_d * uniform(0.9, 0.98);
        gen.x_d_prime = uniform(0.12, 0.25);
        gen.x_q_prime = fourth ? gen.x_d_prime * uniform(1.0, 1.5) : gen.x_d_prime;
        gen.T_d0_prime = uniform(4.0, 9.0);
        gen.T_q0_prime = uniform(0.3, 0.8);
        c.generators.push_back(gen);
    }
    validate(c);
    return c;
}

} // namespace pmuplace
