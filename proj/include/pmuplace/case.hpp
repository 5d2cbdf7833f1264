#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pmuplace {

enum class BusKind { slack, pv, pq };
enum class MachineOrder { second, fourth };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::pq;
    double p_load = 0.0;     // per-unit
    double q_load = 0.0;     // per-unit
    double v_setpoint = 1.0; // per-unit magnitude
    double v_angle = 0.0;    // radians (degrees in the file)
    double shunt_g = 0.0;
    double shunt_b = 0.0;
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0; // total line charging, split evenly between ends
    bool status = true;
};

struct Generator {
    int id = 0; // 1..g
    int bus = 0;
    double p_gen = 0.0; // scheduled real output at a PV bus; ignored at the slack
    MachineOrder model_order = MachineOrder::fourth;
    double H = 0.0;   // inertia constant, s
    double K_D = 0.0; // damping, pu torque per pu speed
    double x_d = 0.0;
    double x_q = 0.0;
    double x_d_prime = 0.0;
    double x_q_prime = 0.0;
    double T_d0_prime = 0.0;
    double T_q0_prime = 0.0;
};

struct PowerSystemCase {
    std::string name;
    double base_mva = 100.0;
    double frequency_hz = 60.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators; // sorted by id after validation

    std::size_t bus_index(int bus_id) const; // throws ValidationError if absent
    std::optional<std::size_t> find_bus(int bus_id) const;
    std::size_t generator_count() const { return generators.size(); }
    double omega0() const;
    bool is_generator_bus(int bus_id) const;
};

/// Checks every structural invariant; throws ValidationError naming the
/// violated one. Sorts generators by id.
void validate(PowerSystemCase& c);

PowerSystemCase parse_case(std::string_view json_text);
PowerSystemCase load_case(const std::filesystem::path& path);

nlohmann::json to_json(const PowerSystemCase& c);

std::string_view to_string(BusKind k);
std::string_view to_string(MachineOrder o);

} // namespace pmuplace
