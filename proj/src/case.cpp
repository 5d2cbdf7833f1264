#include "pmuplace/case.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "pmuplace/errors.hpp"

namespace pmuplace {

namespace {

using nlohmann::json;

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::size_t line_of_offset(std::string_view text, std::size_t offset)
{
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

const json& require(const json& obj, const std::string& key, const std::string& where)
{
    if (!obj.is_object())
        throw ParseError(where + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end())
        throw ParseError(where + "." + key + ": missing required field");
    return *it;
}

double number(const json& obj, const std::string& key, const std::string& where)
{
    const json& v = require(obj, key, where);
    if (!v.is_number())
        throw ParseError(where + "." + key + ": expected a number");
    return v.get<double>();
}

double number_or(const json& obj, const std::string& key, const std::string& where, double dflt)
{
    if (!obj.contains(key))
        return dflt;
    return number(obj, key, where);
}

int integer(const json& obj, const std::string& key, const std::string& where)
{
    const json& v = require(obj, key, where);
    if (!v.is_number_integer())
        throw ParseError(where + "." + key + ": expected an integer");
    return v.get<int>();
}

std::string string_field(const json& obj, const std::string& key, const std::string& where)
{
    const json& v = require(obj, key, where);
    if (!v.is_string())
        throw ParseError(where + "." + key + ": expected a string");
    return v.get<std::string>();
}

const json& array_field(const json& obj, const std::string& key)
{
    const json& v = require(obj, key, "case");
    if (!v.is_array())
        throw ParseError("case." + key + ": expected an array");
    return v;
}

BusKind parse_bus_kind(const std::string& s, const std::string& where)
{
    if (s == "slack") return BusKind::slack;
    if (s == "pv") return BusKind::pv;
    if (s == "pq") return BusKind::pq;
    throw ParseError(where + ".kind: unknown bus kind '" + s + "' (slack|pv|pq)");
}

MachineOrder parse_order(const std::string& s, const std::string& where)
{
    if (s == "second") return MachineOrder::second;
    if (s == "fourth") return MachineOrder::fourth;
    throw ParseError(where + ".model_order: unknown order '" + s + "' (second|fourth)");
}

PowerSystemCase from_json(const json& j)
{
    PowerSystemCase c;
    c.name = j.value("name", std::string{});
    c.base_mva = number(j, "base_mva", "case");
    c.frequency_hz = number_or(j, "frequency_hz", "case", 60.0);

    const json& buses = array_field(j, "buses");
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const std::string w = "buses[" + std::to_string(i) + "]";
        const json& b = buses[i];
        Bus bus;
        bus.id = integer(b, "id", w);
        bus.kind = parse_bus_kind(string_field(b, "kind", w), w);
        bus.p_load = number(b, "p_load", w);
        bus.q_load = number(b, "q_load", w);
        bus.v_setpoint = number(b, "v_setpoint", w);
        bus.v_angle = number_or(b, "v_angle", w, 0.0) * kDegToRad;
        bus.shunt_g = number_or(b, "shunt_g", w, 0.0);
        bus.shunt_b = number_or(b, "shunt_b", w, 0.0);
        c.buses.push_back(bus);
    }

    const json& branches = array_field(j, "branches");
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const std::string w = "branches[" + std::to_string(i) + "]";
        const json& b = branches[i];
        Branch br;
        br.from = integer(b, "from", w);
        br.to = integer(b, "to", w);
        br.r = number(b, "r", w);
        br.x = number(b, "x", w);
        br.b_charging = number_or(b, "b_charging", w, 0.0);
        if (b.contains("status")) {
            if (!b["status"].is_boolean())
                throw ParseError(w + ".status: expected a boolean");
            br.status = b["status"].get<bool>();
        }
        c.branches.push_back(br);
    }

    const json& gens = array_field(j, "generators");
    for (std::size_t i = 0; i < gens.size(); ++i) {
        const std::string w = "generators[" + std::to_string(i) + "]";
        const json& g = gens[i];
        Generator gen;
        gen.id = integer(g, "id", w);
        gen.bus = integer(g, "bus", w);
        gen.p_gen = number_or(g, "p_gen", w, 0.0);
        gen.model_order = parse_order(string_field(g, "model_order", w), w);
        gen.H = number(g, "H", w);
        gen.K_D = number_or(g, "K_D", w, 0.0);
        gen.x_d = number(g, "x_d", w);
        gen.x_q = number(g, "x_q", w);
        gen.x_d_prime = number(g, "x_d_prime", w);
        gen.x_q_prime = number(g, "x_q_prime", w);
        gen.T_d0_prime = number(g, "T_d0_prime", w);
        gen.T_q0_prime = number(g, "T_q0_prime", w);
        c.generators.push_back(gen);
    }
    return c;
}

} // namespace

std::optional<std::size_t> PowerSystemCase::find_bus(int bus_id) const
{
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == bus_id)
            return i;
    return std::nullopt;
}

std::size_t PowerSystemCase::bus_index(int bus_id) const
{
    if (auto i = find_bus(bus_id))
        return *i;
    throw ValidationError("bus " + std::to_string(bus_id) + " does not exist");
}

double PowerSystemCase::omega0() const
{
    return 2.0 * std::numbers::pi * frequency_hz;
}

bool PowerSystemCase::is_generator_bus(int bus_id) const
{
    return std::any_of(generators.begin(), generators.end(),
                       [&](const Generator& g) { return g.bus == bus_id; });
}

void validate(PowerSystemCase& c)
{
    if (!(c.base_mva > 0.0))
        throw ValidationError("base_mva must be positive");
    if (!(c.frequency_hz > 0.0))
        throw ValidationError("frequency_hz must be positive");
    if (c.buses.empty())
        throw ValidationError("case has no buses");

    std::set<int> ids;
    int slack_count = 0;
    for (const Bus& b : c.buses) {
        if (!ids.insert(b.id).second)
            throw ValidationError("duplicate bus id " + std::to_string(b.id));
        if (b.kind == BusKind::slack) {
            ++slack_count;
            if (b.v_angle != 0.0)
                throw ValidationError("slack bus " + std::to_string(b.id) + " must have angle 0");
        }
        if (!(b.v_setpoint > 0.0))
            throw ValidationError("bus " + std::to_string(b.id) + " has non-positive voltage setpoint");
    }
    if (slack_count != 1)
        throw ValidationError("case must have exactly one slack bus, found " + std::to_string(slack_count));

    for (const Branch& br : c.branches) {
        if (!ids.count(br.from) || !ids.count(br.to))
            throw ValidationError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                                  " references a nonexistent bus");
        if (br.from == br.to)
            throw ValidationError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                                  " connects a bus to itself");
    }

    if (c.generators.empty())
        throw ValidationError("case has no generators");
    std::sort(c.generators.begin(), c.generators.end(),
              [](const Generator& a, const Generator& b) { return a.id < b.id; });
    std::set<int> gen_buses;
    for (std::size_t i = 0; i < c.generators.size(); ++i) {
        const Generator& g = c.generators[i];
        const std::string name = "generator " + std::to_string(g.id);
        if (g.id != static_cast<int>(i) + 1)
            throw ValidationError("generator ids must be 1..g without gaps (found " + std::to_string(g.id) +
                                  " at position " + std::to_string(i + 1) + ")");
        if (!ids.count(g.bus))
            throw ValidationError(name + " is on nonexistent bus " + std::to_string(g.bus));
        if (!gen_buses.insert(g.bus).second)
            throw ValidationError(name + ": at most one generator per bus");
        const Bus& bus = c.buses[c.bus_index(g.bus)];
        if (bus.kind == BusKind::pq)
            throw ValidationError(name + " sits on PQ bus " + std::to_string(g.bus));
        if (!(g.H > 0.0))
            throw ValidationError(name + ": H must be positive");
        if (!(g.x_d_prime > 0.0))
            throw ValidationError(name + ": x_d_prime must be positive");
        if (g.model_order == MachineOrder::fourth) {
            if (!(g.x_q_prime > 0.0))
                throw ValidationError(name + ": x_q_prime must be positive");
            if (!(g.T_d0_prime > 0.0) || !(g.T_q0_prime > 0.0))
                throw ValidationError(name + ": fourth-order machine needs positive T_d0_prime and T_q0_prime");
        }
    }
    for (const Bus& b : c.buses)
        if (b.kind != BusKind::pq && !gen_buses.count(b.id))
            throw ValidationError("bus " + std::to_string(b.id) + " is " + std::string(to_string(b.kind)) +
                                  " but has no generator");
}

PowerSystemCase parse_case(std::string_view text)
{
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        const std::size_t line = line_of_offset(text, e.byte);
        throw ParseError("line " + std::to_string(line) + ": " + e.what(), line);
    }
    PowerSystemCase c = from_json(j);
    validate(c);
    return c;
}

PowerSystemCase load_case(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open case file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_case(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

nlohmann::json to_json(const PowerSystemCase& c)
{
    json j;
    j["name"] = c.name;
    j["base_mva"] = c.base_mva;
    j["frequency_hz"] = c.frequency_hz;
    j["buses"] = json::array();
    for (const Bus& b : c.buses)
        j["buses"].push_back({{"id", b.id},
                              {"kind", to_string(b.kind)},
                              {"p_load", b.p_load},
                              {"q_load", b.q_load},
                              {"v_setpoint", b.v_setpoint},
                              {"v_angle", b.v_angle / kDegToRad},
                              {"shunt_g", b.shunt_g},
                              {"shunt_b", b.shunt_b}});
    j["branches"] = json::array();
    for (const Branch& br : c.branches)
        j["branches"].push_back({{"from", br.from},
                                 {"to", br.to},
                                 {"r", br.r},
                                 {"x", br.x},
                                 {"b_charging", br.b_charging},
                                 {"status", br.status}});
    j["generators"] = json::array();
    for (const Generator& g : c.generators)
        j["generators"].push_back({{"id", g.id},
                                   {"bus", g.bus},
                                   {"p_gen", g.p_gen},
                                   {"model_order", to_string(g.model_order)},
                                   {"H", g.H},
                                   {"K_D", g.K_D},
                                   {"x_d", g.x_d},
                                   {"x_q", g.x_q},
                                   {"x_d_prime", g.x_d_prime},
                                   {"x_q_prime", g.x_q_prime},
                                   {"T_d0_prime", g.T_d0_prime},
                                   {"T_q0_prime", g.T_q0_prime}});
    return j;
}

std::string_view to_string(BusKind k)
{
    switch (k) {
    case BusKind::slack: return "slack";
    case BusKind::pv: return "pv";
    case BusKind::pq: return "pq";
    }
    return "?";
}

std::string_view to_string(MachineOrder o)
{
    return o == MachineOrder::second ? "second" : "fourth";
}

} // namespace pmuplace
