#pragma once

// Operator/scenario commands that act on the plant directly (as opposed to
// button presses, which go through the signal bus).

#include <tunneltwin/error.hpp>
#include <tunneltwin/plant/components.hpp>

#include <charconv>
#include <cmath>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace tunneltwin::plant {

struct PlantCommand {
    enum class Type { SetSmoke, Traffic, Spawn, FillCellar, SetLightIntensity, Toggle, DeleteTraffic };

    Type type = Type::DeleteTraffic;
    int tube = 0;
    int lane = 0;
    int level = 0;
    bool on = false;
    VehicleKind kind = VehicleKind::Car;
    std::string target; // cellar name or toggle path
    double value = 0;

    friend bool operator==(const PlantCommand &, const PlantCommand &) = default;
};

namespace command_detail {

struct SpawnName {
    const char *text;
    VehicleKind kind;
};

inline constexpr SpawnName kSpawnNames[] = {
    {"car", VehicleKind::Car},           {"small_truck", VehicleKind::SmallTruck},
    {"low_truck", VehicleKind::LowTruck}, {"high_truck", VehicleKind::HighTruck},
    {"speeding", VehicleKind::Speeding},  {"stationary", VehicleKind::Stationary},
    {"wrongway", VehicleKind::WrongWay},
};

inline std::vector<std::string> words(std::string_view s) {
    std::istringstream in{std::string(s)};
    std::vector<std::string> out;
    for (std::string w; in >> w;)
        out.push_back(w);
    return out;
}

inline double number(const std::string &w, std::string_view what) {
    double v = 0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc{} || p != w.data() + w.size() || !std::isfinite(v))
        throw Error(ErrorCode::ScenarioError, std::string(what) + " is not a number: '" + w + "'");
    return v;
}

inline int integer(const std::string &w, std::string_view what) {
    int v = 0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc{} || p != w.data() + w.size())
        throw Error(ErrorCode::ScenarioError, std::string(what) + " is not an integer: '" + w + "'");
    return v;
}

inline std::string fmt_number(double v) {
    std::ostringstream o;
    o << v;
    return o.str();
}

} // namespace command_detail

inline std::string_view spawn_name(VehicleKind k) {
    for (const auto &n : command_detail::kSpawnNames)
        if (n.kind == k)
            return n.text;
    return "?";
}

/// Parses one command line, e.g. "set_smoke 1 4", "spawn high_truck 1/0",
/// "toggle TrafficTube_1/EmergencyExit/open".
inline PlantCommand parse_plant_command(std::string_view text) {
    using namespace command_detail;
    auto w = words(text);
    if (w.empty())
        throw Error(ErrorCode::ScenarioError, "empty command");
    auto arity = [&](std::size_t n) {
        if (w.size() != n + 1)
            throw Error(ErrorCode::ScenarioError,
                        "'" + w[0] + "' takes " + std::to_string(n) + " argument(s): '" + std::string(text) + "'");
    };
    PlantCommand c;
    const auto &op = w[0];
    if (op == "set_smoke") {
        arity(2);
        c.type = PlantCommand::Type::SetSmoke;
        c.tube = integer(w[1], "tube");
        c.level = integer(w[2], "smoke level");
        if (c.level < 0 || c.level > 8)
            throw Error(ErrorCode::ScenarioError, "smoke level must be 0..8");
    } else if (op == "traffic") {
        arity(1);
        c.type = PlantCommand::Type::Traffic;
        if (w[1] != "on" && w[1] != "off")
            throw Error(ErrorCode::ScenarioError, "traffic takes on|off");
        c.on = w[1] == "on";
    } else if (op == "spawn") {
        arity(2);
        c.type = PlantCommand::Type::Spawn;
        bool found = false;
        for (const auto &n : kSpawnNames)
            if (w[1] == n.text) {
                c.kind = n.kind;
                found = true;
            }
        if (!found)
            throw Error(ErrorCode::ScenarioError, "unknown vehicle '" + w[1] + "'");
        auto slash = w[2].find('/');
        if (slash == std::string::npos)
            throw Error(ErrorCode::ScenarioError, "lane must be written <tube>/<lane>, got '" + w[2] + "'");
        c.tube = integer(w[2].substr(0, slash), "tube");
        c.lane = integer(w[2].substr(slash + 1), "lane");
    } else if (op == "fill_cellar") {
        arity(2);
        c.type = PlantCommand::Type::FillCellar;
        c.target = w[1];
        c.value = number(w[2], "inflow");
    } else if (op == "set_light_intensity") {
        arity(1);
        c.type = PlantCommand::Type::SetLightIntensity;
        c.value = number(w[1], "intensity");
    } else if (op == "toggle") {
        arity(1);
        c.type = PlantCommand::Type::Toggle;
        c.target = w[1];
    } else if (op == "delete_traffic") {
        arity(0);
        c.type = PlantCommand::Type::DeleteTraffic;
    } else {
        throw Error(ErrorCode::ScenarioError, "unknown command '" + op + "'");
    }
    return c;
}

inline std::string format_plant_command(const PlantCommand &c) {
    using command_detail::fmt_number;
    switch (c.type) {
    case PlantCommand::Type::SetSmoke: return "set_smoke " + std::to_string(c.tube) + " " + std::to_string(c.level);
    case PlantCommand::Type::Traffic: return std::string("traffic ") + (c.on ? "on" : "off");
    case PlantCommand::Type::Spawn:
        return "spawn " + std::string(spawn_name(c.kind)) + " " + std::to_string(c.tube) + "/" + std::to_string(c.lane);
    case PlantCommand::Type::FillCellar: return "fill_cellar " + c.target + " " + fmt_number(c.value);
    case PlantCommand::Type::SetLightIntensity: return "set_light_intensity " + fmt_number(c.value);
    case PlantCommand::Type::Toggle: return "toggle " + c.target;
    case PlantCommand::Type::DeleteTraffic: return "delete_traffic";
    }
    return {};
}

} // namespace tunneltwin::plant
