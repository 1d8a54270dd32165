#pragma once

// World configuration. Every field has a default, so an empty JSON object is
// a valid config; the default world is two traffic tubes, the central
// corridor and the shared systems.

#include <tunneltwin/error.hpp>
#include <tunneltwin/plant/components.hpp>

#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace tunneltwin::plant {

using nlohmann::json;

/// Positions along a lane in meters, in driving order.
struct LaneLayout {
    double length = 1000;
    double tunnel_start = 300;
    double tunnel_end = 700;
    double spawner = 0;
    double beam = 150;
    double stop_line = 200;
    double barrier = 250;

    void validate() const {
        double seq[] = {spawner, beam, stop_line, barrier, length};
        for (std::size_t i = 1; i < std::size(seq); ++i)
            if (spawner < 0 || !(seq[i - 1] < seq[i]))
                throw Error(ErrorCode::ConfigError,
                            "lane fixtures must be ordered spawner < beam < stop_line < barrier < length");
        if (!(0 <= tunnel_start && tunnel_start < tunnel_end && tunnel_end <= length))
            throw Error(ErrorCode::ConfigError, "tunnel segment must lie inside the lane");
    }
};

struct BarrierConfig {
    double rot_vel = 9;
    double sensor_offset = 1;
    double obstacle_half_width = 1;
    bool default_open = true;
};

struct StandaloneBarrierConfig {
    std::string prefix; // signal prefix after ivar_/dvar_, e.g. "M_M_HW_Boombarrier_"
    std::string id;     // entity id shown in snapshots
    BarrierConfig barrier;
};

struct LevelSensorConfig {
    double i_min = 0;
    double i_max = 100;
};

struct CellarConfig {
    double h0 = 0;
    double h_max = 3;
    double pump_rate = 0.05;
    double inflow = 0;
    std::vector<std::pair<std::string, double>> thresholds;
};

struct WorldConfig {
    double tick_rate = 50;
    std::uint64_t seed = 1;
    bool traffic = true;
    double light_intensity = 50;
    std::vector<int> tubes{1, 2};
    bool corridor = true;
    bool shared_systems = true;
    LaneLayout lane;
    double t_inter_min = 2;
    double t_inter_max = 6;
    double min_spawn_dist = 15;
    // Per lane index; the right lane carries trucks, the left lane cars, so
    // followers never run into a slower leader of another kind.
    std::vector<std::vector<VehicleKind>> lane_mix{
        {VehicleKind::SmallTruck, VehicleKind::LowTruck, VehicleKind::LowTruck}, {VehicleKind::Car}};
    double stationary_position = 500;
    std::map<VehicleKind, VehicleParams> vehicles;
    BarrierConfig boom_barrier;
    BarrierConfig emergency_passage{9, 1, 1, false};
    std::vector<StandaloneBarrierConfig> standalone_barriers;
    LevelSensorConfig light_sensor{0, 100};
    double lighting_factor = 1000; // intensity per level
    int lighting_units = 40;
    double lighting_spacing = 10;
    double ventilation_rpm_per_level = 250;
    std::map<std::string, CellarConfig> cellars{
        {"clean", {0, 3, 0.05, 0, {{"low", 0.3}, {"start", 1.0}, {"maxStart", 1.5}, {"lowHigh", 2.0}, {"highHigh", 2.5}}}},
        {"dirty", {0, 3, 0.05, 0, {{"low", 0.5}}}},
        {"fire", {0, 3, 0.05, 0, {{"low", 0.5}, {"high", 2.0}}}},
    };
    double broadcast_message_duration = 8;
    double broadcast_sync_period = 30;

    WorldConfig() {
        for (auto k : kAllVehicleKinds)
            vehicles[k] = default_vehicle_params(k);
    }

    [[nodiscard]] const VehicleParams &params(VehicleKind k) const { return vehicles.at(k); }

    void validate() const {
        if (!(tick_rate > 0))
            throw Error(ErrorCode::ConfigError, "tick_rate must be positive");
        lane.validate();
        std::set<int> seen;
        for (int t : tubes)
            if ((t != 1 && t != 2) || !seen.insert(t).second)
                throw Error(ErrorCode::ConfigError, "tubes must be distinct values from {1, 2}");
        if (!(t_inter_min > 0 && t_inter_min <= t_inter_max))
            throw Error(ErrorCode::ConfigError, "need 0 < t_inter_min <= t_inter_max");
        if (lane_mix.size() != 2)
            throw Error(ErrorCode::ConfigError, "lane_mix needs one list per lane (2)");
        for (const auto &m : lane_mix)
            if (m.empty())
                throw Error(ErrorCode::ConfigError, "lane_mix entries must not be empty");
        if (!(light_sensor.i_min < light_sensor.i_max))
            throw Error(ErrorCode::ConfigError, "light_sensor needs i_min < i_max");
        for (const char *c : {"clean", "dirty", "fire"})
            if (!cellars.count(c))
                throw Error(ErrorCode::ConfigError, std::string("missing cellar '") + c + "'");
        for (const auto &[name, c] : cellars) {
            Cellar probe{c.h0, c.h_max, c.inflow, c.pump_rate, c.thresholds};
            probe.validate();
        }
        std::set<std::string> ids;
        for (const auto &b : standalone_barriers) {
            if (b.prefix.empty() || b.id.empty() || !ids.insert(b.id).second)
                throw Error(ErrorCode::ConfigError, "standalone barriers need a unique id and a prefix");
        }
        if (!(stationary_position > 0 && stationary_position < lane.length))
            throw Error(ErrorCode::ConfigError, "stationary_position must lie inside the lane");
    }
};

namespace config_detail {

inline void check_keys(const json &j, std::initializer_list<const char *> allowed, const std::string &where) {
    if (!j.is_object())
        throw Error(ErrorCode::ConfigError, where + " must be an object");
    for (const auto &[k, v] : j.items()) {
        bool ok = false;
        for (const char *a : allowed)
            ok = ok || k == a;
        if (!ok)
            throw Error(ErrorCode::ConfigError, "unknown key '" + k + "' in " + where);
    }
}

template <class T> void get(const json &j, const char *key, T &out) {
    if (j.contains(key))
        out = j.at(key).get<T>();
}

inline void read_barrier(const json &j, BarrierConfig &b, const std::string &where) {
    check_keys(j, {"rot_vel", "sensor_offset", "obstacle_half_width", "default_open"}, where);
    get(j, "rot_vel", b.rot_vel);
    get(j, "sensor_offset", b.sensor_offset);
    get(j, "obstacle_half_width", b.obstacle_half_width);
    get(j, "default_open", b.default_open);
}

inline json write_barrier(const BarrierConfig &b) {
    return {{"rot_vel", b.rot_vel},
            {"sensor_offset", b.sensor_offset},
            {"obstacle_half_width", b.obstacle_half_width},
            {"default_open", b.default_open}};
}

} // namespace config_detail

inline WorldConfig world_config_from_json(const json &j) {
    using namespace config_detail;
    WorldConfig c;
    try {
        check_keys(j,
                   {"tick_rate", "seed", "traffic", "light_intensity", "tubes", "corridor", "shared_systems", "lane",
                    "spawn", "stationary_position", "vehicles", "boom_barrier", "emergency_passage",
                    "standalone_barriers", "light_sensor", "lighting", "ventilation", "cellars", "broadcast",
                    "broadcast_sync"},
                   "world config");
        get(j, "tick_rate", c.tick_rate);
        get(j, "seed", c.seed);
        get(j, "traffic", c.traffic);
        get(j, "light_intensity", c.light_intensity);
        get(j, "tubes", c.tubes);
        get(j, "corridor", c.corridor);
        get(j, "shared_systems", c.shared_systems);
        get(j, "stationary_position", c.stationary_position);
        if (j.contains("lane")) {
            const auto &l = j["lane"];
            check_keys(l, {"length", "tunnel_start", "tunnel_end", "spawner", "beam", "stop_line", "barrier"}, "lane");
            get(l, "length", c.lane.length);
            get(l, "tunnel_start", c.lane.tunnel_start);
            get(l, "tunnel_end", c.lane.tunnel_end);
            get(l, "spawner", c.lane.spawner);
            get(l, "beam", c.lane.beam);
            get(l, "stop_line", c.lane.stop_line);
            get(l, "barrier", c.lane.barrier);
        }
        if (j.contains("spawn")) {
            const auto &s = j["spawn"];
            check_keys(s, {"t_inter_min", "t_inter_max", "min_spawn_dist", "lane_mix"}, "spawn");
            get(s, "t_inter_min", c.t_inter_min);
            get(s, "t_inter_max", c.t_inter_max);
            get(s, "min_spawn_dist", c.min_spawn_dist);
            if (s.contains("lane_mix")) {
                c.lane_mix.clear();
                for (const auto &lane : s["lane_mix"]) {
                    std::vector<VehicleKind> mix;
                    for (const auto &k : lane)
                        mix.push_back(vehicle_kind_from_string(k.get<std::string>()));
                    c.lane_mix.push_back(std::move(mix));
                }
            }
        }
        if (j.contains("vehicles")) {
            for (const auto &[name, v] : j["vehicles"].items()) {
                auto &p = c.vehicles[vehicle_kind_from_string(name)];
                check_keys(v, {"max_speed", "acc", "dec", "length", "height", "sense_range"}, "vehicles." + name);
                get(v, "max_speed", p.max_speed);
                get(v, "acc", p.acc);
                get(v, "dec", p.dec);
                get(v, "length", p.length);
                get(v, "height", p.height);
                get(v, "sense_range", p.sense_range);
            }
        }
        if (j.contains("boom_barrier"))
            read_barrier(j["boom_barrier"], c.boom_barrier, "boom_barrier");
        if (j.contains("emergency_passage"))
            read_barrier(j["emergency_passage"], c.emergency_passage, "emergency_passage");
        if (j.contains("standalone_barriers")) {
            for (const auto &b : j["standalone_barriers"]) {
                check_keys(b, {"id", "prefix", "rot_vel", "sensor_offset", "obstacle_half_width", "default_open"},
                           "standalone_barriers[]");
                StandaloneBarrierConfig sb;
                sb.id = b.at("id").get<std::string>();
                sb.prefix = b.at("prefix").get<std::string>();
                json rest = b;
                rest.erase("id");
                rest.erase("prefix");
                read_barrier(rest, sb.barrier, "standalone_barriers[]");
                c.standalone_barriers.push_back(std::move(sb));
            }
        }
        if (j.contains("light_sensor")) {
            check_keys(j["light_sensor"], {"i_min", "i_max"}, "light_sensor");
            get(j["light_sensor"], "i_min", c.light_sensor.i_min);
            get(j["light_sensor"], "i_max", c.light_sensor.i_max);
        }
        if (j.contains("lighting")) {
            check_keys(j["lighting"], {"factor", "units", "spacing"}, "lighting");
            get(j["lighting"], "factor", c.lighting_factor);
            get(j["lighting"], "units", c.lighting_units);
            get(j["lighting"], "spacing", c.lighting_spacing);
        }
        if (j.contains("ventilation")) {
            check_keys(j["ventilation"], {"rpm_per_level"}, "ventilation");
            get(j["ventilation"], "rpm_per_level", c.ventilation_rpm_per_level);
        }
        if (j.contains("cellars")) {
            for (const auto &[name, v] : j["cellars"].items()) {
                if (!c.cellars.count(name))
                    throw Error(ErrorCode::ConfigError, "unknown cellar '" + name + "'");
                auto &cc = c.cellars[name];
                check_keys(v, {"h0", "h_max", "pump_rate", "inflow", "thresholds"}, "cellars." + name);
                get(v, "h0", cc.h0);
                get(v, "h_max", cc.h_max);
                get(v, "pump_rate", cc.pump_rate);
                get(v, "inflow", cc.inflow);
                if (v.contains("thresholds")) {
                    // Only the values may change; the threshold names are fixed by the signal set.
                    for (auto &[tn, tv] : cc.thresholds) {
                        if (v["thresholds"].contains(tn))
                            tv = v["thresholds"][tn].get<double>();
                    }
                    for (const auto &[tn, tv] : v["thresholds"].items()) {
                        bool known = false;
                        for (const auto &t : cc.thresholds)
                            known = known || t.first == tn;
                        if (!known)
                            throw Error(ErrorCode::ConfigError, "unknown threshold '" + tn + "' for cellar " + name);
                    }
                }
            }
        }
        if (j.contains("broadcast")) {
            check_keys(j["broadcast"], {"message_duration"}, "broadcast");
            get(j["broadcast"], "message_duration", c.broadcast_message_duration);
        }
        if (j.contains("broadcast_sync")) {
            check_keys(j["broadcast_sync"], {"period"}, "broadcast_sync");
            get(j["broadcast_sync"], "period", c.broadcast_sync_period);
        }
    } catch (const json::exception &e) {
        throw Error(ErrorCode::ConfigError, std::string("world config: ") + e.what());
    }
    c.validate();
    return c;
}

inline json world_config_to_json(const WorldConfig &c) {
    using namespace config_detail;
    json j;
    j["tick_rate"] = c.tick_rate;
    j["seed"] = c.seed;
    j["traffic"] = c.traffic;
    j["light_intensity"] = c.light_intensity;
    j["tubes"] = c.tubes;
    j["corridor"] = c.corridor;
    j["shared_systems"] = c.shared_systems;
    j["stationary_position"] = c.stationary_position;
    j["lane"] = {{"length", c.lane.length},   {"tunnel_start", c.lane.tunnel_start},
                 {"tunnel_end", c.lane.tunnel_end}, {"spawner", c.lane.spawner},
                 {"beam", c.lane.beam},       {"stop_line", c.lane.stop_line},
                 {"barrier", c.lane.barrier}};
    json mix = json::array();
    for (const auto &lane : c.lane_mix) {
        json l = json::array();
        for (auto k : lane)
            l.push_back(std::string(to_string(k)));
        mix.push_back(l);
    }
    j["spawn"] = {{"t_inter_min", c.t_inter_min},
                  {"t_inter_max", c.t_inter_max},
                  {"min_spawn_dist", c.min_spawn_dist},
                  {"lane_mix", mix}};
    for (const auto &[k, p] : c.vehicles)
        j["vehicles"][std::string(to_string(k))] = {{"max_speed", p.max_speed}, {"acc", p.acc},
                                                     {"dec", p.dec},             {"length", p.length},
                                                     {"height", p.height},       {"sense_range", p.sense_range}};
    j["boom_barrier"] = write_barrier(c.boom_barrier);
    j["emergency_passage"] = write_barrier(c.emergency_passage);
    j["standalone_barriers"] = json::array();
    for (const auto &b : c.standalone_barriers) {
        json e = write_barrier(b.barrier);
        e["id"] = b.id;
        e["prefix"] = b.prefix;
        j["standalone_barriers"].push_back(e);
    }
    j["light_sensor"] = {{"i_min", c.light_sensor.i_min}, {"i_max", c.light_sensor.i_max}};
    j["lighting"] = {{"factor", c.lighting_factor}, {"units", c.lighting_units}, {"spacing", c.lighting_spacing}};
    j["ventilation"] = {{"rpm_per_level", c.ventilation_rpm_per_level}};
    for (const auto &[name, cc] : c.cellars) {
        json th;
        for (const auto &[tn, tv] : cc.thresholds)
            th[tn] = tv;
        j["cellars"][name] = {
            {"h0", cc.h0}, {"h_max", cc.h_max}, {"pump_rate", cc.pump_rate}, {"inflow", cc.inflow}, {"thresholds", th}};
    }
    j["broadcast"] = {{"message_duration", c.broadcast_message_duration}};
    j["broadcast_sync"] = {{"period", c.broadcast_sync_period}};
    return j;
}

inline WorldConfig parse_world_config(const std::string &text) {
    json j;
    try {
        j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception &e) {
        throw Error(ErrorCode::ConfigError, std::string("world config is not valid JSON: ") + e.what());
    }
    return world_config_from_json(j);
}

inline WorldConfig load_world_config(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::ConfigError, "cannot read world config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_world_config(ss.str());
}

/// TUNNELTWIN_SEED replaces the configured seed when set.
inline void apply_env_overrides(WorldConfig &c) {
    if (const char *s = std::getenv("TUNNELTWIN_SEED"); s && *s) {
        char *end = nullptr;
        auto v = std::strtoull(s, &end, 10);
        if (end == s || *end != '\0')
            throw Error(ErrorCode::ConfigError, std::string("TUNNELTWIN_SEED is not an integer: ") + s);
        c.seed = v;
    }
}

} // namespace tunneltwin::plant
