#pragma once

// Per-component plant models: vehicles, spawners, boom barriers and cellars.
// Each has a pure tick function so it can be tested without a world.

#include <tunneltwin/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tunneltwin::plant {

enum class VehicleKind { Car, SmallTruck, LowTruck, HighTruck, Speeding, Stationary, WrongWay };

inline constexpr VehicleKind kAllVehicleKinds[] = {VehicleKind::Car,      VehicleKind::SmallTruck, VehicleKind::LowTruck,
                                                   VehicleKind::HighTruck, VehicleKind::Speeding,   VehicleKind::Stationary,
                                                   VehicleKind::WrongWay};

inline std::string_view to_string(VehicleKind k) {
    switch (k) {
    case VehicleKind::Car: return "Car";
    case VehicleKind::SmallTruck: return "SmallTruck";
    case VehicleKind::LowTruck: return "LowTruck";
    case VehicleKind::HighTruck: return "HighTruck";
    case VehicleKind::Speeding: return "Speeding";
    case VehicleKind::Stationary: return "Stationary";
    case VehicleKind::WrongWay: return "WrongWay";
    }
    return "?";
}

inline VehicleKind vehicle_kind_from_string(std::string_view s) {
    for (auto k : kAllVehicleKinds)
        if (to_string(k) == s)
            return k;
    throw Error(ErrorCode::ConfigError, "unknown vehicle kind '" + std::string(s) + "'");
}

/// Speeds in km/h, accelerations in km/h per second, lengths in meters.
struct VehicleParams {
    double max_speed = 100;
    double acc = 10;
    double dec = 40;
    double length = 4.2;
    double height = 1.4;
    double sense_range = 40;
};

inline VehicleParams default_vehicle_params(VehicleKind k) {
    switch (k) {
    case VehicleKind::Car: return {100, 10, 40, 4.2, 1.4, 40};
    case VehicleKind::SmallTruck: return {80, 10, 30, 6.6, 3.25, 40};
    case VehicleKind::LowTruck: return {80, 10, 30, 6.6, 3.65, 40};
    case VehicleKind::HighTruck: return {80, 10, 30, 16.6, 4.65, 40};
    case VehicleKind::Speeding: return {160, 15, 40, 4.2, 1.4, 100};
    case VehicleKind::Stationary: return {0, 0, 40, 4.2, 1.4, 0};
    case VehicleKind::WrongWay: return {100, 10, 40, 4.2, 1.4, 40};
    }
    return {};
}

/// Braking distance in meters from `speed` km/h at `dec` km/h/s.
inline double braking_distance(double speed, double dec) {
    double v = speed / 3.6;
    return v * v / (2.0 * dec / 3.6);
}

struct Vehicle {
    std::uint64_t id = 0;
    VehicleKind kind = VehicleKind::Car;
    VehicleParams params;
    double s = 0;     // front bumper
    double speed = 0; // km/h
    int direction = 1;
    bool driving = true;

    /// Occupied interval [lo, hi] along the lane.
    [[nodiscard]] std::pair<double, double> body() const {
        return direction > 0 ? std::pair{s - params.length, s} : std::pair{s, s + params.length};
    }
    [[nodiscard]] std::pair<double, double> sense_window() const {
        return direction > 0 ? std::pair{s, s + params.sense_range} : std::pair{s - params.sense_range, s};
    }
    [[nodiscard]] bool overlaps(double pos) const {
        auto [lo, hi] = body();
        return lo <= pos && pos <= hi;
    }
};

inline bool intervals_intersect(std::pair<double, double> a, std::pair<double, double> b) {
    return a.first <= b.second && b.first <= a.second;
}

/// A point on the lane that stops vehicles approaching it while active.
/// `direction` is the travel direction it applies to (0 = both).
struct StopZone {
    double position = 0;
    bool active = false;
    int direction = 1;
};

/// True when something lies in the vehicle's sense window: an active stop
/// zone not yet passed, or another vehicle's body.
inline bool vehicle_blocked(const Vehicle &v, const std::vector<StopZone> &zones, const std::vector<Vehicle> &others) {
    auto win = v.sense_window();
    for (const auto &z : zones) {
        if (!z.active || (z.direction != 0 && z.direction != v.direction))
            continue;
        if (win.first <= z.position && z.position <= win.second)
            return true;
    }
    for (const auto &o : others) {
        if (o.id == v.id)
            continue;
        if (intervals_intersect(win, o.body()))
            return true;
    }
    return false;
}

/// One kinematic step: accelerate toward max_speed when driving, brake
/// (never below zero) when not, then move.
inline void vehicle_tick(Vehicle &v, bool blocked, double dt) {
    v.driving = !blocked;
    if (v.driving)
        v.speed = std::min(v.params.max_speed, v.speed + v.params.acc * dt);
    else
        v.speed = std::max(0.0, v.speed - v.params.dec * dt);
    v.s += v.direction * v.speed / 3.6 * dt;
}

struct Spawner {
    std::vector<VehicleKind> mix;
    double t_inter_min = 2;
    double t_inter_max = 6;
    double min_spawn_dist = 15;
    bool enabled = true;
    std::int64_t ticks_left = 0;
    std::optional<std::uint64_t> last_spawned;

    void validate() const {
        if (!(t_inter_min > 0 && t_inter_min <= t_inter_max))
            throw Error(ErrorCode::ConfigError, "spawner needs 0 < t_inter_min <= t_inter_max");
        if (mix.empty())
            throw Error(ErrorCode::ConfigError, "spawner mix is empty");
    }

    /// Counts down one tick; returns the kind to spawn when the countdown has
    /// run out, the spawner is enabled and the entry gate is clear. The next
    /// interval is drawn uniformly and rounded up to whole ticks, so realised
    /// intervals stay inside [t_inter_min, t_inter_max] when both are tick
    /// multiples.
    template <class Rng> std::optional<VehicleKind> tick(bool gate_clear, double tick_rate, Rng &rng) {
        if (ticks_left > 0)
            --ticks_left;
        if (ticks_left > 0 || !enabled || !gate_clear)
            return std::nullopt;
        std::uniform_real_distribution<double> interval(t_inter_min, t_inter_max);
        std::uniform_int_distribution<std::size_t> pick(0, mix.size() - 1);
        auto kind = mix[pick(rng)];
        double t = interval(rng);
        ticks_left = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(t * tick_rate - 1e-9)));
        return kind;
    }
};

struct BarrierActs {
    bool no_choice = false;
    bool open = false;
    bool close = false;
    bool stop = false;

    [[nodiscard]] int count() const { return int(no_choice) + int(open) + int(close) + int(stop); }
};

struct BarrierMotion {
    bool opened = false;
    bool opening = false;
    bool stopped = false;
    bool closing = false;
    bool closed = false;

    [[nodiscard]] int count() const { return int(opened) + int(opening) + int(stopped) + int(closing) + int(closed); }
    friend bool operator==(const BarrierMotion &, const BarrierMotion &) = default;
};

/// Rotating boom driven at a constant angular rate between the closed and
/// open rotation.
struct Barrier {
    double theta = 90;
    double rot_vel = 9;
    double open_rotation = 90;
    double closed_rotation = 0;
    double sensor_offset = 1;
    int direction = 0;
    bool warning = false;

    void validate() const {
        if (!(sensor_offset > 0))
            throw Error(ErrorCode::ConfigError, "barrier sensor_offset must be positive");
        if (!(closed_rotation < open_rotation))
            throw Error(ErrorCode::ConfigError, "barrier closed_rotation must be below open_rotation");
        if (!(rot_vel > 0))
            throw Error(ErrorCode::ConfigError, "barrier rot_vel must be positive");
    }

    void tick(const BarrierActs &a, double dt) {
        warning = a.count() > 1;
        if (warning)
            direction = 0;
        else if (a.no_choice)
            ; // keep the current direction
        else if (a.open)
            direction = 1;
        else if (a.close)
            direction = -1;
        else
            direction = 0;
        theta = std::clamp(theta + direction * rot_vel * dt, closed_rotation, open_rotation);
    }

    [[nodiscard]] BarrierMotion motion() const {
        BarrierMotion m;
        m.opened = std::abs(open_rotation - theta) < sensor_offset;
        m.closed = !m.opened && std::abs(theta - closed_rotation) < sensor_offset;
        if (!m.opened && !m.closed) {
            m.opening = direction > 0;
            m.closing = direction < 0;
            m.stopped = direction == 0;
        }
        return m;
    }
};

/// Water basin with a level switch per named threshold.
struct Cellar {
    double h = 0;
    double h_max = 3;
    double inflow = 0;
    double pump_rate = 0.05;
    std::vector<std::pair<std::string, double>> thresholds;

    void validate() const {
        if (!(h_max > 0) || h < 0 || h > h_max)
            throw Error(ErrorCode::ConfigError, "cellar level must lie in [0, h_max]");
        for (std::size_t i = 1; i < thresholds.size(); ++i)
            if (!(thresholds[i - 1].second < thresholds[i].second))
                throw Error(ErrorCode::ConfigError, "cellar thresholds must be strictly increasing");
    }

    void tick(bool pump_on, double dt) { h = std::clamp(h + (inflow - (pump_on ? pump_rate : 0.0)) * dt, 0.0, h_max); }

    [[nodiscard]] bool at_or_above(std::size_t i) const { return h >= thresholds.at(i).second; }
};

} // namespace tunneltwin::plant
