#pragma once

// The simulated tunnel: lanes with traffic plus every controlled entity, each
// an IO unit reading actuator signals and publishing sensor signals through
// the signal bus once per tick.

#include <tunneltwin/error.hpp>
#include <tunneltwin/plant/command.hpp>
#include <tunneltwin/plant/components.hpp>
#include <tunneltwin/plant/config.hpp>
#include <tunneltwin/plant/levels.hpp>
#include <tunneltwin/signal_bus.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace tunneltwin::plant {

inline constexpr double kBeamHeight = 4.1;

struct PlantEvent {
    double time = 0;
    std::string channel;
    std::string kind;

    friend bool operator==(const PlantEvent &, const PlantEvent &) = default;
};

struct SpawnRecord {
    double time = 0;
    int tube = 0;
    int lane = 0;
    VehicleKind kind = VehicleKind::Car;
    std::uint64_t id = 0;
    bool regular = true; // false for scenario spawns
};

struct Lane {
    int tube = 1;
    int index = 0;
    LaneLayout layout;
    Spawner spawner;
    std::vector<Vehicle> vehicles;
    std::vector<StopZone> zones;
    std::vector<VehicleKind> pending; // scenario spawns waiting for a clear entry
};

class World;

/// Base for controlled entities. Actuator and sensor roles are short names
/// ("a_open", "s_opened"); the full signal name is dvar_/ivar_ + prefix + role.
class Entity {
  public:
    Entity(std::string id, std::string prefix, std::vector<std::string> actuators, std::vector<std::string> sensors)
        : id_(std::move(id)), prefix_(std::move(prefix)), act_roles_(std::move(actuators)),
          sens_roles_(std::move(sensors)), act_handles_(act_roles_.size()), sens_handles_(sens_roles_.size()),
          sens_values_(sens_roles_.size(), 0) {}
    virtual ~Entity() = default;
    Entity(const Entity &) = delete;
    Entity &operator=(const Entity &) = delete;

    [[nodiscard]] const std::string &id() const { return id_; }
    [[nodiscard]] virtual std::string type() const = 0;
    [[nodiscard]] bool warning() const { return warning_; }
    [[nodiscard]] bool exactly_one() const { return exactly_one_; }

    /// Reads actuators and advances internal state by dt.
    virtual void update(World &, double dt) = 0;
    /// Derives sensor values from the current state.
    virtual void compute_sensors(const World &) = 0;
    [[nodiscard]] virtual nlohmann::json state() const = 0;
    /// Flips a clickable element; false when the element is unknown.
    virtual bool toggle(World &, std::string_view) { return false; }
    [[nodiscard]] virtual std::vector<std::string> clickable() const { return {}; }

    [[nodiscard]] std::string actuator_signal(std::size_t i) const { return "dvar_" + prefix_ + act_roles_.at(i); }
    [[nodiscard]] std::string sensor_signal(std::size_t i) const { return "ivar_" + prefix_ + sens_roles_.at(i); }
    [[nodiscard]] const std::vector<std::string> &actuator_roles() const { return act_roles_; }
    [[nodiscard]] const std::vector<std::string> &sensor_roles() const { return sens_roles_; }

    [[nodiscard]] std::vector<SignalDef> signal_defs() const {
        std::vector<SignalDef> out;
        for (std::size_t i = 0; i < act_roles_.size(); ++i) {
            auto n = actuator_signal(i);
            out.push_back({n, Direction::Output, derive_group(n), SignalKind::Actuator});
        }
        for (std::size_t i = 0; i < sens_roles_.size(); ++i) {
            auto n = sensor_signal(i);
            out.push_back({n, Direction::Input, derive_group(n), SignalKind::Sensor});
        }
        return out;
    }

    /// Binds to whichever of this entity's signals the bus knows; the rest
    /// read as false and are not published.
    void bind(SignalBus &bus) {
        bus_ = &bus;
        for (std::size_t i = 0; i < act_roles_.size(); ++i)
            act_handles_[i] = bus.find(actuator_signal(i));
        for (std::size_t i = 0; i < sens_roles_.size(); ++i)
            sens_handles_[i] = bus.find(sensor_signal(i));
    }

    void publish(double t) {
        if (!bus_)
            return;
        for (std::size_t i = 0; i < sens_roles_.size(); ++i)
            if (sens_handles_[i])
                bus_->write(*sens_handles_[i], sens_values_[i] != 0, t);
    }

    [[nodiscard]] bool sensor(std::size_t i) const { return sens_values_.at(i) != 0; }
    [[nodiscard]] bool sensor(std::string_view role) const {
        for (std::size_t i = 0; i < sens_roles_.size(); ++i)
            if (sens_roles_[i] == role)
                return sensor(i);
        throw Error(ErrorCode::UnknownSignal, "entity " + id_ + " has no sensor " + std::string(role));
    }

  protected:
    [[nodiscard]] bool act(std::size_t i) const {
        return bus_ && act_handles_[i] && bus_->read(*act_handles_[i]);
    }
    void sense(std::size_t i, bool v) { sens_values_.at(i) = v ? 1 : 0; }

    bool warning_ = false;
    bool exactly_one_ = false;

  private:
    std::string id_;
    std::string prefix_;
    std::vector<std::string> act_roles_;
    std::vector<std::string> sens_roles_;
    std::vector<std::optional<SignalHandle>> act_handles_;
    std::vector<std::optional<SignalHandle>> sens_handles_;
    std::vector<char> sens_values_;
    SignalBus *bus_ = nullptr;
};

class World {
  public:
    explicit World(WorldConfig cfg);

    [[nodiscard]] const WorldConfig &config() const { return cfg_; }
    [[nodiscard]] std::int64_t tick_count() const { return tick_; }
    [[nodiscard]] double tick_rate() const { return cfg_.tick_rate; }
    [[nodiscard]] double dt() const { return 1.0 / cfg_.tick_rate; }
    [[nodiscard]] double sim_time() const { return static_cast<double>(tick_) / cfg_.tick_rate; }

    /// Every signal the world reads or writes, in entity order.
    [[nodiscard]] std::vector<SignalDef> signal_defs() const {
        std::vector<SignalDef> out;
        for (const auto &e : entities_)
            for (auto &d : e->signal_defs())
                out.push_back(std::move(d));
        return out;
    }

    /// Binds all entities to `bus` and publishes the initial sensor image.
    void attach(SignalBus &bus) {
        for (auto &e : entities_)
            e->bind(bus);
        for (auto &e : entities_) {
            e->compute_sensors(*this);
            e->publish(sim_time());
        }
    }

    void step();
    /// Throws ScenarioError when `c` cannot apply to this world; no side effects.
    void check(const PlantCommand &c) const;
    void apply(const PlantCommand &c);

    [[nodiscard]] const std::vector<Lane> &lanes() const { return lanes_; }
    [[nodiscard]] std::vector<Lane> &lanes() { return lanes_; }
    [[nodiscard]] const Lane &lane(int tube, int index) const { return lanes_.at(lane_index(tube, index)); }
    [[nodiscard]] Lane &lane(int tube, int index) { return lanes_.at(lane_index(tube, index)); }
    [[nodiscard]] bool has_tube(int tube) const {
        return std::find(cfg_.tubes.begin(), cfg_.tubes.end(), tube) != cfg_.tubes.end();
    }

    [[nodiscard]] const std::vector<std::unique_ptr<Entity>> &entities() const { return entities_; }
    [[nodiscard]] Entity *find_entity(std::string_view id) const {
        for (const auto &e : entities_)
            if (e->id() == id)
                return e.get();
        return nullptr;
    }
    template <class T> [[nodiscard]] T &entity(std::string_view id) const {
        auto *e = dynamic_cast<T *>(find_entity(id));
        if (!e)
            throw Error(ErrorCode::ScenarioError, "no entity " + std::string(id) + " of the requested type");
        return *e;
    }

    [[nodiscard]] int smoke_level(int tube) const { return smoke_.at(static_cast<std::size_t>(tube)); }
    [[nodiscard]] double light_intensity() const { return light_intensity_; }
    [[nodiscard]] bool traffic_enabled() const { return traffic_; }

    [[nodiscard]] const std::vector<PlantEvent> &events() const { return events_; }
    [[nodiscard]] const std::vector<SpawnRecord> &spawns() const { return spawns_; }
    void log_event(std::string channel, std::string kind) {
        events_.push_back({sim_time(), std::move(channel), std::move(kind)});
    }

    [[nodiscard]] std::size_t vehicle_count() const {
        std::size_t n = 0;
        for (const auto &l : lanes_)
            n += l.vehicles.size();
        return n;
    }

    /// Vehicles of either lane of `tube`.
    template <class F> void for_each_vehicle(int tube, F &&f) const {
        for (const auto &l : lanes_)
            if (l.tube == tube)
                for (const auto &v : l.vehicles)
                    f(l, v);
    }

    [[nodiscard]] nlohmann::json snapshot(std::size_t event_tail = 20) const;

  private:
    [[nodiscard]] std::size_t lane_index(int tube, int index) const {
        for (std::size_t i = 0; i < lanes_.size(); ++i)
            if (lanes_[i].tube == tube && lanes_[i].index == index)
                return i;
        throw Error(ErrorCode::ScenarioError,
                    "no lane " + std::to_string(tube) + "/" + std::to_string(index) + " in this world");
    }

    Vehicle make_vehicle(VehicleKind k, double s, int direction) {
        Vehicle v;
        v.id = next_vehicle_id_++;
        v.kind = k;
        v.params = cfg_.params(k);
        v.s = s;
        v.direction = direction;
        v.speed = v.params.max_speed / 2.0;
        return v;
    }

    static bool region_clear(const Lane &lane, double lo, double hi) {
        for (const auto &v : lane.vehicles)
            if (intervals_intersect(v.body(), {lo, hi}))
                return false;
        return true;
    }

    bool try_special_spawn(Lane &lane, VehicleKind k);
    void spawn_phase();
    void vehicle_phase();
    void rebuild_stop_zones();

    WorldConfig cfg_;
    std::int64_t tick_ = 0;
    std::mt19937_64 rng_;
    std::vector<Lane> lanes_;
    std::vector<std::unique_ptr<Entity>> entities_;
    std::array<int, 3> smoke_{0, 0, 0};
    double light_intensity_ = 0;
    bool traffic_ = true;
    std::uint64_t next_vehicle_id_ = 1;
    std::vector<PlantEvent> events_;
    std::vector<SpawnRecord> spawns_;
    double max_sense_range_ = 0;
};

// ---------------------------------------------------------------------------
// Entities

class BarrierEntity : public Entity {
  public:
    /// `lane` is null for barriers that no traffic passes (emergency passage,
    /// stand-alone test barriers); those have no obstacle sensors.
    BarrierEntity(std::string id, std::string prefix, const BarrierConfig &cfg, const Lane *lane, double position)
        : Entity(std::move(id), std::move(prefix), {"a_noChoice", "a_open", "a_stop", "a_close"}, sensor_roles(lane)),
          lane_(lane), position_(position), half_width_(cfg.obstacle_half_width) {
        barrier_.rot_vel = cfg.rot_vel;
        barrier_.sensor_offset = cfg.sensor_offset;
        barrier_.theta = cfg.default_open ? barrier_.open_rotation : barrier_.closed_rotation;
        barrier_.validate();
        exactly_one_ = true;
    }

    [[nodiscard]] std::string type() const override { return "barrier"; }

    void update(World &, double dt) override {
        BarrierActs a{act(0), act(1), act(3), act(2)};
        barrier_.tick(a, dt);
        warning_ = barrier_.warning;
    }

    void compute_sensors(const World &) override {
        auto m = barrier_.motion();
        sense(0, m.opened);
        sense(1, m.opening);
        sense(2, m.stopped);
        sense(3, m.closing);
        sense(4, m.closed);
        if (lane_) {
            obstacle_ = false;
            for (const auto &v : lane_->vehicles)
                obstacle_ = obstacle_ || intervals_intersect(v.body(), obstacle_zone());
            sense(5, obstacle_);
            sense(6, !obstacle_);
        }
    }

    [[nodiscard]] nlohmann::json state() const override {
        auto m = barrier_.motion();
        return {{"theta", barrier_.theta},  {"direction", barrier_.direction}, {"opened", m.opened},
                {"closed", m.closed},       {"obstacle", obstacle_},          {"position", position_}};
    }

    [[nodiscard]] const Barrier &barrier() const { return barrier_; }
    [[nodiscard]] Barrier &barrier() { return barrier_; }
    [[nodiscard]] double position() const { return position_; }
    [[nodiscard]] std::pair<double, double> obstacle_zone() const {
        return {position_ - half_width_, position_ + half_width_};
    }

  private:
    static std::vector<std::string> sensor_roles(const Lane *lane) {
        std::vector<std::string> r{"s_opened", "s_opening", "s_stopped", "s_closing", "s_closed"};
        if (lane) {
            r.push_back("s_obst_on");
            r.push_back("s_obst_off");
        }
        return r;
    }

    const Lane *lane_;
    double position_;
    double half_width_;
    Barrier barrier_;
    bool obstacle_ = false;
};

/// Entity with an exclusive set of actuators selecting one of several states;
/// no actuator keeps the previous state, several take the lowest and warn.
class SelectorEntity : public Entity {
  public:
    SelectorEntity(std::string id, std::string prefix, std::string type, std::vector<std::string> actuators,
                   std::vector<std::string> labels, int initial)
        : Entity(std::move(id), std::move(prefix), std::move(actuators), {}), type_(std::move(type)),
          labels_(std::move(labels)), index_(initial) {
        exactly_one_ = true;
    }

    [[nodiscard]] std::string type() const override { return type_; }

    void update(World &w, double) override {
        int first = -1;
        int count = 0;
        for (std::size_t i = 0; i < actuator_roles().size(); ++i)
            if (act(i)) {
                if (first < 0)
                    first = static_cast<int>(i);
                ++count;
            }
        warning_ = count > 1;
        int next = count == 0 ? index_ : first;
        if (next != index_)
            w.log_event(id(), labels_.at(static_cast<std::size_t>(next)));
        index_ = next;
    }

    void compute_sensors(const World &) override {}

    [[nodiscard]] nlohmann::json state() const override {
        return {{"state", labels_.at(static_cast<std::size_t>(index_))}, {"index", index_}};
    }

    [[nodiscard]] int index() const { return index_; }
    [[nodiscard]] const std::string &label() const { return labels_.at(static_cast<std::size_t>(index_)); }

  private:
    std::string type_;
    std::vector<std::string> labels_;
    int index_;
};

class TrafficLightEntity : public SelectorEntity {
  public:
    enum State { Off = 0, Green, Yellow, Flashing, Red };

    TrafficLightEntity(std::string id, std::string prefix)
        : SelectorEntity(std::move(id), std::move(prefix), "traffic_light",
                         {"a_off", "a_green", "a_yellow", "a_flashing", "a_red"},
                         {"off", "green", "yellow", "flashing", "red"}, Off) {}

    [[nodiscard]] State light() const { return static_cast<State>(index()); }
};

/// One actuator switching something on or off (J32 sign, corridor lighting).
class SwitchEntity : public Entity {
  public:
    SwitchEntity(std::string id, std::string prefix, std::string type)
        : Entity(std::move(id), std::move(prefix), {"a_on"}, {}), type_(std::move(type)) {}

    [[nodiscard]] std::string type() const override { return type_; }
    void update(World &, double) override { on_ = act(0); }
    void compute_sensors(const World &) override {}
    [[nodiscard]] nlohmann::json state() const override { return {{"on", on_}}; }
    [[nodiscard]] bool on() const { return on_; }

  private:
    std::string type_;
    bool on_ = false;
};

inline std::vector<std::string> level_roles(const char *stem) {
    std::vector<std::string> r;
    for (int i = 0; i <= kMaxLevel; ++i)
        r.push_back(stem + std::to_string(i));
    return r;
}

/// Nine one-hot actuators selecting a level (tunnel lighting, ventilation).
class LevelActuatorEntity : public Entity {
  public:
    LevelActuatorEntity(std::string id, std::string prefix, std::string type, double factor)
        : Entity(std::move(id), std::move(prefix), level_roles("a_state"), {}), type_(std::move(type)),
          factor_(factor) {
        exactly_one_ = true;
    }

    [[nodiscard]] std::string type() const override { return type_; }

    void update(World &, double) override {
        std::array<bool, kMaxLevel + 1> acts{};
        for (std::size_t i = 0; i < acts.size(); ++i)
            acts[i] = act(i);
        auto r = one_hot_apply(acts, level_);
        level_ = r.level;
        warning_ = r.warning;
    }

    void compute_sensors(const World &) override {}

    [[nodiscard]] nlohmann::json state() const override {
        if (type_ == "ventilation")
            return {{"level", level_}, {"rpm", rpm()}};
        return {{"level", level_}, {"intensity", intensity()}};
    }

    [[nodiscard]] int level() const { return level_; }
    /// Light output for lighting banks.
    [[nodiscard]] double intensity() const { return level_ * factor_; }
    /// Fan speed for ventilation: level 4 is standstill, lower levels reverse.
    [[nodiscard]] double rpm() const { return (level_ - kMaxLevel / 2) * factor_; }

  private:
    std::string type_;
    double factor_;
    int level_ = 0;
};

/// Nine one-hot sensors reporting a measured level.
class LevelSensorEntity : public Entity {
  public:
    enum class Source { Daylight, Smoke };

    LevelSensorEntity(std::string id, std::string prefix, Source src, int tube, double i_min, double i_max)
        : Entity(std::move(id), std::move(prefix), {}, level_roles("s_level")), src_(src), tube_(tube),
          i_min_(i_min), i_max_(i_max) {}

    [[nodiscard]] std::string type() const override {
        return src_ == Source::Daylight ? "light_sensor" : "smoke_detector";
    }
    void update(World &, double) override {}

    void compute_sensors(const World &w) override {
        reading_ = src_ == Source::Daylight ? w.light_intensity() : w.smoke_level(tube_) / double(kMaxLevel);
        level_ = level_from_intensity(reading_, i_min_, i_max_);
        for (int i = 0; i <= kMaxLevel; ++i)
            sense(static_cast<std::size_t>(i), i == level_);
    }

    [[nodiscard]] nlohmann::json state() const override { return {{"reading", reading_}, {"level", level_}}; }
    [[nodiscard]] int level() const { return level_; }

  private:
    Source src_;
    int tube_;
    double i_min_, i_max_;
    double reading_ = 0;
    int level_ = 0;
};

class HeightDetectionEntity : public Entity {
  public:
    HeightDetectionEntity(std::string id, std::string prefix, int tube, double beam)
        : Entity(std::move(id), std::move(prefix), {}, {"s_detected"}), tube_(tube), beam_(beam) {}

    [[nodiscard]] std::string type() const override { return "height_detection"; }
    void update(World &, double) override {}

    void compute_sensors(const World &w) override {
        detected_ = false;
        w.for_each_vehicle(tube_, [&](const Lane &, const Vehicle &v) {
            if (v.params.height > kBeamHeight && v.overlaps(beam_))
                detected_ = true;
        });
        sense(0, detected_);
    }

    [[nodiscard]] nlohmann::json state() const override { return {{"detected", detected_}, {"position", beam_}}; }

  private:
    int tube_;
    double beam_;
    bool detected_ = false;
};

class SosEntity : public Entity {
  public:
    SosEntity(std::string id, std::string prefix, int tube)
        : Entity(std::move(id), std::move(prefix), {}, {"s_speeding", "s_stationary", "s_wrongway"}), tube_(tube) {}

    [[nodiscard]] std::string type() const override { return "sos"; }
    void update(World &, double) override {}

    void compute_sensors(const World &w) override {
        bool sp = false, st = false, ww = false;
        w.for_each_vehicle(tube_, [&](const Lane &, const Vehicle &v) {
            sp = sp || v.kind == VehicleKind::Speeding;
            st = st || v.kind == VehicleKind::Stationary;
            ww = ww || v.kind == VehicleKind::WrongWay;
        });
        sense(0, sp);
        sense(1, st);
        sense(2, ww);
    }

    [[nodiscard]] nlohmann::json state() const override {
        return {{"speeding", sensor(std::size_t{0})}, {"stationary", sensor(1)}, {"wrongway", sensor(2)}};
    }

  private:
    int tube_;
};

class EmergencyExitEntity : public Entity {
  public:
    EmergencyExitEntity(std::string id, std::string prefix)
        : Entity(std::move(id), std::move(prefix), {"a_contourLight", "a_soundBeacon"}, {"s_open"}) {}

    [[nodiscard]] std::string type() const override { return "emergency_exit"; }

    void update(World &w, double) override {
        bool contour = act(0), beacon = act(1);
        if (contour != contour_)
            w.log_event(id(), contour ? "contour_on" : "contour_off");
        if (beacon != beacon_)
            w.log_event(id(), beacon ? "beacon_on" : "beacon_off");
        contour_ = contour;
        beacon_ = beacon;
    }

    void compute_sensors(const World &) override { sense(0, open_); }

    [[nodiscard]] std::vector<std::string> clickable() const override { return {"open"}; }
    bool toggle(World &w, std::string_view element) override {
        if (element != "open")
            return false;
        open_ = !open_;
        w.log_event(id(), open_ ? "door_opened" : "door_closed");
        return true;
    }

    [[nodiscard]] nlohmann::json state() const override {
        return {{"open", open_}, {"contour_light", contour_}, {"sound_beacon", beacon_}};
    }

  private:
    bool open_ = false;
    bool contour_ = false;
    bool beacon_ = false;
};

/// Clickable elements each reporting one sensor (aid cabinets).
class ToggleEntity : public Entity {
  public:
    ToggleEntity(std::string id, std::string prefix, std::string type, std::vector<std::string> elements)
        : Entity(std::move(id), std::move(prefix), {}, with_prefix(elements)), type_(std::move(type)),
          elements_(std::move(elements)), values_(elements_.size(), 0) {}

    [[nodiscard]] std::string type() const override { return type_; }
    void update(World &, double) override {}

    void compute_sensors(const World &) override {
        for (std::size_t i = 0; i < values_.size(); ++i)
            sense(i, values_[i] != 0);
    }

    [[nodiscard]] std::vector<std::string> clickable() const override { return elements_; }
    bool toggle(World &w, std::string_view element) override {
        for (std::size_t i = 0; i < elements_.size(); ++i)
            if (elements_[i] == element) {
                values_[i] = !values_[i];
                w.log_event(id(), elements_[i] + (values_[i] ? "_on" : "_off"));
                return true;
            }
        return false;
    }

    [[nodiscard]] nlohmann::json state() const override {
        nlohmann::json j = nlohmann::json::object();
        for (std::size_t i = 0; i < elements_.size(); ++i)
            j[elements_[i]] = values_[i] != 0;
        return j;
    }

  private:
    static std::vector<std::string> with_prefix(const std::vector<std::string> &e) {
        std::vector<std::string> r;
        for (const auto &x : e)
            r.push_back("s_" + x);
        return r;
    }

    std::string type_;
    std::vector<std::string> elements_;
    std::vector<char> values_;
};

class DoorEntity : public Entity {
  public:
    DoorEntity(std::string id, std::string prefix) : Entity(std::move(id), std::move(prefix), {}, {"s_open", "s_closed"}) {}

    [[nodiscard]] std::string type() const override { return "door"; }
    void update(World &, double) override {}
    void compute_sensors(const World &) override {
        sense(0, open_);
        sense(1, !open_);
    }
    [[nodiscard]] std::vector<std::string> clickable() const override { return {"open"}; }
    bool toggle(World &w, std::string_view element) override {
        if (element != "open")
            return false;
        open_ = !open_;
        w.log_event(id(), open_ ? "door_opened" : "door_closed");
        return true;
    }
    [[nodiscard]] nlohmann::json state() const override { return {{"open", open_}}; }

  private:
    bool open_ = false;
};

class TubeControlEntity : public Entity {
  public:
    TubeControlEntity(std::string id, std::string prefix, std::array<const TrafficLightEntity *, 2> lights,
                      std::array<const BarrierEntity *, 2> barriers)
        : Entity(std::move(id), std::move(prefix), {},
                 {"s_bothTL_off", "s_bothTL_flashing", "s_bothTL_red", "s_bothBB_opening", "s_bothBB_opened",
                  "s_bothBB_stopped", "s_bothBB_closing", "s_bothBB_closed"}),
          lights_(lights), barriers_(barriers) {}

    [[nodiscard]] std::string type() const override { return "tube_control"; }
    void update(World &, double) override {}

    void compute_sensors(const World &) override {
        auto both_tl = [&](TrafficLightEntity::State s) {
            return lights_[0]->light() == s && lights_[1]->light() == s;
        };
        sense(0, both_tl(TrafficLightEntity::Off));
        sense(1, both_tl(TrafficLightEntity::Flashing));
        sense(2, both_tl(TrafficLightEntity::Red));
        auto m0 = barriers_[0]->barrier().motion();
        auto m1 = barriers_[1]->barrier().motion();
        sense(3, m0.opening && m1.opening);
        sense(4, m0.opened && m1.opened);
        sense(5, m0.stopped && m1.stopped);
        sense(6, m0.closing && m1.closing);
        sense(7, m0.closed && m1.closed);
    }

    [[nodiscard]] nlohmann::json state() const override {
        nlohmann::json j;
        for (std::size_t i = 0; i < sensor_roles().size(); ++i)
            j[sensor_roles()[i]] = sensor(i);
        return j;
    }

  private:
    std::array<const TrafficLightEntity *, 2> lights_;
    std::array<const BarrierEntity *, 2> barriers_;
};

/// Public address system: off, live speech, or a recorded message that plays
/// for a fixed duration.
class BroadcastEntity : public Entity {
  public:
    BroadcastEntity(std::string id, std::string prefix, double message_duration)
        : Entity(std::move(id), std::move(prefix), {"a_broadcast_off", "a_broadcast_live", "a_broadcast_message"},
                 {"s_recordingStopped"}),
          duration_(message_duration) {
        exactly_one_ = true;
    }

    [[nodiscard]] std::string type() const override { return "broadcast"; }

    void update(World &w, double dt) override {
        std::array<bool, 3> acts{act(0), act(1), act(2)};
        auto r = one_hot_apply(acts, mode_);
        warning_ = r.warning;
        if (r.level != mode_) {
            mode_ = r.level;
            if (mode_ == 0)
                w.log_event(id(), "off");
            else if (mode_ == 1)
                w.log_event(id(), "live");
            else {
                remaining_ = duration_;
                w.log_event(id(), "message_start");
            }
        } else if (mode_ == 2 && remaining_ > 0) {
            remaining_ -= dt;
            if (remaining_ <= 1e-9) {
                remaining_ = 0;
                w.log_event(id(), "message_end");
            }
        }
        if (mode_ != 2)
            remaining_ = 0;
    }

    void compute_sensors(const World &) override { sense(0, !(mode_ == 2 && remaining_ > 0)); }

    [[nodiscard]] nlohmann::json state() const override {
        static const char *names[] = {"off", "live", "message"};
        return {{"mode", names[mode_]}, {"message_remaining", remaining_}};
    }

  private:
    double duration_;
    int mode_ = 0;
    double remaining_ = 0;
};

class BroadcastSyncEntity : public Entity {
  public:
    BroadcastSyncEntity(std::string id, std::string prefix, double period)
        : Entity(std::move(id), std::move(prefix), {"a_off", "a_reset"}, {"s_timerGB_timeout"}), period_(period) {
        exactly_one_ = true;
    }

    [[nodiscard]] std::string type() const override { return "broadcast_sync"; }

    void update(World &, double dt) override {
        bool off = act(0), reset = act(1);
        warning_ = off && reset;
        off_ = off;
        if (off)
            elapsed_ = 0;
        else if (reset)
            elapsed_ = 0;
        else
            elapsed_ += dt;
    }

    void compute_sensors(const World &) override { sense(0, !off_ && elapsed_ >= period_ - 1e-9); }

    [[nodiscard]] nlohmann::json state() const override {
        return {{"elapsed", elapsed_}, {"off", off_}, {"timeout", sensor(std::size_t{0})}};
    }

  private:
    double period_;
    double elapsed_ = 0;
    bool off_ = false;
};

class CellarEntity : public Entity {
  public:
    CellarEntity(std::string id, std::string prefix, const CellarConfig &c)
        : Entity(std::move(id), std::move(prefix), {"a_pump_on"}, roles(c)) {
        cellar_ = Cellar{c.h0, c.h_max, c.inflow, c.pump_rate, c.thresholds};
        cellar_.validate();
    }

    [[nodiscard]] std::string type() const override { return "cellar"; }
    void update(World &, double dt) override {
        pump_ = act(0);
        cellar_.tick(pump_, dt);
    }
    void compute_sensors(const World &) override {
        for (std::size_t i = 0; i < cellar_.thresholds.size(); ++i) {
            bool on = cellar_.at_or_above(i);
            sense(2 * i, on);
            sense(2 * i + 1, !on);
        }
    }
    [[nodiscard]] nlohmann::json state() const override {
        return {{"h", cellar_.h}, {"h_max", cellar_.h_max}, {"inflow", cellar_.inflow}, {"pump_on", pump_}};
    }

    [[nodiscard]] Cellar &cellar() { return cellar_; }
    [[nodiscard]] const Cellar &cellar() const { return cellar_; }

  private:
    static std::vector<std::string> roles(const CellarConfig &c) {
        std::vector<std::string> r;
        for (const auto &[n, v] : c.thresholds) {
            r.push_back("s_" + n + "_on");
            r.push_back("s_" + n + "_off");
        }
        return r;
    }

    Cellar cellar_;
    bool pump_ = false;
};

// ---------------------------------------------------------------------------
// World

inline std::string cellar_entity_id(std::string_view name) {
    if (name == "clean")
        return "PumpingCellarClean";
    if (name == "dirty")
        return "PumpingCellarDirty";
    if (name == "fire")
        return "FireExtinguishing";
    throw Error(ErrorCode::ScenarioError, "unknown cellar '" + std::string(name) + "' (clean, dirty, fire)");
}

inline World::World(WorldConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
    cfg_.validate();
    light_intensity_ = cfg_.light_intensity;
    traffic_ = cfg_.traffic;
    for (const auto &[k, p] : cfg_.vehicles)
        max_sense_range_ = std::max(max_sense_range_, p.sense_range);

    // Lanes first: entities keep pointers into the vector, so it must not grow later.
    for (int t : cfg_.tubes)
        for (int i = 0; i < 2; ++i) {
            Lane l;
            l.tube = t;
            l.index = i;
            l.layout = cfg_.lane;
            l.spawner.mix = cfg_.lane_mix.at(static_cast<std::size_t>(i));
            l.spawner.t_inter_min = cfg_.t_inter_min;
            l.spawner.t_inter_max = cfg_.t_inter_max;
            l.spawner.min_spawn_dist = cfg_.min_spawn_dist;
            l.spawner.enabled = traffic_;
            l.spawner.validate();
            lanes_.push_back(std::move(l));
        }

    for (int t : cfg_.tubes) {
        const std::string tid = "TrafficTube_" + std::to_string(t);
        const std::string tp = "M_M_HW_" + tid + "_";
        auto add = [&](auto e) {
            auto *raw = e.get();
            entities_.push_back(std::move(e));
            return raw;
        };
        std::array<const BarrierEntity *, 2> barriers{};
        std::array<const TrafficLightEntity *, 2> lights{};
        for (int i = 0; i < 2; ++i) {
            auto n = "BoomBarrier_" + std::to_string(i + 1);
            barriers[static_cast<std::size_t>(i)] = add(std::make_unique<BarrierEntity>(
                tid + "/" + n, tp + n + "_", cfg_.boom_barrier, &lane(t, i), cfg_.lane.barrier));
        }
        for (int i = 0; i < 2; ++i) {
            auto n = "TrafficLight_" + std::to_string(i + 1);
            lights[static_cast<std::size_t>(i)] = add(std::make_unique<TrafficLightEntity>(tid + "/" + n, tp + n + "_"));
        }
        for (int i = 0; i < 2; ++i) {
            auto n = "J32_" + std::to_string(i + 1);
            add(std::make_unique<SwitchEntity>(tid + "/" + n, tp + n + "_", "j32"));
        }
        add(std::make_unique<HeightDetectionEntity>(tid + "/HeightDetection", tp + "HeightDetection_", t,
                                                    cfg_.lane.beam));
        add(std::make_unique<LevelSensorEntity>(tid + "/LightSensor", tp + "LightSensor_",
                                                LevelSensorEntity::Source::Daylight, t, cfg_.light_sensor.i_min,
                                                cfg_.light_sensor.i_max));
        add(std::make_unique<LevelActuatorEntity>(tid + "/TunnelLighting", tp + "TunnelLighting_", "lighting",
                                                  cfg_.lighting_factor));
        add(std::make_unique<LevelSensorEntity>(tid + "/SmokeDetection", tp + "SmokeDetection_",
                                                LevelSensorEntity::Source::Smoke, t, 0.0, 1.0));
        add(std::make_unique<LevelActuatorEntity>(tid + "/Ventilation", tp + "Ventilation_", "ventilation",
                                                  cfg_.ventilation_rpm_per_level));
        add(std::make_unique<SosEntity>(tid + "/SOS", tp + "SOS_", t));
        add(std::make_unique<EmergencyExitEntity>(tid + "/EmergencyExit", tp + "EmergencyExit_"));
        add(std::make_unique<ToggleEntity>(tid + "/AidCabinetA", tp + "AidCabinetA_", "aid_cabinet",
                                           std::vector<std::string>{"doorOpen", "telephone", "extinguisher", "fireHose"}));
        add(std::make_unique<ToggleEntity>(tid + "/AidCabinetC", tp + "AidCabinetC_", "aid_cabinet",
                                           std::vector<std::string>{"doorOpen", "telephone", "extinguisher"}));
        add(std::make_unique<TubeControlEntity>(tid + "/TubeControl", tp + "TubeControl_", lights, barriers));
    }

    if (cfg_.corridor) {
        const std::string cp = "M_M_HW_CentralCorridor_";
        entities_.push_back(
            std::make_unique<BroadcastEntity>("CentralCorridor/Broadcast", cp + "Broadcast_", cfg_.broadcast_message_duration));
        entities_.push_back(std::make_unique<SelectorEntity>(
            "CentralCorridor/EscapeRoute", cp + "EscapeRoute_", "escape_route",
            std::vector<std::string>{"a_off", "a_ascending", "a_descending"},
            std::vector<std::string>{"off", "ascending", "descending"}, 0));
        entities_.push_back(std::make_unique<SwitchEntity>("CentralCorridor/Lighting", cp + "Lighting_", "lighting"));
        entities_.push_back(std::make_unique<DoorEntity>("CentralCorridor/MainDoor", cp + "MainDoor_"));
        entities_.push_back(std::make_unique<SelectorEntity>(
            "CentralCorridor/Overpressure", cp + "Overpressure_", "overpressure",
            std::vector<std::string>{"a_off", "a_left", "a_right"},
            std::vector<std::string>{"off", "left", "right"}, 0));
    }

    if (cfg_.shared_systems) {
        entities_.push_back(
            std::make_unique<BroadcastSyncEntity>("BroadcastSync", "M_M_HW_BroadcastSync_", cfg_.broadcast_sync_period));
        entities_.push_back(std::make_unique<BarrierEntity>("EmergencyPassage", "M_M_HW_EmergencyPassage_",
                                                            cfg_.emergency_passage, nullptr, 0.0));
        for (const char *c : {"fire", "clean", "dirty"}) {
            auto id = cellar_entity_id(c);
            entities_.push_back(std::make_unique<CellarEntity>(id, "M_M_HW_" + id + "_", cfg_.cellars.at(c)));
        }
    }

    for (const auto &b : cfg_.standalone_barriers)
        entities_.push_back(std::make_unique<BarrierEntity>(b.id, b.prefix, b.barrier, nullptr, 0.0));

    for (std::size_t i = 0; i < entities_.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (entities_[i]->id() == entities_[j]->id())
                throw Error(ErrorCode::ConfigError, "duplicate entity id " + entities_[i]->id());

    for (auto &e : entities_)
        e->compute_sensors(*this);
    rebuild_stop_zones();
}

inline void World::rebuild_stop_zones() {
    for (auto &l : lanes_)
        l.zones.clear();
    for (const auto &e : entities_) {
        if (auto *b = dynamic_cast<const BarrierEntity *>(e.get())) {
            for (auto &l : lanes_) {
                const std::string prefix = "TrafficTube_" + std::to_string(l.tube) + "/BoomBarrier_" +
                                           std::to_string(l.index + 1);
                if (b->id() != prefix)
                    continue;
                bool active = !b->barrier().motion().opened;
                auto [lo, hi] = b->obstacle_zone();
                l.zones.push_back({lo, active, 1});
                l.zones.push_back({hi, active, -1});
            }
        } else if (auto *tl = dynamic_cast<const TrafficLightEntity *>(e.get())) {
            for (auto &l : lanes_) {
                const std::string prefix = "TrafficTube_" + std::to_string(l.tube) + "/TrafficLight_" +
                                           std::to_string(l.index + 1);
                if (tl->id() == prefix)
                    l.zones.push_back({l.layout.stop_line, tl->light() == TrafficLightEntity::Red, 1});
            }
        }
    }
}

inline bool World::try_special_spawn(Lane &lane, VehicleKind k) {
    const auto &p = cfg_.params(k);
    const auto &lay = lane.layout;
    if (k == VehicleKind::WrongWay) {
        if (!region_clear(lane, lay.length - cfg_.min_spawn_dist, lay.length + p.length))
            return false;
        lane.vehicles.push_back(make_vehicle(k, lay.length, -1));
    } else if (k == VehicleKind::Stationary) {
        double s = cfg_.stationary_position;
        if (!region_clear(lane, s - p.length - max_sense_range_, s + cfg_.min_spawn_dist))
            return false;
        lane.vehicles.push_back(make_vehicle(k, s, 1));
    } else {
        if (!region_clear(lane, lay.spawner - p.length, lay.spawner + cfg_.min_spawn_dist))
            return false;
        lane.vehicles.push_back(make_vehicle(k, lay.spawner, 1));
    }
    spawns_.push_back({sim_time(), lane.tube, lane.index, k, lane.vehicles.back().id, false});
    return true;
}

inline void World::spawn_phase() {
    for (auto &lane : lanes_) {
        std::vector<VehicleKind> still;
        for (auto k : lane.pending)
            if (!try_special_spawn(lane, k))
                still.push_back(k);
        lane.pending = std::move(still);

        const auto &lay = lane.layout;
        bool gate = region_clear(lane, lay.spawner, lay.spawner + lane.spawner.min_spawn_dist);
        if (auto k = lane.spawner.tick(gate, cfg_.tick_rate, rng_)) {
            lane.vehicles.push_back(make_vehicle(*k, lay.spawner, 1));
            lane.spawner.last_spawned = lane.vehicles.back().id;
            spawns_.push_back({sim_time(), lane.tube, lane.index, *k, lane.vehicles.back().id, true});
        }
    }
}

inline void World::vehicle_phase() {
    const double dt = this->dt();
    for (auto &lane : lanes_) {
        std::vector<char> blocked(lane.vehicles.size());
        for (std::size_t i = 0; i < lane.vehicles.size(); ++i)
            blocked[i] = vehicle_blocked(lane.vehicles[i], lane.zones, lane.vehicles);
        for (std::size_t i = 0; i < lane.vehicles.size(); ++i)
            vehicle_tick(lane.vehicles[i], blocked[i] != 0, dt);
        const double end = lane.layout.length;
        std::erase_if(lane.vehicles, [&](const Vehicle &v) { return v.direction > 0 ? v.s >= end : v.s <= 0.0; });
    }
}

inline void World::step() {
    ++tick_;
    spawn_phase();
    rebuild_stop_zones();
    vehicle_phase();
    const double dt = this->dt();
    for (auto &e : entities_) {
        bool was = e->warning();
        e->update(*this, dt);
        if (e->warning() && !was)
            log_event(e->id(), "actuator_conflict");
    }
    for (auto &e : entities_)
        e->compute_sensors(*this);
    for (auto &e : entities_)
        e->publish(sim_time());
}

inline void World::check(const PlantCommand &c) const {
    using T = PlantCommand::Type;
    switch (c.type) {
    case T::SetSmoke:
        if (!has_tube(c.tube))
            throw Error(ErrorCode::ScenarioError, "no tube " + std::to_string(c.tube));
        break;
    case T::Spawn: (void)lane_index(c.tube, c.lane); break;
    case T::FillCellar:
        (void)entity<CellarEntity>(cellar_entity_id(c.target));
        if (c.value < 0)
            throw Error(ErrorCode::ScenarioError, "inflow must be non-negative");
        break;
    case T::Toggle: {
        auto slash = c.target.rfind('/');
        if (slash == std::string::npos)
            throw Error(ErrorCode::ScenarioError, "toggle target must be <entity>/<element>");
        auto *e = find_entity(std::string_view(c.target).substr(0, slash));
        if (!e)
            throw Error(ErrorCode::ScenarioError, "no entity " + c.target.substr(0, slash));
        auto el = c.target.substr(slash + 1);
        auto cl = e->clickable();
        if (std::find(cl.begin(), cl.end(), el) == cl.end())
            throw Error(ErrorCode::ScenarioError, "entity " + e->id() + " has no clickable element '" + el + "'");
        break;
    }
    case T::Traffic:
    case T::SetLightIntensity:
    case T::DeleteTraffic: break;
    }
}

inline void World::apply(const PlantCommand &c) {
    using T = PlantCommand::Type;
    check(c);
    switch (c.type) {
    case T::SetSmoke:
        if (!has_tube(c.tube))
            throw Error(ErrorCode::ScenarioError, "no tube " + std::to_string(c.tube));
        smoke_.at(static_cast<std::size_t>(c.tube)) = c.level;
        break;
    case T::Traffic:
        traffic_ = c.on;
        for (auto &l : lanes_)
            l.spawner.enabled = c.on;
        break;
    case T::Spawn: lane(c.tube, c.lane).pending.push_back(c.kind); break;
    case T::FillCellar: entity<CellarEntity>(cellar_entity_id(c.target)).cellar().inflow = c.value; break;
    case T::SetLightIntensity: light_intensity_ = c.value; break;
    case T::Toggle: {
        auto slash = c.target.rfind('/');
        if (slash == std::string::npos)
            throw Error(ErrorCode::ScenarioError, "toggle target must be <entity>/<element>");
        auto *e = find_entity(std::string_view(c.target).substr(0, slash));
        if (!e)
            throw Error(ErrorCode::ScenarioError, "no entity " + c.target.substr(0, slash));
        if (!e->toggle(*this, std::string_view(c.target).substr(slash + 1)))
            throw Error(ErrorCode::ScenarioError, "entity " + e->id() + " has no clickable element '" +
                                                      c.target.substr(slash + 1) + "'");
        break;
    }
    case T::DeleteTraffic:
        for (auto &l : lanes_) {
            l.vehicles.clear();
            l.pending.clear();
        }
        break;
    }
}

inline nlohmann::json World::snapshot(std::size_t event_tail) const {
    using nlohmann::json;
    json j;
    j["time"] = sim_time();
    j["tick"] = tick_;
    j["traffic"] = traffic_;
    j["light_intensity"] = light_intensity_;
    j["lanes"] = json::array();
    for (const auto &l : lanes_) {
        json lj{{"tube", l.tube},
                {"index", l.index},
                {"length", l.layout.length},
                {"tunnel", {l.layout.tunnel_start, l.layout.tunnel_end}},
                {"fixtures",
                 {{"spawner", l.layout.spawner},
                  {"beam", l.layout.beam},
                  {"stop_line", l.layout.stop_line},
                  {"barrier", l.layout.barrier},
                  {"destroyer", l.layout.length}}},
                {"vehicles", json::array()}};
        for (const auto &v : l.vehicles)
            lj["vehicles"].push_back({{"id", v.id},
                                      {"kind", std::string(to_string(v.kind))},
                                      {"s", v.s},
                                      {"speed", v.speed},
                                      {"length", v.params.length},
                                      {"height", v.params.height},
                                      {"direction", v.direction}});
        j["lanes"].push_back(std::move(lj));
    }
    j["tubes"] = json::array();
    for (int t : cfg_.tubes)
        j["tubes"].push_back({{"id", t}, {"smoke_level", smoke_level(t)}});
    j["entities"] = json::array();
    for (const auto &e : entities_) {
        json ej = e->state();
        ej["id"] = e->id();
        ej["type"] = e->type();
        ej["warning"] = e->warning();
        j["entities"].push_back(std::move(ej));
    }
    j["events"] = json::array();
    std::size_t from = events_.size() > event_tail ? events_.size() - event_tail : 0;
    for (std::size_t i = from; i < events_.size(); ++i)
        j["events"].push_back({{"time", events_[i].time}, {"channel", events_[i].channel}, {"kind", events_[i].kind}});
    return j;
}

} // namespace tunneltwin::plant
