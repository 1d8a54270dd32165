#pragma once

// In-memory registry of named Boolean PLC points.
//
// Each signal owns a latch (value, time of last flip, flip counter). Writes
// are change-guarded: only a flip bumps the counter and notifies subscribers,
// mirroring the BoolToggle/onSignalChanged pattern of the original plugin.

#include <tunneltwin/error.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tunneltwin {

enum class Direction { Input, Output };
enum class SignalKind { Sensor, Actuator, Button };

inline std::string_view to_string(Direction d) { return d == Direction::Input ? "IN" : "OUT"; }

inline std::string_view to_string(SignalKind k) {
    switch (k) {
    case SignalKind::Sensor: return "sensor";
    case SignalKind::Actuator: return "actuator";
    case SignalKind::Button: return "button";
    }
    return "?";
}

struct SignalDef {
    std::string name;
    Direction direction = Direction::Input;
    std::string group; // empty: derived from the name on registration
    SignalKind kind = SignalKind::Sensor;

    friend bool operator==(const SignalDef &, const SignalDef &) = default;
};

struct SignalLatch {
    bool value = false;
    double last_changed = 0.0;
    std::uint64_t seq = 0;
};

struct ChangeEvent {
    std::string name;
    bool value;
    double time;
    std::uint64_t seq;
    std::size_t handle;
};

using SignalHandle = std::size_t;

// ---------------------------------------------------------------------------
// Naming helpers
// ---------------------------------------------------------------------------

inline constexpr std::string_view kIoNamePlaceholder = "{{IO_NAME}}";

/// Address template such as "MAIN.state0.{{IO_NAME}}".
class NamingRule {
  public:
    explicit NamingRule(std::string tmpl) : template_(std::move(tmpl)) {
        auto first = template_.find(kIoNamePlaceholder);
        if (first == std::string::npos)
            throw Error(ErrorCode::BadTemplate, "no " + std::string(kIoNamePlaceholder) + " in '" + template_ + "'");
        if (template_.find(kIoNamePlaceholder, first + 1) != std::string::npos)
            throw Error(ErrorCode::BadTemplate, "placeholder appears more than once in '" + template_ + "'");
        pos_ = first;
    }

    [[nodiscard]] std::string apply(std::string_view io_name) const {
        std::string out = template_.substr(0, pos_);
        out += io_name;
        out += template_.substr(pos_ + kIoNamePlaceholder.size());
        return out;
    }

    [[nodiscard]] const std::string &text() const { return template_; }

  private:
    std::string template_;
    std::size_t pos_ = 0;
};

inline std::string resolve_address(std::string_view name, const NamingRule &rule) { return rule.apply(name); }

inline const NamingRule &default_output_rule() {
    static const NamingRule r{"MAIN.state0.{{IO_NAME}}"};
    return r;
}

inline const NamingRule &default_input_rule() {
    static const NamingRule r{"INPUTS.{{IO_NAME}}"};
    return r;
}

namespace detail {

inline std::string_view strip_prefix(std::string_view s, std::string_view p) {
    return s.substr(0, p.size()) == p ? s.substr(p.size()) : s;
}

/// Position of the last "_a_" / "_s_" / "_button" marker; npos if none.
inline std::size_t short_name_split(std::string_view body) {
    std::size_t best = std::string_view::npos;
    for (std::string_view marker : {"_a_", "_s_", "_button"}) {
        auto p = body.rfind(marker);
        if (p != std::string_view::npos && (best == std::string_view::npos || p > best))
            best = p;
    }
    return best;
}

inline std::string_view entity_body(std::string_view name) {
    auto body = strip_prefix(strip_prefix(name, "ivar_"), "dvar_");
    body = strip_prefix(body, "M_M_");
    return strip_prefix(body, "HW_");
}

} // namespace detail

/// Short, entity-local part of a PLC name: "..._BoomBarrier_1_a_open" -> "a_open".
inline std::string short_name(std::string_view name) {
    auto body = detail::entity_body(name);
    auto split = detail::short_name_split(body);
    if (split == std::string_view::npos)
        return std::string(body);
    return std::string(body.substr(split + 1));
}

/// Entity path encoded positionally in a PLC name:
/// "dvar_M_M_HW_TrafficTube_1_BoomBarrier_2_a_open" -> "TrafficTube_1/BoomBarrier_2".
/// Numeric tokens stay attached to the word before them.
inline std::string derive_group(std::string_view name) {
    auto body = detail::entity_body(name);
    auto split = detail::short_name_split(body);
    if (split == std::string_view::npos || split == 0)
        return {};
    auto path = body.substr(0, split);

    std::string out;
    std::size_t start = 0;
    while (start <= path.size()) {
        auto end = path.find('_', start);
        auto tok = path.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        bool numeric = !tok.empty() && tok.find_first_not_of("0123456789") == std::string_view::npos;
        if (!out.empty())
            out += numeric ? '_' : '/';
        out += tok;
        if (end == std::string_view::npos)
            break;
        start = end + 1;
    }
    return out;
}

/// Checks the direction/kind/prefix invariants of a definition.
inline void validate_def(const SignalDef &d) {
    if (d.name.empty() || d.name.find_first_of(" \t\r\n") != std::string::npos)
        throw Error(ErrorCode::ConfigError, "signal name must be non-empty without whitespace: '" + d.name + "'");
    if (d.kind == SignalKind::Actuator && d.direction != Direction::Output)
        throw Error(ErrorCode::ConfigError, d.name + ": actuators are PLC outputs");
    if (d.kind == SignalKind::Sensor && d.direction != Direction::Input)
        throw Error(ErrorCode::ConfigError, d.name + ": sensors are PLC inputs");
    std::string_view prefix = d.direction == Direction::Input ? "ivar" : "dvar";
    if (d.name.rfind(prefix, 0) != 0)
        throw Error(ErrorCode::ConfigError, d.name + ": expected prefix '" + std::string(prefix) + "'");
}

// ---------------------------------------------------------------------------
// SignalBus
// ---------------------------------------------------------------------------

/// Shared between the plant flow (writes Inputs) and the controller/gateway
/// flow (writes Outputs). Subscribers run on the writer's thread while the
/// bus lock is held, so they observe events in write order and must not block.
class SignalBus {
  public:
    using Subscriber = std::function<void(const ChangeEvent &)>;
    using SubscriptionId = std::uint64_t;

    SignalHandle register_signal(SignalDef def) {
        validate_def(def);
        if (def.group.empty())
            def.group = derive_group(def.name);
        std::lock_guard lock(mutex_);
        if (index_.contains(def.name))
            throw Error(ErrorCode::DuplicateName, def.name);
        SignalHandle h = entries_.size();
        index_.emplace(def.name, h);
        groups_[def.group].push_back(h);
        entries_.push_back(Entry{std::move(def), {}});
        return h;
    }

    [[nodiscard]] std::optional<SignalHandle> find(std::string_view name) const {
        std::lock_guard lock(mutex_);
        auto it = index_.find(std::string(name));
        if (it == index_.end())
            return std::nullopt;
        return it->second;
    }

    [[nodiscard]] bool contains(std::string_view name) const { return find(name).has_value(); }

    [[nodiscard]] SignalHandle handle(std::string_view name) const {
        auto h = find(name);
        if (!h)
            throw Error(ErrorCode::UnknownSignal, std::string(name));
        return *h;
    }

    /// Returns true iff the stored value flipped.
    bool write(SignalHandle h, bool v, double t) {
        std::lock_guard lock(mutex_);
        auto &e = entries_.at(h);
        if (e.latch.value == v)
            return false;
        e.latch.value = v;
        e.latch.last_changed = t;
        ++e.latch.seq;
        ChangeEvent ev{e.def.name, v, t, e.latch.seq, h};
        for (auto &[id, fn] : subscribers_)
            fn(ev);
        return true;
    }

    bool write(std::string_view name, bool v, double t) { return write(handle(name), v, t); }

    [[nodiscard]] bool read(SignalHandle h) const {
        std::lock_guard lock(mutex_);
        return entries_.at(h).latch.value;
    }

    [[nodiscard]] bool read(std::string_view name) const { return read(handle(name)); }

    [[nodiscard]] SignalLatch latch(std::string_view name) const {
        auto h = handle(name);
        std::lock_guard lock(mutex_);
        return entries_[h].latch;
    }

    [[nodiscard]] const SignalDef &def(SignalHandle h) const {
        std::lock_guard lock(mutex_);
        return entries_.at(h).def;
    }

    [[nodiscard]] std::vector<SignalDef> defs() const {
        std::lock_guard lock(mutex_);
        std::vector<SignalDef> out;
        out.reserve(entries_.size());
        for (const auto &e : entries_)
            out.push_back(e.def);
        return out;
    }

    [[nodiscard]] std::size_t size() const {
        std::lock_guard lock(mutex_);
        return entries_.size();
    }

    [[nodiscard]] bool has_group(std::string_view group) const {
        std::lock_guard lock(mutex_);
        return groups_.contains(std::string(group));
    }

    /// Output signals of `group` whose short name starts with 'a' and are true.
    [[nodiscard]] int count_true_actuators(std::string_view group) const {
        std::lock_guard lock(mutex_);
        auto it = groups_.find(std::string(group));
        if (it == groups_.end())
            throw Error(ErrorCode::UnknownGroup, std::string(group));
        int n = 0;
        for (auto h : it->second) {
            const auto &e = entries_[h];
            if (e.def.direction == Direction::Output && e.latch.value && short_name(e.def.name).starts_with('a'))
                ++n;
        }
        return n;
    }

    /// Point-in-time copy, name-sorted.
    [[nodiscard]] std::map<std::string, bool> snapshot() const {
        std::lock_guard lock(mutex_);
        std::map<std::string, bool> out;
        for (const auto &e : entries_)
            out.emplace(e.def.name, e.latch.value);
        return out;
    }

    SubscriptionId subscribe(Subscriber fn) {
        std::lock_guard lock(mutex_);
        auto id = next_subscription_++;
        subscribers_.emplace(id, std::move(fn));
        return id;
    }

    void unsubscribe(SubscriptionId id) {
        std::lock_guard lock(mutex_);
        subscribers_.erase(id);
    }

  private:
    struct Entry {
        SignalDef def;
        SignalLatch latch;
    };

    mutable std::recursive_mutex mutex_;
    std::vector<Entry> entries_;
    std::unordered_map<std::string, SignalHandle> index_;
    std::map<std::string, std::vector<SignalHandle>> groups_;
    std::map<SubscriptionId, Subscriber> subscribers_;
    SubscriptionId next_subscription_ = 1;
};

/// RAII subscription.
class ScopedSubscription {
  public:
    ScopedSubscription(SignalBus &bus, SignalBus::Subscriber fn) : bus_(&bus), id_(bus.subscribe(std::move(fn))) {}
    ScopedSubscription(const ScopedSubscription &) = delete;
    ScopedSubscription &operator=(const ScopedSubscription &) = delete;
    ~ScopedSubscription() {
        if (bus_)
            bus_->unsubscribe(id_);
    }

  private:
    SignalBus *bus_;
    SignalBus::SubscriptionId id_;
};

} // namespace tunneltwin
