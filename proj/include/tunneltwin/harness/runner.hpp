#pragma once

// Scenario runner: couples a World to a PLC link on one tick loop and records
// every bus flip. Per tick k at t = k / rate:
//
//   1. end press pulses due at k, then apply scenario events and queued
//      operator commands due at k;
//   2. sync the PLC link with the plant's changes and apply its writes at t;
//   3. step the world (sensors published at t + dt);
//   4. evaluate pending expects.
//
// The loop is the single source of truth; other threads (WebSocket server)
// interact only through enqueue() and state_frame().

#include <tunneltwin/error.hpp>
#include <tunneltwin/gateway/link.hpp>
#include <tunneltwin/gts.hpp>
#include <tunneltwin/harness/scenario.hpp>
#include <tunneltwin/harness/trace.hpp>
#include <tunneltwin/plant/world.hpp>
#include <tunneltwin/plc.hpp>
#include <tunneltwin/policy.hpp>
#include <tunneltwin/signal_bus.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace tunneltwin::harness {

inline constexpr double kPressSeconds = 0.05;
inline constexpr double kDefaultDuration = 60;

enum ExitCode : int { kExitPass = 0, kExitExpectFailed = 1, kExitLivelock = 2, kExitConfigError = 3 };

/// Ticks a press stays true: never shorter than kPressSeconds.
inline std::int64_t press_ticks(double rate) {
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(kPressSeconds * rate - 1e-9)));
}

/// Tick at which an event scheduled for `at` seconds applies (first tick not
/// before it).
inline std::int64_t event_tick(double at, double rate) {
    return static_cast<std::int64_t>(std::ceil(at * rate - 1e-9));
}

/// Signal catalog for a world plus controller when no policy file is given:
/// the world's signals, then controller points the world does not have.
inline std::vector<SignalDef> merged_signal_defs(const std::vector<SignalDef> &world, const GtsSpec &spec) {
    std::vector<SignalDef> out = world;
    std::set<std::string> seen;
    for (const auto &d : world)
        seen.insert(d.name);
    for (auto d : spec_signal_defs(spec))
        if (seen.insert(d.name).second) {
            d.kind = infer_kind(d.name);
            out.push_back(std::move(d));
        }
    return out;
}

inline Policy derive_policy(const plant::WorldConfig &cfg, const GtsSpec &spec) {
    plant::World w(cfg);
    return make_policy(merged_signal_defs(w.signal_defs(), spec));
}

/// TUNNELTWIN_SEED, when set.
inline std::optional<std::uint64_t> seed_from_env() {
    const char *s = std::getenv("TUNNELTWIN_SEED");
    if (!s || !*s)
        return std::nullopt;
    plant::WorldConfig c;
    plant::apply_env_overrides(c);
    return c.seed;
}

struct RunSetup {
    plant::WorldConfig world;
    std::string spec_text;
    std::string scenario_text;
    std::optional<Policy> policy;            // derived from world + spec when absent
    std::optional<double> duration;          // overrides the scenario's; <= 0 runs until stopped
    std::optional<std::uint64_t> seed;       // overrides scenario and world seeds
    gateway::ChannelFactory plc;             // remote PLC when set, in-process otherwise
    SimMicros plc_cycle = PlcRuntime::kDefaultCycle;
    double reconnect_interval = 1.0;         // sim seconds between reconnect attempts
    bool realtime = false;
};

class Runner {
  public:
    explicit Runner(RunSetup s) : setup_(std::move(s)) {
        spec_ = std::make_shared<const GtsSpec>(parse_gts(setup_.spec_text));
        scenario_ = parse_scenario(setup_.scenario_text);
        auto cfg = setup_.world;
        if (scenario_.seed)
            cfg.seed = *scenario_.seed;
        if (setup_.seed)
            cfg.seed = *setup_.seed;
        world_ = std::make_unique<plant::World>(cfg);
        duration_ = setup_.duration ? *setup_.duration : scenario_.duration.value_or(kDefaultDuration);
        total_ticks_ = duration_ > 0 ? std::llround(duration_ * cfg.tick_rate) : -1;
        press_ticks_ = press_ticks(cfg.tick_rate);

        policy_ = setup_.policy ? *setup_.policy : make_policy(merged_signal_defs(world_->signal_defs(), *spec_));
        for (const auto &d : policy_signal_defs(policy_))
            bus_.register_signal(d);
        std::vector<std::string> missing;
        for (const auto &d : world_->signal_defs())
            if (!bus_.contains(d.name))
                missing.push_back(d.name);
        if (!missing.empty()) {
            std::string msg = "world signals absent from the policy:";
            for (const auto &m : missing)
                msg += " " + m;
            throw Error(ErrorCode::PolicyMismatch, msg);
        }

        for (const auto &e : scenario_.events)
            validate(e.action, e.line);

        if (setup_.plc) {
            link_ = std::make_unique<gateway::RemoteLink>(setup_.plc, policy_);
        } else {
            plc_ = std::make_unique<PlcRuntime>(spec_, policy_signal_defs(policy_), setup_.plc_cycle);
            link_ = std::make_unique<gateway::InprocLink>(*plc_);
        }
    }

    Runner(const Runner &) = delete;
    Runner &operator=(const Runner &) = delete;
    ~Runner() {
        if (link_)
            link_->disconnect();
    }

    /// Publishes the initial plant image and connects the PLC. step() calls
    /// it on first use.
    void start() {
        std::lock_guard lk(m_);
        start_locked();
    }

    /// Runs one tick; false once the run is over.
    bool step() {
        std::lock_guard lk(m_);
        start_locked();
        if (finished_)
            return false;
        const std::int64_t k = world_->tick_count();
        const double t = world_->sim_time();

        for (auto it = pulses_.begin(); it != pulses_.end();) {
            if (it->second <= k) {
                bus_.write(it->first, false, t);
                it = pulses_.erase(it);
            } else {
                ++it;
            }
        }
        const double rate = world_->tick_rate();
        while (next_event_ < scenario_.events.size() && event_tick(scenario_.events[next_event_].at, rate) <= k)
            perform(scenario_.events[next_event_++].action, t, k);
        auto queued = std::move(queue_);
        queue_.clear();
        for (const auto &a : queued)
            perform(a, t, k);

        sync_link(t);
        if (fault_) {
            finished_ = true;
            return false;
        }
        world_->step();
        check_expects(world_->sim_time());
        if (total_ticks_ >= 0 && world_->tick_count() >= total_ticks_)
            finished_ = true;
        return !finished_;
    }

    /// Runs to the end (or until request_stop()) and returns the trace.
    Trace run() {
        start();
        auto wall0 = std::chrono::steady_clock::now();
        while (!stop_.load() && step()) {
            if (setup_.realtime) {
                std::this_thread::sleep_until(wall0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                          std::chrono::duration<double>(sim_time())));
            }
        }
        return finish();
    }

    void request_stop() { stop_ = true; }

    /// Closes pending expects as failed, disconnects, and returns the trace.
    Trace finish() {
        std::lock_guard lk(m_);
        start_locked();
        finished_ = true;
        if (!closed_) {
            closed_ = true;
            for (const auto &p : expects_)
                trace_.verdicts.push_back({false, world_->sim_time(), p.text});
            expects_.clear();
            link_->disconnect();
            trace_.meta = meta();
            trace_.exit_code = fault_ ? kExitLivelock : (any_failed() ? kExitExpectFailed : kExitPass);
        }
        return trace_;
    }

    /// Queues an operator command for the next tick boundary; returns the
    /// simulation time it applies at. Throws on invalid commands.
    double enqueue(const ScenarioAction &a) {
        std::lock_guard lk(m_);
        if (finished_)
            throw Error(ErrorCode::ScenarioError, "the run has ended");
        validate(a, 0);
        queue_.push_back(a);
        return world_->sim_time();
    }

    /// JSON state frame for operator clients.
    [[nodiscard]] nlohmann::json state_frame(std::size_t event_tail = 20) const {
        std::lock_guard lk(m_);
        nlohmann::json sig = nlohmann::json::object();
        for (const auto &[n, v] : bus_.snapshot())
            sig[n] = v ? 1 : 0;
        return {{"type", "state"},
                {"time", world_->sim_time()},
                {"tick", world_->tick_count()},
                {"world", world_->snapshot(event_tail)},
                {"signals", std::move(sig)},
                {"plc", {{"connected", link_->connected()}, {"halted", fault_.has_value()}}},
                {"done", finished_}};
    }

    /// Resolves a signal name or a unique "_<suffix>" of one.
    [[nodiscard]] std::string resolve(const std::string &name) const {
        if (bus_.contains(name))
            return name;
        std::vector<std::string> hits;
        for (const auto &d : bus_.defs())
            if (d.name.size() > name.size() && d.name.ends_with(name) && d.name[d.name.size() - name.size() - 1] == '_')
                hits.push_back(d.name);
        if (hits.size() == 1)
            return hits[0];
        if (hits.empty())
            throw Error(ErrorCode::UnknownSignal, name);
        std::string msg = "'" + name + "' is ambiguous:";
        for (const auto &h : hits)
            msg += " " + h;
        throw Error(ErrorCode::ScenarioError, msg);
    }

    [[nodiscard]] SignalBus &bus() { return bus_; }
    [[nodiscard]] plant::World &world() { return *world_; }
    [[nodiscard]] const Policy &policy() const { return policy_; }
    [[nodiscard]] const Scenario &scenario() const { return scenario_; }
    [[nodiscard]] PlcRuntime *plc() { return plc_.get(); }
    [[nodiscard]] double duration() const { return duration_; }
    [[nodiscard]] double sim_time() const {
        std::lock_guard lk(m_);
        return world_->sim_time();
    }
    [[nodiscard]] bool done() const {
        std::lock_guard lk(m_);
        return finished_;
    }
    [[nodiscard]] bool plc_connected() const {
        std::lock_guard lk(m_);
        return link_->connected();
    }
    /// Trace so far (rows and verdicts; meta and exit code are set by finish()).
    [[nodiscard]] Trace trace() const {
        std::lock_guard lk(m_);
        return trace_;
    }

  private:
    struct PendingExpect {
        SignalHandle handle;
        bool value;
        double deadline;
        std::string text;
    };

    void start_locked() {
        if (started_)
            return;
        started_ = true;
        sub_.emplace(bus_, [this](const ChangeEvent &e) {
            trace_.rows.push_back({e.time, e.name, e.value});
            if (!applying_plc_ && gateway::sim_owned(bus_.def(e.handle)))
                changes_.push_back({e.name, e.value});
        });
        world_->attach(bus_);
        link_->connect(sim_image());
        link_up_ = true;
        changes_.clear();
    }

    std::vector<SignalWrite> sim_image() const {
        std::vector<SignalWrite> out;
        for (const auto &d : bus_.defs())
            if (gateway::sim_owned(d))
                out.push_back({d.name, bus_.read(d.name)});
        return out;
    }

    void validate(const ScenarioAction &a, int line) const {
        auto where = [&] { return line > 0 ? "line " + std::to_string(line) + ": " : std::string(); };
        if (auto *p = std::get_if<PressAction>(&a)) {
            auto n = resolve(p->signal);
            if (bus_.def(bus_.handle(n)).kind != SignalKind::Button)
                throw Error(ErrorCode::NotAButton, where() + n + " is not a button");
        } else if (auto *e = std::get_if<ExpectAction>(&a)) {
            (void)resolve(e->signal);
        } else {
            try {
                world_->check(std::get<plant::PlantCommand>(a));
            } catch (const Error &err) {
                throw Error(err.code(), where() + err.what());
            }
        }
    }

    void perform(const ScenarioAction &a, double t, std::int64_t k) {
        if (auto *p = std::get_if<PressAction>(&a)) {
            auto h = bus_.handle(resolve(p->signal));
            bus_.write(h, true, t);
            auto &end = pulses_[h];
            end = std::max(end, k + press_ticks_);
        } else if (auto *e = std::get_if<ExpectAction>(&a)) {
            auto h = bus_.handle(resolve(e->signal));
            PendingExpect pe{h, e->value, t + e->within, format_action(a)};
            if (bus_.read(h) == pe.value)
                trace_.verdicts.push_back({true, t, pe.text});
            else
                expects_.push_back(std::move(pe));
        } else {
            world_->apply(std::get<plant::PlantCommand>(a));
        }
    }

    void sync_link(double t) {
        if (!link_->connected() && link_up_) {
            // The channel closed between syncs.
            link_lost(t, "channel closed");
            return;
        }
        if (!link_->connected()) {
            if (!setup_.plc || t + 1e-9 < next_reconnect_)
                return;
            try {
                link_->connect(sim_image());
                changes_.clear();
                link_up_ = true;
                trace_.notes.push_back(format_time(t) + " plc connected");
            } catch (const Error &e) {
                if (e.code() != ErrorCode::ConnectionLost)
                    throw;
                next_reconnect_ = t + setup_.reconnect_interval;
                return;
            }
        }
        gateway::SyncResult r;
        try {
            r = link_->sync(to_micros(t), changes_);
        } catch (const Error &e) {
            if (e.code() != ErrorCode::ConnectionLost)
                throw;
            link_lost(t, e.what());
            return;
        }
        changes_.clear();
        applying_plc_ = true;
        for (const auto &w : r.writes)
            bus_.write(w.name, w.value, t);
        applying_plc_ = false;
        if (r.fault)
            fault_ = TraceFault{r.fault->edge, r.fault->cap, t};
        trace_.fault = fault_;
    }

    // Outputs stay frozen at their last values; the plant keeps running.
    void link_lost(double t, const std::string &why) {
        link_up_ = false;
        link_->disconnect();
        trace_.notes.push_back(format_time(t) + " plc connection lost: " + why);
        changes_.clear();
        next_reconnect_ = t + setup_.reconnect_interval;
    }

    void check_expects(double now) {
        std::erase_if(expects_, [&](const PendingExpect &p) {
            if (bus_.read(p.handle) == p.value) {
                trace_.verdicts.push_back({true, now, p.text});
                return true;
            }
            if (now > p.deadline + 1e-9) {
                trace_.verdicts.push_back({false, now, p.text});
                return true;
            }
            return false;
        });
    }

    [[nodiscard]] bool any_failed() const {
        return std::any_of(trace_.verdicts.begin(), trace_.verdicts.end(), [](const Verdict &v) { return !v.pass; });
    }

    [[nodiscard]] nlohmann::json meta() const {
        return {{"world", plant::world_config_to_json(world_->config())},
                {"spec", setup_.spec_text},
                {"scenario", setup_.scenario_text},
                {"policy", setup_.policy ? nlohmann::json(emit_policy(*setup_.policy)) : nlohmann::json(nullptr)},
                {"duration", duration_},
                {"plc_cycle_us", setup_.plc_cycle}};
    }

    RunSetup setup_;
    std::shared_ptr<const GtsSpec> spec_;
    Scenario scenario_;
    std::unique_ptr<plant::World> world_;
    double duration_ = 0;
    std::int64_t total_ticks_ = 0;
    std::int64_t press_ticks_ = 1;
    Policy policy_;
    SignalBus bus_;
    std::unique_ptr<PlcRuntime> plc_;
    std::unique_ptr<gateway::PlcLink> link_;

    mutable std::mutex m_;
    bool started_ = false;
    bool finished_ = false;
    bool closed_ = false;
    std::atomic<bool> stop_{false};
    bool applying_plc_ = false;
    std::size_t next_event_ = 0;
    std::vector<ScenarioAction> queue_;
    std::map<SignalHandle, std::int64_t> pulses_;
    std::vector<PendingExpect> expects_;
    std::vector<SignalWrite> changes_;
    double next_reconnect_ = 0;
    bool link_up_ = false;
    std::optional<TraceFault> fault_;
    Trace trace_;
    std::optional<ScopedSubscription> sub_;
};

/// Rebuilds the run recorded in a trace header.
inline RunSetup setup_from_meta(const nlohmann::json &meta) {
    RunSetup s;
    try {
        s.world = plant::world_config_from_json(meta.at("world"));
        s.spec_text = meta.at("spec").get<std::string>();
        s.scenario_text = meta.at("scenario").get<std::string>();
        if (!meta.at("policy").is_null())
            s.policy = parse_policy(meta.at("policy").get<std::string>());
        s.duration = meta.at("duration").get<double>();
        s.plc_cycle = meta.at("plc_cycle_us").get<SimMicros>();
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::ConfigError, std::string("trace header incomplete: ") + e.what());
    }
    return s;
}

struct ReplayResult {
    bool identical = false;
    std::optional<std::size_t> first_difference; // 1-based line
    std::string replayed;
};

/// Re-runs a recorded trace in-process and compares the texts byte for byte.
inline ReplayResult replay(const std::string &recorded_text) {
    auto recorded = parse_trace(recorded_text);
    Runner r(setup_from_meta(recorded.meta));
    ReplayResult out;
    out.replayed = format_trace(r.run());
    out.first_difference = first_difference(recorded_text, out.replayed);
    out.identical = !out.first_difference;
    return out;
}

} // namespace tunneltwin::harness
