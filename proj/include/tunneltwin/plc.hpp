#pragma once

// Soft PLC: a guarded-transition controller scanned at a fixed cycle against
// its own signal image. Time is virtual (integer microseconds) and supplied
// by whoever drives the PLC, so runs are reproducible.

#include <tunneltwin/gts.hpp>
#include <tunneltwin/policy.hpp>
#include <tunneltwin/signal_bus.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tunneltwin {

using SimMicros = std::int64_t;

inline double to_seconds(SimMicros us) { return static_cast<double>(us) * 1e-6; }
inline SimMicros to_micros(double s) { return static_cast<SimMicros>(s * 1e6 + (s >= 0 ? 0.5 : -0.5)); }

/// Signal definitions implied by a controller when no policy is supplied:
/// every discrete variable is an actuator, every input a sensor (or a button
/// when its name says so).
inline std::vector<SignalDef> spec_signal_defs(const GtsSpec &spec) {
    std::vector<SignalDef> out;
    for (std::size_t d = 0; d < spec.discs.size(); ++d) {
        auto name = spec.disc_plc_name(static_cast<int>(d));
        out.push_back({name, Direction::Output, derive_group(name), SignalKind::Actuator});
    }
    for (std::size_t i = 0; i < spec.inputs.size(); ++i) {
        auto name = spec.input_plc_name(static_cast<int>(i));
        out.push_back({name, Direction::Input, derive_group(name), infer_kind(name)});
    }
    return out;
}

struct SignalWrite {
    std::string name;
    bool value;

    friend bool operator==(const SignalWrite &, const SignalWrite &) = default;
};

class PlcRuntime {
  public:
    static constexpr SimMicros kDefaultCycle = 10000;

    /// `defs`: the PLC's signal image (normally from the policy). Every
    /// controller input must be present; discrete variables whose PLC name is
    /// an Output in `defs` are published, the rest stay internal.
    PlcRuntime(std::shared_ptr<const GtsSpec> spec, std::vector<SignalDef> defs, SimMicros cycle = kDefaultCycle,
               int iteration_cap = kDefaultIterationCap)
        : controller_(spec, iteration_cap), cycle_(cycle) {
        if (cycle_ <= 0)
            throw Error(ErrorCode::ConfigError, "cycle period must be positive");
        for (auto &d : defs)
            image_.register_signal(std::move(d));

        std::vector<std::string> missing;
        for (const auto &n : controller_.input_names()) {
            auto h = image_.find(n);
            if (!h || image_.def(*h).direction != Direction::Input)
                missing.push_back(n);
            else
                input_handles_.push_back(*h);
        }
        if (!missing.empty()) {
            std::string msg = "controller inputs absent from the policy:";
            for (const auto &m : missing)
                msg += " " + m;
            throw Error(ErrorCode::PolicyMismatch, msg);
        }
        std::set<std::string> outs;
        for (const auto &n : controller_.output_names()) {
            auto h = image_.find(n);
            if (h && image_.def(*h).direction == Direction::Output) {
                outs.insert(n);
                output_handles_.emplace(n, *h);
            }
        }
        controller_.set_output_filter(outs);
        for (const auto &[n, v] : controller_.outputs())
            image_.write(output_handles_.at(n), v, 0.0);
        input_buffer_.assign(input_handles_.size(), 0);
    }

    PlcRuntime(std::shared_ptr<const GtsSpec> spec, SimMicros cycle = kDefaultCycle,
               int iteration_cap = kDefaultIterationCap)
        : PlcRuntime(spec, spec_signal_defs(*spec), cycle, iteration_cap) {}

    [[nodiscard]] SignalBus &image() { return image_; }
    [[nodiscard]] const SignalBus &image() const { return image_; }
    [[nodiscard]] const GtsController &controller() const { return controller_; }
    [[nodiscard]] SimMicros cycle() const { return cycle_; }
    [[nodiscard]] std::uint64_t cycles_run() const { return next_cycle_; }
    [[nodiscard]] SimMicros now() const { return now_; }
    [[nodiscard]] const std::optional<LivelockInfo> &livelock() const { return livelock_; }
    [[nodiscard]] bool halted() const { return livelock_.has_value(); }

    /// Applies an input written by the plant side. Unknown names are an error;
    /// writes to Output signals are ignored since the PLC owns them.
    void apply_input(const std::string &name, bool v) {
        auto h = image_.handle(name);
        if (image_.def(h).direction == Direction::Output && image_.def(h).kind != SignalKind::Button)
            return;
        image_.write(h, v, to_seconds(now_));
    }

    /// Runs every cycle due at or before `t` (cycle n is due at n*cycle).
    /// Calls `on_scan` after each scan with its report.
    void advance_to(SimMicros t, const std::function<void(SimMicros, const ScanReport &)> &on_scan = {}) {
        while (!halted() && static_cast<SimMicros>(next_cycle_) * cycle_ <= t) {
            now_ = static_cast<SimMicros>(next_cycle_) * cycle_;
            for (std::size_t i = 0; i < input_handles_.size(); ++i)
                input_buffer_[i] = image_.read(input_handles_[i]) ? 1 : 0;
            auto rep = controller_.scan_image(input_buffer_, to_seconds(cycle_));
            ++next_cycle_;
            if (!rep.outputs_changed.empty()) {
                auto values = controller_.outputs();
                for (const auto &n : rep.outputs_changed)
                    image_.write(output_handles_.at(n), values.at(n), to_seconds(now_));
            }
            if (rep.livelock)
                livelock_ = rep.livelock;
            if (on_scan)
                on_scan(now_, rep);
        }
        if (t > now_)
            now_ = t;
    }

    /// Output signals (by image order) with their current values.
    [[nodiscard]] std::vector<SignalWrite> output_image() const {
        std::vector<SignalWrite> out;
        for (const auto &d : image_.defs())
            if (d.direction == Direction::Output && d.kind != SignalKind::Button)
                out.push_back({d.name, image_.read(d.name)});
        return out;
    }

  private:
    GtsController controller_;
    SignalBus image_;
    SimMicros cycle_;
    std::uint64_t next_cycle_ = 0;
    SimMicros now_ = 0;
    std::vector<SignalHandle> input_handles_;
    std::map<std::string, SignalHandle> output_handles_;
    std::vector<char> input_buffer_;
    std::optional<LivelockInfo> livelock_;
};

/// Stand-alone cyclic execution against an input function of time; returns
/// one report per cycle and stops early on livelock.
inline std::vector<ScanReport> run_cyclic(GtsController &c,
                                          const std::function<std::map<std::string, bool>(double)> &inputs,
                                          double cycle_period, std::uint64_t cycles) {
    if (!(cycle_period > 0.0))
        throw Error(ErrorCode::ConfigError, "cycle period must be positive");
    std::vector<ScanReport> out;
    for (std::uint64_t k = 0; k < cycles; ++k) {
        out.push_back(c.scan(inputs(static_cast<double>(k) * cycle_period), cycle_period));
        if (out.back().livelock)
            break;
    }
    return out;
}

} // namespace tunneltwin
