#pragma once

// Scenario scripts. One directive per line; '#' starts a comment.
//
//   seed 7
//   duration 100
//   at 1.0 press ivar_M_M_GUI_button_close_tube1
//   at 2 spawn high_truck 1/0
//   at 2 expect s_detected == 1 within 30
//
// Any plant command (see plant/command.hpp) may follow "at <t>". Times are
// simulation seconds and must be non-decreasing.

#include <tunneltwin/error.hpp>
#include <tunneltwin/plant/command.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tunneltwin::harness {

struct PressAction {
    std::string signal;
    friend bool operator==(const PressAction &, const PressAction &) = default;
};

struct ExpectAction {
    std::string signal;
    bool value = true;
    double within = 0;
    friend bool operator==(const ExpectAction &, const ExpectAction &) = default;
};

using ScenarioAction = std::variant<PressAction, plant::PlantCommand, ExpectAction>;

struct ScenarioEvent {
    double at = 0;
    ScenarioAction action;
    int line = 0;
    friend bool operator==(const ScenarioEvent &a, const ScenarioEvent &b) {
        return a.at == b.at && a.action == b.action;
    }
};

struct Scenario {
    std::optional<std::uint64_t> seed;
    std::optional<double> duration;
    std::vector<ScenarioEvent> events;
    friend bool operator==(const Scenario &, const Scenario &) = default;
};

namespace scenario_detail {

inline std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    for (std::string w; in >> w;)
        out.push_back(w);
    return out;
}

[[noreturn]] inline void fail(int line, const std::string &msg) {
    throw Error(ErrorCode::ScenarioError, "line " + std::to_string(line) + ": " + msg);
}

inline double seconds(int line, const std::string &w, std::string_view what) {
    double v = 0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc{} || p != w.data() + w.size() || !std::isfinite(v))
        fail(line, std::string(what) + " is not a number: '" + w + "'");
    return v;
}

inline std::string fmt(double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
}

} // namespace scenario_detail

inline std::string format_action(const ScenarioAction &a) {
    using scenario_detail::fmt;
    if (auto *p = std::get_if<PressAction>(&a))
        return "press " + p->signal;
    if (auto *e = std::get_if<ExpectAction>(&a))
        return "expect " + e->signal + " == " + (e->value ? "1" : "0") + " within " + fmt(e->within);
    return plant::format_plant_command(std::get<plant::PlantCommand>(a));
}

/// Parses the command part of an "at" line (also used for operator commands).
inline ScenarioAction parse_action(std::string_view text, int line = 0) {
    using namespace scenario_detail;
    auto w = words(text);
    if (w.empty())
        fail(line, "missing command");
    if (w[0] == "press") {
        if (w.size() != 2)
            fail(line, "press takes one signal name");
        return PressAction{w[1]};
    }
    if (w[0] == "expect") {
        if (w.size() != 6 || w[2] != "==" || (w[3] != "0" && w[3] != "1") || w[4] != "within")
            fail(line, "expected 'expect <signal> == 0|1 within <seconds>'");
        double within = seconds(line, w[5], "expect window");
        if (within <= 0)
            fail(line, "expect window must be positive");
        return ExpectAction{w[1], w[3] == "1", within};
    }
    try {
        return plant::parse_plant_command(text);
    } catch (const Error &e) {
        fail(line, e.what());
    }
}

inline Scenario parse_scenario(std::string_view text) {
    using namespace scenario_detail;
    Scenario sc;
    std::istringstream in{std::string(text)};
    int n = 0;
    double last = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++n;
        auto hash = raw.find('#');
        std::string_view body = std::string_view(raw).substr(0, hash);
        auto w = words(body);
        if (w.empty())
            continue;
        if (w[0] == "seed") {
            std::uint64_t v = 0;
            auto [p, ec] = w.size() == 2 ? std::from_chars(w[1].data(), w[1].data() + w[1].size(), v)
                                         : std::from_chars_result{nullptr, std::errc::invalid_argument};
            if (ec != std::errc{} || p != w[1].data() + w[1].size())
                fail(n, "expected 'seed <non-negative integer>'");
            if (sc.seed)
                fail(n, "seed given twice");
            sc.seed = v;
        } else if (w[0] == "duration") {
            if (w.size() != 2)
                fail(n, "expected 'duration <seconds>'");
            double d = seconds(n, w[1], "duration");
            if (d <= 0)
                fail(n, "duration must be positive");
            if (sc.duration)
                fail(n, "duration given twice");
            sc.duration = d;
        } else if (w[0] == "at") {
            if (w.size() < 3)
                fail(n, "expected 'at <seconds> <command>'");
            double t = seconds(n, w[1], "time");
            if (t < 0)
                fail(n, "time must be non-negative");
            if (t < last)
                fail(n, "events must be in time order (" + w[1] + " after " + fmt(last) + ")");
            last = t;
            auto pos = body.find(w[1]) + w[1].size();
            sc.events.push_back({t, parse_action(body.substr(pos), n), n});
        } else {
            fail(n, "unknown directive '" + w[0] + "'");
        }
    }
    return sc;
}

/// Canonical text; parse_scenario(format_scenario(s)) == s.
inline std::string format_scenario(const Scenario &sc) {
    using scenario_detail::fmt;
    std::string out;
    if (sc.seed)
        out += "seed " + std::to_string(*sc.seed) + "\n";
    if (sc.duration)
        out += "duration " + fmt(*sc.duration) + "\n";
    for (const auto &e : sc.events)
        out += "at " + fmt(e.at) + " " + format_action(e.action) + "\n";
    return out;
}

inline std::string read_text_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::ConfigError, "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace tunneltwin::harness
