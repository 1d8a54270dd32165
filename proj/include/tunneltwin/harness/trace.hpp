#pragma once

// Trace files: one CSV row per signal flip, framed by comment lines.
//
//   # tunneltwin-trace v1 {"binding":"inproc",...}
//   time,signal,value
//   0.000000,ivar_M_M_HW_Boombarrier_s_opened,1
//   # note 12.000000 plc disconnected
//   # verdict pass 3.140000 expect ... == 1 within 30
//   # fault livelock Spin@6 10000 0.000000
//   # exit 0
//
// The header JSON carries everything needed to re-run the trace.

#include <tunneltwin/error.hpp>

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace tunneltwin::harness {

inline constexpr std::string_view kTraceMagic = "# tunneltwin-trace v1 ";
inline constexpr std::string_view kTraceColumns = "time,signal,value";

struct TraceRow {
    double time = 0;
    std::string signal;
    bool value = false;
    friend bool operator==(const TraceRow &, const TraceRow &) = default;
};

struct Verdict {
    bool pass = false;
    double time = 0;
    std::string expect;
    friend bool operator==(const Verdict &, const Verdict &) = default;
};

struct TraceFault {
    std::string edge;
    int cap = 0;
    double time = 0;
    friend bool operator==(const TraceFault &, const TraceFault &) = default;
};

struct Trace {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<TraceRow> rows;
    std::vector<std::string> notes;
    std::vector<Verdict> verdicts;
    std::optional<TraceFault> fault;
    int exit_code = 0;
    friend bool operator==(const Trace &, const Trace &) = default;
};

/// Seconds with exactly six decimals; the trace's only time format.
inline std::string format_time(double t) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", t);
    return buf;
}

inline std::string format_trace(const Trace &tr) {
    std::string out(kTraceMagic);
    out += tr.meta.dump();
    out += '\n';
    out += kTraceColumns;
    out += '\n';
    for (const auto &r : tr.rows) {
        out += format_time(r.time);
        out += ',';
        out += r.signal;
        out += r.value ? ",1\n" : ",0\n";
    }
    for (const auto &n : tr.notes)
        out += "# note " + n + "\n";
    for (const auto &v : tr.verdicts)
        out += std::string("# verdict ") + (v.pass ? "pass " : "fail ") + format_time(v.time) + " " + v.expect + "\n";
    if (tr.fault)
        out += "# fault livelock " + tr.fault->edge + " " + std::to_string(tr.fault->cap) + " " +
               format_time(tr.fault->time) + "\n";
    out += "# exit " + std::to_string(tr.exit_code) + "\n";
    return out;
}

namespace trace_detail {

[[noreturn]] inline void fail(int line, const std::string &msg) {
    throw Error(ErrorCode::ConfigError, "trace line " + std::to_string(line) + ": " + msg);
}

inline double time_of(int line, std::string_view s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size())
        fail(line, "bad time '" + std::string(s) + "'");
    return v;
}

template <class Int> Int integer(int line, std::string_view s) {
    Int v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size())
        fail(line, "bad integer '" + std::string(s) + "'");
    return v;
}

inline std::pair<std::string_view, std::string_view> split1(std::string_view s) {
    auto sp = s.find(' ');
    if (sp == std::string_view::npos)
        return {s, {}};
    return {s.substr(0, sp), s.substr(sp + 1)};
}

} // namespace trace_detail

inline Trace parse_trace(std::string_view text) {
    using namespace trace_detail;
    Trace tr;
    std::istringstream in{std::string(text)};
    std::string line;
    int n = 1;
    if (!std::getline(in, line) || !std::string_view(line).starts_with(kTraceMagic))
        fail(n, "not a tunneltwin trace");
    try {
        tr.meta = nlohmann::json::parse(line.substr(kTraceMagic.size()));
    } catch (const nlohmann::json::exception &e) {
        fail(n, std::string("bad header: ") + e.what());
    }
    ++n;
    if (!std::getline(in, line) || line != kTraceColumns)
        fail(n, "expected column header");
    bool saw_exit = false;
    double last = 0;
    while (std::getline(in, line)) {
        ++n;
        std::string_view l = line;
        if (saw_exit)
            fail(n, "content after exit line");
        if (l.starts_with("# ")) {
            auto [kind, rest] = split1(l.substr(2));
            if (kind == "note") {
                tr.notes.emplace_back(rest);
            } else if (kind == "verdict") {
                auto [pf, r1] = split1(rest);
                auto [ts, expect] = split1(r1);
                if (pf != "pass" && pf != "fail")
                    fail(n, "verdict must be pass or fail");
                tr.verdicts.push_back({pf == "pass", time_of(n, ts), std::string(expect)});
            } else if (kind == "fault") {
                auto [what, r1] = split1(rest);
                auto [edge, r2] = split1(r1);
                auto [cap, ts] = split1(r2);
                if (what != "livelock" || edge.empty())
                    fail(n, "malformed fault line");
                tr.fault = TraceFault{std::string(edge), integer<int>(n, cap), time_of(n, ts)};
            } else if (kind == "exit") {
                tr.exit_code = integer<int>(n, rest);
                saw_exit = true;
            } else {
                fail(n, "unknown comment line");
            }
            continue;
        }
        auto c1 = l.find(',');
        auto c2 = l.rfind(',');
        if (c1 == std::string_view::npos || c1 == c2)
            fail(n, "expected time,signal,value");
        auto v = l.substr(c2 + 1);
        if (v != "0" && v != "1")
            fail(n, "value must be 0 or 1");
        double t = time_of(n, l.substr(0, c1));
        if (t < last)
            fail(n, "rows out of time order");
        last = t;
        tr.rows.push_back({t, std::string(l.substr(c1 + 1, c2 - c1 - 1)), v == "1"});
    }
    if (!saw_exit)
        fail(n, "missing exit line (truncated trace?)");
    return tr;
}

/// Index of the first differing line of two texts, or nullopt when equal.
inline std::optional<std::size_t> first_difference(std::string_view a, std::string_view b) {
    std::size_t line = 1, i = 0;
    for (; i < a.size() && i < b.size(); ++i) {
        if (a[i] != b[i])
            return line;
        if (a[i] == '\n')
            ++line;
    }
    if (a.size() == b.size())
        return std::nullopt;
    return line;
}

} // namespace tunneltwin::harness
