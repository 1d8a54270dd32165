#pragma once

// Policy document: the signal/address catalog both gateway endpoints must
// agree on before exchanging writes.
//
//   tunneltwin-policy v1
//   digest <16 hex digits>
//   OUT\t<name>\t<address>
//   IN\t<name>\t<address>

#include <tunneltwin/digest.hpp>
#include <tunneltwin/error.hpp>
#include <tunneltwin/signal_bus.hpp>
#include <tunneltwin/varlist.hpp>

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tunneltwin {

struct PolicyEntry {
    Direction direction = Direction::Input;
    std::string name;
    std::string address;

    friend bool operator==(const PolicyEntry &, const PolicyEntry &) = default;
};

struct Policy {
    std::vector<PolicyEntry> signals;
    std::string digest;

    friend bool operator==(const Policy &, const Policy &) = default;
};

inline constexpr std::string_view kPolicyHeader = "tunneltwin-policy v1";

/// Digest over the ordered signal lines; independent of the file header so
/// the same value can be exchanged on the wire.
inline std::string policy_digest(const std::vector<PolicyEntry> &signals) {
    Fnv1a64 h;
    for (const auto &s : signals) {
        h.update(to_string(s.direction)).update("\t").update(s.name).update("\t").update(s.address).update("\n");
    }
    return h.hex();
}

inline Policy make_policy(const std::vector<SignalDef> &defs, const NamingRule &in_rule = default_input_rule(),
                          const NamingRule &out_rule = default_output_rule()) {
    Policy p;
    std::set<std::string_view> seen;
    for (const auto &d : defs) {
        if (!seen.insert(d.name).second)
            throw Error(ErrorCode::DuplicateName, d.name);
        const auto &rule = d.direction == Direction::Input ? in_rule : out_rule;
        p.signals.push_back({d.direction, d.name, rule.apply(d.name)});
    }
    p.digest = policy_digest(p.signals);
    return p;
}

inline Policy make_policy(const SignalManifest &m, const NamingRule &in_rule = default_input_rule(),
                          const NamingRule &out_rule = default_output_rule()) {
    return make_policy(m.entries, in_rule, out_rule);
}

inline std::string emit_policy(const Policy &p) {
    std::string out(kPolicyHeader);
    out += "\ndigest ";
    out += p.digest;
    out += '\n';
    for (const auto &s : p.signals) {
        out += to_string(s.direction);
        out += '\t';
        out += s.name;
        out += '\t';
        out += s.address;
        out += '\n';
    }
    return out;
}

inline std::string emit_policy(const SignalManifest &m, const NamingRule &in_rule, const NamingRule &out_rule) {
    return emit_policy(make_policy(m, in_rule, out_rule));
}

/// Rejects documents whose recorded digest does not match their content
/// (hand-edited or truncated policies).
inline Policy parse_policy(std::string_view text) {
    auto lines = detail::split_lines(text);
    auto fail = [](std::size_t line, const std::string &msg) -> Error {
        return Error(ErrorCode::ConfigError, "policy line " + std::to_string(line + 1) + ": " + msg);
    };
    if (lines.empty() || lines[0] != kPolicyHeader)
        throw fail(0, "expected '" + std::string(kPolicyHeader) + "'");
    if (lines.size() < 2 || !lines[1].starts_with("digest "))
        throw fail(1, "expected 'digest <hex>'");

    Policy p;
    p.digest = std::string(lines[1].substr(7));
    std::set<std::string> seen;
    for (std::size_t i = 2; i < lines.size(); ++i) {
        auto l = lines[i];
        if (l.empty())
            continue;
        auto t1 = l.find('\t');
        auto t2 = t1 == std::string_view::npos ? t1 : l.find('\t', t1 + 1);
        if (t2 == std::string_view::npos || l.find('\t', t2 + 1) != std::string_view::npos)
            throw fail(i, "expected <dir>\\t<name>\\t<address>");
        auto dir = l.substr(0, t1);
        PolicyEntry e;
        if (dir == "IN")
            e.direction = Direction::Input;
        else if (dir == "OUT")
            e.direction = Direction::Output;
        else
            throw fail(i, "direction must be IN or OUT");
        e.name = std::string(l.substr(t1 + 1, t2 - t1 - 1));
        e.address = std::string(l.substr(t2 + 1));
        if (e.name.empty() || e.name.find(' ') != std::string::npos)
            throw fail(i, "bad signal name");
        if (!seen.insert(e.name).second)
            throw Error(ErrorCode::DuplicateName, e.name);
        p.signals.push_back(std::move(e));
    }
    if (policy_digest(p.signals) != p.digest)
        throw Error(ErrorCode::ConfigError, "policy digest does not match its content (stale or edited file)");
    return p;
}

/// Bus definitions for a policy; kinds are recovered from the naming
/// conventions since the document does not store them.
inline std::vector<SignalDef> policy_signal_defs(const Policy &p) {
    std::vector<SignalDef> out;
    for (const auto &s : p.signals) {
        SignalDef d;
        d.name = s.name;
        d.direction = s.direction;
        d.kind = infer_kind(s.name);
        d.group = derive_group(s.name);
        out.push_back(std::move(d));
    }
    return out;
}

/// Names present in exactly one of the two policies (or whose direction or
/// address differ), sorted.
inline std::vector<std::string> policy_diff(const Policy &a, const Policy &b) {
    std::map<std::string, const PolicyEntry *> ma, mb;
    for (const auto &e : a.signals)
        ma.emplace(e.name, &e);
    for (const auto &e : b.signals)
        mb.emplace(e.name, &e);
    std::set<std::string> out;
    for (const auto &[n, e] : ma) {
        auto it = mb.find(n);
        if (it == mb.end() || !(*it->second == *e))
            out.insert(n);
    }
    for (const auto &[n, e] : mb)
        if (!ma.contains(n))
            out.insert(n);
    return {out.begin(), out.end()};
}

} // namespace tunneltwin
