#pragma once

// Line protocol between the plant side and the PLC side. One record per line,
// fields separated by single spaces:
//
//   HELLO <sim|plc> 1
//   POLICY <digest> <count>      followed by <count> lines "<IN|OUT> <name> <address>" and ENDPOLICY
//   WRITE <seq> <name> <0|1>
//   PING <t_us> / PONG <t_us>
//   FAULT livelock <edge> <cap>
//
// Session holds the handshake state machine and the per-direction sequence
// audit; it does no I/O.

#include <tunneltwin/error.hpp>
#include <tunneltwin/policy.hpp>
#include <tunneltwin/signal_bus.hpp>
#include <tunneltwin/varlist.hpp>

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tunneltwin::gateway {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint16_t kDefaultPort = 8510;

enum class Role { Sim, Plc };

inline std::string_view to_string(Role r) { return r == Role::Sim ? "sim" : "plc"; }

/// The plant writes sensors and operator buttons; the PLC writes everything else.
inline bool sim_owned(const SignalDef &d) { return d.direction == Direction::Input || d.kind == SignalKind::Button; }
inline bool owned_by(Role r, const SignalDef &d) { return (r == Role::Sim) == sim_owned(d); }

struct WriteMsg {
    std::uint64_t seq = 0;
    std::string name;
    bool value = false;
    friend bool operator==(const WriteMsg &, const WriteMsg &) = default;
};
struct PingMsg {
    std::int64_t n = 0;
    friend bool operator==(const PingMsg &, const PingMsg &) = default;
};
struct PongMsg {
    std::int64_t n = 0;
    friend bool operator==(const PongMsg &, const PongMsg &) = default;
};
struct FaultMsg {
    std::string edge;
    int cap = 0;
    friend bool operator==(const FaultMsg &, const FaultMsg &) = default;
};
/// Emitted once when both policies have been exchanged and agree.
struct HandshakeDone {
    friend bool operator==(const HandshakeDone &, const HandshakeDone &) = default;
};

using Message = std::variant<WriteMsg, PingMsg, PongMsg, FaultMsg, HandshakeDone>;

namespace protocol_detail {

inline std::vector<std::string_view> fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i <= line.size()) {
        auto j = line.find(' ', i);
        if (j == std::string_view::npos)
            j = line.size();
        out.push_back(line.substr(i, j - i));
        i = j + 1;
    }
    return out;
}

[[noreturn]] inline void bad(std::string_view line, std::string_view why) {
    throw Error(ErrorCode::ProtocolError, std::string(why) + ": '" + std::string(line) + "'");
}

template <class Int> Int number(std::string_view line, std::string_view f) {
    Int v{};
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc{} || p != f.data() + f.size())
        bad(line, "malformed number");
    return v;
}

inline bool valid_token(std::string_view s) {
    if (s.empty())
        return false;
    for (char c : s)
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n')
            return false;
    return true;
}

} // namespace protocol_detail

inline std::string hello_line(Role r) { return "HELLO " + std::string(to_string(r)) + " " + std::to_string(kProtocolVersion); }

inline std::vector<std::string> policy_lines(const Policy &p) {
    std::vector<std::string> out;
    out.push_back("POLICY " + p.digest + " " + std::to_string(p.signals.size()));
    for (const auto &s : p.signals)
        out.push_back(std::string(to_string(s.direction)) + " " + s.name + " " + s.address);
    out.push_back("ENDPOLICY");
    return out;
}

inline std::string write_line(std::uint64_t seq, std::string_view name, bool v) {
    return "WRITE " + std::to_string(seq) + " " + std::string(name) + (v ? " 1" : " 0");
}
inline std::string ping_line(std::int64_t n) { return "PING " + std::to_string(n); }
inline std::string pong_line(std::int64_t n) { return "PONG " + std::to_string(n); }
inline std::string fault_line(const std::string &edge, int cap) {
    return "FAULT livelock " + edge + " " + std::to_string(cap);
}

class Session {
  public:
    Session(Role local, Policy policy) : local_(local), policy_(std::move(policy)) {
        for (const auto &d : policy_signal_defs(policy_))
            defs_.emplace(d.name, d);
    }

    [[nodiscard]] Role role() const { return local_; }
    [[nodiscard]] bool ready() const { return state_ == State::Ready; }
    [[nodiscard]] const Policy &policy() const { return policy_; }
    [[nodiscard]] std::uint64_t sent_writes() const { return send_seq_; }
    [[nodiscard]] std::uint64_t received_writes() const { return recv_seq_; }

    /// Lines opening the session: HELLO then the local policy block.
    [[nodiscard]] std::vector<std::string> greeting() const {
        std::vector<std::string> out{hello_line(local_)};
        for (auto &l : policy_lines(policy_))
            out.push_back(std::move(l));
        return out;
    }

    /// Formats an outgoing WRITE; only signals this side owns may be written.
    std::string make_write(std::string_view name, bool v) {
        if (!ready())
            throw Error(ErrorCode::ProtocolError, "WRITE before handshake");
        auto it = defs_.find(std::string(name));
        if (it == defs_.end())
            throw Error(ErrorCode::UnknownSignal, std::string(name));
        if (!owned_by(local_, it->second))
            throw Error(ErrorCode::ProtocolError, std::string(to_string(local_)) + " does not own " + std::string(name));
        return write_line(++send_seq_, name, v);
    }

    /// Feeds one received line. Returns a message once the handshake is done
    /// (HandshakeDone first), nothing while the peer policy is streaming in.
    std::optional<Message> on_line(std::string_view line) {
        using namespace protocol_detail;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        auto f = fields(line);
        switch (state_) {
        case State::AwaitHello: {
            if (f.size() != 3 || f[0] != "HELLO")
                bad(line, "expected HELLO");
            Role peer = local_ == Role::Sim ? Role::Plc : Role::Sim;
            if (f[1] != to_string(peer))
                bad(line, "unexpected peer role");
            if (number<int>(line, f[2]) != kProtocolVersion)
                bad(line, "unsupported protocol version");
            state_ = State::AwaitPolicy;
            return std::nullopt;
        }
        case State::AwaitPolicy: {
            if (f.size() != 3 || f[0] != "POLICY")
                bad(line, "expected POLICY");
            peer_.signals.clear();
            peer_.digest = std::string(f[1]);
            expected_ = number<std::size_t>(line, f[2]);
            state_ = expected_ == 0 ? State::AwaitEnd : State::PolicyBody;
            return std::nullopt;
        }
        case State::PolicyBody: {
            if (f.size() != 3 || (f[0] != "IN" && f[0] != "OUT") || !valid_token(f[1]) || !valid_token(f[2]))
                bad(line, "malformed policy line");
            peer_.signals.push_back(
                {f[0] == "IN" ? Direction::Input : Direction::Output, std::string(f[1]), std::string(f[2])});
            if (peer_.signals.size() == expected_)
                state_ = State::AwaitEnd;
            return std::nullopt;
        }
        case State::AwaitEnd: {
            if (line != "ENDPOLICY")
                bad(line, "expected ENDPOLICY");
            if (policy_digest(peer_.signals) != peer_.digest)
                bad(line, "peer policy digest does not match its lines");
            if (peer_.digest != policy_.digest) {
                auto diff = policy_diff(policy_, peer_);
                std::string msg = "policy mismatch with peer";
                if (diff.empty())
                    msg += " (same signals, different order)";
                else
                    msg += ", differing signals:";
                for (const auto &n : diff)
                    msg += " " + n;
                throw Error(ErrorCode::PolicyMismatch, msg);
            }
            state_ = State::Ready;
            return HandshakeDone{};
        }
        case State::Ready: break;
        }

        if (f[0] == "WRITE") {
            if (f.size() != 4 || (f[3] != "0" && f[3] != "1"))
                bad(line, "malformed WRITE");
            auto seq = number<std::uint64_t>(line, f[1]);
            if (seq != recv_seq_ + 1)
                bad(line, "WRITE sequence gap (expected " + std::to_string(recv_seq_ + 1) + ")");
            auto it = defs_.find(std::string(f[2]));
            if (it == defs_.end())
                bad(line, "WRITE names a signal outside the policy");
            if (owned_by(local_, it->second))
                bad(line, "peer wrote a signal it does not own");
            recv_seq_ = seq;
            return WriteMsg{seq, std::string(f[2]), f[3] == "1"};
        }
        if (f[0] == "PING" && f.size() == 2)
            return PingMsg{number<std::int64_t>(line, f[1])};
        if (f[0] == "PONG" && f.size() == 2)
            return PongMsg{number<std::int64_t>(line, f[1])};
        if (f[0] == "FAULT" && f.size() == 4 && f[1] == "livelock")
            return FaultMsg{std::string(f[2]), number<int>(line, f[3])};
        bad(line, "unknown record");
    }

  private:
    enum class State { AwaitHello, AwaitPolicy, PolicyBody, AwaitEnd, Ready };

    Role local_;
    Policy policy_;
    std::map<std::string, SignalDef> defs_;
    State state_ = State::AwaitHello;
    Policy peer_;
    std::size_t expected_ = 0;
    std::uint64_t send_seq_ = 0;
    std::uint64_t recv_seq_ = 0;
};

} // namespace tunneltwin::gateway
