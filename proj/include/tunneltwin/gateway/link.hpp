#pragma once

// Coupling between the plant and the soft PLC. The plant side talks to a
// PlcLink; the in-process and remote links share PlcEndpoint on the PLC side,
// so both bindings produce the same writes in the same order.
//
// Lockstep: at each sync the plant sends its pending changes and the current
// simulation time; the PLC applies them, runs every cycle due by then and
// answers with its own changes (plus a fault record if it halted).

#include <tunneltwin/error.hpp>
#include <tunneltwin/gateway/channel.hpp>
#include <tunneltwin/gateway/protocol.hpp>
#include <tunneltwin/plc.hpp>
#include <tunneltwin/signal_bus.hpp>

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tunneltwin::gateway {

inline constexpr Millis kDefaultReplyTimeout{5000};

struct SyncResult {
    std::vector<SignalWrite> writes;
    std::optional<LivelockInfo> fault;
};

/// PLC-side core shared by every binding.
class PlcEndpoint {
  public:
    explicit PlcEndpoint(PlcRuntime &rt)
        : rt_(rt), sub_(rt.image(), [this](const ChangeEvent &e) {
              if (!sim_owned(rt_.image().def(e.handle)))
                  pending_.push_back({e.name, e.value});
          }) {}

    [[nodiscard]] PlcRuntime &runtime() { return rt_; }

    /// Full PLC-owned image, sent after every handshake.
    std::vector<SignalWrite> resync() {
        pending_.clear();
        return rt_.output_image();
    }

    void apply(const std::string &name, bool v) { rt_.apply_input(name, v); }

    SyncResult advance(SimMicros t) {
        pending_.clear();
        bool was_halted = rt_.halted();
        rt_.advance_to(t);
        SyncResult r;
        r.writes = std::move(pending_);
        pending_.clear();
        if (!was_halted && rt_.halted())
            r.fault = rt_.livelock();
        return r;
    }

  private:
    PlcRuntime &rt_;
    std::vector<SignalWrite> pending_;
    ScopedSubscription sub_;
};

class PlcLink {
  public:
    virtual ~PlcLink() = default;
    /// Handshake and resync: sends the plant's full owned image. The PLC's
    /// image arrives with the next sync.
    virtual void connect(const std::vector<SignalWrite> &sim_image) = 0;
    virtual SyncResult sync(SimMicros t, const std::vector<SignalWrite> &changes) = 0;
    virtual void disconnect() = 0;
    [[nodiscard]] virtual bool connected() const = 0;
};

class InprocLink final : public PlcLink {
  public:
    explicit InprocLink(PlcRuntime &rt) : ep_(rt) {}

    void connect(const std::vector<SignalWrite> &sim_image) override {
        for (const auto &w : sim_image)
            ep_.apply(w.name, w.value);
        resync_ = ep_.resync();
        connected_ = true;
    }

    SyncResult sync(SimMicros t, const std::vector<SignalWrite> &changes) override {
        if (!connected_)
            throw Error(ErrorCode::ConnectionLost, "in-process link not connected");
        for (const auto &w : changes)
            ep_.apply(w.name, w.value);
        auto r = ep_.advance(t);
        if (!resync_.empty()) {
            r.writes.insert(r.writes.begin(), resync_.begin(), resync_.end());
            resync_.clear();
        }
        return r;
    }

    void disconnect() override { connected_ = false; }
    [[nodiscard]] bool connected() const override { return connected_; }

  private:
    PlcEndpoint ep_;
    std::vector<SignalWrite> resync_;
    bool connected_ = false;
};

using ChannelFactory = std::function<std::unique_ptr<LineChannel>()>;

/// Plant side of the line protocol. A fresh channel is obtained from the
/// factory whenever connect() finds none open, which is how reconnects work.
class RemoteLink final : public PlcLink {
  public:
    RemoteLink(ChannelFactory factory, Policy policy, Millis timeout = kDefaultReplyTimeout)
        : factory_(std::move(factory)), policy_(std::move(policy)), timeout_(timeout) {}

    /// Single-use link over an existing channel.
    RemoteLink(std::unique_ptr<LineChannel> ch, Policy policy, Millis timeout = kDefaultReplyTimeout)
        : policy_(std::move(policy)), timeout_(timeout) {
        auto shared = std::make_shared<std::unique_ptr<LineChannel>>(std::move(ch));
        factory_ = [shared]() { return std::move(*shared); };
    }

    void connect(const std::vector<SignalWrite> &sim_image) override {
        if (!ch_ || !ch_->is_open()) {
            ch_ = factory_ ? factory_() : nullptr;
            if (!ch_)
                throw Error(ErrorCode::ConnectionLost, "no channel to the PLC");
        }
        session_.emplace(Role::Sim, policy_);
        try {
            for (auto &l : session_->greeting())
                ch_->send(std::move(l));
            while (!session_->ready()) {
                auto m = session_->on_line(next_line());
                if (m && !std::holds_alternative<HandshakeDone>(*m))
                    throw Error(ErrorCode::ProtocolError, "unexpected record during handshake");
            }
            for (const auto &w : sim_image)
                ch_->send(session_->make_write(w.name, w.value));
        } catch (...) {
            ch_->close();
            session_.reset();
            throw;
        }
    }

    SyncResult sync(SimMicros t, const std::vector<SignalWrite> &changes) override {
        if (!connected())
            throw Error(ErrorCode::ConnectionLost, "not connected");
        try {
            for (const auto &w : changes)
                ch_->send(session_->make_write(w.name, w.value));
            ch_->send(ping_line(t));
            SyncResult r;
            for (;;) {
                auto m = session_->on_line(next_line());
                if (!m)
                    continue;
                if (auto *w = std::get_if<WriteMsg>(&*m))
                    r.writes.push_back({w->name, w->value});
                else if (auto *f = std::get_if<FaultMsg>(&*m))
                    r.fault = LivelockInfo{f->edge, f->cap};
                else if (auto *p = std::get_if<PongMsg>(&*m)) {
                    if (p->n != t)
                        throw Error(ErrorCode::ProtocolError, "PONG " + std::to_string(p->n) + " answers no PING");
                    return r;
                } else
                    throw Error(ErrorCode::ProtocolError, "unexpected record from PLC");
            }
        } catch (...) {
            ch_->close();
            session_.reset();
            throw;
        }
    }

    void disconnect() override {
        if (ch_)
            ch_->close();
        session_.reset();
    }

    [[nodiscard]] bool connected() const override {
        return session_ && session_->ready() && ch_ && ch_->is_open();
    }
    [[nodiscard]] const Session *session() const { return session_ ? &*session_ : nullptr; }

  private:
    std::string next_line() {
        auto l = ch_->receive(timeout_);
        if (!l)
            throw Error(ErrorCode::ConnectionLost, "no reply from PLC within timeout");
        return *l;
    }

    ChannelFactory factory_;
    std::unique_ptr<LineChannel> ch_;
    Policy policy_;
    Millis timeout_;
    std::optional<Session> session_;
};

/// PLC side of the line protocol: serves one session per call.
class PlcServer {
  public:
    PlcServer(PlcRuntime &rt, Policy policy) : ep_(rt), policy_(std::move(policy)) {}

    [[nodiscard]] PlcEndpoint &endpoint() { return ep_; }

    /// Runs until the channel closes or `stop` is set. Handshake and protocol
    /// failures close the channel and propagate. Returns the session's write
    /// counters {received, sent}.
    std::pair<std::uint64_t, std::uint64_t> serve(LineChannel &ch, const std::atomic<bool> *stop = nullptr) {
        Session s(Role::Plc, policy_);
        try {
            for (auto &l : s.greeting())
                ch.send(std::move(l));
            for (;;) {
                if (stop && stop->load())
                    break;
                std::optional<std::string> line;
                try {
                    line = ch.receive(Millis(100));
                } catch (const Error &e) {
                    if (e.code() == ErrorCode::ConnectionLost)
                        break;
                    throw;
                }
                if (!line)
                    continue;
                auto m = s.on_line(*line);
                if (!m)
                    continue;
                if (std::holds_alternative<HandshakeDone>(*m)) {
                    for (const auto &w : ep_.resync())
                        ch.send(s.make_write(w.name, w.value));
                } else if (auto *w = std::get_if<WriteMsg>(&*m)) {
                    ep_.apply(w->name, w->value);
                } else if (auto *p = std::get_if<PingMsg>(&*m)) {
                    auto r = ep_.advance(p->n);
                    for (const auto &o : r.writes)
                        ch.send(s.make_write(o.name, o.value));
                    if (r.fault)
                        ch.send(fault_line(r.fault->edge, r.fault->cap));
                    ch.send(pong_line(p->n));
                } else {
                    throw Error(ErrorCode::ProtocolError, "unexpected record from plant");
                }
            }
        } catch (const Error &e) {
            ch.close();
            if (e.code() != ErrorCode::ConnectionLost)
                throw;
        }
        ch.close();
        return {s.received_writes(), s.sent_writes()};
    }

  private:
    PlcEndpoint ep_;
    Policy policy_;
};

/// Free-running mirror of a bus over a channel: every local change to a signal
/// this side owns becomes one WRITE, every received WRITE is applied locally.
/// Used for non-lockstep links and the churn soak.
class BusMirror {
  public:
    BusMirror(Role role, SignalBus &bus, LineChannel &ch, Policy policy)
        : bus_(bus), ch_(ch), session_(role, std::move(policy)), sub_(bus, [this](const ChangeEvent &e) {
              if (session_.ready() && !applying_ && owned_by(session_.role(), bus_.def(e.handle)))
                  ch_.send(session_.make_write(e.name, e.value));
          }) {}

    void open() {
        for (auto &l : session_.greeting())
            ch_.send(std::move(l));
    }

    /// Processes received lines until none arrives within `timeout`; returns
    /// the number of lines handled. After the handshake the full owned image
    /// is sent once.
    std::size_t drain(Millis timeout) {
        std::size_t n = 0;
        while (auto line = ch_.receive(timeout)) {
            ++n;
            auto m = session_.on_line(*line);
            if (!m)
                continue;
            if (std::holds_alternative<HandshakeDone>(*m)) {
                for (const auto &d : bus_.defs())
                    if (owned_by(session_.role(), d))
                        ch_.send(session_.make_write(d.name, bus_.read(d.name)));
            } else if (auto *w = std::get_if<WriteMsg>(&*m)) {
                applying_ = true;
                bus_.write(w->name, w->value, 0.0);
                applying_ = false;
            } else {
                throw Error(ErrorCode::ProtocolError, "unexpected record on mirror link");
            }
        }
        return n;
    }

    [[nodiscard]] const Session &session() const { return session_; }

  private:
    SignalBus &bus_;
    LineChannel &ch_;
    Session session_;
    bool applying_ = false;
    ScopedSubscription sub_;
};

} // namespace tunneltwin::gateway
