#include <tunneltwin/gateway/link.hpp>
#include <tunneltwin/gateway/tcp.hpp>
#include <tunneltwin/gts.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>
#include <thread>

using namespace tunneltwin;
using namespace tunneltwin::gateway;

namespace {

std::string slurp(const std::string &rel) {
    std::ifstream in(std::string(TT_DATA_DIR) + "/" + rel, std::ios::binary);
    if (!in)
        throw std::runtime_error("missing fixture " + rel);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::shared_ptr<const GtsSpec> load_spec(const std::string &rel) {
    return std::make_shared<const GtsSpec>(parse_gts(slurp(rel)));
}

template <class F> ErrorCode code_of(F &&f) {
    try {
        f();
    } catch (const Error &e) {
        return e.code();
    }
    return static_cast<ErrorCode>(-1);
}

const char *kOpen = "dvar_M_M_HW_Boombarrier_a_open";
const char *kClose = "dvar_M_M_HW_Boombarrier_a_close";
const char *kOpened = "ivar_M_M_HW_Boombarrier_s_opened";
const char *kClosed = "ivar_M_M_HW_Boombarrier_s_closed";

// Reference FNV-1a 64, written out from the published constants.
std::string fnv_hex(const std::string &s) {
    unsigned long long h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", h);
    return buf;
}

struct BarrierRig {
    std::shared_ptr<const GtsSpec> spec = load_spec("controllers/test_barrier.gts");
    Policy policy = make_policy(spec_signal_defs(*spec));
};

// Runs a PlcServer on its own thread over the far end of a channel.
class ServerThread {
  public:
    ServerThread(PlcRuntime &rt, Policy p, std::unique_ptr<LineChannel> ch)
        : server_(rt, std::move(p)), ch_(std::move(ch)) {
        thread_ = std::thread([this] {
            try {
                counts_ = server_.serve(*ch_, &stop_);
            } catch (const Error &e) {
                error_ = e.code();
            }
        });
    }
    ~ServerThread() { join(); }
    void join() {
        if (thread_.joinable()) {
            stop_ = true;
            thread_.join();
        }
    }
    std::optional<ErrorCode> error() const { return error_; }
    std::pair<std::uint64_t, std::uint64_t> counts() const { return counts_; }

  private:
    PlcServer server_;
    std::unique_ptr<LineChannel> ch_;
    std::atomic<bool> stop_{false};
    std::thread thread_;
    std::optional<ErrorCode> error_;
    std::pair<std::uint64_t, std::uint64_t> counts_{};
};

} // namespace

TEST(Protocol, LineFormats) {
    EXPECT_EQ(hello_line(Role::Sim), "HELLO sim 1");
    EXPECT_EQ(hello_line(Role::Plc), "HELLO plc 1");
    EXPECT_EQ(write_line(7, "x", true), "WRITE 7 x 1");
    EXPECT_EQ(ping_line(20000), "PING 20000");
    EXPECT_EQ(pong_line(0), "PONG 0");
    EXPECT_EQ(fault_line("Spin@6", 10000), "FAULT livelock Spin@6 10000");
}

TEST(Protocol, PolicyDigestMatchesReferenceFnv) {
    BarrierRig rig;
    std::string text;
    for (const auto &s : rig.policy.signals)
        text += std::string(s.direction == Direction::Input ? "IN" : "OUT") + "\t" + s.name + "\t" + s.address + "\n";
    EXPECT_EQ(rig.policy.digest, fnv_hex(text));
    EXPECT_EQ(fnv_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv_hex("a"), "af63dc4c8601ec8c");
}

TEST(Protocol, GoldenTranscriptOverMemoryChannel) {
    BarrierRig rig;
    PlcRuntime rt(rig.spec, policy_signal_defs(rig.policy));
    auto [a, b] = make_memory_pair();
    auto rec = std::make_unique<RecordingChannel>(std::move(a));
    auto *recp = rec.get();
    ServerThread srv(rt, rig.policy, std::move(b));

    RemoteLink link(std::move(rec), rig.policy);
    link.connect({{kOpened, true}, {kClosed, false}});
    auto r0 = link.sync(0, {});
    auto r1 = link.sync(20000, {{kOpened, false}, {kClosed, true}});
    link.disconnect();
    srv.join();

    const std::string d = rig.policy.digest;
    std::vector<std::string> expected = {
        "> HELLO sim 1",
        "> POLICY " + d + " 4",
        std::string("> OUT ") + kOpen + " MAIN.state0." + kOpen,
        std::string("> OUT ") + kClose + " MAIN.state0." + kClose,
        std::string("> IN ") + kOpened + " INPUTS." + kOpened,
        std::string("> IN ") + kClosed + " INPUTS." + kClosed,
        "> ENDPOLICY",
        "< HELLO plc 1",
        "< POLICY " + d + " 4",
        std::string("< OUT ") + kOpen + " MAIN.state0." + kOpen,
        std::string("< OUT ") + kClose + " MAIN.state0." + kClose,
        std::string("< IN ") + kOpened + " INPUTS." + kOpened,
        std::string("< IN ") + kClosed + " INPUTS." + kClosed,
        "< ENDPOLICY",
        std::string("> WRITE 1 ") + kOpened + " 1",
        std::string("> WRITE 2 ") + kClosed + " 0",
        "> PING 0",
        // Resync image, then the first cycle's change (the controller starts
        // in its closing location).
        std::string("< WRITE 1 ") + kOpen + " 0",
        std::string("< WRITE 2 ") + kClose + " 0",
        std::string("< WRITE 3 ") + kClose + " 1",
        "< PONG 0",
        std::string("> WRITE 3 ") + kOpened + " 0",
        std::string("> WRITE 4 ") + kClosed + " 1",
        "> PING 20000",
        "< PONG 20000",
    };
    EXPECT_EQ(recp->transcript(), expected);
    ASSERT_EQ(r0.writes.size(), 3u);
    EXPECT_EQ(r0.writes[2], (SignalWrite{kClose, true}));
    EXPECT_TRUE(r1.writes.empty());
    EXPECT_FALSE(srv.error());
    EXPECT_EQ(srv.counts().first, 4u);
    EXPECT_EQ(srv.counts().second, 3u);
}

TEST(Protocol, HandshakeRejectsMalformedGreeting) {
    BarrierRig rig;
    auto feed = [&](std::vector<std::string> lines) {
        return code_of([&] {
            Session s(Role::Sim, rig.policy);
            for (const auto &l : lines)
                s.on_line(l);
        });
    };
    EXPECT_EQ(feed({"HELO plc 1"}), ErrorCode::ProtocolError);
    EXPECT_EQ(feed({"HELLO plc 2"}), ErrorCode::ProtocolError);
    EXPECT_EQ(feed({"HELLO sim 1"}), ErrorCode::ProtocolError);
    EXPECT_EQ(feed({"HELLO plc one"}), ErrorCode::ProtocolError);
    EXPECT_EQ(feed({"HELLO  plc 1"}), ErrorCode::ProtocolError);
    EXPECT_EQ(feed({"HELLO plc 1", "WRITE 1 x 1"}), ErrorCode::ProtocolError);
    EXPECT_EQ(feed({"HELLO plc 1", "POLICY 0 1", "SIDEWAYS a b"}), ErrorCode::ProtocolError);
    EXPECT_EQ(feed({"HELLO plc 1", "POLICY 0 0", "END"}), ErrorCode::ProtocolError);
}

TEST(Protocol, TamperedPolicyBodyIsCaughtByDigest) {
    BarrierRig rig;
    Session s(Role::Sim, rig.policy);
    auto lines = Session(Role::Plc, rig.policy).greeting();
    lines[3] += "X";
    EXPECT_EQ(code_of([&] {
                  for (const auto &l : lines)
                      s.on_line(l);
              }),
              ErrorCode::ProtocolError);
}

TEST(Protocol, PolicyMismatchNamesTheExtraSignal) {
    BarrierRig rig;
    auto defs = spec_signal_defs(*rig.spec);
    defs.push_back({"ivar_M_M_HW_Extra_s_on", Direction::Input, "", SignalKind::Sensor});
    auto bigger = make_policy(defs);

    Session s(Role::Sim, rig.policy);
    try {
        for (const auto &l : Session(Role::Plc, bigger).greeting())
            s.on_line(l);
        FAIL() << "mismatch accepted";
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::PolicyMismatch);
        EXPECT_NE(std::string(e.what()).find("ivar_M_M_HW_Extra_s_on"), std::string::npos) << e.what();
        EXPECT_EQ(std::string(e.what()).find(kOpen), std::string::npos) << e.what();
    }
}

TEST(Protocol, MismatchOverTheWireFailsBothEnds) {
    BarrierRig rig;
    auto defs = spec_signal_defs(*rig.spec);
    defs.push_back({"ivar_M_M_HW_Extra_s_on", Direction::Input, "", SignalKind::Sensor});
    auto bigger = make_policy(defs);
    PlcRuntime rt(rig.spec, policy_signal_defs(bigger));
    auto [a, b] = make_memory_pair();
    ServerThread srv(rt, bigger, std::move(b));
    RemoteLink link(std::move(a), rig.policy, Millis(2000));
    EXPECT_EQ(code_of([&] { link.connect({}); }), ErrorCode::PolicyMismatch);
    EXPECT_FALSE(link.connected());
    srv.join();
    EXPECT_EQ(srv.error(), ErrorCode::PolicyMismatch);
}

TEST(Protocol, SequenceGapAndOwnershipViolations) {
    BarrierRig rig;
    auto ready = [&] {
        Session s(Role::Sim, rig.policy);
        for (const auto &l : Session(Role::Plc, rig.policy).greeting())
            s.on_line(l);
        return s;
    };
    {
        auto s = ready();
        EXPECT_TRUE(s.ready());
        auto m = s.on_line(std::string("WRITE 1 ") + kOpen + " 1");
        ASSERT_TRUE(m);
        EXPECT_EQ(std::get<WriteMsg>(*m), (WriteMsg{1, kOpen, true}));
        EXPECT_EQ(code_of([&] { s.on_line(std::string("WRITE 3 ") + kOpen + " 0"); }), ErrorCode::ProtocolError);
    }
    {
        auto s = ready();
        EXPECT_EQ(code_of([&] { s.on_line(std::string("WRITE 1 ") + kOpened + " 1"); }), ErrorCode::ProtocolError);
    }
    {
        auto s = ready();
        EXPECT_EQ(code_of([&] { s.on_line("WRITE 1 dvar_nothing 1"); }), ErrorCode::ProtocolError);
        EXPECT_EQ(code_of([&] { s.on_line(std::string("WRITE 1 ") + kOpen + " 2"); }), ErrorCode::ProtocolError);
        EXPECT_EQ(code_of([&] { s.on_line("PING x"); }), ErrorCode::ProtocolError);
        EXPECT_EQ(code_of([&] { s.on_line("BOGUS"); }), ErrorCode::ProtocolError);
    }
    {
        auto s = ready();
        EXPECT_EQ(code_of([&] { (void)s.make_write(kOpen, true); }), ErrorCode::ProtocolError);
        EXPECT_EQ(code_of([&] { (void)s.make_write("ivar_unknown", true); }), ErrorCode::UnknownSignal);
        EXPECT_EQ(s.make_write(kOpened, true), std::string("WRITE 1 ") + kOpened + " 1");
        EXPECT_EQ(s.make_write(kOpened, false), std::string("WRITE 2 ") + kOpened + " 0");
    }
    {
        Session s(Role::Sim, rig.policy);
        EXPECT_EQ(code_of([&] { (void)s.make_write(kOpened, true); }), ErrorCode::ProtocolError);
    }
}

TEST(Protocol, CrlfIsAccepted) {
    BarrierRig rig;
    Session s(Role::Sim, rig.policy);
    for (const auto &l : Session(Role::Plc, rig.policy).greeting())
        s.on_line(l + "\r");
    EXPECT_TRUE(s.ready());
}

TEST(Link, FaultRecordCrossesTheWireOnce) {
    auto spec = load_spec("controllers/livelock.gts");
    auto policy = make_policy(spec_signal_defs(*spec));
    PlcRuntime rt(spec, policy_signal_defs(policy));
    auto [a, b] = make_memory_pair();
    ServerThread srv(rt, policy, std::move(b));
    RemoteLink link(std::move(a), policy);
    link.connect({});
    auto r = link.sync(0, {});
    ASSERT_TRUE(r.fault);
    EXPECT_EQ(r.fault->edge, "Spin@6");
    EXPECT_EQ(r.fault->cap, 10000);
    auto r2 = link.sync(10000, {});
    EXPECT_FALSE(r2.fault);
    EXPECT_TRUE(r2.writes.empty());
}

TEST(Link, InprocFaultMatchesRemote) {
    auto spec = load_spec("controllers/livelock.gts");
    PlcRuntime rt(spec);
    InprocLink link(rt);
    link.connect({});
    auto r = link.sync(0, {});
    ASSERT_TRUE(r.fault);
    EXPECT_EQ(r.fault->edge, "Spin@6");
    EXPECT_FALSE(link.sync(10000, {}).fault);
}

TEST(Link, SyncBeforeConnectIsConnectionLost) {
    BarrierRig rig;
    PlcRuntime rt(rig.spec);
    InprocLink in(rt);
    EXPECT_EQ(code_of([&] { in.sync(0, {}); }), ErrorCode::ConnectionLost);
    RemoteLink re(ChannelFactory{}, rig.policy);
    EXPECT_EQ(code_of([&] { re.sync(0, {}); }), ErrorCode::ConnectionLost);
    EXPECT_EQ(code_of([&] { re.connect({}); }), ErrorCode::ConnectionLost);
}

TEST(Link, NoReplyTimesOut) {
    BarrierRig rig;
    auto [a, b] = make_memory_pair();
    RemoteLink link(std::move(a), rig.policy, Millis(100));
    EXPECT_EQ(code_of([&] { link.connect({}); }), ErrorCode::ConnectionLost);
    EXPECT_FALSE(b->is_open());
}

namespace {

// Drives the barrier controller through a closed loop with an idealised
// barrier (reports the commanded end position one tick later) and returns
// every PLC write with its tick.
std::vector<std::pair<int, SignalWrite>> closed_loop(PlcLink &link, int ticks) {
    std::vector<std::pair<int, SignalWrite>> log;
    bool open_cmd = false, close_cmd = false, opened = true, closed = false;
    link.connect({{kOpened, opened}, {kClosed, closed}});
    for (int k = 0; k < ticks; ++k) {
        std::vector<SignalWrite> changes;
        bool n_opened = open_cmd ? true : (close_cmd ? false : opened);
        bool n_closed = close_cmd ? true : (open_cmd ? false : closed);
        if (n_opened != opened)
            changes.push_back({kOpened, n_opened});
        if (n_closed != closed)
            changes.push_back({kClosed, n_closed});
        opened = n_opened;
        closed = n_closed;
        auto r = link.sync(static_cast<SimMicros>(k) * 20000, changes);
        for (const auto &w : r.writes) {
            log.emplace_back(k, w);
            if (w.name == kOpen)
                open_cmd = w.value;
            if (w.name == kClose)
                close_cmd = w.value;
        }
    }
    return log;
}

} // namespace

TEST(Link, InprocAndMemoryBindingsAgree) {
    BarrierRig rig;
    PlcRuntime rt1(rig.spec, policy_signal_defs(rig.policy));
    InprocLink in(rt1);
    auto a = closed_loop(in, 2000);

    PlcRuntime rt2(rig.spec, policy_signal_defs(rig.policy));
    auto [c, s] = make_memory_pair();
    ServerThread srv(rt2, rig.policy, std::move(s));
    RemoteLink re(std::move(c), rig.policy);
    auto b = closed_loop(re, 2000);

    EXPECT_EQ(a, b);
    // Oracle: with an instant barrier the controller alternates every 10 s of
    // controller time, so 40 s carry three command flips after the first.
    int flips = 0;
    for (const auto &[k, w] : a)
        if (w.value && k > 0)
            ++flips;
    EXPECT_EQ(flips, 3);
}

TEST(Link, TcpBindingAgreesWithInproc) {
    BarrierRig rig;
    PlcRuntime rt1(rig.spec, policy_signal_defs(rig.policy));
    InprocLink in(rt1);
    auto a = closed_loop(in, 1500);

    TcpListener listener(0);
    auto port = listener.port();
    PlcRuntime rt2(rig.spec, policy_signal_defs(rig.policy));
    std::unique_ptr<ServerThread> srv;
    std::thread acceptor([&] {
        auto ch = listener.accept(Millis(5000));
        ASSERT_TRUE(ch);
        srv = std::make_unique<ServerThread>(rt2, rig.policy, std::move(ch));
    });
    RemoteLink re([port]() -> std::unique_ptr<LineChannel> { return TcpChannel::connect("127.0.0.1", port); },
                  rig.policy);
    auto b = closed_loop(re, 1500);
    acceptor.join();
    re.disconnect();
    srv->join();
    EXPECT_EQ(a, b);
    EXPECT_FALSE(srv->error());
}

TEST(Link, ReconnectResyncsFullImage) {
    BarrierRig rig;
    PlcRuntime rt(rig.spec, policy_signal_defs(rig.policy));
    std::vector<std::unique_ptr<ServerThread>> servers;
    RemoteLink link(
        [&]() -> std::unique_ptr<LineChannel> {
            auto [c, s] = make_memory_pair();
            servers.push_back(std::make_unique<ServerThread>(rt, rig.policy, std::move(s)));
            return std::move(c);
        },
        rig.policy);
    link.connect({{kOpened, true}, {kClosed, false}});
    auto r0 = link.sync(0, {});
    EXPECT_EQ(r0.writes.back(), (SignalWrite{kClose, true}));
    link.disconnect();
    servers.back()->join();
    EXPECT_FALSE(link.connected());

    // The PLC keeps its image across sessions; the new session starts with it.
    link.connect({{kOpened, false}, {kClosed, true}});
    auto r1 = link.sync(20000, {});
    ASSERT_GE(r1.writes.size(), 2u);
    EXPECT_EQ(r1.writes[0], (SignalWrite{kOpen, false}));
    EXPECT_EQ(r1.writes[1], (SignalWrite{kClose, true}));
    EXPECT_TRUE(rt.image().read(kClosed));
    EXPECT_EQ(servers.size(), 2u);
}

TEST(Link, PeerDropMidSessionIsConnectionLost) {
    BarrierRig rig;
    auto [a, b] = make_memory_pair();
    auto *far = b.get();
    PlcRuntime rt(rig.spec, policy_signal_defs(rig.policy));
    RemoteLink link(std::move(a), rig.policy, Millis(500));
    std::thread peer([&] {
        Session s(Role::Plc, rig.policy);
        for (auto &l : s.greeting())
            far->send(l);
        while (!s.ready())
            s.on_line(*far->receive(Millis(1000)));
        far->close();
    });
    link.connect({});
    peer.join();
    EXPECT_EQ(code_of([&] { link.sync(0, {}); }), ErrorCode::ConnectionLost);
    EXPECT_FALSE(link.connected());
}

TEST(Channel, MemoryOverflowIsConnectionLost) {
    auto [a, b] = make_memory_pair(8);
    for (int i = 0; i < 8; ++i)
        a->send("x");
    EXPECT_EQ(code_of([&] { a->send("x"); }), ErrorCode::ConnectionLost);
    EXPECT_FALSE(a->is_open());
    EXPECT_FALSE(b->is_open());
    // Lines queued before the overflow are still delivered, then the close.
    for (int i = 0; i < 8; ++i)
        EXPECT_EQ(b->receive(Millis(10)), "x");
    EXPECT_EQ(code_of([&] { (void)b->receive(Millis(10)); }), ErrorCode::ConnectionLost);
}

TEST(Channel, ReceiveTimesOut) {
    auto [a, b] = make_memory_pair();
    EXPECT_FALSE(a->receive(Millis(5)));
}

TEST(Channel, TcpLinesAndClose) {
    TcpListener listener(0);
    std::unique_ptr<TcpChannel> server;
    std::thread t([&] { server = listener.accept(Millis(5000)); });
    auto client = TcpChannel::connect("127.0.0.1", listener.port());
    t.join();
    ASSERT_TRUE(server);
    for (int i = 0; i < 1000; ++i)
        client->send("line " + std::to_string(i));
    for (int i = 0; i < 1000; ++i)
        EXPECT_EQ(server->receive(Millis(2000)), "line " + std::to_string(i));
    client->close();
    EXPECT_EQ(code_of([&] {
                  while (true)
                      (void)server->receive(Millis(2000));
              }),
              ErrorCode::ConnectionLost);
    EXPECT_FALSE(server->is_open());
}

TEST(Channel, AcceptTimesOutAndConnectFailsWithoutServer) {
    TcpListener listener(0);
    EXPECT_EQ(listener.accept(Millis(50)), nullptr);
    auto port = listener.port();
    { TcpListener gone(0); port = gone.port(); }
    EXPECT_EQ(code_of([&] { (void)TcpChannel::connect("127.0.0.1", port, Millis(200)); }), ErrorCode::ConnectionLost);
}

TEST(Channel, PortFromEnvironment) {
    ::unsetenv("TUNNELTWIN_PORT");
    EXPECT_EQ(port_from_env(), kDefaultPort);
    ::setenv("TUNNELTWIN_PORT", "9123", 1);
    EXPECT_EQ(port_from_env(), 9123);
    ::setenv("TUNNELTWIN_PORT", "90000", 1);
    EXPECT_EQ(code_of([] { (void)port_from_env(); }), ErrorCode::ConfigError);
    ::unsetenv("TUNNELTWIN_PORT");
}

// 500 signals mirrored over TCP with both sides flipping their own signals
// concurrently; after quiescence both images are identical and every WRITE
// sent was received in sequence.
TEST(Soak, FiveHundredSignalChurnOverTcp) {
    std::vector<SignalDef> defs;
    for (int i = 0; i < 250; ++i) {
        defs.push_back({"ivar_M_M_HW_Soak_" + std::to_string(i) + "_s_on", Direction::Input, "", SignalKind::Sensor});
        defs.push_back(
            {"dvar_M_M_HW_Soak_" + std::to_string(i) + "_a_on", Direction::Output, "", SignalKind::Actuator});
    }
    auto policy = make_policy(defs);
    SignalBus sim_bus, plc_bus;
    for (const auto &d : policy_signal_defs(policy)) {
        sim_bus.register_signal(d);
        plc_bus.register_signal(d);
    }
    std::vector<std::string> ins, outs;
    for (const auto &d : defs)
        (d.direction == Direction::Input ? ins : outs).push_back(d.name);

    TcpListener listener(0);
    std::unique_ptr<TcpChannel> plc_ch;
    std::thread acc([&] { plc_ch = listener.accept(Millis(5000)); });
    auto sim_ch = TcpChannel::connect("127.0.0.1", listener.port());
    acc.join();
    ASSERT_TRUE(plc_ch);

    BusMirror sim(Role::Sim, sim_bus, *sim_ch, policy);
    BusMirror plc(Role::Plc, plc_bus, *plc_ch, policy);
    std::atomic<bool> churn{true};
    std::uint64_t plc_flips = 0, sim_flips = 0;

    std::thread plc_thread([&] {
        std::mt19937 rng(2);
        plc.open();
        while (!plc.session().ready())
            plc.drain(Millis(10));
        double t = 0;
        while (churn) {
            for (int j = 0; j < 5; ++j) {
                auto &n = outs[rng() % outs.size()];
                plc_bus.write(n, !plc_bus.read(n), t += 0.01);
                ++plc_flips;
            }
            plc.drain(Millis(1));
        }
        while (plc.drain(Millis(300)) > 0) {
        }
    });

    std::mt19937 rng(1);
    sim.open();
    while (!sim.session().ready())
        sim.drain(Millis(10));
    double t = 0;
    for (int round = 0; round < 3000; ++round) {
        for (int j = 0; j < 5; ++j) {
            auto &n = ins[rng() % ins.size()];
            sim_bus.write(n, !sim_bus.read(n), t += 0.01);
            ++sim_flips;
        }
        sim.drain(Millis(0));
    }
    churn = false;
    while (sim.drain(Millis(300)) > 0) {
    }
    plc_thread.join();

    EXPECT_EQ(sim_bus.snapshot(), plc_bus.snapshot());
    EXPECT_EQ(sim.session().sent_writes(), plc.session().received_writes());
    EXPECT_EQ(plc.session().sent_writes(), sim.session().received_writes());
    // Initial images (250 each way) plus every flip.
    EXPECT_EQ(sim.session().sent_writes(), 250 + sim_flips);
    EXPECT_EQ(plc.session().sent_writes(), 250 + plc_flips);
    EXPECT_GT(sim_flips, 10000u);
}
