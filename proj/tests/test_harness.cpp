#include <tunneltwin/gateway/tcp.hpp>
#include <tunneltwin/harness/runner.hpp>
#include <tunneltwin/harness/ws.hpp>

#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

using namespace tunneltwin;
using namespace tunneltwin::harness;

namespace {

std::string data(const std::string &rel) { return read_text_file(std::string(TT_DATA_DIR) + "/" + rel); }

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
const char *kCloseBtn = "ivar_M_M_GUI_button_close_tube1";
const char *kButtonSpec = "automaton GUI: input bool button_x; location: initial; end\n";
const char *kButton = "ivar_M_M_GUI_button_x";

RunSetup barrier_setup(const std::string &scenario) {
    RunSetup s;
    s.world = plant::parse_world_config(data("worlds/single_barrier.json"));
    s.spec_text = data("controllers/test_barrier.gts");
    s.scenario_text = scenario;
    return s;
}

RunSetup tube1_setup(const std::string &scenario_file) {
    RunSetup s;
    s.world = plant::parse_world_config(data("worlds/tube1.json"));
    s.spec_text = data("controllers/tube1_closure.gts");
    s.scenario_text = data(scenario_file);
    s.policy = parse_policy(data("varlists/fixture.policy"));
    return s;
}

std::vector<TraceRow> rows_of(const Trace &t, const std::string &signal) {
    std::vector<TraceRow> out;
    for (const auto &r : t.rows)
        if (r.signal == signal)
            out.push_back(r);
    return out;
}

// PLC side served over TCP: accepts one session per connection until stopped.
class TcpPlc {
  public:
    TcpPlc(std::shared_ptr<const GtsSpec> spec, Policy policy)
        : rt_(std::move(spec), policy_signal_defs(policy)), policy_(std::move(policy)), listener_(0) {
        thread_ = std::thread([this] {
            while (!quit_) {
                auto ch = listener_.accept(gateway::Millis(100));
                if (!ch)
                    continue;
                gateway::PlcServer server(rt_, policy_);
                kick_ = false;
                try {
                    server.serve(*ch, &kick_);
                } catch (const Error &) {
                }
                ++sessions_;
            }
        });
    }
    ~TcpPlc() {
        quit_ = true;
        kick_ = true;
        thread_.join();
    }
    std::uint16_t port() const { return listener_.port(); }
    gateway::ChannelFactory factory() const {
        auto p = port();
        return [p]() -> std::unique_ptr<gateway::LineChannel> {
            return gateway::TcpChannel::connect("127.0.0.1", p, gateway::Millis(2000));
        };
    }
    /// Drops the current session from the PLC side.
    void kick() { kick_ = true; }
    int sessions() const { return sessions_; }
    PlcRuntime &runtime() { return rt_; }

  private:
    PlcRuntime rt_;
    Policy policy_;
    gateway::TcpListener listener_;
    std::atomic<bool> quit_{false};
    std::atomic<bool> kick_{false};
    std::atomic<int> sessions_{0};
    std::thread thread_;
};

} // namespace

// ---------------------------------------------------------------------------
// Scenario scripts
// ---------------------------------------------------------------------------

TEST(Scenario, ParsesDirectivesAndCommands) {
    auto sc = parse_scenario("# comment\nseed 7\nduration 12.5\n"
                             "at 1 press ivar_M_M_GUI_button_x   # trailing comment\n"
                             "at 1 spawn high_truck 1/0\n"
                             "at 2.5 expect s_detected == 1 within 30\n");
    EXPECT_EQ(sc.seed, 7u);
    EXPECT_EQ(sc.duration, 12.5);
    ASSERT_EQ(sc.events.size(), 3u);
    EXPECT_EQ(std::get<PressAction>(sc.events[0].action).signal, "ivar_M_M_GUI_button_x");
    EXPECT_EQ(std::get<plant::PlantCommand>(sc.events[1].action).kind, plant::VehicleKind::HighTruck);
    auto e = std::get<ExpectAction>(sc.events[2].action);
    EXPECT_EQ(e, (ExpectAction{"s_detected", true, 30}));
    EXPECT_EQ(sc.events[2].at, 2.5);
    EXPECT_EQ(sc.events[2].line, 6);
}

TEST(Scenario, FormatRoundTrips) {
    for (const char *f : {"scenarios/close_tube.scn", "scenarios/high_truck.scn", "scenarios/operator_functions.scn",
                          "scenarios/barrier_loop.scn", "scenarios/double_press.scn"}) {
        auto sc = parse_scenario(data(f));
        EXPECT_EQ(parse_scenario(format_scenario(sc)), sc) << f;
    }
}

TEST(Scenario, RejectsMalformedScripts) {
    auto err = [](const char *text) {
        try {
            parse_scenario(text);
        } catch (const Error &e) {
            EXPECT_EQ(e.code(), ErrorCode::ScenarioError);
            return std::string(e.what());
        }
        return std::string("accepted");
    };
    EXPECT_NE(err("at 2 traffic on\nat 1 traffic off\n").find("line 2"), std::string::npos);
    EXPECT_NE(err("at 1 expect x == 1 within 0\n").find("positive"), std::string::npos);
    EXPECT_NE(err("at 1 expect x = 1 within 3\n").find("expect"), std::string::npos);
    EXPECT_NE(err("wait 3\n").find("unknown directive"), std::string::npos);
    EXPECT_NE(err("at -1 traffic on\n").find("non-negative"), std::string::npos);
    EXPECT_NE(err("at 1 set_smoke 1 9\n").find("line 1"), std::string::npos);
    EXPECT_NE(err("at 1 fly away\n").find("unknown command"), std::string::npos);
    EXPECT_NE(err("seed 1\nseed 2\n").find("twice"), std::string::npos);
    EXPECT_NE(err("duration 0\n").find("positive"), std::string::npos);
    EXPECT_NE(err("at x press a\n").find("not a number"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

TEST(TraceFile, RoundTripAndSixDecimals) {
    Trace t;
    t.meta = {{"k", 1}};
    t.rows = {{0, "a", true}, {1.06, "b", false}, {1.0 / 3.0, "c", true}};
    std::sort(t.rows.begin(), t.rows.end(), [](auto &x, auto &y) { return x.time < y.time; });
    t.notes = {"1.000000 plc connected"};
    t.verdicts = {{true, 2.5, "expect a == 1 within 3"}, {false, 4, "expect b == 0 within 1"}};
    t.fault = TraceFault{"Spin@6", 10000, 0.02};
    t.exit_code = 2;
    auto text = format_trace(t);
    EXPECT_NE(text.find("\n0.333333,c,1\n"), std::string::npos);
    EXPECT_NE(text.find("\n1.060000,b,0\n"), std::string::npos);
    EXPECT_NE(text.find("# verdict fail 4.000000 expect b == 0 within 1\n"), std::string::npos);
    auto back = parse_trace(text);
    EXPECT_EQ(format_trace(back), text);
    EXPECT_EQ(back.verdicts, t.verdicts);
    EXPECT_EQ(back.exit_code, 2);
    EXPECT_EQ(back.fault->edge, "Spin@6");
    EXPECT_EQ(format_time(1.0000005), "1.000001");
    EXPECT_EQ(format_time(0), "0.000000");
}

TEST(TraceFile, RejectsBrokenFiles) {
    Trace t;
    auto good = format_trace(t);
    EXPECT_EQ(code_of([&] { parse_trace("time,signal,value\n"); }), ErrorCode::ConfigError);
    EXPECT_EQ(code_of([&] { parse_trace(good.substr(0, good.find("# exit"))); }), ErrorCode::ConfigError);
    auto unordered = good;
    unordered.insert(unordered.find("# exit"), "2.000000,a,1\n1.000000,a,0\n");
    EXPECT_EQ(code_of([&] { parse_trace(unordered); }), ErrorCode::ConfigError);
    auto badval = good;
    badval.insert(badval.find("# exit"), "2.000000,a,2\n");
    EXPECT_EQ(code_of([&] { parse_trace(badval); }), ErrorCode::ConfigError);
    EXPECT_EQ(first_difference("a\nb\nc\n", "a\nb\nc\n"), std::nullopt);
    EXPECT_EQ(first_difference("a\nb\nc\n", "a\nx\nc\n"), 2u);
    EXPECT_EQ(first_difference("a\nb\n", "a\nb\nc\n"), 3u);
}

// ---------------------------------------------------------------------------
// Press pulses
// ---------------------------------------------------------------------------

TEST(Press, ThreeTicksAtFiftyHertz) {
    auto s = barrier_setup("duration 2\nat 1.00 press ivar_M_M_GUI_button_x\n");
    s.spec_text += kButtonSpec;
    Runner r(s);
    auto t = r.run();
    auto rows = rows_of(t, kButton);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(format_time(rows[0].time), "1.000000");
    EXPECT_TRUE(rows[0].value);
    EXPECT_EQ(format_time(rows[1].time), "1.060000");
    EXPECT_FALSE(rows[1].value);
    EXPECT_EQ(t.exit_code, kExitPass);
}

TEST(Press, PulseIsNeverShorterThanFiftyMilliseconds) {
    for (double rate : {20.0, 30.0, 50.0, 60.0, 100.0, 144.0}) {
        auto s = barrier_setup("duration 1\nat 0.5 press ivar_M_M_GUI_button_x\n");
        s.spec_text += kButtonSpec;
        s.world.tick_rate = rate;
        Runner r(s);
        auto rows = rows_of(r.run(), kButton);
        ASSERT_EQ(rows.size(), 2u) << rate;
        std::int64_t ticks = std::llround((rows[1].time - rows[0].time) * rate);
        // Independent oracle: smallest whole number of ticks covering 0.05 s.
        std::int64_t expected = 1;
        while (static_cast<double>(expected) / rate < 0.05 - 1e-12)
            ++expected;
        EXPECT_EQ(ticks, expected) << rate;
        EXPECT_GE(rows[1].time - rows[0].time, 0.05 - 1e-9);
    }
}

TEST(Press, TwoPressesTwoPulses) {
    auto s = barrier_setup("duration 2\nat 1.0 press ivar_M_M_GUI_button_x\nat 1.2 press ivar_M_M_GUI_button_x\n");
    s.spec_text += kButtonSpec;
    Runner r(s);
    auto rows = rows_of(r.run(), kButton);
    int rising = 0;
    for (const auto &row : rows)
        rising += row.value ? 1 : 0;
    EXPECT_EQ(rising, 2);
    ASSERT_EQ(rows.size(), 4u);
}

TEST(Press, SensorIsNotAButton) {
    auto s = barrier_setup("at 1 press ivar_M_M_HW_Boombarrier_s_opened\n");
    EXPECT_EQ(code_of([&] { Runner r(s); }), ErrorCode::NotAButton);
    auto s2 = barrier_setup("at 1 press dvar_M_M_HW_Boombarrier_a_open\n");
    EXPECT_EQ(code_of([&] { Runner r(s2); }), ErrorCode::NotAButton);
    auto s3 = barrier_setup("at 1 press ivar_nope\n");
    EXPECT_EQ(code_of([&] { Runner r(s3); }), ErrorCode::UnknownSignal);
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

TEST(Run, TestControllerAlternatesBarrierCommands) {
    Runner r(barrier_setup("duration 60\n"));
    auto t = r.run();
    std::vector<std::string> rises;
    for (const auto &row : t.rows)
        if ((row.signal == kOpen || row.signal == kClose) && row.value)
            rises.push_back(row.signal);
    ASSERT_GE(rises.size(), 4u);
    for (std::size_t i = 0; i < rises.size(); ++i)
        EXPECT_EQ(rises[i], i % 2 == 0 ? kClose : kOpen) << i;
    // Never both commanded at once once a sync has been applied (rows at one
    // timestamp land together).
    bool open = false, close = false;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto &row = t.rows[i];
        if (row.signal == kOpen)
            open = row.value;
        if (row.signal == kClose)
            close = row.value;
        if (i + 1 == t.rows.size() || t.rows[i + 1].time != row.time)
            EXPECT_FALSE(open && close) << row.time;
    }
}

TEST(Run, HighTruckScenarioPasses) {
    auto s = tube1_setup("scenarios/high_truck.scn");
    Runner r(s);
    auto t = r.run();
    EXPECT_EQ(t.exit_code, kExitPass) << format_trace(t);
    ASSERT_EQ(t.verdicts.size(), 2u);
    EXPECT_TRUE(t.verdicts[0].pass);
    // Oracle: the truck enters at the spawner at half its top speed and
    // accelerates; the beam is 150 m in, so it arrives well inside 30 s.
    EXPECT_GT(t.verdicts[0].time, 1.0 + 150.0 / (80 / 3.6));
    EXPECT_LT(t.verdicts[0].time, 1.0 + 150.0 / (40 / 3.6));
}

TEST(Run, FailingExpectExitsOneWithTimestamp) {
    auto s = barrier_setup("duration 5\nat 1 expect dvar_M_M_HW_Boombarrier_a_open == 1 within 2\n");
    Runner r(s);
    auto t = r.run();
    EXPECT_EQ(t.exit_code, kExitExpectFailed);
    ASSERT_EQ(t.verdicts.size(), 1u);
    EXPECT_FALSE(t.verdicts[0].pass);
    EXPECT_NEAR(t.verdicts[0].time, 3.0, 0.021);
    EXPECT_NE(format_trace(t).find("# verdict fail 3.020000 expect dvar_M_M_HW_Boombarrier_a_open == 1 within 2"),
              std::string::npos);
}

TEST(Run, ExpectStillPendingAtEndFails) {
    Runner r(barrier_setup("duration 2\nat 1 expect a_open == 1 within 30\n"));
    auto t = r.run();
    EXPECT_EQ(t.exit_code, kExitExpectFailed);
    EXPECT_EQ(format_time(t.verdicts.at(0).time), "2.000000");
}

TEST(Run, LivelockExitsTwo) {
    auto s = barrier_setup(data("scenarios/livelock.scn"));
    s.spec_text = data("controllers/livelock.gts");
    Runner r(s);
    auto t = r.run();
    EXPECT_EQ(t.exit_code, kExitLivelock);
    ASSERT_TRUE(t.fault);
    EXPECT_EQ(t.fault->edge, "Spin@6");
    EXPECT_EQ(t.fault->cap, 10000);
    EXPECT_EQ(t.fault->time, 0);
}

TEST(Run, PolicyMissingWorldSignalsIsMismatch) {
    auto s = tube1_setup("scenarios/high_truck.scn");
    s.world.tubes = {1, 2};
    try {
        Runner r(s);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::PolicyMismatch);
        EXPECT_NE(std::string(e.what()).find("TrafficTube_2"), std::string::npos);
    }
}

TEST(Run, InvalidPlantCommandRejectedUpFront) {
    EXPECT_EQ(code_of([&] { Runner r(barrier_setup("at 1 spawn car 3/0\n")); }), ErrorCode::ScenarioError);
    EXPECT_EQ(code_of([&] { Runner r(barrier_setup("at 1 toggle Nowhere/open\n")); }), ErrorCode::ScenarioError);
    EXPECT_EQ(code_of([&] { Runner r(barrier_setup("at 1 expect s_nothing == 1 within 1\n")); }),
              ErrorCode::UnknownSignal);
}

TEST(Run, SignalSuffixResolution) {
    Runner r(tube1_setup("scenarios/high_truck.scn"));
    EXPECT_EQ(r.resolve("HeightDetection_s_detected"), "ivar_M_M_HW_TrafficTube_1_HeightDetection_s_detected");
    EXPECT_EQ(code_of([&] { (void)r.resolve("s_opened"); }), ErrorCode::ScenarioError);
    EXPECT_EQ(code_of([&] { (void)r.resolve("etection_s_detected"); }), ErrorCode::UnknownSignal);
}

TEST(Run, CloseTubeScenarioPasses) {
    Runner r(tube1_setup("scenarios/close_tube.scn"));
    auto t = r.run();
    EXPECT_EQ(t.exit_code, kExitPass) << format_trace(t);
    EXPECT_EQ(t.verdicts.size(), 5u);
}

TEST(Run, OperatorFunctionsScenarioPasses) {
    Runner r(tube1_setup("scenarios/operator_functions.scn"));
    auto t = r.run();
    EXPECT_EQ(t.exit_code, kExitPass) << format_trace(t);
    EXPECT_EQ(r.world().vehicle_count(), 0u);
}

TEST(Run, RowsAreTimeMonotoneAndOnePerFlip) {
    Runner r(tube1_setup("scenarios/close_tube.scn"));
    auto t = r.run();
    std::map<std::string, bool> last;
    double prev = 0;
    for (const auto &row : t.rows) {
        EXPECT_GE(row.time, prev);
        prev = row.time;
        auto it = last.find(row.signal);
        bool before = it == last.end() ? false : it->second;
        EXPECT_NE(before, row.value) << row.signal << " at " << row.time;
        last[row.signal] = row.value;
    }
    // Replaying the rows from an all-false image gives the final bus image.
    for (const auto &[n, v] : r.bus().snapshot())
        EXPECT_EQ(last.count(n) ? last[n] : false, v) << n;
}

TEST(Run, SeedOverridePrecedence) {
    auto s = tube1_setup("scenarios/close_tube.scn");
    s.duration = 1;
    Runner a(s);
    EXPECT_EQ(a.world().config().seed, 3u);
    s.seed = 99;
    Runner b(s);
    EXPECT_EQ(b.world().config().seed, 99u);
}

// ---------------------------------------------------------------------------
// Determinism and replay
// ---------------------------------------------------------------------------

TEST(Replay, SameInputsSameBytes) {
    auto once = [] {
        Runner r(tube1_setup("scenarios/close_tube.scn"));
        return format_trace(r.run());
    };
    EXPECT_EQ(once(), once());
}

TEST(Replay, ReplayReproducesTrace) {
    Runner r(tube1_setup("scenarios/operator_functions.scn"));
    auto text = format_trace(r.run());
    auto res = replay(text);
    EXPECT_TRUE(res.identical) << "first difference at line " << res.first_difference.value_or(0);
    EXPECT_EQ(res.replayed, text);
}

TEST(Replay, TamperedTraceIsReported) {
    Runner r(barrier_setup("duration 30\n"));
    auto text = format_trace(r.run());
    auto pos = text.find(std::string(",") + kClose + ",1");
    ASSERT_NE(pos, std::string::npos);
    auto line = static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n')) + 1;
    text[pos + 1 + std::strlen(kClose) + 1] = '0';
    auto res = replay(text);
    EXPECT_FALSE(res.identical);
    EXPECT_EQ(res.first_difference, line);
}

// ---------------------------------------------------------------------------
// Bindings
// ---------------------------------------------------------------------------

TEST(Binding, InprocAndTcpTracesAreByteIdentical) {
    for (const char *scn : {"scenarios/close_tube.scn", "scenarios/operator_functions.scn"}) {
        auto s = tube1_setup(scn);
        Runner in(s);
        auto a = format_trace(in.run());

        auto spec = std::make_shared<const GtsSpec>(parse_gts(s.spec_text));
        TcpPlc plc(spec, *s.policy);
        s.plc = plc.factory();
        Runner tcp(s);
        auto b = format_trace(tcp.run());
        EXPECT_EQ(a, b) << scn;
    }
}

TEST(Binding, DisconnectFreezesOutputsAndReconnectResyncs) {
    auto s = barrier_setup("duration 40\n");
    auto spec = std::make_shared<const GtsSpec>(parse_gts(s.spec_text));
    auto policy = derive_policy(s.world, *spec);
    TcpPlc plc(spec, policy);
    s.plc = plc.factory();
    s.reconnect_interval = 2.0;
    Runner r(s);
    r.start();
    while (r.sim_time() < 5.0)
        r.step();
    ASSERT_TRUE(r.plc_connected());
    EXPECT_TRUE(r.bus().read(kClose));

    plc.kick();
    // Keep stepping; the plant runs on while the link is down.
    auto frozen_open = r.bus().read(kOpen), frozen_close = r.bus().read(kClose);
    double lost_at = -1;
    while (r.sim_time() < 25.0) {
        r.step();
        if (!r.plc_connected() && lost_at < 0)
            lost_at = r.sim_time();
        if (lost_at >= 0 && !r.plc_connected()) {
            EXPECT_EQ(r.bus().read(kOpen), frozen_open);
            EXPECT_EQ(r.bus().read(kClose), frozen_close);
        }
    }
    ASSERT_GE(lost_at, 0);
    EXPECT_TRUE(r.plc_connected());
    auto t = r.trace();
    bool lost = false, back = false;
    for (const auto &n : t.notes) {
        lost |= n.find("connection lost") != std::string::npos;
        back |= n.find("plc connected") != std::string::npos;
    }
    EXPECT_TRUE(lost);
    EXPECT_TRUE(back);
    EXPECT_GE(plc.sessions(), 1);
    // After resync the plant image equals the PLC's outputs.
    r.step();
    for (const auto &w : plc.runtime().output_image())
        EXPECT_EQ(r.bus().read(w.name), w.value) << w.name;
    // The plant kept simulating: the barrier image reflects the PLC's
    // commands again after reconnecting.
    EXPECT_EQ(r.finish().exit_code, kExitPass);
}

TEST(Binding, UnreachablePlcFailsAtStart) {
    auto s = barrier_setup("duration 1\n");
    std::uint16_t port;
    {
        gateway::TcpListener gone(0);
        port = gone.port();
    }
    s.plc = [port]() -> std::unique_ptr<gateway::LineChannel> {
        return gateway::TcpChannel::connect("127.0.0.1", port, gateway::Millis(100));
    };
    Runner r(s);
    EXPECT_EQ(code_of([&] { r.start(); }), ErrorCode::ConnectionLost);
}

// ---------------------------------------------------------------------------
// WebSocket API
// ---------------------------------------------------------------------------

namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;

class WsClient {
  public:
    explicit WsClient(std::uint16_t port) : ws_(io_) {
        boost::asio::ip::tcp::resolver res(io_);
        auto eps = res.resolve("127.0.0.1", std::to_string(port));
        boost::asio::connect(ws_.next_layer(), eps);
        ws_.handshake("127.0.0.1", "/");
    }
    void send(const nlohmann::json &j) { ws_.write(boost::asio::buffer(j.dump())); }
    void send_raw(const std::string &s) { ws_.write(boost::asio::buffer(s)); }
    nlohmann::json next() {
        beast::flat_buffer b;
        ws_.read(b);
        return nlohmann::json::parse(beast::buffers_to_string(b.data()));
    }
    std::string next_raw() {
        beast::flat_buffer b;
        ws_.read(b);
        return beast::buffers_to_string(b.data());
    }
    /// Next frame that is not a state frame.
    nlohmann::json reply() {
        for (;;) {
            auto j = next();
            if (j["type"] != "state")
                return j;
        }
    }

  private:
    boost::asio::io_context io_;
    websocket::stream<boost::asio::ip::tcp::socket> ws_;
};

} // namespace

TEST(Ws, StateFramesCarryWorldAndSignals) {
    Runner r(tube1_setup("scenarios/close_tube.scn"));
    r.start();
    WsServer server(r, 0);
    WsClient c(server.port());
    auto f = c.next();
    EXPECT_EQ(f["type"], "state");
    EXPECT_EQ(f["time"], 0.0);
    EXPECT_TRUE(f["signals"].contains(kCloseBtn));
    EXPECT_EQ(f["signals"]["ivar_M_M_HW_TrafficTube_1_BoomBarrier_1_s_opened"], 1);
    EXPECT_TRUE(f["world"]["entities"].is_array());
    EXPECT_TRUE(f["world"]["events"].is_array());
    EXPECT_TRUE(f["plc"]["connected"].get<bool>());
}

TEST(Ws, FrameRateAtMostTwentyHertz) {
    Runner r(tube1_setup("scenarios/close_tube.scn"));
    r.start();
    WsServer server(r, 0);
    WsClient c(server.port());
    c.next();
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 10; ++i)
        c.next();
    auto elapsed = std::chrono::steady_clock::now() - t0;
    EXPECT_GE(elapsed, std::chrono::milliseconds(10 * 50 - 20));
}

TEST(Ws, PressIsAckedAndPulses) {
    Runner r(tube1_setup("scenarios/close_tube.scn"));
    r.start();
    for (int i = 0; i < 10; ++i)
        r.step();
    WsServer server(r, 0);
    WsClient c(server.port());
    c.send({{"type", "press"}, {"id", 7}, {"signal", kCloseBtn}});
    auto ack = c.reply();
    EXPECT_EQ(ack["type"], "ack");
    EXPECT_EQ(ack["id"], 7);
    EXPECT_DOUBLE_EQ(ack["apply_time"].get<double>(), 0.2);
    for (int i = 0; i < 10; ++i)
        r.step();
    auto rows = rows_of(r.trace(), kCloseBtn);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(format_time(rows[0].time), "0.200000");
    EXPECT_EQ(format_time(rows[1].time), "0.260000");
}

TEST(Ws, MalformedCommandsGetErrorFramesAndKeepTheConnection) {
    Runner r(tube1_setup("scenarios/close_tube.scn"));
    r.start();
    WsServer server(r, 0);
    WsClient c(server.port());
    c.send_raw("{not json");
    EXPECT_EQ(c.reply()["type"], "error");
    c.send({{"type", "press"}, {"id", 1}, {"signal", "ivar_M_M_HW_TrafficTube_1_EmergencyExit_s_open"}});
    auto e = c.reply();
    EXPECT_EQ(e["type"], "error");
    EXPECT_EQ(e["id"], 1);
    EXPECT_NE(e["message"].get<std::string>().find("not a button"), std::string::npos);
    c.send({{"type", "command"}, {"id", 2}, {"command", "set_smoke 7 3"}});
    EXPECT_EQ(c.reply()["type"], "error");
    c.send({{"type", "launch"}, {"id", 3}});
    EXPECT_EQ(c.reply()["type"], "error");
    c.send({{"type", "toggle"}, {"id", 4}});
    EXPECT_EQ(c.reply()["type"], "error");
    c.send({{"type", "command"}, {"id", 5}, {"command", "set_smoke 1 3"}});
    EXPECT_EQ(c.reply()["type"], "ack");
}

TEST(Ws, ToggleEmergencyExitFlipsSensor) {
    Runner r(tube1_setup("scenarios/close_tube.scn"));
    r.start();
    WsServer server(r, 0);
    WsClient c(server.port());
    const char *sig = "ivar_M_M_HW_TrafficTube_1_EmergencyExit_s_open";
    EXPECT_FALSE(r.bus().read(sig));
    c.send({{"type", "toggle"}, {"id", "x"}, {"target", "TrafficTube_1/EmergencyExit/open"}});
    auto ack = c.reply();
    EXPECT_EQ(ack["type"], "ack");
    EXPECT_EQ(ack["id"], "x");
    r.step();
    EXPECT_TRUE(r.bus().read(sig));
}

TEST(Ws, TwoClientsSeeIdenticalStreams) {
    Runner r(tube1_setup("scenarios/close_tube.scn"));
    r.start();
    for (int i = 0; i < 5; ++i)
        r.step();
    WsServer server(r, 0);
    WsClient a(server.port());
    WsClient b(server.port());
    while (server.clients() < 2)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    // The runner is idle, so every frame carries the same state.
    auto fa = a.next_raw();
    auto fb = b.next_raw();
    EXPECT_EQ(fa, fb);
    EXPECT_EQ(nlohmann::json::parse(fa)["tick"], 5);
}

TEST(Ws, CommandsAfterTheRunEndAreRejected) {
    Runner r(barrier_setup("duration 0.1\n"));
    r.run();
    WsServer server(r, 0);
    WsClient c(server.port());
    c.send({{"type", "command"}, {"command", "traffic on"}});
    auto e = c.reply();
    EXPECT_EQ(e["type"], "error");
    EXPECT_TRUE(e["id"].is_null());
}
