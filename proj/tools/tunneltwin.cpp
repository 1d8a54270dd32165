// tunneltwin: command-line front end.
//
//   tunneltwin run     --world w.json --spec c.gts [--scenario s.scn] [--trace out.csv] ...
//   tunneltwin codegen --inputs inputs.gvl.txt --state state.struct.txt --out x.policy
//   tunneltwin plc     --spec c.gts (--policy x.policy | --world w.json) [--listen 8510]
//   tunneltwin replay  --trace out.csv
//
// Exit codes: 0 pass, 1 expect failed (or replay differs), 2 livelock,
// 3 configuration, policy or connection error.

#include <tunneltwin/gateway/tcp.hpp>
#include <tunneltwin/harness/runner.hpp>
#include <tunneltwin/harness/ws.hpp>

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

namespace tt = tunneltwin;
namespace th = tunneltwin::harness;
namespace gw = tunneltwin::gateway;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

extern "C" void on_sigint(int) { g_interrupted = 1; }

void write_file(const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text))
        throw tt::Error(tt::ErrorCode::ConfigError, "cannot write " + path);
}

// "tcp://host:port", "host:port" or "tcp://host" (port from TUNNELTWIN_PORT).
std::pair<std::string, std::uint16_t> parse_endpoint(std::string s) {
    if (s.starts_with("tcp://"))
        s = s.substr(6);
    auto colon = s.rfind(':');
    if (colon == std::string::npos)
        return {s.empty() ? "127.0.0.1" : s, gw::port_from_env()};
    auto host = s.substr(0, colon);
    auto port_text = s.substr(colon + 1);
    char *end = nullptr;
    long p = std::strtol(port_text.c_str(), &end, 10);
    if (port_text.empty() || *end != '\0' || p <= 0 || p > 65535)
        throw tt::Error(tt::ErrorCode::ConfigError, "bad PLC endpoint '" + s + "'");
    return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(p)};
}

struct RunOptions {
    std::string world, spec, scenario, policy, plc, trace;
    bool realtime = false;
    int ws_port = -1;
    std::optional<double> duration;
    std::int64_t cycle_us = tt::PlcRuntime::kDefaultCycle;
};

int cmd_run(const RunOptions &o) {
    th::RunSetup s;
    s.world = tt::plant::load_world_config(o.world);
    s.spec_text = th::read_text_file(o.spec);
    if (!o.scenario.empty())
        s.scenario_text = th::read_text_file(o.scenario);
    if (!o.policy.empty())
        s.policy = tt::parse_policy(th::read_text_file(o.policy));
    s.duration = o.duration;
    s.seed = th::seed_from_env();
    s.plc_cycle = o.cycle_us;
    s.realtime = o.realtime;
    if (!o.plc.empty()) {
        auto [host, port] = parse_endpoint(o.plc);
        s.plc = [host, port]() -> std::unique_ptr<gw::LineChannel> {
            return gw::TcpChannel::connect(host, port, gw::Millis(2000));
        };
    }

    th::Runner runner(std::move(s));
    std::unique_ptr<th::WsServer> ws;
    if (o.ws_port >= 0) {
        ws = std::make_unique<th::WsServer>(runner, static_cast<std::uint16_t>(o.ws_port));
        std::cerr << "ws: listening on 127.0.0.1:" << ws->port() << "\n";
    }

    std::signal(SIGINT, on_sigint);
    std::atomic<bool> finished{false};
    std::thread watcher([&] {
        while (!finished.load()) {
            if (g_interrupted)
                runner.request_stop();
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
    });
    th::Trace trace;
    try {
        trace = runner.run();
    } catch (...) {
        finished = true;
        watcher.join();
        throw;
    }
    finished = true;
    watcher.join();
    if (ws)
        ws->stop();

    if (!o.trace.empty())
        write_file(o.trace, th::format_trace(trace));

    for (const auto &n : trace.notes)
        std::cout << "note " << n << "\n";
    const th::Verdict *first_fail = nullptr;
    for (const auto &v : trace.verdicts) {
        std::cout << (v.pass ? "pass " : "FAIL ") << th::format_time(v.time) << " " << v.expect << "\n";
        if (!v.pass && (!first_fail || v.time < first_fail->time))
            first_fail = &v;
    }
    if (trace.fault)
        std::cout << "livelock: edge " << trace.fault->edge << " hit the iteration cap " << trace.fault->cap
                  << " at " << th::format_time(trace.fault->time) << "\n";
    if (first_fail)
        std::cout << "first failure at " << th::format_time(first_fail->time) << ": " << first_fail->expect << "\n";
    std::cout << "exit " << trace.exit_code << "\n";
    return trace.exit_code;
}

struct CodegenOptions {
    std::string inputs, state, out, input_rule, output_rule;
    bool with_buttons = false;
    bool check = false;
};

std::string sidecar_text(const std::string &source_digest, const tt::Policy &p) {
    return "source " + source_digest + "\npolicy " + p.digest + "\n";
}

int cmd_codegen(const CodegenOptions &o) {
    auto inputs = th::read_text_file(o.inputs);
    auto state = th::read_text_file(o.state);
    tt::VarlistDiagnostics diag;
    auto m = tt::codegen_manifest(inputs, state, {o.with_buttons}, &diag);
    auto in_rule = o.input_rule.empty() ? tt::default_input_rule() : tt::NamingRule(o.input_rule);
    auto out_rule = o.output_rule.empty() ? tt::default_output_rule() : tt::NamingRule(o.output_rule);
    auto policy = tt::make_policy(m, in_rule, out_rule);
    const auto sidecar_path = o.out + ".digest";

    if (o.check) {
        std::string recorded;
        try {
            recorded = th::read_text_file(sidecar_path);
        } catch (const tt::Error &) {
            std::cout << "stale: no " << sidecar_path << "\n";
            return 1;
        }
        auto current = tt::emit_policy(policy);
        bool same_policy = false;
        try {
            same_policy = th::read_text_file(o.out) == current;
        } catch (const tt::Error &) {
        }
        if (recorded != sidecar_text(m.source_digest, policy) || !same_policy) {
            std::cout << "stale: " << o.out << " does not match the variable lists\n";
            return 1;
        }
        std::cout << "up to date: " << o.out << "\n";
        return 0;
    }

    write_file(o.out, tt::emit_policy(policy));
    write_file(sidecar_path, sidecar_text(m.source_digest, policy));

    int counts[3] = {0, 0, 0};
    for (const auto &d : m.entries)
        ++counts[static_cast<int>(d.kind)];
    std::cout << "wrote " << o.out << ": " << m.entries.size() << " signals (" << counts[1] << " actuators, "
              << counts[0] << " sensors, " << counts[2] << " buttons)\n"
              << "policy digest " << policy.digest << ", source digest " << m.source_digest << "\n"
              << "skipped records: " << diag.skipped_records << "\n"
              << "omitted buttons: " << diag.omitted_buttons << "\n"
              << "keyword lines: " << diag.keyword_lines << "\n"
              << "unrecognized lines: " << diag.unrecognized_lines << "\n"
              << "blank lines: " << diag.blank_lines << "\n";
    return 0;
}

struct PlcOptions {
    std::string spec, policy, world, host = "127.0.0.1";
    int port = -1;
    double cycle_ms = 10;
    bool keep_state = false;
    bool once = false;
};

int cmd_plc(const PlcOptions &o) {
    auto spec = std::make_shared<const tt::GtsSpec>(tt::parse_gts(th::read_text_file(o.spec)));
    tt::Policy policy;
    if (!o.policy.empty())
        policy = tt::parse_policy(th::read_text_file(o.policy));
    else if (!o.world.empty())
        policy = th::derive_policy(tt::plant::load_world_config(o.world), *spec);
    else
        throw tt::Error(tt::ErrorCode::ConfigError, "plc needs --policy or --world");
    if (o.cycle_ms <= 0)
        throw tt::Error(tt::ErrorCode::ConfigError, "--cycle-ms must be positive");
    const auto cycle = static_cast<tt::SimMicros>(std::llround(o.cycle_ms * 1000));
    const auto port = o.port >= 0 ? static_cast<std::uint16_t>(o.port) : gw::port_from_env();

    gw::TcpListener listener(port, o.host);
    std::cout << "plc: listening on " << o.host << ":" << listener.port() << " (policy digest " << policy.digest
              << ")" << std::endl;
    std::signal(SIGINT, on_sigint);
    std::signal(SIGTERM, on_sigint);

    std::unique_ptr<tt::PlcRuntime> rt;
    std::atomic<bool> stop{false};
    std::thread watcher([&] {
        while (!g_interrupted)
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        stop = true;
    });
    int status = 0;
    while (!stop.load()) {
        auto ch = listener.accept(gw::Millis(200));
        if (!ch)
            continue;
        if (!rt || !o.keep_state)
            rt = std::make_unique<tt::PlcRuntime>(spec, tt::policy_signal_defs(policy), cycle);
        gw::PlcServer server(*rt, policy);
        std::cout << "plc: session opened" << std::endl;
        try {
            auto [received, sent] = server.serve(*ch, &stop);
            std::cout << "plc: session closed (" << received << " writes in, " << sent << " out)" << std::endl;
        } catch (const tt::Error &e) {
            std::cout << "plc: session failed: " << e.what() << std::endl;
            status = 3;
        }
        if (rt->halted())
            std::cout << "plc: halted by livelock on " << rt->livelock()->edge << std::endl;
        if (o.once)
            break;
    }
    g_interrupted = 1;
    watcher.join();
    return o.once ? status : 0;
}

int cmd_replay(const std::string &path) {
    auto r = th::replay(th::read_text_file(path));
    if (r.identical) {
        std::cout << "identical: " << path << "\n";
        return 0;
    }
    std::cout << "differs from " << path << " at line " << *r.first_difference << "\n";
    return 1;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"tunneltwin: road-tunnel digital twin and soft PLC"};
    app.require_subcommand(1);

    RunOptions ro;
    auto *run = app.add_subcommand("run", "simulate a world against a controller and check a scenario");
    run->add_option("--world", ro.world, "world config (JSON)")->required();
    run->add_option("--spec", ro.spec, "controller spec (.gts)")->required();
    run->add_option("--scenario", ro.scenario, "scenario script");
    run->add_option("--policy", ro.policy, "policy document (derived from world and spec when omitted)");
    run->add_option("--plc", ro.plc, "remote PLC, tcp://host:port (in-process when omitted)");
    run->add_flag("--realtime", ro.realtime, "pace the simulation to the wall clock");
    run->add_option("--trace", ro.trace, "write the trace to this file");
    run->add_option("--ws-port", ro.ws_port, "serve the WebSocket state/command API on this port");
    run->add_option("--duration", ro.duration, "simulated seconds; <= 0 runs until interrupted");
    run->add_option("--cycle-us", ro.cycle_us, "PLC scan period in microseconds")->check(CLI::PositiveNumber);

    CodegenOptions co;
    auto *codegen = app.add_subcommand("codegen", "generate a policy document from PLC variable lists");
    codegen->add_option("--inputs", co.inputs, "inputs variable list")->required();
    codegen->add_option("--state", co.state, "state struct variable list")->required();
    codegen->add_option("--out", co.out, "policy document to write")->required();
    codegen->add_flag("--with-gui-buttons", co.with_buttons, "include GUI button signals");
    codegen->add_option("--input-rule", co.input_rule, "address template for inputs, e.g. INPUTS.{{IO_NAME}}");
    codegen->add_option("--output-rule", co.output_rule, "address template for outputs");
    codegen->add_flag("--check", co.check, "exit 1 when the policy is stale instead of writing it");

    PlcOptions po;
    auto *plc = app.add_subcommand("plc", "serve a controller over TCP");
    plc->add_option("--spec", po.spec, "controller spec (.gts)")->required();
    plc->add_option("--policy", po.policy, "policy document");
    plc->add_option("--world", po.world, "derive the policy from this world config");
    plc->add_option("--listen", po.port, "port (default TUNNELTWIN_PORT or 8510; 0 picks one)");
    plc->add_option("--host", po.host, "address to bind");
    plc->add_option("--cycle-ms", po.cycle_ms, "scan period in milliseconds");
    plc->add_flag("--keep-state", po.keep_state, "keep the controller state across sessions");
    plc->add_flag("--once", po.once, "exit after one session");

    std::string replay_path;
    auto *replay = app.add_subcommand("replay", "re-run a trace and compare byte for byte");
    replay->add_option("--trace", replay_path, "recorded trace")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : th::kExitConfigError;
    }

    try {
        if (*run)
            return cmd_run(ro);
        if (*codegen)
            return cmd_codegen(co);
        if (*plc)
            return cmd_plc(po);
        return cmd_replay(replay_path);
    } catch (const tt::Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return th::kExitConfigError;
    }
}
