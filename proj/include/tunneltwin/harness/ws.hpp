#pragma once

// WebSocket state/command API for operator clients.
//
// Server to client:
//   {"type":"state", "time":..., "tick":..., "world":{...}, "signals":{...}, "plc":{...}, "done":...}
//   {"type":"ack", "id":..., "apply_time":...}
//   {"type":"error", "id":..., "message":"..."}
// Client to server:
//   {"type":"press", "id":..., "signal":"ivar_M_M_GUI_button_close_tube1"}
//   {"type":"toggle", "id":..., "target":"TrafficTube_1/EmergencyExit/open"}
//   {"type":"command", "id":..., "command":"set_smoke 1 4"}
//
// State frames go to every client at a fixed period (at most 20 Hz). A client
// that falls behind skips state frames; acks and errors are never dropped.

#include <tunneltwin/error.hpp>
#include <tunneltwin/harness/runner.hpp>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <deque>
#include <memory>
#include <set>
#include <string>
#include <thread>

namespace tunneltwin::harness {

namespace ws_detail {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

inline constexpr std::size_t kMaxQueuedFrames = 64;

/// Handles one client message; returns the reply frame.
inline nlohmann::json handle_message(Runner &runner, const std::string &text) {
    nlohmann::json id = nullptr;
    try {
        auto msg = nlohmann::json::parse(text);
        if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
            throw Error(ErrorCode::ProtocolError, "message must be an object with a string 'type'");
        if (msg.contains("id"))
            id = msg["id"];
        auto field = [&](const char *k) {
            if (!msg.contains(k) || !msg[k].is_string())
                throw Error(ErrorCode::ProtocolError, std::string("missing string field '") + k + "'");
            return msg[k].get<std::string>();
        };
        const auto type = msg["type"].get<std::string>();
        ScenarioAction action;
        if (type == "press")
            action = PressAction{field("signal")};
        else if (type == "toggle")
            action = parse_action("toggle " + field("target"));
        else if (type == "command")
            action = parse_action(field("command"));
        else
            throw Error(ErrorCode::ProtocolError, "unknown message type '" + type + "'");
        double at = runner.enqueue(action);
        return {{"type", "ack"}, {"id", id}, {"apply_time", at}};
    } catch (const nlohmann::json::exception &e) {
        return {{"type", "error"}, {"id", id}, {"message", std::string("malformed JSON: ") + e.what()}};
    } catch (const Error &e) {
        return {{"type", "error"}, {"id", id}, {"message", e.what()}};
    }
}

class Session : public std::enable_shared_from_this<Session> {
  public:
    Session(tcp::socket sock, Runner &runner, std::set<std::shared_ptr<Session>> &registry)
        : ws_(std::move(sock)), runner_(runner), registry_(registry) {}

    void start() {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        registry_.insert(shared_from_this());
        ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
            if (ec) {
                self->drop();
                return;
            }
            self->open_ = true;
            self->read();
        });
    }

    void send(std::string frame, bool droppable) {
        if (closed_ || !open_)
            return;
        if (droppable && out_.size() >= kMaxQueuedFrames)
            return;
        out_.push_back(std::move(frame));
        if (out_.size() == 1)
            write();
    }

    void close() {
        if (closed_)
            return;
        closed_ = true;
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().close(ec);
    }

    [[nodiscard]] bool is_open() const { return open_ && !closed_; }

  private:
    void read() {
        ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->drop();
                return;
            }
            auto text = beast::buffers_to_string(self->buf_.data());
            self->buf_.consume(self->buf_.size());
            self->send(handle_message(self->runner_, text).dump(), false);
            self->read();
        });
    }

    void write() {
        ws_.text(true);
        ws_.async_write(asio::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->drop();
                return;
            }
            self->out_.pop_front();
            if (!self->out_.empty())
                self->write();
        });
    }

    void drop() {
        closed_ = true;
        registry_.erase(shared_from_this());
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buf_;
    Runner &runner_;
    std::set<std::shared_ptr<Session>> &registry_;
    std::deque<std::string> out_;
    bool open_ = false;
    bool closed_ = false;
};

} // namespace ws_detail

class WsServer {
  public:
    /// Port 0 picks a free port. Serving starts immediately on a background
    /// thread.
    WsServer(Runner &runner, std::uint16_t port, const std::string &host = "127.0.0.1",
             std::chrono::milliseconds period = std::chrono::milliseconds(50))
        : runner_(runner), acceptor_(io_, ws_detail::tcp::endpoint(boost::asio::ip::make_address(host), port)),
          timer_(io_), period_(std::max(period, std::chrono::milliseconds(50))) {
        accept();
        tick();
        thread_ = std::thread([this] { io_.run(); });
    }

    ~WsServer() { stop(); }
    WsServer(const WsServer &) = delete;
    WsServer &operator=(const WsServer &) = delete;

    [[nodiscard]] std::uint16_t port() const { return port_; }

    void stop() {
        if (!thread_.joinable())
            return;
        // Closing the acceptor, timer and sockets leaves the io thread without
        // work, so it returns on its own.
        boost::asio::post(io_, [this] { beast_close(); });
        thread_.join();
    }

    /// Number of connected clients (approximate; read from another thread).
    [[nodiscard]] std::size_t clients() const { return clients_.load(); }

  private:
    void beast_close() {
        boost::system::error_code ec;
        acceptor_.close(ec);
        timer_.cancel();
        auto all = sessions_;
        for (const auto &s : all)
            s->close();
        sessions_.clear();
        clients_ = 0;
    }

    void accept() {
        acceptor_.async_accept([this](boost::system::error_code ec, ws_detail::tcp::socket sock) {
            if (ec)
                return;
            std::make_shared<ws_detail::Session>(std::move(sock), runner_, sessions_)->start();
            accept();
        });
    }

    void tick() {
        timer_.expires_after(period_);
        timer_.async_wait([this](boost::system::error_code ec) {
            if (ec)
                return;
            clients_ = static_cast<std::size_t>(
                std::count_if(sessions_.begin(), sessions_.end(), [](const auto &s) { return s->is_open(); }));
            if (clients_ > 0) {
                auto frame = runner_.state_frame().dump();
                for (const auto &s : sessions_)
                    s->send(frame, true);
            }
            tick();
        });
    }

    Runner &runner_;
    boost::asio::io_context io_;
    ws_detail::tcp::acceptor acceptor_;
    boost::asio::steady_timer timer_;
    std::chrono::milliseconds period_;
    std::uint16_t port_ = acceptor_.local_endpoint().port();
    std::set<std::shared_ptr<ws_detail::Session>> sessions_;
    std::atomic<std::size_t> clients_{0};
    std::thread thread_;
};

} // namespace tunneltwin::harness
