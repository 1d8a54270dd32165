#pragma once

// TCP transport for the line protocol. Each channel runs its own io thread;
// sends are queued (bounded) so the caller never blocks on the network.

#include <tunneltwin/error.hpp>
#include <tunneltwin/gateway/channel.hpp>
#include <tunneltwin/gateway/protocol.hpp>

#include <boost/asio.hpp>

#include <atomic>
#include <cstdlib>
#include <deque>
#include <future>
#include <memory>
#include <string>
#include <thread>

namespace tunneltwin::gateway {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

class TcpChannel final : public LineChannel {
  public:
    explicit TcpChannel(std::size_t queue_limit = kDefaultQueueLimit) : in_(queue_limit), limit_(queue_limit) {}
    ~TcpChannel() override { close(); }
    TcpChannel(const TcpChannel &) = delete;
    TcpChannel &operator=(const TcpChannel &) = delete;

    /// Connects, retrying until `timeout` elapses (the server may still be
    /// starting up).
    static std::unique_ptr<TcpChannel> connect(const std::string &host, std::uint16_t port,
                                               Millis timeout = Millis(5000)) {
        auto ch = std::make_unique<TcpChannel>();
        auto deadline = std::chrono::steady_clock::now() + timeout;
        tcp::resolver resolver(ch->io_);
        for (;;) {
            boost::system::error_code ec;
            auto eps = resolver.resolve(host, std::to_string(port), ec);
            if (!ec) {
                asio::connect(ch->sock_, eps, ec);
                if (!ec)
                    break;
            }
            if (std::chrono::steady_clock::now() >= deadline)
                throw Error(ErrorCode::ConnectionLost,
                            "cannot connect to " + host + ":" + std::to_string(port) + ": " + ec.message());
            std::this_thread::sleep_for(Millis(50));
        }
        ch->start();
        return ch;
    }

    void send(std::string line) override {
        if (!open_.load())
            throw Error(ErrorCode::ConnectionLost, "connection closed");
        if (queued_.fetch_add(1) >= limit_) {
            close();
            throw Error(ErrorCode::ConnectionLost, "outbound queue overflow");
        }
        line.push_back('\n');
        asio::post(io_, [this, l = std::move(line)]() mutable {
            out_.push_back(std::move(l));
            if (out_.size() == 1)
                write_next();
        });
    }

    std::optional<std::string> receive(Millis timeout) override { return in_.pop(timeout); }

    /// Flushes queued lines (bounded wait), then shuts the socket down.
    void close() override {
        if (closed_.exchange(true))
            return;
        if (!thread_.joinable()) {
            boost::system::error_code ec;
            sock_.close(ec);
            in_.close();
            open_ = false;
            return;
        }
        asio::post(io_, [this] {
            closing_ = true;
            if (out_.empty())
                shutdown();
        });
        if (done_.wait_for(std::chrono::seconds(2)) != std::future_status::ready)
            io_.stop();
        thread_.join();
        open_ = false;
        in_.close();
    }

    [[nodiscard]] bool is_open() const override { return open_.load(); }

  private:
    friend class TcpListener;

    void start() {
        open_ = true;
        read_next();
        auto p = std::make_shared<std::promise<void>>();
        done_ = p->get_future();
        thread_ = std::thread([this, p] {
            io_.run();
            p->set_value();
        });
    }

    void read_next() {
        asio::async_read_until(sock_, buf_, '\n', [this](boost::system::error_code ec, std::size_t n) {
            if (ec) {
                fail();
                return;
            }
            std::string line(asio::buffers_begin(buf_.data()), asio::buffers_begin(buf_.data()) + n - 1);
            buf_.consume(n);
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            if (!in_.push(std::move(line))) {
                fail();
                return;
            }
            read_next();
        });
    }

    void write_next() {
        asio::async_write(sock_, asio::buffer(out_.front()), [this](boost::system::error_code ec, std::size_t) {
            if (ec) {
                fail();
                return;
            }
            out_.pop_front();
            --queued_;
            if (!out_.empty())
                write_next();
            else if (closing_)
                shutdown();
        });
    }

    void shutdown() {
        boost::system::error_code ec;
        sock_.shutdown(tcp::socket::shutdown_both, ec);
        sock_.close(ec);
    }

    void fail() {
        open_ = false;
        in_.close();
        shutdown();
    }

    asio::io_context io_;
    tcp::socket sock_{io_};
    asio::streambuf buf_;
    std::deque<std::string> out_; // io thread only
    LineQueue in_;
    std::size_t limit_;
    std::atomic<std::size_t> queued_{0};
    std::atomic<bool> open_{false};
    std::atomic<bool> closed_{false};
    bool closing_ = false; // io thread only
    std::thread thread_;
    std::future<void> done_;
};

class TcpListener {
  public:
    /// Port 0 picks a free port.
    explicit TcpListener(std::uint16_t port, const std::string &host = "127.0.0.1")
        : acceptor_(io_, tcp::endpoint(asio::ip::make_address(host), port)) {}

    [[nodiscard]] std::uint16_t port() const { return acceptor_.local_endpoint().port(); }

    /// Waits up to `timeout` for a client; nullptr on timeout.
    std::unique_ptr<TcpChannel> accept(Millis timeout) {
        auto ch = std::make_unique<TcpChannel>();
        boost::system::error_code result = asio::error::would_block;
        acceptor_.async_accept(ch->sock_, [&](boost::system::error_code ec) { result = ec; });
        io_.restart();
        io_.run_for(timeout);
        if (result == asio::error::would_block) {
            acceptor_.cancel();
            io_.restart();
            io_.run();
            return nullptr;
        }
        if (result)
            return nullptr;
        ch->start();
        return ch;
    }

  private:
    asio::io_context io_;
    tcp::acceptor acceptor_;
};

/// TUNNELTWIN_PORT replaces `fallback` when set.
inline std::uint16_t port_from_env(std::uint16_t fallback = kDefaultPort) {
    const char *s = std::getenv("TUNNELTWIN_PORT");
    if (!s || !*s)
        return fallback;
    char *end = nullptr;
    long v = std::strtol(s, &end, 10);
    if (end == s || *end != '\0' || v < 0 || v > 65535)
        throw Error(ErrorCode::ConfigError, std::string("TUNNELTWIN_PORT is not a port number: ") + s);
    return static_cast<std::uint16_t>(v);
}

} // namespace tunneltwin::gateway
