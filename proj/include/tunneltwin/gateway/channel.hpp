#pragma once

// Line-oriented duplex channels. The in-memory pair is used for in-process
// protocol runs and tests; the TCP channel lives in tcp.hpp.

#include <tunneltwin/error.hpp>

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tunneltwin::gateway {

using Millis = std::chrono::milliseconds;

inline constexpr std::size_t kDefaultQueueLimit = 1 << 16;

class LineChannel {
  public:
    virtual ~LineChannel() = default;
    /// Queues one line (without terminator). Throws ConnectionLost when the
    /// channel is closed or its outbound queue is full.
    virtual void send(std::string line) = 0;
    /// Next received line; nullopt on timeout. Throws ConnectionLost once the
    /// channel is closed and nothing is left to read.
    virtual std::optional<std::string> receive(Millis timeout) = 0;
    virtual void close() = 0;
    [[nodiscard]] virtual bool is_open() const = 0;
};

/// Bounded, closable FIFO of lines shared between threads.
class LineQueue {
  public:
    explicit LineQueue(std::size_t limit = kDefaultQueueLimit) : limit_(limit) {}

    /// False when closed or full.
    bool push(std::string line) {
        {
            std::lock_guard lk(m_);
            if (closed_ || q_.size() >= limit_)
                return false;
            q_.push_back(std::move(line));
        }
        cv_.notify_one();
        return true;
    }

    /// Waits up to `timeout`. nullopt on timeout; throws ConnectionLost when
    /// closed and drained.
    std::optional<std::string> pop(Millis timeout) {
        std::unique_lock lk(m_);
        cv_.wait_for(lk, timeout, [&] { return !q_.empty() || closed_; });
        if (!q_.empty()) {
            auto l = std::move(q_.front());
            q_.pop_front();
            return l;
        }
        if (closed_)
            throw Error(ErrorCode::ConnectionLost, "channel closed");
        return std::nullopt;
    }

    void close() {
        {
            std::lock_guard lk(m_);
            closed_ = true;
        }
        cv_.notify_all();
    }

    [[nodiscard]] bool closed() const {
        std::lock_guard lk(m_);
        return closed_;
    }

  private:
    mutable std::mutex m_;
    std::condition_variable cv_;
    std::deque<std::string> q_;
    std::size_t limit_;
    bool closed_ = false;
};

/// One end of an in-memory channel pair.
class MemoryChannel final : public LineChannel {
  public:
    MemoryChannel(std::shared_ptr<LineQueue> in, std::shared_ptr<LineQueue> out)
        : in_(std::move(in)), out_(std::move(out)) {}
    ~MemoryChannel() override { close(); }

    void send(std::string line) override {
        if (!out_->push(std::move(line))) {
            close();
            throw Error(ErrorCode::ConnectionLost, "peer closed or outbound queue full");
        }
    }
    std::optional<std::string> receive(Millis timeout) override { return in_->pop(timeout); }
    void close() override {
        in_->close();
        out_->close();
    }
    [[nodiscard]] bool is_open() const override { return !in_->closed() && !out_->closed(); }

  private:
    std::shared_ptr<LineQueue> in_;
    std::shared_ptr<LineQueue> out_;
};

inline std::pair<std::unique_ptr<LineChannel>, std::unique_ptr<LineChannel>>
make_memory_pair(std::size_t limit = kDefaultQueueLimit) {
    auto a = std::make_shared<LineQueue>(limit);
    auto b = std::make_shared<LineQueue>(limit);
    return {std::make_unique<MemoryChannel>(a, b), std::make_unique<MemoryChannel>(b, a)};
}

/// Decorator recording every line crossing it, prefixed "> " (sent) or
/// "< " (received); used for transcripts.
class RecordingChannel final : public LineChannel {
  public:
    explicit RecordingChannel(std::unique_ptr<LineChannel> inner) : inner_(std::move(inner)) {}

    void send(std::string line) override {
        {
            std::lock_guard lk(m_);
            log_.push_back("> " + line);
        }
        inner_->send(std::move(line));
    }
    std::optional<std::string> receive(Millis timeout) override {
        auto l = inner_->receive(timeout);
        if (l) {
            std::lock_guard lk(m_);
            log_.push_back("< " + *l);
        }
        return l;
    }
    void close() override { inner_->close(); }
    [[nodiscard]] bool is_open() const override { return inner_->is_open(); }

    [[nodiscard]] std::vector<std::string> transcript() const {
        std::lock_guard lk(m_);
        return log_;
    }

  private:
    std::unique_ptr<LineChannel> inner_;
    mutable std::mutex m_;
    std::vector<std::string> log_;
};

} // namespace tunneltwin::gateway
