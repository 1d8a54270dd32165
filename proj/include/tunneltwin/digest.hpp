#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace tunneltwin {

/// 64-bit FNV-1a. Used only to detect stale or mismatched policies, not for
/// integrity against an adversary.
class Fnv1a64 {
  public:
    Fnv1a64 &update(std::string_view data) {
        for (unsigned char c : data) {
            state_ ^= c;
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }

    [[nodiscard]] std::uint64_t value() const { return state_; }

    [[nodiscard]] std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
        return buf;
    }

  private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

} // namespace tunneltwin
