#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace tunneltwin::plant {

inline constexpr int kMaxLevel = 8;

/// Linear interpolation of a measured intensity onto 0..8, rounded half away
/// from zero and clamped for readings outside [i_min, i_max].
inline int level_from_intensity(double i, double i_min, double i_max) {
    double x = (i - i_min) / (i_max - i_min) * kMaxLevel;
    long r = std::lround(x);
    return static_cast<int>(std::clamp<long>(r, 0, kMaxLevel));
}

struct OneHotResult {
    int level = 0;
    bool warning = false;
};

/// Nine actuator booleans of which exactly one should be true. None true
/// keeps `previous`; several true take the lowest index and raise a warning.
template <std::size_t N> OneHotResult one_hot_apply(const std::array<bool, N> &acts, int previous) {
    int first = -1;
    int count = 0;
    for (std::size_t i = 0; i < N; ++i) {
        if (acts[i]) {
            if (first < 0)
                first = static_cast<int>(i);
            ++count;
        }
    }
    if (count == 0)
        return {previous, false};
    return {first, count > 1};
}

} // namespace tunneltwin::plant
