#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace pwrsim {

/// Simulation time and durations, in integer microseconds.
using Time = std::int64_t;
/// Power draw, in integer milliwatts.
using Power = std::int64_t;

/// Dense index of a node inside a Platform (0..num_nodes-1).
using NodeIndex = std::size_t;
/// Dense index of a job inside a Workload.
using JobIndex = std::size_t;

inline constexpr Time kMicrosPerSecond = 1'000'000;

/// Converts seconds to microseconds, rounding half to even.
[[nodiscard]] Time seconds_to_time(double seconds);
/// Converts watts to milliwatts, rounding half to even.
[[nodiscard]] Power watts_to_power(double watts);

[[nodiscard]] inline double time_to_seconds(Time t) {
    return static_cast<double>(t) / static_cast<double>(kMicrosPerSecond);
}

/// Formats a time as seconds with exactly six decimals, independent of locale.
[[nodiscard]] std::string format_seconds(Time t);

/// Exact energy quantity.
///
/// The product of a duration in microseconds and a power in milliwatts is a
/// nanojoule count; it is kept in a 128-bit integer so that accumulating a
/// large platform over months of simulated time cannot overflow.
class Energy {
public:
    using Rep = __int128;

    constexpr Energy() = default;

    [[nodiscard]] static constexpr Energy from_nanojoules(Rep nj) { return Energy(nj); }
    [[nodiscard]] static constexpr Energy of(Time duration, Power power) {
        return Energy(static_cast<Rep>(duration) * static_cast<Rep>(power));
    }
    [[nodiscard]] static constexpr Energy from_joules_exact(std::int64_t joules) {
        return Energy(static_cast<Rep>(joules) * 1'000'000'000);
    }

    [[nodiscard]] constexpr Rep nanojoules() const { return nj_; }
    /// Microjoules, truncated toward zero. Exact whenever powers are whole
    /// watts or durations are whole milliseconds.
    [[nodiscard]] std::int64_t microjoules() const { return static_cast<std::int64_t>(nj_ / 1000); }
    [[nodiscard]] double joules() const { return static_cast<double>(nj_) / 1e9; }

    constexpr Energy& operator+=(Energy o) {
        nj_ += o.nj_;
        return *this;
    }
    constexpr Energy& operator-=(Energy o) {
        nj_ -= o.nj_;
        return *this;
    }
    friend constexpr Energy operator+(Energy a, Energy b) { return a += b; }
    friend constexpr Energy operator-(Energy a, Energy b) { return a -= b; }
    friend constexpr bool operator==(Energy a, Energy b) = default;
    friend constexpr auto operator<=>(Energy a, Energy b) = default;

private:
    constexpr explicit Energy(Rep nj) : nj_(nj) {}

    Rep nj_ = 0;
};

/// Decimal rendering of an exact nanojoule count.
[[nodiscard]] std::string to_string(Energy e);

}  // namespace pwrsim
