#pragma once

#include <pwrsim/platform.hpp>
#include <pwrsim/units.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace pwrsim {

/// Accounting states. `computing` and `idle` split the platform's `active`.
enum class TraceState : std::uint8_t { computing = 0, idle = 1, sleeping = 2, switching_on = 3, switching_off = 4 };

inline constexpr std::size_t kTraceStateCount = 5;
inline constexpr std::array<TraceState, kTraceStateCount> kAllTraceStates = {
    TraceState::computing, TraceState::idle, TraceState::sleeping, TraceState::switching_on,
    TraceState::switching_off};

[[nodiscard]] std::string_view to_string(TraceState s);
[[nodiscard]] std::optional<TraceState> parse_trace_state(std::string_view name);

/// Power state the accounting state draws from.
[[nodiscard]] constexpr PowerState power_state_of(TraceState s) {
    switch (s) {
    case TraceState::computing:
    case TraceState::idle: return PowerState::active;
    case TraceState::sleeping: return PowerState::sleeping;
    case TraceState::switching_on: return PowerState::switching_on;
    case TraceState::switching_off: return PowerState::switching_off;
    }
    return PowerState::active;
}

/// Half-open interval [begin, end) spent in one platform power state.
struct StateInterval {
    PowerState state = PowerState::active;
    Time begin = 0;
    Time end = 0;
    friend bool operator==(const StateInterval&, const StateInterval&) = default;
};

struct TraceInterval {
    TraceState state = TraceState::idle;
    Time begin = 0;
    Time end = 0;
    friend bool operator==(const TraceInterval&, const TraceInterval&) = default;
};

struct NodeStateTrace {
    NodeIndex node_id = 0;
    std::vector<TraceInterval> intervals;
    friend bool operator==(const NodeStateTrace&, const NodeStateTrace&) = default;
};

using EnergyByState = std::array<Energy, kTraceStateCount>;

}  // namespace pwrsim
