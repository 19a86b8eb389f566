#pragma once

#include <pwrsim/units.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pwrsim {

/// The four power states a node can occupy.
enum class PowerState : std::uint8_t { active = 0, sleeping = 1, switching_on = 2, switching_off = 3 };

inline constexpr std::size_t kPowerStateCount = 4;

[[nodiscard]] std::string_view to_string(PowerState s);
[[nodiscard]] std::optional<PowerState> parse_power_state(std::string_view name);

[[nodiscard]] constexpr bool is_transient(PowerState s) {
    return s == PowerState::switching_on || s == PowerState::switching_off;
}

struct DvfsProfile {
    std::string name;
    Power power_active = 0;
    double compute_speed = 1.0;

    friend bool operator==(const DvfsProfile&, const DvfsProfile&) = default;
};

/// One declared power state of a node.
///
/// `power` and `compute_speed` are optional only for `active`, where a missing
/// value is inherited from the node's DVFS profile. Transition delays are the
/// canonical form: `active -> sleeping` and `sleeping -> active` carry the full
/// switching time, and each transient state lists its single successor with
/// the same delay.
struct PowerStateDef {
    PowerState name = PowerState::active;
    std::optional<Power> power;
    std::optional<double> compute_speed;
    std::map<PowerState, Time> transitions;

    friend bool operator==(const PowerStateDef&, const PowerStateDef&) = default;
};

struct Node {
    NodeIndex id = 0;
    /// Identifier used in the input file; echoed in every output.
    std::int64_t external_id = 0;
    std::map<std::string, DvfsProfile> dvfs_profiles;
    std::string dvfs_mode;
    std::array<std::optional<PowerStateDef>, kPowerStateCount> states;
    std::optional<PowerState> declared_initial_state;

    PowerState current_state = PowerState::active;
    Time state_since = 0;
    std::optional<JobIndex> running_job;
    std::optional<JobIndex> reserved_for;

    [[nodiscard]] bool has_state(PowerState s) const { return states[static_cast<std::size_t>(s)].has_value(); }
    [[nodiscard]] const PowerStateDef& state(PowerState s) const;
    [[nodiscard]] const DvfsProfile& profile() const { return dvfs_profiles.at(dvfs_mode); }

    /// Power drawn while in `s`; `active` falls back to the DVFS profile.
    [[nodiscard]] Power power_in(PowerState s) const;
    [[nodiscard]] Power active_power() const { return power_in(PowerState::active); }

    /// Delay of a declared user-level transition (e.g. active -> sleeping).
    [[nodiscard]] std::optional<Time> transition_delay(PowerState from, PowerState to) const;
    [[nodiscard]] Time switch_on_delay() const;
    [[nodiscard]] Time switch_off_delay() const;

    /// Active and not running a job. Derived, never stored.
    [[nodiscard]] bool is_idle() const { return current_state == PowerState::active && !running_job; }
};

/// Static node description, ignoring all run-time fields.
[[nodiscard]] bool same_definition(const Node& a, const Node& b);

struct Platform {
    std::vector<Node> nodes;

    [[nodiscard]] std::size_t num_nodes() const { return nodes.size(); }
    [[nodiscard]] Power max_active_power() const;
};

/// Parses `platform.json`. Node ids are normalized to 0..n-1 in ascending
/// order of their external id.
[[nodiscard]] Platform parse_platform(std::string_view json_text);
/// Canonical JSON rendering; parse(serialize(p)) reproduces p.
[[nodiscard]] std::string serialize_platform(const Platform& platform);

/// Homogeneous platform with the parameters of the reference NASA-like
/// machine: 190 W active and switching on, 9 W sleeping and switching off,
/// 45 min to switch on, 30 min to switch off, nominal speed.
[[nodiscard]] Platform reference_platform(std::size_t num_nodes);

struct TransitionTicket {
    NodeIndex node = 0;
    Time completes_at = 0;
    PowerState transient_state = PowerState::switching_on;
    PowerState target = PowerState::active;

    friend bool operator==(const TransitionTicket&, const TransitionTicket&) = default;
};

enum class TransitionRejection : std::uint8_t { unknown_node, illegal_transition, node_busy, already_transitioning };

[[nodiscard]] std::string_view to_string(TransitionRejection r);

using TransitionResult = std::variant<TransitionTicket, TransitionRejection>;

/// Checks whether `target` may be requested now, without touching the node.
[[nodiscard]] TransitionResult check_transition(const Platform& platform, NodeIndex node, PowerState target, Time now);
/// Puts the node into the transient state on success.
TransitionResult request_transition(Platform& platform, NodeIndex node, PowerState target, Time now);
/// Moves the node out of its transient state into the ticket's target.
void complete_transition(Platform& platform, const TransitionTicket& ticket, Time now);

/// Compute speed of the node in its current state (0 outside `active`).
[[nodiscard]] double effective_speed(const Node& node);

}  // namespace pwrsim
