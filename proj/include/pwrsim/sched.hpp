#pragma once

#include <pwrsim/decision.hpp>
#include <pwrsim/engine.hpp>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pwrsim {

enum class Algorithm : std::uint8_t { fcfs, easy };
enum class PsmVariant : std::uint8_t { psus, psas_ao, psas_ipm };

struct PolicyConfig {
    Algorithm algorithm = Algorithm::easy;
    PsmVariant psm = PsmVariant::psus;
    /// Idle time after which psas_ao powers a node down.
    Time idle_timeout = 300 * kMicrosPerSecond;
    /// Count switch-on delays when predicting when sleeping nodes are usable.
    bool boot_lookahead = true;
};

/// Parses `fcfs_psus` ... `easy_psas_ipm`; the legacy `<alg>_psas` maps to Auto-On.
[[nodiscard]] PolicyConfig parse_algorithm(std::string_view name);
[[nodiscard]] std::string algorithm_name(const PolicyConfig& cfg);
[[nodiscard]] bool is_deprecated_algorithm_name(std::string_view name);

/// Start order among eligible nodes: active before sleeping, longest idle
/// first, then ascending id.
[[nodiscard]] std::vector<NodeIndex> idle_nodes_in_selection_order(const SimState& state);

/// Head-of-queue reservation as computed by the base schedulers.
struct Reservation {
    JobIndex job = 0;
    Time shadow_time = 0;
    std::vector<NodeIndex> nodes;
};

/// Earliest instant at which `job` could hold enough nodes, assuming running
/// jobs end at start + reqtime and (with lookahead) sleeping or switching
/// nodes become usable after their switch-on delay. `busy_until` overrides the
/// release time of nodes claimed by decisions not yet applied.
[[nodiscard]] std::optional<Reservation> compute_reservation(const SimState& state, const PolicyConfig& cfg,
                                                             JobIndex job,
                                                             std::span<const std::pair<NodeIndex, Time>> busy_until,
                                                             std::span<const NodeIndex> free_now);

/// Starts queued jobs strictly in order; stops at the first that does not fit.
[[nodiscard]] std::vector<Decision> fcfs_decide(const SimState& state, const PolicyConfig& cfg = {});
/// FCFS plus one reservation for the first blocked job and backfilling.
[[nodiscard]] std::vector<Decision> easy_decide(const SimState& state, const PolicyConfig& cfg = {});

/// External source of power decisions for psas_ipm (an RL agent bridge or a
/// scripted heuristic).
class PowerManager {
public:
    virtual ~PowerManager() = default;
    virtual std::vector<Decision> power_decisions(const SimState& state, std::span<const Decision> base) = 0;
};

/// Appends the power decisions of the configured variant to `base`.
[[nodiscard]] std::vector<Decision> apply_psm(const SimState& state, const PolicyConfig& cfg,
                                              std::vector<Decision> base, PowerManager* ipm = nullptr);

/// Base scheduler followed by power-state management.
class SchedulingPolicy final : public Policy {
public:
    explicit SchedulingPolicy(PolicyConfig cfg, PowerManager* ipm = nullptr) : cfg_(cfg), ipm_(ipm) {}

    std::vector<Decision> decide(const SimState& state) override;

    [[nodiscard]] const PolicyConfig& config() const { return cfg_; }
    void set_power_manager(PowerManager* ipm) { ipm_ = ipm; }

private:
    PolicyConfig cfg_;
    PowerManager* ipm_;
};

}  // namespace pwrsim
