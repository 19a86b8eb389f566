#pragma once

#include <pwrsim/decision.hpp>
#include <pwrsim/platform.hpp>
#include <pwrsim/trace.hpp>
#include <pwrsim/units.hpp>
#include <pwrsim/workload.hpp>

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string_view>
#include <vector>

namespace pwrsim {

/// Event kinds, declared in intra-batch processing order.
enum class EventKind : std::uint8_t {
    job_finish = 0,
    job_overrun = 1,
    transition_complete = 2,
    job_arrival = 3,
    decision_tick = 4,
    simulation_end = 5,
};

[[nodiscard]] std::string_view to_string(EventKind k);

struct Event {
    Time time = 0;
    EventKind kind = EventKind::decision_tick;
    std::uint64_t seq = 0;
    /// Job index for job events, node index for transition completions.
    std::size_t subject = 0;
    /// Transition completions: the state the node ends in.
    PowerState target = PowerState::active;
    /// Decision ticks: part of the periodic cadence (vs. a one-off wakeup).
    bool periodic = false;
};

struct EventBatch {
    Time time = 0;
    /// Ordered by (kind, seq).
    std::vector<Event> events;
};

enum class OverrunPolicy : std::uint8_t { terminate, continue_running };

struct SimConfig {
    OverrunPolicy overrun_policy = OverrunPolicy::continue_running;
    /// Decision cadence; no periodic ticks when empty.
    std::optional<Time> timeout;
    Time start_time = 0;
    std::uint64_t seed = 0;
    /// Keep every applied decision in SimState::decision_log.
    bool log_decisions = false;
};

enum class JobOutcome : std::uint8_t { completed, terminated_overrun };

[[nodiscard]] std::string_view to_string(JobOutcome o);

struct JobRecord {
    JobIndex job = 0;
    Time subtime = 0;
    Time start_time = 0;
    Time finish_time = 0;
    std::vector<NodeIndex> nodes;
    JobOutcome outcome = JobOutcome::completed;
    friend bool operator==(const JobRecord&, const JobRecord&) = default;
};

struct RunningJob {
    std::vector<NodeIndex> nodes;
    Time start = 0;
    Time finish_event_time = 0;
    std::uint64_t finish_seq = 0;
    /// Only under the terminate policy when the job outlives its reqtime.
    std::optional<std::uint64_t> overrun_seq;
};

enum class JobStatus : std::uint8_t { pending, queued, running, done };

struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time != b.time) {
            return a.time > b.time;
        }
        if (a.kind != b.kind) {
            return a.kind > b.kind;
        }
        return a.seq > b.seq;
    }
};

/// Running per-state energy totals, advanced whenever a node changes state.
/// Independent of the post-hoc trace accounting in metrics.
struct EnergyMeter {
    EnergyByState accrued{};
    std::vector<TraceState> current;
    std::vector<Time> since;
};

struct SimState {
    SimConfig config;
    Time clock = 0;
    Platform platform;
    Workload workload;
    std::vector<JobStatus> job_status;
    /// FIFO of waiting jobs, in arrival order.
    std::deque<JobIndex> queue;
    std::map<JobIndex, RunningJob> running;
    std::priority_queue<Event, std::vector<Event>, EventOrder> pending;
    std::vector<JobRecord> completed;
    /// When each node last became idle (meaningful while idle).
    std::vector<Time> idle_since;
    /// Closed platform-state intervals per node; the open one starts at Node::state_since.
    std::vector<std::vector<StateInterval>> history;
    EnergyMeter meter;
    /// Integral of the queue length over time, in job-microseconds.
    std::int64_t queue_wait_accrued = 0;
    std::vector<Decision> decision_log;
    std::uint64_t next_seq = 0;
    /// Pending events other than decision ticks, excluding cancelled ones.
    std::size_t pending_work = 0;
    /// Sequence numbers of queued events that must be dropped when popped.
    std::set<std::uint64_t> cancelled;
    std::uint64_t policy_invocations = 0;

    [[nodiscard]] const Job& job(JobIndex j) const { return workload.jobs[j]; }
    /// Absolute arrival time of a job.
    [[nodiscard]] Time arrival_time(JobIndex j) const { return config.start_time + workload.jobs[j].subtime; }
};

/// Seeds one arrival per job and the first decision tick; clock = start_time.
[[nodiscard]] SimState start_simulator(const SimConfig& config, Platform platform, Workload workload);

struct ProceedResult {
    EventBatch batch;
    bool is_running = false;
};

/// Pops every event with the minimum timestamp as one batch, applies it,
/// invokes the policy once and applies its decisions at the same instant.
ProceedResult proceed(SimState& state, Policy& policy);

/// Pending non-tick events, queued jobs or running jobs remain.
[[nodiscard]] bool is_running(const SimState& state);
[[nodiscard]] std::optional<Time> next_event_time(const SimState& state);

/// Applies decisions at the current clock. Throws PolicyFault on the first
/// decision whose preconditions do not hold.
void apply_decisions(SimState& state, std::span<const Decision> decisions);

/// Moves the clock forward to `t` without processing events; every pending
/// event must be later than `t`.
void advance_clock(SimState& state, Time t);

/// One-off decision tick (does not start a periodic chain).
void schedule_wakeup(SimState& state, Time t);

/// Energy per accounting state consumed from start_time up to the clock.
[[nodiscard]] EnergyByState metered_energy(const SimState& state);

/// Node intervals closed at the current clock.
[[nodiscard]] std::vector<std::vector<StateInterval>> closed_history(const SimState& state);

struct ResultsBundle {
    Platform platform;
    Workload workload;
    std::vector<JobRecord> job_records;
    std::vector<std::vector<StateInterval>> node_history;
    Time start_time = 0;
    Time end_time = 0;
    EnergyByState metered{};
    std::uint64_t policy_invocations = 0;
};

[[nodiscard]] ResultsBundle collect_results(const SimState& state);

/// Loops proceed() until the simulation stops.
[[nodiscard]] ResultsBundle run_simulation(const SimConfig& config, Platform platform, Workload workload,
                                           Policy& policy);

}  // namespace pwrsim
