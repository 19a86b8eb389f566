#pragma once

#include <pwrsim/engine.hpp>
#include <pwrsim/platform.hpp>
#include <pwrsim/trace.hpp>

#include <span>
#include <vector>

namespace pwrsim {

/// Splits each node's active intervals into computing and idle using the job
/// records, so the accounting cannot drift from the schedule.
/// Throws AccountingFault when two jobs overlap on a node or a job runs
/// outside an active interval.
[[nodiscard]] std::vector<NodeStateTrace> build_traces(const Platform& platform,
                                                       std::span<const std::vector<StateInterval>> history,
                                                       std::span<const JobRecord> records);

/// Throws AccountingFault unless every trace tiles [start, end] exactly.
void check_tiling(std::span<const NodeStateTrace> traces, std::size_t num_nodes, Time start, Time end);

struct EnergyReport {
    Energy total;
    EnergyByState by_state{};
};

/// Exact per-interval products (duration x power). `total` is folded over all
/// intervals independently of the per-state sums and the two are checked
/// for equality.
[[nodiscard]] EnergyReport compute_energy(std::span<const NodeStateTrace> traces, const Platform& platform);

/// Idle plus switching energy.
[[nodiscard]] Energy compute_waste(const EnergyByState& by_state);

struct PerfMetrics {
    /// Microseconds.
    double mean_waiting = 0.0;
    Time max_waiting = 0;
    double utilization = 0.0;
    Time makespan = 0;
};

[[nodiscard]] PerfMetrics compute_perf(std::span<const JobRecord> records, const Platform& platform, Time start_time);

struct Summary {
    Energy total_energy;
    EnergyByState energy_by_state{};
    Energy wasted_energy;
    double mean_waiting = 0.0;
    Time max_waiting = 0;
    double utilization = 0.0;
    Time makespan = 0;
    std::size_t job_count = 0;
    std::size_t terminated_count = 0;
    Time start_time = 0;
    Time end_time = 0;
};

/// Full post-processing of a finished run.
[[nodiscard]] Summary summarize(const ResultsBundle& results);
[[nodiscard]] std::vector<NodeStateTrace> build_traces(const ResultsBundle& results);

}  // namespace pwrsim
