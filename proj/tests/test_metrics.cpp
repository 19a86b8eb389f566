#include <pwrsim/error.hpp>
#include <pwrsim/metrics.hpp>

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace pwrsim;
using namespace pwrsim::testing;

namespace {

std::size_t idx(TraceState s) { return static_cast<std::size_t>(s); }

NodeStateTrace trace(std::vector<TraceInterval> intervals) { return NodeStateTrace{0, std::move(intervals)}; }

}  // namespace

TEST(Metrics, SingleCycleWithReferencePowers) {
    // 50 s computing, the full 30 min switch-off, then 1290 s asleep.
    const Platform p = reference_platform(1);
    const std::vector<NodeStateTrace> t = {trace({{TraceState::computing, 0, sec(50)},
                                                  {TraceState::switching_off, sec(50), sec(1850)},
                                                  {TraceState::sleeping, sec(1850), sec(3140)}})};
    check_tiling(t, 1, 0, sec(3140));
    const auto e = compute_energy(t, p);
    EXPECT_EQ(e.by_state[idx(TraceState::computing)], Energy::from_joules_exact(9'500));
    EXPECT_EQ(e.by_state[idx(TraceState::switching_off)], Energy::from_joules_exact(16'200));
    EXPECT_EQ(e.by_state[idx(TraceState::sleeping)], Energy::from_joules_exact(11'610));
    EXPECT_EQ(e.total, Energy::from_joules_exact(37'310));
    EXPECT_EQ(compute_waste(e.by_state), Energy::from_joules_exact(16'200));
}

TEST(Metrics, FullHourCycle) {
    // The same cycle padded to one hour sleeps for 1750 s.
    const Platform p = reference_platform(1);
    const std::vector<NodeStateTrace> t = {trace({{TraceState::computing, 0, sec(50)},
                                                  {TraceState::switching_off, sec(50), sec(1850)},
                                                  {TraceState::sleeping, sec(1850), sec(3600)}})};
    EXPECT_EQ(compute_energy(t, p).total, Energy::from_joules_exact(9'500 + 16'200 + 15'750));
}

TEST(Metrics, EmptyTraceHasNoEnergy) {
    const Platform p = reference_platform(2);
    const std::vector<NodeStateTrace> t = {NodeStateTrace{0, {}}, NodeStateTrace{1, {}}};
    check_tiling(t, 2, sec(5), sec(5));
    const auto e = compute_energy(t, p);
    EXPECT_EQ(e.total, Energy{});
}

TEST(Metrics, AllComputingHasNoWaste) {
    const Platform p = reference_platform(1);
    const auto e = compute_energy(std::vector<NodeStateTrace>{trace({{TraceState::computing, 0, sec(10)}})}, p);
    EXPECT_EQ(compute_waste(e.by_state), Energy{});
}

TEST(Metrics, TilingFaults) {
    const std::vector<NodeStateTrace> gap = {
        trace({{TraceState::idle, 0, sec(10)}, {TraceState::computing, sec(11), sec(20)}})};
    EXPECT_THROW(check_tiling(gap, 1, 0, sec(20)), AccountingFault);
    EXPECT_THROW((void)compute_energy(gap, reference_platform(1)), AccountingFault);
    const std::vector<NodeStateTrace> overlap = {
        trace({{TraceState::idle, 0, sec(10)}, {TraceState::computing, sec(9), sec(20)}})};
    EXPECT_THROW(check_tiling(overlap, 1, 0, sec(20)), AccountingFault);
    const std::vector<NodeStateTrace> short_trace = {trace({{TraceState::idle, 0, sec(10)}})};
    EXPECT_THROW(check_tiling(short_trace, 1, 0, sec(20)), AccountingFault);
}

TEST(Metrics, SplitsActiveIntoComputingAndIdle) {
    const Platform p = reference_platform(1);
    const std::vector<std::vector<StateInterval>> history = {{{PowerState::active, 0, sec(100)}}};
    const std::vector<JobRecord> records = {JobRecord{0, 0, sec(10), sec(30), {0}, JobOutcome::completed},
                                            JobRecord{1, 0, sec(30), sec(40), {0}, JobOutcome::completed}};
    const auto t = build_traces(p, history, records);
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0].intervals, (std::vector<TraceInterval>{{TraceState::idle, 0, sec(10)},
                                                          {TraceState::computing, sec(10), sec(40)},
                                                          {TraceState::idle, sec(40), sec(100)}}));
}

TEST(Metrics, RejectsOverlappingJobsOnANode) {
    const Platform p = reference_platform(1);
    const std::vector<std::vector<StateInterval>> history = {{{PowerState::active, 0, sec(100)}}};
    const std::vector<JobRecord> records = {JobRecord{0, 0, sec(10), sec(30), {0}, JobOutcome::completed},
                                            JobRecord{1, 0, sec(20), sec(40), {0}, JobOutcome::completed}};
    EXPECT_THROW((void)build_traces(p, history, records), AccountingFault);
}

TEST(Metrics, RejectsJobOutsideActiveInterval) {
    const Platform p = reference_platform(1);
    const std::vector<std::vector<StateInterval>> history = {
        {{PowerState::sleeping, 0, sec(50)}, {PowerState::active, sec(50), sec(100)}}};
    const std::vector<JobRecord> records = {JobRecord{0, 0, sec(40), sec(60), {0}, JobOutcome::completed}};
    EXPECT_THROW((void)build_traces(p, history, records), AccountingFault);
}

TEST(Metrics, PerfOfSingleJob) {
    const Platform p = reference_platform(1);
    const std::vector<JobRecord> records = {JobRecord{0, 0, 0, sec(100), {0}, JobOutcome::completed}};
    const auto perf = compute_perf(records, p, 0);
    EXPECT_DOUBLE_EQ(perf.mean_waiting, 0.0);
    EXPECT_DOUBLE_EQ(perf.utilization, 1.0);
    EXPECT_EQ(perf.makespan, sec(100));
}

TEST(Metrics, PerfWaitingAndUtilization) {
    const Platform p = reference_platform(2);
    const std::vector<JobRecord> records = {JobRecord{0, 0, sec(10), sec(30), {0, 1}, JobOutcome::completed},
                                            JobRecord{1, sec(5), sec(35), sec(40), {1}, JobOutcome::completed}};
    const auto perf = compute_perf(records, p, 0);
    EXPECT_DOUBLE_EQ(perf.mean_waiting, static_cast<double>(sec(10) + sec(30)) / 2.0);
    EXPECT_EQ(perf.max_waiting, sec(30));
    EXPECT_DOUBLE_EQ(perf.utilization, (20.0 * 2 + 5.0) / (2 * 40.0));
    EXPECT_EQ(perf.makespan, sec(30));
}

TEST(Metrics, ZeroHorizonGuard) {
    const Platform p = reference_platform(1);
    const std::vector<JobRecord> records = {JobRecord{0, 0, 0, 0, {0}, JobOutcome::terminated_overrun}};
    EXPECT_DOUBLE_EQ(compute_perf(records, p, 0).utilization, 0.0);
}

TEST(Metrics, ComputingEnergyMatchesJobOverlap) {
    const Platform p = reference_platform(3);
    const std::vector<std::vector<StateInterval>> history = {
        {{PowerState::active, 0, sec(100)}}, {{PowerState::active, 0, sec(100)}}, {{PowerState::active, 0, sec(100)}}};
    const std::vector<JobRecord> records = {JobRecord{0, 0, sec(10), sec(30), {0, 2}, JobOutcome::completed},
                                            JobRecord{1, 0, sec(50), sec(90), {1}, JobOutcome::completed}};
    const auto e = compute_energy(build_traces(p, history, records), p);
    EXPECT_EQ(e.by_state[idx(TraceState::computing)], Energy::of(sec(20) * 2 + sec(40), 190'000));
    EXPECT_EQ(e.by_state[idx(TraceState::idle)], Energy::of(sec(300) - sec(80), 190'000));
}

TEST(Metrics, TraceStateNamesRoundTrip) {
    for (auto s : kAllTraceStates) {
        EXPECT_EQ(parse_trace_state(to_string(s)), s);
    }
    EXPECT_FALSE(parse_trace_state("hibernating"));
}
