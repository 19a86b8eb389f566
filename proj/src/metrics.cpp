#include <pwrsim/metrics.hpp>

#include <pwrsim/error.hpp>

#include <algorithm>

namespace pwrsim {

namespace {

TraceState trace_state_for(PowerState s) {
    switch (s) {
    case PowerState::active: return TraceState::idle;
    case PowerState::sleeping: return TraceState::sleeping;
    case PowerState::switching_on: return TraceState::switching_on;
    case PowerState::switching_off: return TraceState::switching_off;
    }
    return TraceState::idle;
}

void push_merged(std::vector<TraceInterval>& out, TraceState s, Time b, Time e) {
    if (e <= b) {
        return;
    }
    if (!out.empty() && out.back().state == s && out.back().end == b) {
        out.back().end = e;
        return;
    }
    out.push_back(TraceInterval{s, b, e});
}

}  // namespace

std::string_view to_string(TraceState s) {
    switch (s) {
    case TraceState::computing: return "computing";
    case TraceState::idle: return "idle";
    case TraceState::sleeping: return "sleeping";
    case TraceState::switching_on: return "switching_on";
    case TraceState::switching_off: return "switching_off";
    }
    return "unknown";
}

std::optional<TraceState> parse_trace_state(std::string_view name) {
    for (auto s : kAllTraceStates) {
        if (to_string(s) == name) {
            return s;
        }
    }
    return std::nullopt;
}

std::vector<NodeStateTrace> build_traces(const Platform& platform, std::span<const std::vector<StateInterval>> history,
                                         std::span<const JobRecord> records) {
    const std::size_t n = platform.num_nodes();
    std::vector<std::vector<std::pair<Time, Time>>> busy(n);
    for (const auto& r : records) {
        for (NodeIndex node : r.nodes) {
            if (node >= n) {
                throw AccountingFault("job record references unknown node");
            }
            if (r.finish_time > r.start_time) {
                busy[node].emplace_back(r.start_time, r.finish_time);
            }
        }
    }
    std::vector<NodeStateTrace> traces(n);
    for (NodeIndex node = 0; node < n; ++node) {
        auto& jobs = busy[node];
        std::sort(jobs.begin(), jobs.end());
        for (std::size_t i = 1; i < jobs.size(); ++i) {
            if (jobs[i].first < jobs[i - 1].second) {
                throw AccountingFault("two jobs overlap on node " + std::to_string(platform.nodes[node].external_id));
            }
        }
        auto& out = traces[node];
        out.node_id = node;
        std::size_t next = 0;
        for (const auto& iv : node < history.size() ? history[node] : std::vector<StateInterval>{}) {
            if (iv.state != PowerState::active) {
                push_merged(out.intervals, trace_state_for(iv.state), iv.begin, iv.end);
                continue;
            }
            Time cursor = iv.begin;
            while (next < jobs.size() && jobs[next].first < iv.end) {
                const auto [b, e] = jobs[next];
                if (b < cursor || e > iv.end) {
                    throw AccountingFault("job runs outside an active interval on node " +
                                          std::to_string(platform.nodes[node].external_id));
                }
                push_merged(out.intervals, TraceState::idle, cursor, b);
                push_merged(out.intervals, TraceState::computing, b, e);
                cursor = e;
                ++next;
            }
            push_merged(out.intervals, TraceState::idle, cursor, iv.end);
        }
        if (next != jobs.size()) {
            throw AccountingFault("job runs outside an active interval on node " +
                                  std::to_string(platform.nodes[node].external_id));
        }
    }
    return traces;
}

std::vector<NodeStateTrace> build_traces(const ResultsBundle& results) {
    return build_traces(results.platform, results.node_history, results.job_records);
}

void check_tiling(std::span<const NodeStateTrace> traces, std::size_t num_nodes, Time start, Time end) {
    if (traces.size() != num_nodes) {
        throw AccountingFault("expected one trace per node");
    }
    for (const auto& t : traces) {
        Time cursor = start;
        for (const auto& iv : t.intervals) {
            if (iv.begin != cursor) {
                throw AccountingFault("trace of node " + std::to_string(t.node_id) + " has a gap or overlap at " +
                                      format_seconds(iv.begin));
            }
            if (iv.end <= iv.begin) {
                throw AccountingFault("trace of node " + std::to_string(t.node_id) + " has an empty interval");
            }
            cursor = iv.end;
        }
        if (cursor != end) {
            throw AccountingFault("trace of node " + std::to_string(t.node_id) + " ends at " + format_seconds(cursor) +
                                  " instead of " + format_seconds(end));
        }
    }
}

EnergyReport compute_energy(std::span<const NodeStateTrace> traces, const Platform& platform) {
    EnergyReport out;
    for (const auto& t : traces) {
        const Node& node = platform.nodes.at(t.node_id);
        Time cursor = t.intervals.empty() ? 0 : t.intervals.front().begin;
        for (const auto& iv : t.intervals) {
            if (iv.begin != cursor || iv.end <= iv.begin) {
                throw AccountingFault("trace of node " + std::to_string(node.external_id) + " is not tiled");
            }
            cursor = iv.end;
            const Energy e = Energy::of(iv.end - iv.begin, node.power_in(power_state_of(iv.state)));
            out.by_state[static_cast<std::size_t>(iv.state)] += e;
            out.total += e;
        }
    }
    Energy sum;
    for (const auto& e : out.by_state) {
        sum += e;
    }
    if (sum != out.total) {
        throw AccountingFault("energy identity violated: total " + to_string(out.total) + " nJ vs per-state sum " +
                              to_string(sum) + " nJ");
    }
    return out;
}

Energy compute_waste(const EnergyByState& by_state) {
    return by_state[static_cast<std::size_t>(TraceState::idle)] +
           by_state[static_cast<std::size_t>(TraceState::switching_on)] +
           by_state[static_cast<std::size_t>(TraceState::switching_off)];
}

PerfMetrics compute_perf(std::span<const JobRecord> records, const Platform& platform, Time start_time) {
    PerfMetrics out;
    if (records.empty()) {
        return out;
    }
    __int128 wait_sum = 0;
    __int128 busy = 0;
    Time first_start = records.front().start_time;
    Time last_finish = records.front().finish_time;
    for (const auto& r : records) {
        const Time wait = r.start_time - r.subtime;
        wait_sum += wait;
        out.max_waiting = std::max(out.max_waiting, wait);
        busy += static_cast<__int128>(r.finish_time - r.start_time) * static_cast<__int128>(r.nodes.size());
        first_start = std::min(first_start, r.start_time);
        last_finish = std::max(last_finish, r.finish_time);
    }
    out.mean_waiting = static_cast<double>(wait_sum) / static_cast<double>(records.size());
    out.makespan = last_finish - first_start;
    const Time horizon = last_finish - start_time;
    if (horizon > 0 && platform.num_nodes() > 0) {
        out.utilization = static_cast<double>(busy) /
                          (static_cast<double>(platform.num_nodes()) * static_cast<double>(horizon));
    }
    return out;
}

Summary summarize(const ResultsBundle& results) {
    const auto traces = build_traces(results);
    check_tiling(traces, results.platform.num_nodes(), results.start_time, results.end_time);
    const auto energy = compute_energy(traces, results.platform);
    const auto perf = compute_perf(results.job_records, results.platform, results.start_time);
    Summary s;
    s.total_energy = energy.total;
    s.energy_by_state = energy.by_state;
    s.wasted_energy = compute_waste(energy.by_state);
    s.mean_waiting = perf.mean_waiting;
    s.max_waiting = perf.max_waiting;
    s.utilization = perf.utilization;
    s.makespan = perf.makespan;
    s.job_count = results.job_records.size();
    s.terminated_count = static_cast<std::size_t>(std::count_if(
        results.job_records.begin(), results.job_records.end(),
        [](const JobRecord& r) { return r.outcome == JobOutcome::terminated_overrun; }));
    s.start_time = results.start_time;
    s.end_time = results.end_time;
    return s;
}

}  // namespace pwrsim
