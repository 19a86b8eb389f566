#include <pwrsim/engine.hpp>

#include <pwrsim/error.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace pwrsim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::uint64_t push_event(SimState& s, Event ev) {
    if (ev.time < s.clock) {
        throw PolicyFault("event scheduled in the past");
    }
    ev.seq = s.next_seq++;
    if (ev.kind != EventKind::decision_tick) {
        ++s.pending_work;
    }
    s.pending.push(ev);
    return ev.seq;
}

void cancel_event(SimState& s, std::uint64_t seq) {
    if (s.cancelled.insert(seq).second) {
        --s.pending_work;
    }
}

// Keeps the head of the queue live so next_event_time is exact.
void drop_cancelled(SimState& s) {
    while (!s.pending.empty()) {
        auto it = s.cancelled.find(s.pending.top().seq);
        if (it == s.cancelled.end()) {
            break;
        }
        s.cancelled.erase(it);
        s.pending.pop();
    }
}

Event pop_event(SimState& s) {
    Event ev = s.pending.top();
    s.pending.pop();
    if (ev.kind != EventKind::decision_tick) {
        --s.pending_work;
    }
    drop_cancelled(s);
    return ev;
}

TraceState trace_state_of(const Node& n) {
    switch (n.current_state) {
    case PowerState::active: return n.running_job ? TraceState::computing : TraceState::idle;
    case PowerState::sleeping: return TraceState::sleeping;
    case PowerState::switching_on: return TraceState::switching_on;
    case PowerState::switching_off: return TraceState::switching_off;
    }
    return TraceState::idle;
}

// Call after every change to a node's power state or job; folds the elapsed
// time in the previous accounting state into the meter.
void meter_update(SimState& s, NodeIndex node) {
    auto& m = s.meter;
    const Node& n = s.platform.nodes[node];
    const TraceState prev = m.current[node];
    const Time elapsed = s.clock - m.since[node];
    if (elapsed > 0) {
        m.accrued[static_cast<std::size_t>(prev)] +=
            Energy::of(elapsed, n.power_in(power_state_of(prev)));
    }
    m.current[node] = trace_state_of(n);
    m.since[node] = s.clock;
}

// Closes the node's open platform-state interval at the clock.
void close_interval(SimState& s, NodeIndex node) {
    const Node& n = s.platform.nodes[node];
    if (s.clock > n.state_since) {
        s.history[node].push_back(StateInterval{n.current_state, n.state_since, s.clock});
    }
}

void set_clock(SimState& s, Time t) {
    if (t < s.clock) {
        throw PolicyFault("clock moved backwards");
    }
    s.queue_wait_accrued += static_cast<std::int64_t>(s.queue.size()) * (t - s.clock);
    s.clock = t;
}

void finish_job(SimState& s, JobIndex j, JobOutcome outcome) {
    auto it = s.running.find(j);
    RunningJob rj = std::move(it->second);
    s.running.erase(it);
    if (outcome == JobOutcome::terminated_overrun) {
        cancel_event(s, rj.finish_seq);
    } else if (rj.overrun_seq) {
        cancel_event(s, *rj.overrun_seq);
    }
    for (NodeIndex n : rj.nodes) {
        Node& node = s.platform.nodes[n];
        node.running_job.reset();
        s.idle_since[n] = s.clock;
        meter_update(s, n);
    }
    s.job_status[j] = JobStatus::done;
    s.completed.push_back(JobRecord{j, s.arrival_time(j), rj.start, s.clock, std::move(rj.nodes), outcome});
}

void finish_transition(SimState& s, NodeIndex node, PowerState target) {
    Node& n = s.platform.nodes[node];
    close_interval(s, node);
    complete_transition(s.platform, TransitionTicket{node, s.clock, n.current_state, target}, s.clock);
    if (target == PowerState::active) {
        s.idle_since[node] = s.clock;
    }
    meter_update(s, node);
}

void begin_transition(SimState& s, NodeIndex node, PowerState target, const Decision& d) {
    auto result = check_transition(s.platform, node, target, s.clock);
    if (const auto* r = std::get_if<TransitionRejection>(&result)) {
        throw PolicyFault("policy fault: " + describe(d) + " rejected: " + std::string(to_string(*r)));
    }
    close_interval(s, node);
    const auto ticket = std::get<TransitionTicket>(request_transition(s.platform, node, target, s.clock));
    meter_update(s, node);
    if (ticket.completes_at == s.clock) {
        finish_transition(s, node, target);
        return;
    }
    Event ev;
    ev.time = ticket.completes_at;
    ev.kind = EventKind::transition_complete;
    ev.subject = node;
    ev.target = target;
    push_event(s, ev);
}

void start_job(SimState& s, const StartJob& sj, const Decision& d) {
    auto fault = [&](const std::string& why) { throw PolicyFault("policy fault: " + describe(d) + ": " + why); };
    if (sj.job >= s.workload.jobs.size() || s.job_status[sj.job] != JobStatus::queued) {
        fault("job is not queued");
    }
    const Job& job = s.job(sj.job);
    if (static_cast<std::int64_t>(sj.nodes.size()) != job.res) {
        fault("allocates " + std::to_string(sj.nodes.size()) + " nodes, job requests " + std::to_string(job.res));
    }
    std::set<NodeIndex> distinct(sj.nodes.begin(), sj.nodes.end());
    if (distinct.size() != sj.nodes.size()) {
        fault("node list has duplicates");
    }
    double speed = std::numeric_limits<double>::infinity();
    for (NodeIndex n : sj.nodes) {
        if (n >= s.platform.num_nodes()) {
            fault("unknown node");
        }
        const Node& node = s.platform.nodes[n];
        if (!node.is_idle()) {
            fault("node " + std::to_string(node.external_id) + " is not active and idle");
        }
        speed = std::min(speed, effective_speed(node));
    }
    auto qit = std::find(s.queue.begin(), s.queue.end(), sj.job);
    s.queue.erase(qit);
    for (NodeIndex n : sj.nodes) {
        Node& node = s.platform.nodes[n];
        node.running_job = sj.job;
        node.reserved_for.reset();
        meter_update(s, n);
    }
    const Time scaled = speed == 1.0 ? job.runtime
                                     : static_cast<Time>(std::nearbyint(static_cast<double>(job.runtime) / speed));
    s.job_status[sj.job] = JobStatus::running;
    RunningJob& rj = s.running.emplace(sj.job, RunningJob{sj.nodes, s.clock, s.clock + scaled, 0, std::nullopt}).first->second;

    Event fin;
    fin.time = s.clock + scaled;
    fin.kind = EventKind::job_finish;
    fin.subject = sj.job;
    rj.finish_seq = push_event(s, fin);
    if (s.config.overrun_policy == OverrunPolicy::terminate && job.reqtime < scaled) {
        Event over;
        over.time = s.clock + job.reqtime;
        over.kind = EventKind::job_overrun;
        over.subject = sj.job;
        rj.overrun_seq = push_event(s, over);
    }
}

void apply_one(SimState& s, const Decision& d) {
    std::visit(overloaded{
                   [&](const StartJob& sj) { start_job(s, sj, d); },
                   [&](const SwitchOff& so) {
                       if (so.node >= s.platform.num_nodes()) {
                           throw PolicyFault("policy fault: " + describe(d) + ": unknown node");
                       }
                       const Node& n = s.platform.nodes[so.node];
                       if (!n.is_idle()) {
                           throw PolicyFault("policy fault: " + describe(d) + ": node is not idle");
                       }
                       if (n.reserved_for) {
                           throw PolicyFault("policy fault: " + describe(d) + ": node is reserved");
                       }
                       begin_transition(s, so.node, PowerState::sleeping, d);
                   },
                   [&](const SwitchOn& so) {
                       if (so.node >= s.platform.num_nodes() ||
                           s.platform.nodes[so.node].current_state != PowerState::sleeping) {
                           throw PolicyFault("policy fault: " + describe(d) + ": node is not sleeping");
                       }
                       begin_transition(s, so.node, PowerState::active, d);
                   },
                   [&](const Reserve& r) {
                       for (NodeIndex n : r.nodes) {
                           if (n >= s.platform.num_nodes()) {
                               throw PolicyFault("policy fault: " + describe(d) + ": unknown node");
                           }
                           s.platform.nodes[n].reserved_for = r.job;
                       }
                   },
               },
               d.kind);
    if (s.config.log_decisions) {
        s.decision_log.push_back(d);
    }
}

void handle_event(SimState& s, const Event& ev) {
    switch (ev.kind) {
    case EventKind::job_finish: finish_job(s, ev.subject, JobOutcome::completed); break;
    case EventKind::job_overrun: finish_job(s, ev.subject, JobOutcome::terminated_overrun); break;
    case EventKind::transition_complete: finish_transition(s, ev.subject, ev.target); break;
    case EventKind::job_arrival:
        s.job_status[ev.subject] = JobStatus::queued;
        s.queue.push_back(ev.subject);
        break;
    case EventKind::decision_tick:
        if (ev.periodic && s.config.timeout) {
            Event next;
            next.time = ev.time + *s.config.timeout;
            next.kind = EventKind::decision_tick;
            next.periodic = true;
            push_event(s, next);
        }
        break;
    case EventKind::simulation_end: break;
    }
}

}  // namespace

std::string describe(const Decision& d) {
    return std::visit(overloaded{
                          [](const StartJob& sj) {
                              std::string out = "StartJob(job#" + std::to_string(sj.job) + ", nodes [";
                              for (std::size_t i = 0; i < sj.nodes.size(); ++i) {
                                  out += (i ? " " : "") + std::to_string(sj.nodes[i]);
                              }
                              return out + "])";
                          },
                          [](const SwitchOff& so) { return "SwitchOff(node#" + std::to_string(so.node) + ")"; },
                          [](const SwitchOn& so) { return "SwitchOn(node#" + std::to_string(so.node) + ")"; },
                          [](const Reserve& r) {
                              return "Reserve(job#" + std::to_string(r.job) + ", " + std::to_string(r.nodes.size()) +
                                     " nodes, at " + format_seconds(r.est_start) + ")";
                          },
                      },
                      d.kind) +
           " @" + format_seconds(d.issued_at);
}

std::string_view to_string(EventKind k) {
    switch (k) {
    case EventKind::job_finish: return "job_finish";
    case EventKind::job_overrun: return "job_overrun";
    case EventKind::transition_complete: return "transition_complete";
    case EventKind::job_arrival: return "job_arrival";
    case EventKind::decision_tick: return "decision_tick";
    case EventKind::simulation_end: return "simulation_end";
    }
    return "unknown";
}

std::string_view to_string(JobOutcome o) {
    return o == JobOutcome::completed ? "completed" : "terminated_overrun";
}

SimState start_simulator(const SimConfig& config, Platform platform, Workload workload) {
    if (config.timeout && *config.timeout <= 0) {
        throw ValidationError("timeout must be positive");
    }
    for (const auto& job : workload.jobs) {
        if (job.res > static_cast<std::int64_t>(platform.num_nodes())) {
            throw ValidationError("job " + job.job_id + " requests " + std::to_string(job.res) +
                                  " nodes but the platform has " + std::to_string(platform.num_nodes()));
        }
    }
    SimState s;
    s.config = config;
    s.clock = config.start_time;
    s.platform = std::move(platform);
    s.workload = std::move(workload);
    const std::size_t n = s.platform.num_nodes();
    for (auto& node : s.platform.nodes) {
        node.current_state = node.declared_initial_state.value_or(PowerState::active);
        node.state_since = s.clock;
        node.running_job.reset();
        node.reserved_for.reset();
    }
    s.idle_since.assign(n, s.clock);
    s.history.assign(n, {});
    s.meter.current.resize(n);
    s.meter.since.assign(n, s.clock);
    for (std::size_t i = 0; i < n; ++i) {
        s.meter.current[i] = trace_state_of(s.platform.nodes[i]);
    }
    s.job_status.assign(s.workload.jobs.size(), JobStatus::pending);
    for (JobIndex j = 0; j < s.workload.jobs.size(); ++j) {
        Event ev;
        ev.time = s.arrival_time(j);
        ev.kind = EventKind::job_arrival;
        ev.subject = j;
        push_event(s, ev);
    }
    if (config.timeout) {
        Event tick;
        tick.time = s.clock + *config.timeout;
        tick.kind = EventKind::decision_tick;
        tick.periodic = true;
        push_event(s, tick);
    }
    return s;
}

bool is_running(const SimState& state) {
    return state.pending_work > 0 || !state.queue.empty() || !state.running.empty();
}

std::optional<Time> next_event_time(const SimState& state) {
    if (state.pending.empty()) {
        return std::nullopt;
    }
    return state.pending.top().time;
}

ProceedResult proceed(SimState& state, Policy& policy) {
    ProceedResult out;
    if (!is_running(state)) {
        return out;
    }
    if (state.pending.empty()) {
        throw PolicyFault("simulation stalled at " + format_seconds(state.clock) + " s: " +
                          std::to_string(state.queue.size()) + " queued jobs and no pending events");
    }
    const Time t = state.pending.top().time;
    set_clock(state, t);
    out.batch.time = t;
    while (!state.pending.empty() && state.pending.top().time == t) {
        out.batch.events.push_back(pop_event(state));
    }
    for (const auto& ev : out.batch.events) {
        handle_event(state, ev);
    }

    ++state.policy_invocations;
    const auto decisions = policy.decide(state);
    for (auto& node : state.platform.nodes) {
        node.reserved_for.reset();
    }
    apply_decisions(state, decisions);

    drop_cancelled(state);
    if (!is_running(state)) {
        state.pending = {};
        state.cancelled.clear();
    }
    out.is_running = is_running(state);
    return out;
}

void apply_decisions(SimState& state, std::span<const Decision> decisions) {
    for (const auto& d : decisions) {
        apply_one(state, d);
    }
}

void advance_clock(SimState& state, Time t) {
    if (!state.pending.empty() && state.pending.top().time < t) {
        throw PolicyFault("advance_clock would skip pending events");
    }
    set_clock(state, t);
}

void schedule_wakeup(SimState& state, Time t) {
    Event ev;
    ev.time = std::max(t, state.clock);
    ev.kind = EventKind::decision_tick;
    ev.periodic = false;
    push_event(state, ev);
}

EnergyByState metered_energy(const SimState& state) {
    EnergyByState out = state.meter.accrued;
    for (std::size_t n = 0; n < state.platform.num_nodes(); ++n) {
        const TraceState cur = state.meter.current[n];
        const Time elapsed = state.clock - state.meter.since[n];
        out[static_cast<std::size_t>(cur)] += Energy::of(elapsed, state.platform.nodes[n].power_in(power_state_of(cur)));
    }
    return out;
}

std::vector<std::vector<StateInterval>> closed_history(const SimState& state) {
    auto out = state.history;
    for (std::size_t n = 0; n < state.platform.num_nodes(); ++n) {
        const Node& node = state.platform.nodes[n];
        if (state.clock > node.state_since) {
            out[n].push_back(StateInterval{node.current_state, node.state_since, state.clock});
        }
    }
    return out;
}

ResultsBundle collect_results(const SimState& state) {
    ResultsBundle r;
    r.platform = state.platform;
    r.workload = state.workload;
    r.job_records = state.completed;
    r.node_history = closed_history(state);
    r.start_time = state.config.start_time;
    r.end_time = state.clock;
    r.metered = metered_energy(state);
    r.policy_invocations = state.policy_invocations;
    return r;
}

ResultsBundle run_simulation(const SimConfig& config, Platform platform, Workload workload, Policy& policy) {
    SimState state = start_simulator(config, std::move(platform), std::move(workload));
    while (is_running(state)) {
        (void)proceed(state, policy);
    }
    return collect_results(state);
}

}  // namespace pwrsim
