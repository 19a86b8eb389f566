#include <pwrsim/sched.hpp>

#include <pwrsim/error.hpp>

#include <algorithm>
#include <set>

namespace pwrsim {

namespace {

struct Slot {
    Time at = 0;
    NodeIndex node = 0;
};

std::vector<NodeIndex> take(std::vector<NodeIndex>& pool, std::size_t count) {
    std::vector<NodeIndex> picked(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    return picked;
}

void remove_nodes(std::vector<NodeIndex>& pool, const std::vector<NodeIndex>& gone) {
    std::erase_if(pool, [&](NodeIndex n) { return std::find(gone.begin(), gone.end(), n) != gone.end(); });
}

std::vector<Decision> schedule_queue(const SimState& state, const PolicyConfig& cfg, bool backfill) {
    const Time now = state.clock;
    std::vector<Decision> out;
    std::vector<NodeIndex> free = idle_nodes_in_selection_order(state);
    std::vector<std::pair<NodeIndex, Time>> busy_until;

    auto start = [&](JobIndex j, std::vector<NodeIndex> nodes) {
        for (NodeIndex n : nodes) {
            busy_until.emplace_back(n, now + state.job(j).reqtime);
        }
        out.push_back(Decision{StartJob{j, std::move(nodes)}, now});
    };

    std::size_t qi = 0;
    for (; qi < state.queue.size(); ++qi) {
        const JobIndex j = state.queue[qi];
        const auto res = static_cast<std::size_t>(state.job(j).res);
        if (res > free.size()) {
            break;
        }
        start(j, take(free, res));
    }
    if (qi == state.queue.size()) {
        return out;
    }

    const JobIndex head = state.queue[qi];
    const auto reservation = compute_reservation(state, cfg, head, busy_until, free);
    if (reservation) {
        out.push_back(Decision{Reserve{head, reservation->nodes, reservation->shadow_time}, now});
    }
    if (!backfill) {
        return out;
    }
    for (std::size_t k = qi + 1; k < state.queue.size() && !free.empty(); ++k) {
        const JobIndex j = state.queue[k];
        const Job& job = state.job(j);
        const auto res = static_cast<std::size_t>(job.res);
        if (res > free.size()) {
            continue;
        }
        const bool ends_before_shadow = !reservation || now + job.reqtime <= reservation->shadow_time;
        std::vector<NodeIndex> pool = free;
        if (!ends_before_shadow) {
            remove_nodes(pool, reservation->nodes);
        }
        if (res > pool.size()) {
            continue;
        }
        auto picked = take(pool, res);
        remove_nodes(free, picked);
        start(j, std::move(picked));
    }
    return out;
}

template <class T>
std::set<NodeIndex> nodes_of(std::span<const Decision> decisions) {
    std::set<NodeIndex> out;
    for (const auto& d : decisions) {
        if (const auto* x = std::get_if<T>(&d.kind)) {
            out.insert(x->nodes.begin(), x->nodes.end());
        }
    }
    return out;
}

}  // namespace

PolicyConfig parse_algorithm(std::string_view name) {
    PolicyConfig cfg;
    std::string_view rest;
    if (name.starts_with("fcfs_")) {
        cfg.algorithm = Algorithm::fcfs;
        rest = name.substr(5);
    } else if (name.starts_with("easy_")) {
        cfg.algorithm = Algorithm::easy;
        rest = name.substr(5);
    } else {
        throw ValidationError("unknown algorithm '" + std::string(name) + "'");
    }
    if (rest == "psus") {
        cfg.psm = PsmVariant::psus;
    } else if (rest == "psas_ao" || rest == "psas") {
        cfg.psm = PsmVariant::psas_ao;
    } else if (rest == "psas_ipm") {
        cfg.psm = PsmVariant::psas_ipm;
    } else {
        throw ValidationError("unknown algorithm '" + std::string(name) + "'");
    }
    return cfg;
}

bool is_deprecated_algorithm_name(std::string_view name) { return name == "easy_psas" || name == "fcfs_psas"; }

std::string algorithm_name(const PolicyConfig& cfg) {
    std::string out = cfg.algorithm == Algorithm::fcfs ? "fcfs_" : "easy_";
    switch (cfg.psm) {
    case PsmVariant::psus: return out + "psus";
    case PsmVariant::psas_ao: return out + "psas_ao";
    case PsmVariant::psas_ipm: return out + "psas_ipm";
    }
    return out;
}

std::vector<NodeIndex> idle_nodes_in_selection_order(const SimState& state) {
    std::vector<NodeIndex> out;
    for (const auto& node : state.platform.nodes) {
        if (node.is_idle()) {
            out.push_back(node.id);
        }
    }
    std::sort(out.begin(), out.end(), [&](NodeIndex a, NodeIndex b) {
        if (state.idle_since[a] != state.idle_since[b]) {
            return state.idle_since[a] < state.idle_since[b];
        }
        return a < b;
    });
    return out;
}

std::optional<Reservation> compute_reservation(const SimState& state, const PolicyConfig& cfg, JobIndex job,
                                               std::span<const std::pair<NodeIndex, Time>> busy_until,
                                               std::span<const NodeIndex> free_now) {
    const Time now = state.clock;
    const bool power_aware = cfg.psm != PsmVariant::psus;
    std::vector<Slot> slots;
    slots.reserve(state.platform.num_nodes());
    for (const auto& node : state.platform.nodes) {
        const NodeIndex n = node.id;
        if (std::find(free_now.begin(), free_now.end(), n) != free_now.end()) {
            slots.push_back({now, n});
            continue;
        }
        auto claimed = std::find_if(busy_until.begin(), busy_until.end(), [&](const auto& p) { return p.first == n; });
        if (claimed != busy_until.end()) {
            slots.push_back({std::max(now, claimed->second), n});
            continue;
        }
        const Time on = node.switch_on_delay();
        switch (node.current_state) {
        case PowerState::active:
            if (node.running_job) {
                const auto& rj = state.running.at(*node.running_job);
                slots.push_back({std::max(now, rj.start + state.job(*node.running_job).reqtime), n});
            } else {
                slots.push_back({now, n});
            }
            break;
        case PowerState::sleeping:
            if (power_aware) {
                slots.push_back({cfg.boot_lookahead ? now + on : now, n});
            }
            break;
        case PowerState::switching_on:
            slots.push_back({cfg.boot_lookahead ? std::max(now, node.state_since + on) : now, n});
            break;
        case PowerState::switching_off:
            if (power_aware) {
                const Time asleep = std::max(now, node.state_since + node.switch_off_delay());
                slots.push_back({cfg.boot_lookahead ? asleep + on : now, n});
            }
            break;
        }
    }
    const auto res = static_cast<std::size_t>(state.job(job).res);
    if (slots.size() < res) {
        return std::nullopt;
    }
    std::sort(slots.begin(), slots.end(),
              [](const Slot& a, const Slot& b) { return a.at != b.at ? a.at < b.at : a.node < b.node; });
    Reservation r;
    r.job = job;
    r.shadow_time = slots[res - 1].at;
    // Hold the nodes released last; the ones free earliest stay open for backfilling.
    std::vector<Slot> usable;
    for (const auto& s : slots) {
        if (s.at <= r.shadow_time) {
            usable.push_back(s);
        }
    }
    std::sort(usable.begin(), usable.end(),
              [](const Slot& a, const Slot& b) { return a.at != b.at ? a.at > b.at : a.node > b.node; });
    for (std::size_t i = 0; i < res; ++i) {
        r.nodes.push_back(usable[i].node);
    }
    std::sort(r.nodes.begin(), r.nodes.end());
    return r;
}

std::vector<Decision> fcfs_decide(const SimState& state, const PolicyConfig& cfg) {
    return schedule_queue(state, cfg, false);
}

std::vector<Decision> easy_decide(const SimState& state, const PolicyConfig& cfg) {
    return schedule_queue(state, cfg, true);
}

std::vector<Decision> apply_psm(const SimState& state, const PolicyConfig& cfg, std::vector<Decision> base,
                                PowerManager* ipm) {
    const Time now = state.clock;
    const auto started = nodes_of<StartJob>(base);
    const auto reserved = nodes_of<Reserve>(base);
    auto may_switch_off = [&](NodeIndex n) {
        return n < state.platform.num_nodes() && state.platform.nodes[n].is_idle() && !started.contains(n) &&
               !reserved.contains(n) && state.platform.nodes[n].has_state(PowerState::sleeping);
    };
    auto may_switch_on = [&](NodeIndex n) {
        return n < state.platform.num_nodes() && state.platform.nodes[n].current_state == PowerState::sleeping;
    };

    switch (cfg.psm) {
    case PsmVariant::psus: return base;
    case PsmVariant::psas_ao: {
        std::vector<Decision> power;
        std::set<NodeIndex> waking;
        for (const auto& d : base) {
            const auto* r = std::get_if<Reserve>(&d.kind);
            if (!r) {
                continue;
            }
            for (NodeIndex n : r->nodes) {
                const Node& node = state.platform.nodes[n];
                if (may_switch_on(n) && r->est_start <= now + node.switch_on_delay() && waking.insert(n).second) {
                    power.push_back(Decision{SwitchOn{n}, now});
                }
            }
        }
        for (const auto& node : state.platform.nodes) {
            if (may_switch_off(node.id) && now - state.idle_since[node.id] >= cfg.idle_timeout) {
                power.push_back(Decision{SwitchOff{node.id}, now});
            }
        }
        base.insert(base.end(), power.begin(), power.end());
        return base;
    }
    case PsmVariant::psas_ipm: {
        if (!ipm) {
            return base;
        }
        std::set<NodeIndex> touched;
        std::vector<Decision> power;
        for (auto& d : ipm->power_decisions(state, base)) {
            if (const auto* off = std::get_if<SwitchOff>(&d.kind)) {
                if (may_switch_off(off->node) && touched.insert(off->node).second) {
                    power.push_back(Decision{*off, now});
                }
            } else if (const auto* on = std::get_if<SwitchOn>(&d.kind)) {
                if (may_switch_on(on->node) && touched.insert(on->node).second) {
                    power.push_back(Decision{*on, now});
                }
            }
        }
        base.insert(base.end(), power.begin(), power.end());
        return base;
    }
    }
    return base;
}

std::vector<Decision> SchedulingPolicy::decide(const SimState& state) {
    auto base = cfg_.algorithm == Algorithm::fcfs ? fcfs_decide(state, cfg_) : easy_decide(state, cfg_);
    return apply_psm(state, cfg_, std::move(base), ipm_);
}

}  // namespace pwrsim
