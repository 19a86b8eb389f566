#include <pwrsim/platform.hpp>

#include <pwrsim/error.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace pwrsim {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kPowerStateCount> kStateNames = {"active", "sleeping", "switching_on",
                                                                       "switching_off"};

[[noreturn]] void fail(std::int64_t node_id, std::string_view field, std::string_view what) {
    throw ValidationError("platform: node " + std::to_string(node_id) + ": field '" + std::string(field) + "': " +
                          std::string(what));
}

double number_field(const json& obj, std::int64_t node_id, const std::string& field) {
    if (!obj.contains(field) || !obj.at(field).is_number()) {
        fail(node_id, field, "expected a number");
    }
    return obj.at(field).get<double>();
}

std::optional<double> optional_number(const json& obj, std::int64_t node_id, const std::string& field) {
    if (!obj.contains(field) || obj.at(field).is_null()) {
        return std::nullopt;
    }
    if (!obj.at(field).is_number()) {
        fail(node_id, field, "expected a number or null");
    }
    return obj.at(field).get<double>();
}

Time delay_from_seconds(double seconds, std::int64_t node_id, const std::string& field) {
    if (!std::isfinite(seconds) || seconds < 0) {
        fail(node_id, field, "transition time must be finite and non-negative");
    }
    return seconds_to_time(seconds);
}

// Folds the two accepted phrasings of a power-down/power-up into the canonical
// one: the user-level edge carries the whole delay and the transient state
// lists its single successor with the same delay.
void normalize_switch(Node& node, PowerState from, PowerState transient, PowerState to) {
    auto& src = node.states[static_cast<std::size_t>(from)];
    if (!src) {
        return;
    }
    const std::string path = std::string(to_string(from)) + ".transitions";
    std::optional<Time> direct;
    if (auto it = src->transitions.find(to); it != src->transitions.end()) {
        direct = it->second;
    }
    std::optional<Time> via;
    if (auto it = src->transitions.find(transient); it != src->transitions.end()) {
        auto& tdef = node.states[static_cast<std::size_t>(transient)];
        if (!tdef) {
            fail(node.external_id, path, "transition to undeclared state '" + std::string(to_string(transient)) + "'");
        }
        auto succ = tdef->transitions.find(to);
        if (succ == tdef->transitions.end()) {
            fail(node.external_id, std::string(to_string(transient)) + ".transitions",
                 "transient state must lead to '" + std::string(to_string(to)) + "'");
        }
        via = it->second + succ->second;
        src->transitions.erase(it);
    }
    if (direct && via && *direct != *via) {
        fail(node.external_id, path, "inconsistent switching delays");
    }
    const std::optional<Time> total = direct ? direct : via;
    if (!total) {
        return;
    }
    auto& tdef = node.states[static_cast<std::size_t>(transient)];
    if (!tdef) {
        fail(node.external_id, path,
             "transition to '" + std::string(to_string(to)) + "' requires state '" +
                 std::string(to_string(transient)) + "'");
    }
    src->transitions[to] = *total;
    tdef->transitions = {{to, *total}};
}

void validate_node(const Node& node) {
    const auto id = node.external_id;
    if (!node.dvfs_profiles.contains(node.dvfs_mode)) {
        fail(id, "dvfs_mode", "no DVFS profile named '" + node.dvfs_mode + "'");
    }
    if (!node.has_state(PowerState::active)) {
        fail(id, "states", "state 'active' is required");
    }
    for (std::size_t i = 0; i < kPowerStateCount; ++i) {
        const auto& def = node.states[i];
        if (!def) {
            continue;
        }
        const auto field = "states." + std::string(kStateNames[i]);
        if (def->name != PowerState::active) {
            if (!def->power) {
                fail(id, field + ".power", "required outside 'active'");
            }
            if (def->compute_speed && *def->compute_speed != 0.0) {
                fail(id, field + ".speed", "must be 0 or null outside 'active'");
            }
        }
        for (const auto& [target, delay] : def->transitions) {
            if (!node.has_state(target)) {
                fail(id, field + ".transitions", "unknown target state '" + std::string(to_string(target)) + "'");
            }
            (void)delay;
        }
        if (def->name == PowerState::switching_on) {
            if (def->transitions.size() > 1 || (def->transitions.size() == 1 && !def->transitions.contains(PowerState::active))) {
                fail(id, field + ".transitions", "'switching_on' may only lead to 'active'");
            }
        }
        if (def->name == PowerState::switching_off) {
            if (def->transitions.size() > 1 || (def->transitions.size() == 1 && !def->transitions.contains(PowerState::sleeping))) {
                fail(id, field + ".transitions", "'switching_off' may only lead to 'sleeping'");
            }
        }
        if (def->name == PowerState::active || def->name == PowerState::sleeping) {
            for (const auto& [target, delay] : def->transitions) {
                const bool ok = (def->name == PowerState::active && target == PowerState::sleeping) ||
                                (def->name == PowerState::sleeping && target == PowerState::active);
                if (!ok) {
                    fail(id, field + ".transitions",
                         "unsupported transition to '" + std::string(to_string(target)) + "'");
                }
                (void)delay;
            }
        }
    }
    for (const auto& [name, prof] : node.dvfs_profiles) {
        if (prof.power_active < 0) {
            fail(id, "dvfs_profiles." + name + ".power", "must be non-negative");
        }
        if (!(prof.compute_speed > 0) || !std::isfinite(prof.compute_speed)) {
            fail(id, "dvfs_profiles." + name + ".speed", "must be positive");
        }
    }
    const auto& active = node.state(PowerState::active);
    if (active.compute_speed && !(*active.compute_speed > 0)) {
        fail(id, "states.active.speed", "must be positive");
    }
    for (std::size_t i = 0; i < kPowerStateCount; ++i) {
        if (node.states[i] && node.states[i]->power && *node.states[i]->power < 0) {
            fail(id, "states." + std::string(kStateNames[i]) + ".power", "must be non-negative");
        }
    }
    if (node.declared_initial_state && !node.has_state(*node.declared_initial_state)) {
        fail(id, "initial_state", "names an undeclared state");
    }
    if (node.declared_initial_state && is_transient(*node.declared_initial_state)) {
        fail(id, "initial_state", "cannot start in a transient state");
    }
}

Node parse_node(const json& j) {
    if (!j.is_object()) {
        throw ValidationError("platform: every entry of 'nodes' must be an object");
    }
    if (!j.contains("id") || !j.at("id").is_number_integer() || j.at("id").get<std::int64_t>() < 0) {
        throw ValidationError("platform: node entry has a missing or invalid 'id'");
    }
    Node node;
    node.external_id = j.at("id").get<std::int64_t>();
    const auto id = node.external_id;

    if (!j.contains("dvfs_profiles") || !j.at("dvfs_profiles").is_object()) {
        fail(id, "dvfs_profiles", "expected an object");
    }
    for (const auto& [name, prof] : j.at("dvfs_profiles").items()) {
        if (!prof.is_object()) {
            fail(id, "dvfs_profiles." + name, "expected an object");
        }
        DvfsProfile p;
        p.name = name;
        p.power_active = watts_to_power(number_field(prof, id, "power"));
        p.compute_speed = number_field(prof, id, "speed");
        node.dvfs_profiles.emplace(name, p);
    }
    if (!j.contains("dvfs_mode") || !j.at("dvfs_mode").is_string()) {
        fail(id, "dvfs_mode", "expected a string");
    }
    node.dvfs_mode = j.at("dvfs_mode").get<std::string>();

    if (!j.contains("states") || !j.at("states").is_object()) {
        fail(id, "states", "expected an object");
    }
    for (const auto& [name, sj] : j.at("states").items()) {
        const auto state = parse_power_state(name);
        if (!state) {
            fail(id, "states", "unknown state name '" + name + "'");
        }
        if (!sj.is_object()) {
            fail(id, "states." + name, "expected an object");
        }
        PowerStateDef def;
        def.name = *state;
        if (auto w = optional_number(sj, id, "power")) {
            def.power = watts_to_power(*w);
        }
        def.compute_speed = optional_number(sj, id, "speed");
        if (sj.contains("transitions") && !sj.at("transitions").is_null()) {
            if (!sj.at("transitions").is_object()) {
                fail(id, "states." + name + ".transitions", "expected an object");
            }
            for (const auto& [target_name, secs] : sj.at("transitions").items()) {
                const auto target = parse_power_state(target_name);
                if (!target) {
                    fail(id, "states." + name + ".transitions", "unknown state name '" + target_name + "'");
                }
                if (!secs.is_number()) {
                    fail(id, "states." + name + ".transitions." + target_name, "expected seconds");
                }
                def.transitions[*target] =
                    delay_from_seconds(secs.get<double>(), id, "states." + name + ".transitions." + target_name);
            }
        }
        node.states[static_cast<std::size_t>(*state)] = std::move(def);
    }
    if (j.contains("initial_state") && !j.at("initial_state").is_null()) {
        const auto& is = j.at("initial_state");
        const auto state = is.is_string() ? parse_power_state(is.get<std::string>()) : std::nullopt;
        if (!state) {
            fail(id, "initial_state", "unknown state name");
        }
        node.declared_initial_state = state;
    }
    // Undeclared targets are reported before normalization rewrites the maps.
    for (std::size_t i = 0; i < kPowerStateCount; ++i) {
        if (!node.states[i]) {
            continue;
        }
        for (const auto& [target, delay] : node.states[i]->transitions) {
            if (!node.has_state(target)) {
                fail(id, "states." + std::string(kStateNames[i]) + ".transitions",
                     "unknown target state '" + std::string(to_string(target)) + "'");
            }
            (void)delay;
        }
    }
    normalize_switch(node, PowerState::active, PowerState::switching_off, PowerState::sleeping);
    normalize_switch(node, PowerState::sleeping, PowerState::switching_on, PowerState::active);
    validate_node(node);
    node.current_state = node.declared_initial_state.value_or(PowerState::active);
    return node;
}

json state_to_json(const PowerStateDef& def) {
    json sj = json::object();
    sj["power"] = def.power ? json(static_cast<double>(*def.power) / 1000.0) : json(nullptr);
    sj["speed"] = def.compute_speed ? json(*def.compute_speed) : json(nullptr);
    json tj = json::object();
    for (const auto& [target, delay] : def.transitions) {
        tj[std::string(to_string(target))] = time_to_seconds(delay);
    }
    sj["transitions"] = tj;
    return sj;
}

}  // namespace

std::string_view to_string(PowerState s) { return kStateNames[static_cast<std::size_t>(s)]; }

std::optional<PowerState> parse_power_state(std::string_view name) {
    for (std::size_t i = 0; i < kPowerStateCount; ++i) {
        if (kStateNames[i] == name) {
            return static_cast<PowerState>(i);
        }
    }
    return std::nullopt;
}

std::string_view to_string(TransitionRejection r) {
    switch (r) {
    case TransitionRejection::unknown_node: return "unknown node";
    case TransitionRejection::illegal_transition: return "illegal transition";
    case TransitionRejection::node_busy: return "node busy";
    case TransitionRejection::already_transitioning: return "node already transitioning";
    }
    return "unknown rejection";
}

const PowerStateDef& Node::state(PowerState s) const {
    const auto& def = states[static_cast<std::size_t>(s)];
    if (!def) {
        throw ValidationError("node " + std::to_string(external_id) + " has no state '" + std::string(to_string(s)) +
                              "'");
    }
    return *def;
}

Power Node::power_in(PowerState s) const {
    const auto& def = state(s);
    if (def.power) {
        return *def.power;
    }
    return profile().power_active;
}

std::optional<Time> Node::transition_delay(PowerState from, PowerState to) const {
    const auto& def = states[static_cast<std::size_t>(from)];
    if (!def) {
        return std::nullopt;
    }
    auto it = def->transitions.find(to);
    if (it == def->transitions.end()) {
        return std::nullopt;
    }
    return it->second;
}

Time Node::switch_on_delay() const { return transition_delay(PowerState::sleeping, PowerState::active).value_or(0); }

Time Node::switch_off_delay() const { return transition_delay(PowerState::active, PowerState::sleeping).value_or(0); }

bool same_definition(const Node& a, const Node& b) {
    return a.id == b.id && a.external_id == b.external_id && a.dvfs_profiles == b.dvfs_profiles &&
           a.dvfs_mode == b.dvfs_mode && a.states == b.states && a.declared_initial_state == b.declared_initial_state;
}

Power Platform::max_active_power() const {
    Power best = 0;
    for (const auto& n : nodes) {
        best = std::max(best, n.active_power());
    }
    return best;
}

Platform parse_platform(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("platform: malformed JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("nodes") || !doc.at("nodes").is_array()) {
        throw ValidationError("platform: expected an object with a 'nodes' array");
    }
    Platform platform;
    std::set<std::int64_t> seen;
    for (const auto& nj : doc.at("nodes")) {
        Node node = parse_node(nj);
        if (!seen.insert(node.external_id).second) {
            fail(node.external_id, "id", "duplicate node id");
        }
        platform.nodes.push_back(std::move(node));
    }
    std::stable_sort(platform.nodes.begin(), platform.nodes.end(),
                     [](const Node& a, const Node& b) { return a.external_id < b.external_id; });
    for (std::size_t i = 0; i < platform.nodes.size(); ++i) {
        platform.nodes[i].id = i;
    }
    return platform;
}

std::string serialize_platform(const Platform& platform) {
    json nodes = json::array();
    for (const auto& node : platform.nodes) {
        json nj;
        nj["id"] = node.external_id;
        json pj = json::object();
        for (const auto& [name, prof] : node.dvfs_profiles) {
            pj[name] = {{"power", static_cast<double>(prof.power_active) / 1000.0}, {"speed", prof.compute_speed}};
        }
        nj["dvfs_profiles"] = pj;
        nj["dvfs_mode"] = node.dvfs_mode;
        json sj = json::object();
        for (const auto& def : node.states) {
            if (def) {
                sj[std::string(to_string(def->name))] = state_to_json(*def);
            }
        }
        nj["states"] = sj;
        if (node.declared_initial_state) {
            nj["initial_state"] = std::string(to_string(*node.declared_initial_state));
        }
        nodes.push_back(std::move(nj));
    }
    return json{{"nodes", nodes}}.dump(2) + "\n";
}

Platform reference_platform(std::size_t num_nodes) {
    Platform platform;
    for (std::size_t i = 0; i < num_nodes; ++i) {
        Node node;
        node.id = i;
        node.external_id = static_cast<std::int64_t>(i);
        node.dvfs_profiles.emplace("nominal", DvfsProfile{"nominal", 190'000, 1.0});
        node.dvfs_mode = "nominal";
        const Time on = 45 * 60 * kMicrosPerSecond;
        const Time off = 30 * 60 * kMicrosPerSecond;
        node.states[0] = PowerStateDef{PowerState::active, 190'000, std::nullopt, {{PowerState::sleeping, off}}};
        node.states[1] = PowerStateDef{PowerState::sleeping, 9'000, 0.0, {{PowerState::active, on}}};
        node.states[2] = PowerStateDef{PowerState::switching_on, 190'000, 0.0, {{PowerState::active, on}}};
        node.states[3] = PowerStateDef{PowerState::switching_off, 9'000, 0.0, {{PowerState::sleeping, off}}};
        platform.nodes.push_back(std::move(node));
    }
    return platform;
}

TransitionResult check_transition(const Platform& platform, NodeIndex node_id, PowerState target, Time now) {
    if (node_id >= platform.num_nodes()) {
        return TransitionRejection::unknown_node;
    }
    const Node& node = platform.nodes[node_id];
    if (is_transient(node.current_state)) {
        return TransitionRejection::already_transitioning;
    }
    if (node.running_job) {
        return TransitionRejection::node_busy;
    }
    const auto delay = node.transition_delay(node.current_state, target);
    if (!delay || is_transient(target)) {
        return TransitionRejection::illegal_transition;
    }
    const PowerState transient =
        target == PowerState::active ? PowerState::switching_on : PowerState::switching_off;
    return TransitionTicket{node_id, now + *delay, transient, target};
}

TransitionResult request_transition(Platform& platform, NodeIndex node_id, PowerState target, Time now) {
    auto result = check_transition(platform, node_id, target, now);
    if (const auto* ticket = std::get_if<TransitionTicket>(&result)) {
        Node& node = platform.nodes[node_id];
        node.current_state = ticket->transient_state;
        node.state_since = now;
    }
    return result;
}

void complete_transition(Platform& platform, const TransitionTicket& ticket, Time now) {
    Node& node = platform.nodes.at(ticket.node);
    if (node.current_state != ticket.transient_state) {
        throw PolicyFault("node " + std::to_string(node.external_id) + " completed a transition it was not in");
    }
    node.current_state = ticket.target;
    node.state_since = now;
}

double effective_speed(const Node& node) {
    if (node.current_state != PowerState::active) {
        return 0.0;
    }
    const auto& active = node.state(PowerState::active);
    if (active.compute_speed) {
        return *active.compute_speed;
    }
    return node.profile().compute_speed;
}

}  // namespace pwrsim
