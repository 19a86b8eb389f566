#include <pwrsim/config.hpp>

#include <pwrsim/error.hpp>

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

namespace pwrsim {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

json scalar_to_json(const YAML::Node& node) {
    const std::string& text = node.Scalar();
    if (node.Tag() == "!") {
        return text;
    }
    static const std::regex null_re("~|null|Null|NULL|");
    static const std::regex true_re("true|True|TRUE");
    static const std::regex false_re("false|False|FALSE");
    static const std::regex int_re("[-+]?[0-9]+");
    static const std::regex float_re(R"([-+]?(\.[0-9]+|[0-9]+(\.[0-9]*)?)([eE][-+]?[0-9]+)?)");
    if (std::regex_match(text, null_re)) {
        return nullptr;
    }
    if (std::regex_match(text, true_re)) {
        return true;
    }
    if (std::regex_match(text, false_re)) {
        return false;
    }
    if (std::regex_match(text, int_re)) {
        try {
            return std::stoll(text);
        } catch (const std::out_of_range&) {
            return std::stod(text);
        }
    }
    if (std::regex_match(text, float_re)) {
        return std::stod(text);
    }
    return text;
}

json yaml_to_json(const YAML::Node& node) {
    switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Scalar: return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
        json out = json::array();
        for (const auto& item : node) {
            out.push_back(yaml_to_json(item));
        }
        return out;
    }
    case YAML::NodeType::Map: {
        json out = json::object();
        for (const auto& kv : node) {
            out[kv.first.as<std::string>()] = yaml_to_json(kv.second);
        }
        return out;
    }
    }
    return nullptr;
}

/// Typed accessors that name the offending field in their errors.
class Section {
public:
    Section(const json& doc, std::string path) : path_(std::move(path)) {
        if (doc.is_null()) {
            node_ = &empty();
        } else if (!doc.is_object()) {
            throw ValidationError("'" + path_ + "' must be a mapping");
        } else {
            node_ = &doc;
        }
    }

    [[nodiscard]] bool has(const char* key) const { return node_->contains(key) && !node_->at(key).is_null(); }
    [[nodiscard]] bool present(const char* key) const { return node_->contains(key); }
    [[nodiscard]] const json& raw(const char* key) const { return node_->at(key); }
    [[nodiscard]] Section sub(const char* key) const {
        return Section(present(key) ? raw(key) : empty(), name(key));
    }
    [[nodiscard]] std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    [[nodiscard]] std::string string(const char* key) const {
        const json& v = raw(key);
        if (!v.is_string()) {
            throw ValidationError("'" + name(key) + "' must be a string");
        }
        return v.get<std::string>();
    }
    [[nodiscard]] bool boolean(const char* key) const {
        const json& v = raw(key);
        if (!v.is_boolean()) {
            throw ValidationError("'" + name(key) + "' must be true or false");
        }
        return v.get<bool>();
    }
    [[nodiscard]] double number(const char* key) const {
        const json& v = raw(key);
        if (!v.is_number() || !std::isfinite(v.get<double>())) {
            throw ValidationError("'" + name(key) + "' must be a number");
        }
        return v.get<double>();
    }
    [[nodiscard]] std::int64_t integer(const char* key) const {
        const json& v = raw(key);
        if (v.is_number_integer()) {
            return v.get<std::int64_t>();
        }
        if (v.is_number_float() && v.get<double>() == std::floor(v.get<double>()) &&
            std::abs(v.get<double>()) < 9e15) {
            return static_cast<std::int64_t>(v.get<double>());
        }
        throw ValidationError("'" + name(key) + "' must be an integer");
    }
    /// Positive duration given in seconds.
    [[nodiscard]] Time seconds(const char* key) const {
        const double s = number(key);
        if (s <= 0) {
            throw ValidationError("'" + name(key) + "' must be positive");
        }
        return seconds_to_time(s);
    }

private:
    static const json& empty() {
        static const json e = json::object();
        return e;
    }
    const json* node_ = nullptr;
    std::string path_;
};

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

const std::vector<std::string>& log_levels() {
    static const std::vector<std::string> levels = {"trace", "debug", "info", "warn", "error", "critical", "off"};
    return levels;
}

std::string normalize_level(const std::string& level, const std::string& field) {
    std::string l = lower(level);
    if (l == "warning") {
        l = "warn";
    }
    if (std::find(log_levels().begin(), log_levels().end(), l) == log_levels().end()) {
        throw ValidationError("'" + field + "' must be one of trace, debug, info, warn, error, critical, off; got '" +
                              level + "'");
    }
    return l;
}

std::optional<Time> optional_seconds(const Section& s, const char* key, std::optional<Time> fallback) {
    if (!s.present(key)) {
        return fallback;
    }
    if (s.raw(key).is_null()) {
        return std::nullopt;
    }
    return s.seconds(key);
}

TransportConfig parse_transport(const Section& rl, const std::filesystem::path& base) {
    TransportConfig t;
    if (!rl.present("transport") || rl.raw("transport").is_null()) {
        return t;
    }
    const json& raw = rl.raw("transport");
    if (raw.is_string()) {
        const auto kind = raw.get<std::string>();
        if (kind == "stdio") {
            t.kind = TransportKind::stdio;
            return t;
        }
        throw ValidationError("'rl.transport' must be 'stdio' or a mapping with 'kind'");
    }
    const Section s = rl.sub("transport");
    const std::string kind = s.has("kind") ? s.string("kind") : "spawn";
    if (kind == "spawn") {
        t.kind = TransportKind::spawn;
        if (!s.has("command")) {
            return t;
        }
        const json& cmd = s.raw("command");
        if (cmd.is_string()) {
            std::istringstream words(cmd.get<std::string>());
            for (std::string w; words >> w;) {
                t.command.push_back(w);
            }
        } else if (cmd.is_array()) {
            for (const auto& w : cmd) {
                if (!w.is_string()) {
                    throw ValidationError("'rl.transport.command' entries must be strings");
                }
                t.command.push_back(w.get<std::string>());
            }
        } else {
            throw ValidationError("'rl.transport.command' must be a string or a list of strings");
        }
        if (t.command.empty()) {
            throw ValidationError("'rl.transport.command' is empty");
        }
    } else if (kind == "socket") {
        t.kind = TransportKind::socket;
        if (!s.has("path")) {
            throw ValidationError("'rl.transport.path' is required for the socket transport");
        }
        t.socket = resolve_path(base, s.string("path"));
    } else if (kind == "stdio") {
        t.kind = TransportKind::stdio;
    } else {
        throw ValidationError("'rl.transport.kind' must be spawn, socket or stdio; got '" + kind + "'");
    }
    return t;
}

Time resolve_start_time(const Section& run) {
    if (!run.has("start_time")) {
        return 0;
    }
    const json& v = run.raw("start_time");
    if (v.is_string()) {
        if (v.get<std::string>() != "now") {
            throw ValidationError("'run.start_time' must be an integer (µs) or \"now\"");
        }
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        return std::chrono::duration_cast<std::chrono::microseconds>(now).count();
    }
    const auto t = run.integer("start_time");
    if (t < 0) {
        throw ValidationError("'run.start_time' must not be negative");
    }
    return t;
}

}  // namespace

std::string_view to_string(TransportKind k) {
    switch (k) {
    case TransportKind::spawn: return "spawn";
    case TransportKind::socket: return "socket";
    case TransportKind::stdio: return "stdio";
    }
    return "?";
}

json read_config_document(std::string_view text, bool is_json) {
    if (is_json) {
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            throw ValidationError(std::string("config is not valid JSON: ") + e.what());
        }
    }
    try {
        return yaml_to_json(YAML::Load(std::string(text)));
    } catch (const YAML::Exception& e) {
        throw ValidationError(std::string("config is not valid YAML: ") + e.what());
    }
}

RunConfig resolve_config(const json& doc, const std::filesystem::path& base_dir, const ConfigOverrides& overrides) {
    const Section root(doc, "");
    RunConfig cfg;

    const Section paths = root.sub("paths");
    for (const char* key : {"workload", "platform"}) {
        if (!paths.has(key)) {
            throw ValidationError("'" + paths.name(key) + "' is required");
        }
    }
    cfg.workload = resolve_path(base_dir, paths.string("workload"));
    cfg.platform = resolve_path(base_dir, paths.string("platform"));
    cfg.output = resolve_path(base_dir, paths.has("output") ? paths.string("output") : "results");
    if (overrides.output) {
        cfg.output = std::filesystem::absolute(*overrides.output).lexically_normal();
    }

    const Section run = root.sub("run");
    std::string algorithm = run.has("algorithm") ? run.string("algorithm") : "easy_psus";
    if (overrides.algorithm) {
        algorithm = *overrides.algorithm;
    }
    const PolicyConfig policy = parse_algorithm(algorithm);
    if (is_deprecated_algorithm_name(algorithm)) {
        cfg.warnings.push_back("algorithm '" + algorithm + "' is deprecated; using '" + algorithm_name(policy) + "'");
    }
    cfg.algorithm = algorithm_name(policy);

    if (run.has("overrun_policy")) {
        const auto p = run.string("overrun_policy");
        if (p == "terminate") {
            cfg.overrun_policy = OverrunPolicy::terminate;
        } else if (p == "continue") {
            cfg.overrun_policy = OverrunPolicy::continue_running;
        } else {
            throw ValidationError("'run.overrun_policy' must be 'terminate' or 'continue'; got '" + p + "'");
        }
    }
    cfg.timeout = optional_seconds(run, "timeout", std::nullopt);
    if (overrides.timeout) {
        if (*overrides.timeout && !(**overrides.timeout > 0)) {
            throw ValidationError("'--timeout' must be positive");
        }
        cfg.timeout = *overrides.timeout ? std::optional<Time>(seconds_to_time(**overrides.timeout)) : std::nullopt;
    }
    cfg.start_time = resolve_start_time(run);

    const Section psm = root.sub("psm");
    cfg.idle_timeout = psm.has("idle_timeout") ? psm.seconds("idle_timeout")
                                               : cfg.timeout.value_or(300 * kMicrosPerSecond);
    if (overrides.timeout && *overrides.timeout) {
        cfg.idle_timeout = *cfg.timeout;
    }

    const Section rl = root.sub("rl");
    if (rl.has("enabled")) {
        cfg.rl.enabled = rl.boolean("enabled");
    }
    if (rl.has("learn")) {
        cfg.rl.learn = rl.boolean("learn");
    }
    if (rl.has("type")) {
        cfg.rl.type = parse_action_mode(rl.string("type"));
    }
    cfg.rl.dt = optional_seconds(rl, "dt", std::nullopt);
    if ((rl.has("type") || cfg.rl.enabled) && cfg.rl.type == ActionMode::discrete && !cfg.rl.dt) {
        throw ValidationError("'rl.dt' is required when rl.type is 'discrete'");
    }
    cfg.rl.stall_guard = optional_seconds(rl, "stall_guard", cfg.rl.stall_guard);
    if (rl.has("epochs")) {
        const auto e = rl.integer("epochs");
        if (e < 1) {
            throw ValidationError("'rl.epochs' must be at least 1");
        }
        cfg.rl.epochs = static_cast<std::size_t>(e);
    }
    if (rl.has("features")) {
        cfg.rl.features = rl.string("features");
        if (!feature_registry().contains(cfg.rl.features)) {
            throw ValidationError("'rl.features' names an unknown extractor '" + cfg.rl.features + "'");
        }
    }
    if (rl.has("translator")) {
        cfg.rl.translator = rl.string("translator");
        if (!translator_registry().contains(cfg.rl.translator)) {
            throw ValidationError("'rl.translator' names an unknown translator '" + cfg.rl.translator + "'");
        }
    }
    const Section weights = rl.sub("reward_weights");
    if (weights.has("energy")) {
        cfg.rl.weights.energy = weights.number("energy");
    }
    if (weights.has("waiting")) {
        cfg.rl.weights.waiting = weights.number("waiting");
    }
    if (cfg.rl.weights.energy < 0 || cfg.rl.weights.waiting < 0) {
        throw ValidationError("'rl.reward_weights' must not be negative");
    }
    cfg.rl.transport = parse_transport(rl, base_dir);
    if (cfg.rl.enabled && cfg.rl.transport.kind == TransportKind::spawn && cfg.rl.transport.command.empty()) {
        throw ValidationError("'rl.transport' must name an agent command, a socket path or 'stdio' when rl is enabled");
    }

    const Section logging = root.sub("logging");
    if (logging.has("level")) {
        cfg.logging.level = normalize_level(logging.string("level"), "logging.level");
    }
    if (overrides.log_level) {
        cfg.logging.level = normalize_level(*overrides.log_level, "SPARS_LOG");
    }
    cfg.logging.file = logging.has("file") ? resolve_path(base_dir, logging.string("file"))
                                           : cfg.output / "simulation.log";
    if (overrides.output) {
        // A relocated run keeps its log next to its outputs.
        cfg.logging.file = cfg.output / cfg.logging.file.filename();
    }

    if (root.has("seed")) {
        const json& s = root.raw("seed");
        if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<std::int64_t>() < 0)) {
            throw ValidationError("'seed' must be a non-negative integer");
        }
        cfg.seed = s.get<std::uint64_t>();
    }
    if (overrides.seed) {
        cfg.seed = *overrides.seed;
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read config " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    const bool is_json = lower(path.extension().string()) == ".json";
    const json doc = read_config_document(text.str(), is_json);
    ConfigOverrides effective = overrides;
    if (const char* env = std::getenv("SPARS_LOG"); env && *env && !effective.log_level) {
        effective.log_level = env;
    }
    // Relative paths are taken from the working directory, like the reference runner.
    return resolve_config(doc, std::filesystem::current_path(), effective);
}

ordered_json config_to_json(const RunConfig& c) {
    auto secs = [](std::optional<Time> t) { return t ? ordered_json(time_to_seconds(*t)) : ordered_json(nullptr); };
    ordered_json j;
    j["paths"]["workload"] = c.workload.string();
    j["paths"]["platform"] = c.platform.string();
    j["paths"]["output"] = c.output.string();
    j["run"]["algorithm"] = c.algorithm;
    j["run"]["overrun_policy"] = c.overrun_policy == OverrunPolicy::terminate ? "terminate" : "continue";
    j["run"]["timeout"] = secs(c.timeout);
    j["run"]["start_time"] = c.start_time;
    j["psm"]["idle_timeout"] = time_to_seconds(c.idle_timeout);
    j["rl"]["enabled"] = c.rl.enabled;
    j["rl"]["learn"] = c.rl.learn;
    // A discrete mode without dt is only legal while unset, so leave it unset.
    if (c.rl.type != ActionMode::discrete || c.rl.dt) {
        j["rl"]["type"] = std::string(to_string(c.rl.type));
        j["rl"]["dt"] = secs(c.rl.dt);
    }
    j["rl"]["stall_guard"] = secs(c.rl.stall_guard);
    j["rl"]["epochs"] = c.rl.epochs;
    j["rl"]["features"] = c.rl.features;
    j["rl"]["translator"] = c.rl.translator;
    j["rl"]["reward_weights"] = {{"energy", c.rl.weights.energy}, {"waiting", c.rl.weights.waiting}};
    ordered_json t;
    t["kind"] = std::string(to_string(c.rl.transport.kind));
    if (c.rl.transport.kind == TransportKind::spawn && !c.rl.transport.command.empty()) {
        t["command"] = c.rl.transport.command;
    }
    if (c.rl.transport.kind == TransportKind::socket) {
        t["path"] = c.rl.transport.socket.string();
    }
    j["rl"]["transport"] = t;
    j["logging"]["level"] = c.logging.level;
    j["logging"]["file"] = c.logging.file.string();
    j["seed"] = c.seed;
    return j;
}

SimConfig RunConfig::sim_config() const {
    SimConfig s;
    s.overrun_policy = overrun_policy;
    s.timeout = timeout;
    s.start_time = start_time;
    s.seed = seed;
    return s;
}

PolicyConfig RunConfig::policy_config() const {
    PolicyConfig p = parse_algorithm(algorithm);
    p.idle_timeout = idle_timeout;
    return p;
}

EnvConfig RunConfig::env_config() const {
    EnvConfig e;
    e.sim = sim_config();
    e.policy = policy_config();
    e.policy.psm = PsmVariant::psas_ipm;
    e.mode = rl.type;
    e.dt = rl.dt;
    e.stall_guard = rl.stall_guard;
    e.features = rl.features;
    e.translator = rl.translator;
    e.weights = rl.weights;
    return e;
}

}  // namespace pwrsim
