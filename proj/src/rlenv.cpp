#include <pwrsim/rlenv.hpp>

#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

namespace pwrsim {

using nlohmann::json;

namespace {

std::vector<double> default_features(const SimState& s) {
    const auto n = static_cast<double>(s.platform.num_nodes());
    std::vector<double> f(kDefaultObsDim, 0.0);
    if (n == 0) {
        return f;
    }
    std::size_t computing = 0;
    std::size_t idle = 0;
    std::size_t sleeping = 0;
    std::size_t switching = 0;
    for (const auto& node : s.platform.nodes) {
        switch (node.current_state) {
        case PowerState::active: ++(node.running_job ? computing : idle); break;
        case PowerState::sleeping: ++sleeping; break;
        case PowerState::switching_on:
        case PowerState::switching_off: ++switching; break;
        }
    }
    std::int64_t queued_res = 0;
    for (JobIndex j : s.queue) {
        queued_res += s.job(j).res;
    }
    f[0] = static_cast<double>(computing) / n;
    f[1] = static_cast<double>(idle) / n;
    f[2] = static_cast<double>(sleeping) / n;
    f[3] = static_cast<double>(switching) / n;
    f[4] = std::min(1.0, static_cast<double>(s.queue.size()) / n);
    f[5] = std::min(1.0, static_cast<double>(queued_res) / n);
    return f;
}

bool may_power_down(const Node& node) {
    return node.is_idle() && !node.reserved_for && node.has_state(PowerState::sleeping);
}

std::vector<Decision> switch_on_lowest(const SimState& s, std::size_t count) {
    std::vector<Decision> out;
    for (const auto& node : s.platform.nodes) {
        if (out.size() == count) {
            break;
        }
        if (node.current_state == PowerState::sleeping) {
            out.push_back(Decision{SwitchOn{node.id}, s.clock});
        }
    }
    return out;
}

std::vector<Decision> translate_target_count(const SimState& s, const PowerAction& a) {
    const auto n = static_cast<double>(s.platform.num_nodes());
    if (!std::isfinite(a.value)) {
        throw ValidationError("action value must be finite");
    }
    double target = 0;
    if (a.mode == ActionMode::discrete) {
        if (a.value != std::floor(a.value) || a.value < 0 || a.value > n) {
            throw ValidationError("discrete action must be an integer in [0, " +
                                  std::to_string(s.platform.num_nodes()) + "]");
        }
        target = a.value;
    } else {
        if (a.value < 0 || a.value > 1) {
            throw ValidationError("continuous action must lie in [0, 1]");
        }
        target = std::nearbyint(a.value * n);
    }
    const auto on = static_cast<double>(powered_on_count(s));
    if (target > on) {
        return switch_on_lowest(s, static_cast<std::size_t>(target - on));
    }
    std::vector<Decision> out;
    auto remaining = static_cast<std::size_t>(on - target);
    for (NodeIndex n_id : idle_nodes_in_selection_order(s)) {
        if (remaining == 0) {
            break;
        }
        if (may_power_down(s.platform.nodes[n_id])) {
            out.push_back(Decision{SwitchOff{n_id}, s.clock});
            --remaining;
        }
    }
    return out;
}

std::vector<Decision> translate_per_node(const SimState& s, const PowerAction& a) {
    if (a.per_node.size() != s.platform.num_nodes()) {
        throw ValidationError("per-node action needs one flag per node (" + std::to_string(s.platform.num_nodes()) +
                              ")");
    }
    std::vector<Decision> out;
    for (const auto& node : s.platform.nodes) {
        const int want = a.per_node[node.id];
        if (want != 0 && want != 1) {
            throw ValidationError("per-node flags must be 0 or 1");
        }
        if (want == 1 && node.current_state == PowerState::sleeping) {
            out.push_back(Decision{SwitchOn{node.id}, s.clock});
        } else if (want == 0 && may_power_down(node)) {
            out.push_back(Decision{SwitchOff{node.id}, s.clock});
        }
    }
    return out;
}

Energy waste_of(const EnergyByState& e) { return compute_waste(e); }

}  // namespace

const std::map<std::string, FeatureExtractor>& feature_registry() {
    static const std::map<std::string, FeatureExtractor> registry = {{"default", default_features}};
    return registry;
}

Observation get_observation(const SimState& state, const std::string& extractor) {
    auto it = feature_registry().find(extractor);
    if (it == feature_registry().end()) {
        throw ValidationError("unknown feature extractor '" + extractor + "'");
    }
    return Observation{it->second(state), state.clock};
}

std::string_view to_string(ActionMode m) { return m == ActionMode::discrete ? "discrete" : "continuous"; }

ActionMode parse_action_mode(std::string_view name) {
    if (name == "discrete") {
        return ActionMode::discrete;
    }
    if (name == "continuous") {
        return ActionMode::continuous;
    }
    throw ValidationError("rl.type must be 'discrete' or 'continuous', got '" + std::string(name) + "'");
}

const std::map<std::string, ActionTranslator>& translator_registry() {
    static const std::map<std::string, ActionTranslator> registry = {{"target_count", translate_target_count},
                                                                     {"per_node", translate_per_node}};
    return registry;
}

std::size_t powered_on_count(const SimState& state) {
    return static_cast<std::size_t>(std::count_if(state.platform.nodes.begin(), state.platform.nodes.end(),
                                                  [](const Node& n) {
                                                      return n.current_state == PowerState::active ||
                                                             n.current_state == PowerState::switching_on;
                                                  }));
}

double compute_reward(const WindowMetrics& w, const RewardNormalization& norm, const RewardWeights& weights) {
    if (w.length <= 0 || norm.num_nodes == 0) {
        return 0.0;
    }
    const double n = static_cast<double>(norm.num_nodes);
    const double dt = static_cast<double>(w.length);
    double energy_term = 0.0;
    if (norm.max_active_power > 0) {
        energy_term = static_cast<double>(w.waste.nanojoules()) / (n * static_cast<double>(norm.max_active_power) * dt);
    }
    const double wait_term = static_cast<double>(w.queued_wait) / (n * dt);
    return -(weights.energy * std::clamp(energy_term, 0.0, 1.0) + weights.waiting * std::clamp(wait_term, 0.0, 1.0));
}

/// Forces the minimum set of nodes on once the head job has waited too long.
class Env::StallGuard final : public PowerManager {
public:
    explicit StallGuard(std::optional<Time> limit) : limit_(limit) {}

    std::vector<Decision> power_decisions(const SimState& s, std::span<const Decision> base) override {
        if (!limit_ || s.queue.empty()) {
            return {};
        }
        const JobIndex head = s.queue.front();
        for (const auto& d : base) {
            if (const auto* sj = std::get_if<StartJob>(&d.kind); sj && sj->job == head) {
                return {};
            }
        }
        if (s.clock - s.arrival_time(head) < *limit_) {
            return {};
        }
        const auto on = powered_on_count(s);
        const auto need = static_cast<std::size_t>(s.job(head).res);
        if (on >= need) {
            return {};
        }
        return switch_on_lowest(s, need - on);
    }

private:
    std::optional<Time> limit_;
};

Env::Env(EnvConfig config, Platform platform, Workload workload)
    : config_(std::move(config)), platform_(std::move(platform)), workload_(std::move(workload)) {
    config_.policy.psm = PsmVariant::psas_ipm;
    if (config_.mode == ActionMode::discrete && (!config_.dt || *config_.dt <= 0)) {
        throw ValidationError("rl.dt is required and must be positive when rl.type is 'discrete'");
    }
    if (config_.stall_guard && *config_.stall_guard <= 0) {
        throw ValidationError("rl.stall_guard must be positive");
    }
    if (!feature_registry().contains(config_.features)) {
        throw ValidationError("unknown feature extractor '" + config_.features + "'");
    }
    if (!translator_registry().contains(config_.translator)) {
        throw ValidationError("unknown action translator '" + config_.translator + "'");
    }
    guard_ = std::make_unique<StallGuard>(config_.stall_guard);
    policy_ = std::make_unique<SchedulingPolicy>(config_.policy, guard_.get());
    (void)reset();
}

Env::~Env() = default;

std::size_t Env::obs_dim() const { return get_observation(*state_, config_.features).features.size(); }

Observation Env::reset() {
    state_ = std::make_unique<SimState>(start_simulator(config_.sim, platform_, workload_));
    wakeups_.clear();
    done_ = !is_running(*state_);
    return get_observation(*state_, config_.features);
}

void Env::advance_batch() {
    (void)proceed(*state_, *policy_);
    if (config_.stall_guard && !state_->queue.empty()) {
        const Time at = state_->arrival_time(state_->queue.front()) + *config_.stall_guard;
        if (at > state_->clock && wakeups_.insert(at).second) {
            schedule_wakeup(*state_, at);
        }
    }
}

StepResult Env::step(const PowerAction& action) {
    if (done_) {
        throw EnvClosed("step called after the episode ended");
    }
    SimState& s = *state_;
    const auto decisions = translator_registry().at(config_.translator)(s, action);
    apply_decisions(s, decisions);

    const Time t0 = s.clock;
    const Energy waste0 = waste_of(metered_energy(s));
    const std::int64_t wait0 = s.queue_wait_accrued;

    if (config_.mode == ActionMode::discrete) {
        const Time t_end = t0 + *config_.dt;
        while (is_running(s)) {
            const auto next = next_event_time(s);
            if (!next || *next > t_end) {
                break;
            }
            advance_batch();
        }
        if (is_running(s)) {
            advance_clock(s, t_end);
        }
    } else if (is_running(s)) {
        if (!next_event_time(s)) {
            throw PolicyFault("simulation stalled at " + format_seconds(s.clock) +
                              " s: jobs are queued, no events are pending and the stall guard is disabled");
        }
        advance_batch();
    }
    done_ = !is_running(s);

    WindowMetrics window;
    window.waste = waste_of(metered_energy(s)) - waste0;
    window.queued_wait = s.queue_wait_accrued - wait0;
    window.length = s.clock - t0;
    StepResult out;
    out.observation = get_observation(s, config_.features);
    out.reward = compute_reward(window, reward_normalization(s.platform), config_.weights);
    out.done = done_;
    return out;
}

FdChannel::~FdChannel() { close_fds(); }

void FdChannel::close_fds() {
    if (owns_) {
        if (in_ >= 0) {
            ::close(in_);
        }
        if (out_ >= 0 && out_ != in_) {
            ::close(out_);
        }
    }
    in_ = -1;
    out_ = -1;
}

std::optional<std::string> FdChannel::read_line() {
    for (;;) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            return line;
        }
        if (eof_ || in_ < 0) {
            if (buffer_.empty()) {
                return std::nullopt;
            }
            std::string line = std::move(buffer_);
            buffer_.clear();
            return line;
        }
        char chunk[4096];
        const ssize_t got = ::read(in_, chunk, sizeof chunk);
        if (got < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw IoError(std::string("read from agent failed: ") + std::strerror(errno));
        }
        if (got == 0) {
            eof_ = true;
        } else {
            buffer_.append(chunk, static_cast<std::size_t>(got));
        }
    }
}

void FdChannel::write_line(const std::string& line) {
    if (out_ < 0) {
        throw IoError("channel is closed");
    }
    const std::string data = line + "\n";
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::write(out_, data.data() + sent, data.size() - sent);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw IoError(std::string("write to agent failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::unique_ptr<SpawnChannel> SpawnChannel::launch(const std::vector<std::string>& argv) {
    if (argv.empty()) {
        throw ValidationError("agent command is empty");
    }
    // A dead agent must surface as a write error, not kill the simulator.
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) {
        throw IoError(std::string("pipe failed: ") + std::strerror(errno));
    }
    if (::pipe(from_child) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        throw IoError(std::string("pipe failed: ") + std::strerror(errno));
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
        throw IoError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::close(to_child[0]);
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::close(from_child[1]);
        std::vector<char*> args;
        for (const auto& a : argv) {
            args.push_back(const_cast<char*>(a.c_str()));
        }
        args.push_back(nullptr);
        ::execvp(args[0], args.data());
        std::fprintf(stderr, "cannot execute %s: %s\n", args[0], std::strerror(errno));
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::unique_ptr<SpawnChannel>(new SpawnChannel(from_child[0], to_child[1], pid));
}

SpawnChannel::~SpawnChannel() {
    if (pid_ > 0) {
        (void)finish();
    }
}

int SpawnChannel::finish() {
    close_fds();
    if (pid_ <= 0) {
        return 0;
    }
    int status = 0;
    while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
    }
    pid_ = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

namespace {

sockaddr_un unix_address(const std::string& path) {
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof addr.sun_path) {
        throw ValidationError("socket path too long: " + path);
    }
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    return addr;
}

}  // namespace

std::unique_ptr<FdChannel> accept_unix_socket(const std::string& path) {
    std::signal(SIGPIPE, SIG_IGN);
    const sockaddr_un addr = unix_address(path);
    const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) {
        throw IoError(std::string("socket failed: ") + std::strerror(errno));
    }
    ::unlink(path.c_str());
    if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 1) != 0) {
        const std::string why = std::strerror(errno);
        ::close(fd);
        throw IoError("cannot listen on " + path + ": " + why);
    }
    const int conn = ::accept(fd, nullptr, nullptr);
    const int err = errno;
    ::close(fd);
    ::unlink(path.c_str());
    if (conn < 0) {
        throw IoError("accept on " + path + " failed: " + std::strerror(err));
    }
    return std::make_unique<FdChannel>(conn, conn, true);
}

std::unique_ptr<FdChannel> connect_unix_socket(const std::string& path) {
    const sockaddr_un addr = unix_address(path);
    const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) {
        throw IoError(std::string("socket failed: ") + std::strerror(errno));
    }
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        const std::string why = std::strerror(errno);
        ::close(fd);
        throw IoError("cannot connect to " + path + ": " + why);
    }
    return std::make_unique<FdChannel>(fd, fd, true);
}

std::string obs_message(const Observation& obs, std::optional<double> reward, bool done, std::size_t episode) {
    json j;
    j["type"] = "obs";
    j["t"] = time_to_seconds(obs.timestamp);
    j["features"] = obs.features;
    j["reward"] = reward ? json(*reward) : json(nullptr);
    j["done"] = done;
    j["episode"] = episode;
    return j.dump();
}

std::string error_message(const std::string& msg) { return json{{"type", "error"}, {"msg", msg}}.dump(); }

std::string episode_summary_message(const Summary& summary, const ResultsBundle& results, const RunInfo& info,
                                    std::size_t episode) {
    json j = json::parse(render_summary_json(summary, results, info));
    j["type"] = "episode_summary";
    j["episode"] = episode;
    return j.dump();
}

PowerAction parse_action_message(const std::string& line, ActionMode mode) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error&) {
        throw ValidationError("message is not valid JSON");
    }
    if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
        throw ValidationError("message must be an object with a string 'type'");
    }
    if (j.at("type") != "action") {
        throw ValidationError("expected a message of type 'action', got '" + j.at("type").get<std::string>() + "'");
    }
    if (!j.contains("value")) {
        throw ValidationError("action message lacks 'value'");
    }
    PowerAction a;
    a.mode = mode;
    const json& v = j.at("value");
    if (v.is_array()) {
        for (const auto& x : v) {
            if (!x.is_number_integer()) {
                throw ValidationError("per-node action flags must be integers");
            }
            a.per_node.push_back(x.get<int>());
        }
    } else if (v.is_number()) {
        a.value = v.get<double>();
    } else {
        throw ValidationError("action 'value' must be a number or an array");
    }
    return a;
}

std::vector<EpisodeOutcome> serve_episodes(Env& env, LineChannel& channel, std::size_t episodes, const RunInfo& info,
                                           std::size_t max_consecutive_errors) {
    std::vector<EpisodeOutcome> out;
    for (std::size_t episode = 0; episode < episodes; ++episode) {
        EpisodeOutcome outcome;
        const Observation first = env.reset();
        std::string last_obs = obs_message(first, std::nullopt, env.done(), episode);
        channel.write_line(last_obs);
        std::size_t consecutive = 0;
        while (!env.done()) {
            const auto line = channel.read_line();
            if (!line) {
                throw IoError("agent closed the connection during episode " + std::to_string(episode));
            }
            try {
                const auto parsed = json::parse(*line, nullptr, false);
                if (parsed.is_object() && parsed.value("type", "") == "error") {
                    throw IoError("agent reported an error: " + parsed.value("msg", std::string("(no message)")));
                }
                const PowerAction action = parse_action_message(*line, env.config().mode);
                const StepResult r = env.step(action);
                ++outcome.steps;
                consecutive = 0;
                last_obs = obs_message(r.observation, r.reward, r.done, episode);
                channel.write_line(last_obs);
            } catch (const ValidationError& e) {
                ++outcome.rejected_messages;
                if (++consecutive >= max_consecutive_errors) {
                    throw IoError("agent sent " + std::to_string(consecutive) + " invalid messages in a row");
                }
                channel.write_line(error_message(e.what()));
                channel.write_line(last_obs);
            }
        }
        outcome.results = env.results();
        outcome.summary = summarize(outcome.results);
        channel.write_line(episode_summary_message(outcome.summary, outcome.results, info, episode));
        out.push_back(std::move(outcome));
    }
    return out;
}

}  // namespace pwrsim
