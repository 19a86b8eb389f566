#pragma once

#include <pwrsim/engine.hpp>
#include <pwrsim/error.hpp>
#include <pwrsim/report.hpp>
#include <pwrsim/sched.hpp>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pwrsim {

/// Raised by Env::step after the episode has ended.
class EnvClosed : public Error {
public:
    using Error::Error;
};

struct Observation {
    std::vector<double> features;
    Time timestamp = 0;
};

inline constexpr std::size_t kDefaultObsDim = 6;

using FeatureExtractor = std::function<std::vector<double>(const SimState&)>;

/// Named feature extractors; "default" yields [frac_computing, frac_idle,
/// frac_sleeping, frac_switching, queue_len_norm, queue_res_norm].
[[nodiscard]] const std::map<std::string, FeatureExtractor>& feature_registry();
[[nodiscard]] Observation get_observation(const SimState& state, const std::string& extractor = "default");

enum class ActionMode : std::uint8_t { discrete, continuous };

[[nodiscard]] std::string_view to_string(ActionMode m);
[[nodiscard]] ActionMode parse_action_mode(std::string_view name);

struct PowerAction {
    ActionMode mode = ActionMode::discrete;
    /// Discrete: target number of powered-on nodes. Continuous: fraction in [0, 1].
    double value = 0;
    /// Per-node translator only: desired on/off flag per node.
    std::vector<int> per_node;
};

/// Turns an agent action into legal power decisions at the current clock.
/// Throws ValidationError for an out-of-range action.
using ActionTranslator = std::function<std::vector<Decision>(const SimState&, const PowerAction&)>;

/// "target_count" (default) and "per_node".
[[nodiscard]] const std::map<std::string, ActionTranslator>& translator_registry();

/// Nodes that are on or on their way: active plus switching_on.
[[nodiscard]] std::size_t powered_on_count(const SimState& state);

struct RewardWeights {
    double energy = 1.0;
    double waiting = 1.0;
};

struct WindowMetrics {
    Energy waste;
    /// Queue length integrated over the window, in job-microseconds.
    std::int64_t queued_wait = 0;
    Time length = 0;
};

/// -(w_e * waste / (N * Pmax * dt) + w_t * wait / (N * dt)); each term is
/// clipped to [0, 1]. Zero for an empty window.
[[nodiscard]] double compute_reward(const WindowMetrics& window, const RewardNormalization& norm,
                                    const RewardWeights& weights = {});

struct EnvConfig {
    SimConfig sim;
    /// The environment always runs the PSAS+IPM variant of this base scheduler.
    PolicyConfig policy{Algorithm::easy, PsmVariant::psas_ipm};
    ActionMode mode = ActionMode::discrete;
    /// Step length in discrete mode.
    std::optional<Time> dt;
    /// Head-of-queue wait after which the environment forces nodes on;
    /// empty disables the guard.
    std::optional<Time> stall_guard = 24 * 3600 * kMicrosPerSecond;
    std::string features = "default";
    std::string translator = "target_count";
    RewardWeights weights;
};

struct StepResult {
    Observation observation;
    double reward = 0;
    bool done = false;
};

/// Stepwise view of one simulation for an external power manager.
class Env {
public:
    Env(EnvConfig config, Platform platform, Workload workload);
    ~Env();
    Env(const Env&) = delete;
    Env& operator=(const Env&) = delete;

    /// Restarts the episode from the initial platform and workload.
    Observation reset();
    StepResult step(const PowerAction& action);

    [[nodiscard]] bool done() const { return done_; }
    [[nodiscard]] const SimState& state() const { return *state_; }
    [[nodiscard]] const EnvConfig& config() const { return config_; }
    [[nodiscard]] ResultsBundle results() const { return collect_results(*state_); }
    [[nodiscard]] std::size_t obs_dim() const;

private:
    class StallGuard;

    void advance_batch();

    EnvConfig config_;
    Platform platform_;
    Workload workload_;
    std::unique_ptr<StallGuard> guard_;
    std::unique_ptr<SchedulingPolicy> policy_;
    std::unique_ptr<SimState> state_;
    std::set<Time> wakeups_;
    bool done_ = false;
};

/// Bidirectional line-oriented byte stream.
class LineChannel {
public:
    virtual ~LineChannel() = default;
    /// Next line without its terminator; empty at end of stream.
    virtual std::optional<std::string> read_line() = 0;
    /// Writes `line` followed by '\n'. Throws IoError.
    virtual void write_line(const std::string& line) = 0;
};

/// Channel over a pair of file descriptors (may be the same socket).
class FdChannel : public LineChannel {
public:
    FdChannel(int in_fd, int out_fd, bool owns = false) : in_(in_fd), out_(out_fd), owns_(owns) {}
    ~FdChannel() override;
    FdChannel(const FdChannel&) = delete;
    FdChannel& operator=(const FdChannel&) = delete;

    std::optional<std::string> read_line() override;
    void write_line(const std::string& line) override;

protected:
    void close_fds();

private:
    int in_;
    int out_;
    bool owns_;
    std::string buffer_;
    bool eof_ = false;
};

/// Runs `argv` as a child process wired to the channel through pipes.
class SpawnChannel final : public FdChannel {
public:
    static std::unique_ptr<SpawnChannel> launch(const std::vector<std::string>& argv);
    ~SpawnChannel() override;
    /// Closes the pipes and reaps the child; returns its exit status.
    int finish();

private:
    SpawnChannel(int in_fd, int out_fd, int pid) : FdChannel(in_fd, out_fd, true), pid_(pid) {}
    int pid_;
};

/// Listens on a Unix-domain socket path and accepts one agent connection.
[[nodiscard]] std::unique_ptr<FdChannel> accept_unix_socket(const std::string& path);
/// Connects to a Unix-domain socket path (the agent side, used by tests).
[[nodiscard]] std::unique_ptr<FdChannel> connect_unix_socket(const std::string& path);

struct EpisodeOutcome {
    Summary summary;
    ResultsBundle results;
    std::size_t steps = 0;
    std::size_t rejected_messages = 0;
};

/// Serves `episodes` episodes of `env` over the line-JSON protocol.
/// Malformed agent messages get an error reply and the last observation
/// again; after `max_consecutive_errors` in a row the session is aborted
/// with IoError.
std::vector<EpisodeOutcome> serve_episodes(Env& env, LineChannel& channel, std::size_t episodes,
                                           const RunInfo& info, std::size_t max_consecutive_errors = 100);

/// Protocol message renderings (one line each).
[[nodiscard]] std::string obs_message(const Observation& obs, std::optional<double> reward, bool done,
                                      std::size_t episode);
[[nodiscard]] std::string error_message(const std::string& msg);
[[nodiscard]] std::string episode_summary_message(const Summary& summary, const ResultsBundle& results,
                                                  const RunInfo& info, std::size_t episode);

/// Parses an agent message into an action. Throws ValidationError.
[[nodiscard]] PowerAction parse_action_message(const std::string& line, ActionMode mode);

}  // namespace pwrsim
