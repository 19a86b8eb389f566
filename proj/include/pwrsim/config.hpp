#pragma once

#include <pwrsim/engine.hpp>
#include <pwrsim/rlenv.hpp>
#include <pwrsim/sched.hpp>

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pwrsim {

/// How the environment reaches the agent.
enum class TransportKind : std::uint8_t { spawn, socket, stdio };

[[nodiscard]] std::string_view to_string(TransportKind k);

struct TransportConfig {
    TransportKind kind = TransportKind::spawn;
    /// spawn: agent command line.
    std::vector<std::string> command;
    /// socket: Unix-domain socket path the environment listens on.
    std::filesystem::path socket;
};

struct RlConfig {
    bool enabled = false;
    /// Passed through to the agent side; learning happens behind the protocol.
    bool learn = false;
    ActionMode type = ActionMode::discrete;
    std::optional<Time> dt;
    TransportConfig transport;
    std::optional<Time> stall_guard = 24 * 3600 * kMicrosPerSecond;
    std::size_t epochs = 1;
    std::string features = "default";
    std::string translator = "target_count";
    RewardWeights weights;
};

struct LoggingConfig {
    std::string level = "info";
    std::filesystem::path file;
};

/// Fully resolved run configuration.
struct RunConfig {
    std::filesystem::path workload;
    std::filesystem::path platform;
    std::filesystem::path output;

    /// Canonical algorithm name (legacy aliases already mapped).
    std::string algorithm = "easy_psus";
    OverrunPolicy overrun_policy = OverrunPolicy::continue_running;
    std::optional<Time> timeout;
    Time start_time = 0;
    /// Idle time before psas_ao powers a node down.
    Time idle_timeout = 300 * kMicrosPerSecond;

    RlConfig rl;
    LoggingConfig logging;
    std::uint64_t seed = 0;

    /// Non-fatal findings made while loading (deprecated names and the like).
    std::vector<std::string> warnings;

    [[nodiscard]] SimConfig sim_config() const;
    [[nodiscard]] PolicyConfig policy_config() const;
    [[nodiscard]] EnvConfig env_config() const;
};

/// Command-line overrides applied on top of the file contents.
struct ConfigOverrides {
    std::optional<std::filesystem::path> output;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> algorithm;
    /// Seconds; an empty inner value means event-driven (null).
    std::optional<std::optional<double>> timeout;
    std::optional<std::string> log_level;
};

/// Reads a YAML or JSON document into a JSON tree (YAML scalars are typed
/// by their plain-text form; quoted scalars stay strings).
[[nodiscard]] nlohmann::json read_config_document(std::string_view text, bool is_json);

/// Validates a configuration tree and fills in defaults. Relative paths are
/// resolved against `base_dir`. Throws ValidationError naming the field.
[[nodiscard]] RunConfig resolve_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                       const ConfigOverrides& overrides = {});

/// Loads `path` (JSON when the extension is .json, YAML otherwise). The
/// `SPARS_LOG` environment variable overrides logging.level.
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Resolved configuration as JSON; resolving it again yields the same config.
[[nodiscard]] nlohmann::ordered_json config_to_json(const RunConfig& config);

}  // namespace pwrsim
