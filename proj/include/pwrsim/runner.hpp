#pragma once

#include <pwrsim/config.hpp>
#include <pwrsim/metrics.hpp>
#include <pwrsim/report.hpp>

#include <spdlog/logger.h>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pwrsim {

/// Reads a whole file. Throws IoError.
[[nodiscard]] std::string read_text_file(const std::filesystem::path& path);

struct Inputs {
    Platform platform;
    Workload workload;
};

/// Loads the platform and the workload (`.swf` traces are converted on the fly).
[[nodiscard]] Inputs load_inputs(const RunConfig& config);

/// Logger writing to the configured file at the configured level, with
/// warnings and errors mirrored to stderr. Creates the file's directory.
[[nodiscard]] std::shared_ptr<spdlog::logger> make_run_logger(const RunConfig& config, const std::string& name);

struct RunOutcome {
    Summary summary;
    OutputBundle files;
    std::filesystem::path config_echo;
    double wall_seconds = 0.0;
};

/// Runs one simulation without an agent and writes the four output files
/// plus `config.json` (the resolved configuration) into config.output.
RunOutcome run_from_config(const RunConfig& config);

struct ServeOptions {
    /// Replaces rl.transport when set.
    std::optional<TransportConfig> transport;
    /// Replaces rl.epochs when set.
    std::optional<std::size_t> episodes;
};

/// Serves the environment to an agent for rl.epochs episodes and writes the
/// outputs of the last episode.
RunOutcome serve_from_config(const RunConfig& config, const ServeOptions& options = {});

/// Parses `start..end:step` or a comma list; `null` stands for event-driven.
[[nodiscard]] std::vector<std::optional<double>> parse_timeout_list(const std::string& text);

struct SweepSpec {
    std::vector<std::optional<double>> timeouts;
    std::vector<std::string> algorithms;
    std::size_t workers = 1;
};

struct SweepRow {
    std::string algorithm;
    std::optional<double> timeout;
    std::filesystem::path directory;
    RunOutcome outcome;
};

/// Runs every (algorithm, timeout) pair into its own subdirectory of
/// base.output and writes `comparison.csv` there.
std::vector<SweepRow> run_sweep(const RunConfig& base, const SweepSpec& spec);

/// Rendering of the comparison table (one row per run, input order).
[[nodiscard]] std::string render_comparison_csv(const std::vector<SweepRow>& rows);

}  // namespace pwrsim
