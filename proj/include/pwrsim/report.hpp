#pragma once

#include <pwrsim/engine.hpp>
#include <pwrsim/metrics.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pwrsim {

/// Run facts echoed next to the metrics in summary.json.
struct RunInfo {
    std::string algorithm;
    std::uint64_t seed = 0;
};

/// Constants that make RL rewards comparable across platforms.
struct RewardNormalization {
    std::size_t num_nodes = 0;
    /// Largest active-state power over all nodes.
    Power max_active_power = 0;
};

[[nodiscard]] RewardNormalization reward_normalization(const Platform& platform);

struct GanttOptions {
    int pixels_per_hour = 20;
    int lane_height = 14;
};

[[nodiscard]] std::string render_jobs_csv(const ResultsBundle& results);
[[nodiscard]] std::string render_node_states_csv(const ResultsBundle& results,
                                                 std::span<const NodeStateTrace> traces);
[[nodiscard]] std::string render_summary_json(const Summary& summary, const ResultsBundle& results,
                                              const RunInfo& info);
[[nodiscard]] std::string render_gantt(const ResultsBundle& results, std::span<const NodeStateTrace> traces,
                                       const GanttOptions& options = {});

/// Writes to a sibling temporary file and renames it over `path`.
/// Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

struct OutputBundle {
    std::filesystem::path jobs_csv;
    std::filesystem::path node_states_csv;
    std::filesystem::path summary_json;
    std::filesystem::path gantt_svg;
};

/// Post-processes a finished run and writes the four output files.
OutputBundle write_outputs(const std::filesystem::path& dir, const ResultsBundle& results, const RunInfo& info,
                           const GanttOptions& gantt = {});

/// Fixed-point decimal of `units / 10^6` with exactly six decimals.
[[nodiscard]] std::string format_micro(__int128 units);

}  // namespace pwrsim
