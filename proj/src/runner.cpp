#include <pwrsim/runner.hpp>

#include <pwrsim/error.hpp>

#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace pwrsim {

namespace {

/// Passes decisions through unchanged and traces every invocation.
class TracingPolicy final : public Policy {
public:
    TracingPolicy(Policy& inner, spdlog::logger& log) : inner_(inner), log_(log) {}

    std::vector<Decision> decide(const SimState& state) override {
        auto out = inner_.decide(state);
        if (log_.should_log(spdlog::level::trace)) {
            log_.trace("t={} s queue={} running={} decisions={}", format_seconds(state.clock), state.queue.size(),
                       state.running.size(), out.size());
            for (const auto& d : out) {
                log_.trace("  {}", describe(d));
            }
        }
        return out;
    }

private:
    Policy& inner_;
    spdlog::logger& log_;
};

void log_summary(spdlog::logger& log, const Summary& s) {
    log.info("jobs={} terminated={} end={} s", s.job_count, s.terminated_count, format_seconds(s.end_time));
    log.info("total_energy={} J wasted_energy={} J", format_micro(s.total_energy.microjoules()),
             format_micro(s.wasted_energy.microjoules()));
    log.info("mean_waiting={:.6f} s max_waiting={} s utilization={:.6f}", s.mean_waiting / 1e6,
             format_seconds(s.max_waiting), s.utilization);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::filesystem::path write_config_echo(const RunConfig& config) {
    const auto path = config.output / "config.json";
    write_file_atomic(path, config_to_json(config).dump(2) + "\n");
    return path;
}

std::unique_ptr<LineChannel> open_transport(const TransportConfig& t, spdlog::logger& log) {
    switch (t.kind) {
    case TransportKind::spawn: {
        std::string joined;
        for (const auto& w : t.command) {
            joined += (joined.empty() ? "" : " ") + w;
        }
        log.info("spawning agent: {}", joined);
        return SpawnChannel::launch(t.command);
    }
    case TransportKind::socket:
        log.info("waiting for an agent on {}", t.socket.string());
        return accept_unix_socket(t.socket.string());
    case TransportKind::stdio: log.info("serving the agent over standard input/output");
        return std::make_unique<FdChannel>(STDIN_FILENO, STDOUT_FILENO, false);
    }
    throw ValidationError("unknown transport");
}

std::string timeout_label(const std::optional<double>& t) {
    if (!t) {
        return "null";
    }
    std::ostringstream s;
    s << *t;
    return s.str();
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    if (in.bad()) {
        throw IoError("error while reading " + path.string());
    }
    return text.str();
}

Inputs load_inputs(const RunConfig& config) {
    Inputs in;
    in.platform = parse_platform(read_text_file(config.platform));
    const std::string text = read_text_file(config.workload);
    if (config.workload.extension() == ".swf") {
        in.workload = convert_swf(text, static_cast<std::int64_t>(in.platform.num_nodes())).workload;
    } else {
        in.workload = parse_workload(text);
    }
    for (const auto& job : in.workload.jobs) {
        if (job.res > static_cast<std::int64_t>(in.platform.num_nodes())) {
            throw ValidationError("job " + job.job_id + " needs " + std::to_string(job.res) +
                                  " nodes but the platform has " + std::to_string(in.platform.num_nodes()));
        }
    }
    return in;
}

std::shared_ptr<spdlog::logger> make_run_logger(const RunConfig& config, const std::string& name) {
    std::error_code ec;
    std::filesystem::create_directories(config.logging.file.parent_path(), ec);
    std::vector<spdlog::sink_ptr> sinks;
    try {
        auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>(config.logging.file.string(), true);
        file->set_level(spdlog::level::from_str(config.logging.level));
        sinks.push_back(file);
    } catch (const spdlog::spdlog_ex& e) {
        throw IoError("cannot open log file " + config.logging.file.string() + ": " + e.what());
    }
    auto console = std::make_shared<spdlog::sinks::stderr_sink_mt>();
    console->set_level(spdlog::level::warn);
    sinks.push_back(console);
    auto log = std::make_shared<spdlog::logger>(name, sinks.begin(), sinks.end());
    log->set_level(spdlog::level::from_str(config.logging.level));
    log->flush_on(spdlog::level::info);
    return log;
}

RunOutcome run_from_config(const RunConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    auto log = make_run_logger(config, "run");
    for (const auto& w : config.warnings) {
        log->warn("{}", w);
    }
    log->info("algorithm={} timeout={} overrun={} seed={}", config.algorithm,
              config.timeout ? format_seconds(*config.timeout) + " s" : std::string("null"),
              config.overrun_policy == OverrunPolicy::terminate ? "terminate" : "continue", config.seed);
    const Inputs in = load_inputs(config);
    log->info("platform {} ({} nodes), workload {} ({} jobs)", config.platform.string(), in.platform.num_nodes(),
              config.workload.string(), in.workload.jobs.size());

    SchedulingPolicy policy(config.policy_config());
    TracingPolicy traced(policy, *log);
    ResultsBundle results;
    try {
        results = run_simulation(config.sim_config(), in.platform, in.workload, traced);
    } catch (const Error& e) {
        log->error("{}", e.what());
        throw;
    }

    RunOutcome out;
    out.summary = summarize(results);
    out.files = write_outputs(config.output, results, RunInfo{config.algorithm, config.seed});
    out.config_echo = write_config_echo(config);
    out.wall_seconds = seconds_since(t0);
    log_summary(*log, out.summary);
    log->info("outputs written to {} in {:.3f} s", config.output.string(), out.wall_seconds);
    return out;
}

RunOutcome serve_from_config(const RunConfig& config, const ServeOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    auto log = make_run_logger(config, "env");
    for (const auto& w : config.warnings) {
        log->warn("{}", w);
    }
    const Inputs in = load_inputs(config);
    const EnvConfig env_cfg = config.env_config();
    if (env_cfg.mode == ActionMode::discrete && !env_cfg.dt) {
        throw ValidationError("'rl.dt' is required when rl.type is 'discrete'");
    }
    Env env(env_cfg, in.platform, in.workload);
    const auto transport = options.transport.value_or(config.rl.transport);
    if (transport.kind == TransportKind::spawn && transport.command.empty()) {
        throw ValidationError("no agent command configured (rl.transport.command)");
    }
    const std::size_t episodes = options.episodes.value_or(config.rl.epochs);
    log->info("environment: mode={} dt={} obs_dim={} episodes={}", to_string(env_cfg.mode),
              env_cfg.dt ? format_seconds(*env_cfg.dt) + " s" : std::string("-"), env.obs_dim(), episodes);

    const RunInfo info{algorithm_name(env_cfg.policy), config.seed};
    auto channel = open_transport(transport, *log);
    std::vector<EpisodeOutcome> outcomes;
    try {
        outcomes = serve_episodes(env, *channel, episodes, info);
    } catch (const Error& e) {
        log->error("{}", e.what());
        throw;
    }
    if (auto* spawned = dynamic_cast<SpawnChannel*>(channel.get())) {
        const int status = spawned->finish();
        if (status != 0) {
            log->warn("agent exited with status {}", status);
        }
    }
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        log->info("episode {}: {} steps, {} rejected messages", i, outcomes[i].steps, outcomes[i].rejected_messages);
        log_summary(*log, outcomes[i].summary);
    }

    RunOutcome out;
    out.summary = outcomes.back().summary;
    out.files = write_outputs(config.output, outcomes.back().results, info);
    out.config_echo = write_config_echo(config);
    out.wall_seconds = seconds_since(t0);
    log->info("outputs of the last episode written to {}", config.output.string());
    return out;
}

std::vector<std::optional<double>> parse_timeout_list(const std::string& text) {
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size() || !std::isfinite(v) || v <= 0) {
            throw ValidationError("invalid timeout '" + s + "' in '" + text + "'");
        }
        return v;
    };
    std::vector<std::optional<double>> out;
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
        const auto colon = text.find(':', dots);
        if (colon == std::string::npos) {
            throw ValidationError("timeout range must look like start..end:step, got '" + text + "'");
        }
        const double start = number(text.substr(0, dots));
        const double end = number(text.substr(dots + 2, colon - dots - 2));
        const double step = number(text.substr(colon + 1));
        if (end < start) {
            throw ValidationError("timeout range end is before its start in '" + text + "'");
        }
        // Integer stepping avoids accumulating rounding error.
        const auto count = static_cast<std::int64_t>(std::floor((end - start) / step + 1e-9)) + 1;
        for (std::int64_t i = 0; i < count; ++i) {
            out.emplace_back(start + static_cast<double>(i) * step);
        }
        return out;
    }
    std::istringstream items(text);
    for (std::string item; std::getline(items, item, ',');) {
        if (item == "null") {
            out.emplace_back(std::nullopt);
        } else {
            out.emplace_back(number(item));
        }
    }
    if (out.empty()) {
        throw ValidationError("empty timeout list");
    }
    return out;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, const SweepSpec& spec) {
    if (spec.algorithms.empty() || spec.timeouts.empty()) {
        throw ValidationError("a sweep needs at least one algorithm and one timeout");
    }
    std::vector<SweepRow> rows;
    std::vector<RunConfig> configs;
    for (const auto& alg : spec.algorithms) {
        const std::string name = algorithm_name(parse_algorithm(alg));
        for (const auto& t : spec.timeouts) {
            RunConfig c = base;
            c.algorithm = name;
            c.timeout = t ? std::optional<Time>(seconds_to_time(*t)) : std::nullopt;
            if (t) {
                c.idle_timeout = *c.timeout;
            }
            SweepRow row;
            row.algorithm = name;
            row.timeout = t;
            row.directory = base.output / (name + "_timeout_" + timeout_label(t));
            c.output = row.directory;
            c.logging.file = row.directory / "simulation.log";
            c.warnings.clear();
            rows.push_back(std::move(row));
            configs.push_back(std::move(c));
        }
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            try {
                rows[i].outcome = run_from_config(configs[i]);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
            }
        }
    };
    const std::size_t n = std::clamp<std::size_t>(spec.workers, 1, rows.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < n; ++i) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
    write_file_atomic(base.output / "comparison.csv", render_comparison_csv(rows));
    return rows;
}

std::string render_comparison_csv(const std::vector<SweepRow>& rows) {
    std::string out =
        "algorithm,timeout_s,total_energy_j,wasted_energy_j,mean_waiting_s,max_waiting_s,utilization,makespan_s,"
        "wall_time_s\n";
    for (const auto& r : rows) {
        const Summary& s = r.outcome.summary;
        char tail[96];
        std::snprintf(tail, sizeof tail, ",%.6f,%s,%.6f,%s,%.3f\n", s.mean_waiting / 1e6,
                      format_seconds(s.max_waiting).c_str(), s.utilization, format_seconds(s.makespan).c_str(),
                      r.outcome.wall_seconds);
        out += r.algorithm + "," + (r.timeout ? timeout_label(r.timeout) : std::string("null")) + "," +
               format_micro(s.total_energy.microjoules()) + "," + format_micro(s.wasted_energy.microjoules()) + tail;
    }
    return out;
}

}  // namespace pwrsim
