// Command-line front end: single runs, sweeps, workload tools and the
// environment server.

#include <pwrsim/config.hpp>
#include <pwrsim/error.hpp>
#include <pwrsim/report.hpp>
#include <pwrsim/runner.hpp>
#include <pwrsim/workload.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

namespace {

using namespace pwrsim;

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kPolicy = 3, kIo = 4 };

struct CommonFlags {
    std::string config;
    std::string output;
    std::uint64_t seed = 0;
    std::string algorithm;
    std::string timeout;

    void attach(CLI::App& cmd, bool with_overrides = true) {
        cmd.add_option("-c,--config", config, "Run configuration (YAML or JSON)")->required()->check(
            CLI::ExistingFile);
        cmd.add_option("--output", output, "Output directory (overrides paths.output)");
        cmd.add_option("--seed", seed, "Global seed (overrides seed)");
        if (with_overrides) {
            cmd.add_option("--algorithm", algorithm, "Scheduling algorithm (overrides run.algorithm)");
            cmd.add_option("--timeout", timeout, "Decision timeout in seconds or 'null' (overrides run.timeout)");
        }
    }

    [[nodiscard]] RunConfig load(const CLI::App& cmd) const {
        ConfigOverrides o;
        if (cmd.count("--output")) {
            o.output = output;
        }
        if (cmd.count("--seed")) {
            o.seed = seed;
        }
        if (!algorithm.empty()) {
            o.algorithm = algorithm;
        }
        if (!timeout.empty()) {
            if (timeout == "null") {
                o.timeout = std::optional<double>{};
            } else {
                try {
                    std::size_t used = 0;
                    const double t = std::stod(timeout, &used);
                    if (used != timeout.size()) {
                        throw std::invalid_argument(timeout);
                    }
                    o.timeout = std::optional<double>{t};
                } catch (const std::logic_error&) {
                    throw ValidationError("--timeout must be a number of seconds or 'null', got '" + timeout + "'");
                }
            }
        }
        return load_config(config, o);
    }
};

void print_outcome(const RunOutcome& r, std::FILE* to) {
    const Summary& s = r.summary;
    std::fprintf(to, "jobs: %zu (terminated %zu)\n", s.job_count, s.terminated_count);
    std::fprintf(to, "total energy: %s J\n", format_micro(s.total_energy.microjoules()).c_str());
    std::fprintf(to, "wasted energy: %s J\n", format_micro(s.wasted_energy.microjoules()).c_str());
    std::fprintf(to, "mean waiting: %.6f s\n", s.mean_waiting / 1e6);
    std::fprintf(to, "utilization: %.6f\n", s.utilization);
    std::fprintf(to, "outputs: %s\n", r.files.summary_json.parent_path().string().c_str());
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return kOk;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const PolicyFault& e) {
        std::cerr << "policy fault: " << e.what() << "\n";
        return kPolicy;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power-aware HPC scheduling simulator"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    auto* run = app.add_subcommand("run", "Run one simulation (or serve the agent when rl.enabled)");
    run_flags.attach(*run);

    GenSpec gen_spec;
    std::string gen_out;
    std::string gen_platform;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic workload");
    gen->add_option("-o,--output", gen_out, "Workload file to write")->required();
    gen->add_option("--num-jobs", gen_spec.num_jobs, "Number of jobs")->capture_default_str();
    gen->add_option("--arrival-rate", gen_spec.arrival_rate, "Jobs per second")->capture_default_str();
    gen->add_option("--mean-runtime", gen_spec.mean_runtime, "Mean runtime in seconds")->capture_default_str();
    gen->add_option("--runtime-cv", gen_spec.runtime_cv, "Runtime coefficient of variation")->capture_default_str();
    gen->add_option("--min-res", gen_spec.min_res, "Smallest job size")->capture_default_str();
    gen->add_option("--max-res", gen_spec.max_res, "Largest job size")->capture_default_str();
    gen->add_option("--reqtime-factor", gen_spec.reqtime_factor, "reqtime = ceil(factor * runtime)")
        ->capture_default_str();
    gen->add_option("--nb-res", gen_spec.nb_res, "Declared machine size (default: max-res)");
    gen->add_option("--seed", gen_spec.seed, "Generator seed")->capture_default_str();
    gen->add_option("--platform", gen_platform, "Also write a reference platform with nb-res nodes here");

    std::string swf_in;
    std::string swf_out;
    std::int64_t swf_nb_res = 0;
    auto* swf = app.add_subcommand("swf2json", "Convert a Standard Workload Format trace");
    swf->add_option("input", swf_in, "SWF trace")->required()->check(CLI::ExistingFile);
    swf->add_option("-o,--output", swf_out, "Workload file to write")->required();
    swf->add_option("--nb-res", swf_nb_res, "Machine size; wider jobs are dropped")->required();

    CommonFlags sweep_flags;
    std::string sweep_timeouts;
    std::vector<std::string> sweep_algorithms;
    std::size_t sweep_workers = 1;
    auto* sweep = app.add_subcommand("sweep", "Run every timeout/algorithm pair and compare");
    sweep_flags.attach(*sweep, false);
    sweep->add_option("--timeouts", sweep_timeouts, "start..end:step or a comma list (null allowed)")->required();
    sweep->add_option("--algorithm", sweep_algorithms, "Algorithm (repeatable or comma separated)")
        ->delimiter(',');
    sweep->add_option("--workers", sweep_workers, "Runs executed in parallel")->capture_default_str();

    CommonFlags serve_flags;
    std::string serve_agent;
    std::string serve_socket;
    bool serve_stdio = false;
    std::size_t serve_episodes = 0;
    auto* serve = app.add_subcommand("serve-env", "Serve the power-management environment to an agent");
    serve_flags.attach(*serve);
    auto* agent_opt = serve->add_option("--agent", serve_agent, "Agent command to spawn (space separated)");
    auto* socket_opt = serve->add_option("--socket", serve_socket, "Listen for the agent on this Unix socket");
    auto* stdio_opt = serve->add_flag("--stdio", serve_stdio, "Talk to the agent over standard input/output");
    agent_opt->excludes(socket_opt)->excludes(stdio_opt);
    socket_opt->excludes(stdio_opt);
    serve->add_option("--episodes", serve_episodes, "Episodes to serve (default: rl.epochs)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code != 0) {
            std::cerr << "\n" << app.help();
            return kUsage;
        }
        return kOk;
    }

    if (run->parsed()) {
        return run_guarded([&] {
            const RunConfig cfg = run_flags.load(*run);
            const RunOutcome r = cfg.rl.enabled ? serve_from_config(cfg) : run_from_config(cfg);
            print_outcome(r, cfg.rl.transport.kind == TransportKind::stdio && cfg.rl.enabled ? stderr : stdout);
        });
    }
    if (gen->parsed()) {
        return run_guarded([&] {
            for (const auto& w : validate(gen_spec)) {
                std::cerr << "warning: " << w << "\n";
            }
            const Workload w = generate_workload(gen_spec);
            write_file_atomic(gen_out, serialize_workload(w));
            if (!gen_platform.empty()) {
                write_file_atomic(gen_platform,
                                  serialize_platform(reference_platform(static_cast<std::size_t>(w.nb_res))));
            }
            std::cout << "wrote " << w.jobs.size() << " jobs to " << gen_out << "\n";
        });
    }
    if (swf->parsed()) {
        return run_guarded([&] {
            if (swf_nb_res <= 0) {
                throw ValidationError("--nb-res must be positive");
            }
            const auto conv = convert_swf(read_text_file(swf_in), swf_nb_res);
            write_file_atomic(swf_out, serialize_workload(conv.workload));
            std::cout << "wrote " << conv.workload.jobs.size() << " jobs to " << swf_out << " (dropped "
                      << conv.dropped << ", malformed lines " << conv.malformed << ")\n";
        });
    }
    if (sweep->parsed()) {
        return run_guarded([&] {
            const RunConfig base = sweep_flags.load(*sweep);
            SweepSpec spec;
            spec.timeouts = parse_timeout_list(sweep_timeouts);
            spec.algorithms = sweep_algorithms.empty() ? std::vector<std::string>{base.algorithm} : sweep_algorithms;
            spec.workers = sweep_workers;
            const auto rows = run_sweep(base, spec);
            std::cout << "ran " << rows.size() << " simulations; comparison in "
                      << (base.output / "comparison.csv").string() << "\n";
        });
    }
    if (serve->parsed()) {
        return run_guarded([&] {
            const RunConfig cfg = serve_flags.load(*serve);
            ServeOptions opts;
            if (!serve_agent.empty()) {
                TransportConfig t;
                t.kind = TransportKind::spawn;
                std::istringstream words(serve_agent);
                for (std::string w; words >> w;) {
                    t.command.push_back(w);
                }
                opts.transport = t;
            } else if (!serve_socket.empty()) {
                TransportConfig t;
                t.kind = TransportKind::socket;
                t.socket = serve_socket;
                opts.transport = t;
            } else if (serve_stdio) {
                TransportConfig t;
                t.kind = TransportKind::stdio;
                opts.transport = t;
            }
            if (serve_episodes > 0) {
                opts.episodes = serve_episodes;
            }
            const auto kind = opts.transport ? opts.transport->kind : cfg.rl.transport.kind;
            print_outcome(serve_from_config(cfg, opts), kind == TransportKind::stdio ? stderr : stdout);
        });
    }
    return kUsage;
}
