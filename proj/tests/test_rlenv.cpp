#include <pwrsim/error.hpp>
#include <pwrsim/metrics.hpp>
#include <pwrsim/rlenv.hpp>

#include "test_support.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <thread>

using namespace pwrsim;
using namespace pwrsim::testing;
using nlohmann::json;

namespace {

EnvConfig discrete_config(std::int64_t dt_seconds) {
    EnvConfig cfg;
    cfg.dt = sec(dt_seconds);
    return cfg;
}

PowerAction target(double value, ActionMode mode = ActionMode::discrete) {
    PowerAction a;
    a.mode = mode;
    a.value = value;
    return a;
}

std::vector<Decision> translate(const SimState& s, const PowerAction& a, const char* name = "target_count") {
    return translator_registry().at(name)(s, a);
}

template <class T>
std::vector<NodeIndex> nodes_of(const std::vector<Decision>& ds) {
    std::vector<NodeIndex> out;
    for (const auto& d : ds) {
        if (const auto* x = std::get_if<T>(&d.kind)) {
            out.push_back(x->node);
        }
    }
    return out;
}

double partition_sum(const Observation& o) { return o.features[0] + o.features[1] + o.features[2] + o.features[3]; }

/// Scripted agent side of an in-memory channel.
class ScriptedChannel final : public LineChannel {
public:
    explicit ScriptedChannel(std::deque<std::string> replies) : replies_(std::move(replies)) {}

    std::optional<std::string> read_line() override {
        if (replies_.empty()) {
            return std::nullopt;
        }
        auto line = replies_.front();
        replies_.pop_front();
        return line;
    }
    void write_line(const std::string& line) override { sent.push_back(line); }

    std::vector<std::string> sent;

private:
    std::deque<std::string> replies_;
};

/// Agent that answers every non-final observation with the same action.
class ConstantAgent final : public LineChannel {
public:
    explicit ConstantAgent(std::string action) : action_(std::move(action)) {}

    std::optional<std::string> read_line() override { return action_; }
    void write_line(const std::string& line) override { sent.push_back(json::parse(line)); }

    std::vector<json> sent;

private:
    std::string action_;
};

Workload small_workload() {
    return make_workload(4, {{1, 1, 0, 600, 500},
                             {2, 2, 100, 900, 900},
                             {3, 4, 200, 300, 300},
                             {4, 1, 4000, 600, 600},
                             {5, 3, 4100, 1200, 1000}});
}

}  // namespace

TEST(Observation, AllIdleEmptyQueue) {
    SimState s = start_simulator({}, reference_platform(128), make_workload(128, {}));
    const auto obs = get_observation(s);
    EXPECT_EQ(obs.features, (std::vector<double>{0, 1, 0, 0, 0, 0}));
    EXPECT_EQ(obs.timestamp, 0);
}

TEST(Observation, HalfComputingHalfSleepingWithWideJobQueued) {
    SimState s =
        start_simulator({}, reference_platform(128), make_workload(128, {{1, 64, 0, 10, 10}, {2, 128, 0, 10, 10}}));
    for (auto& node : s.platform.nodes) {
        if (node.id < 64) {
            node.running_job = 0;
        } else {
            node.current_state = PowerState::sleeping;
        }
    }
    s.queue.push_back(1);
    const auto obs = get_observation(s);
    ASSERT_EQ(obs.features.size(), kDefaultObsDim);
    EXPECT_EQ(obs.features, (std::vector<double>{0.5, 0, 0.5, 0, 1.0 / 128, 1.0}));
}

TEST(Observation, UnknownExtractorIsRejected) {
    SimState s = start_simulator({}, reference_platform(2), make_workload(2, {}));
    EXPECT_THROW((void)get_observation(s, "fancy"), ValidationError);
    EXPECT_TRUE(feature_registry().contains("default"));
}

TEST(Reward, ExamplesFromTheDefinition) {
    const RewardNormalization norm{128, 190'000};
    const Time dt = sec(1800);
    EXPECT_EQ(compute_reward({Energy{}, 0, dt}, norm), 0.0);

    WindowMetrics all_idle{Energy::of(dt, 128 * 190000), 0, dt};
    EXPECT_EQ(compute_reward(all_idle, norm), -1.0);

    WindowMetrics all_waiting{Energy{}, 128 * dt, dt};
    EXPECT_EQ(compute_reward(all_waiting, norm), -1.0);

    EXPECT_EQ(compute_reward({Energy{}, 5, 0}, norm), 0.0);
}

TEST(Reward, TermsAreClipped) {
    const RewardNormalization norm{4, 190'000};
    const Time dt = sec(10);
    EXPECT_EQ(compute_reward({Energy{}, 100 * dt, dt}, norm), -1.0);
    EXPECT_EQ(compute_reward({Energy{}, 2 * dt, dt}, norm, {1.0, 2.0}), -1.0);
}

TEST(Translator, TargetEqualToPoweredOnIssuesNothing) {
    SimState s = start_simulator({}, reference_platform(6), make_workload(6, {}));
    s.platform.nodes[5].current_state = PowerState::sleeping;
    EXPECT_EQ(powered_on_count(s), 5u);
    EXPECT_TRUE(translate(s, target(5)).empty());
}

TEST(Translator, SwitchesOnLowestSleepingIds) {
    SimState s = start_simulator({}, reference_platform(6), make_workload(6, {}));
    for (NodeIndex n : {1u, 3u, 4u, 5u}) {
        s.platform.nodes[n].current_state = PowerState::sleeping;
    }
    s.platform.nodes[2].current_state = PowerState::switching_on;
    EXPECT_EQ(powered_on_count(s), 2u);
    EXPECT_EQ(nodes_of<SwitchOn>(translate(s, target(4))), (std::vector<NodeIndex>{1, 3}));
    EXPECT_EQ(nodes_of<SwitchOn>(translate(s, target(6))), (std::vector<NodeIndex>{1, 3, 4, 5}));
}

TEST(Translator, TargetZeroNeverTouchesComputingOrReservedNodes) {
    std::vector<JobSpec> jobs;
    for (int i = 0; i < 10; ++i) {
        jobs.push_back({i, 1, 0, 5000, 5000});
    }
    Env env(discrete_config(60), reference_platform(13), make_workload(13, jobs));
    (void)env.step(target(13));
    const SimState& s = env.state();
    ASSERT_EQ(s.running.size(), 10u);

    SimState copy = s;
    copy.platform.nodes[12].reserved_for = 0;
    const auto off = nodes_of<SwitchOff>(translate(copy, target(0)));
    EXPECT_EQ(off, (std::vector<NodeIndex>{10, 11}));
    EXPECT_TRUE(nodes_of<SwitchOn>(translate(copy, target(0))).empty());
}

TEST(Translator, ContinuousValueScalesToNodeCount) {
    SimState s = start_simulator({}, reference_platform(4), make_workload(4, {}));
    EXPECT_EQ(nodes_of<SwitchOff>(translate(s, target(0.5, ActionMode::continuous))).size(), 2u);
    EXPECT_EQ(nodes_of<SwitchOff>(translate(s, target(0.0, ActionMode::continuous))).size(), 4u);
    EXPECT_TRUE(translate(s, target(1.0, ActionMode::continuous)).empty());
}

TEST(Translator, OutOfRangeActionsAreRejected) {
    SimState s = start_simulator({}, reference_platform(4), make_workload(4, {}));
    EXPECT_THROW((void)translate(s, target(5)), ValidationError);
    EXPECT_THROW((void)translate(s, target(-1)), ValidationError);
    EXPECT_THROW((void)translate(s, target(1.5)), ValidationError);
    EXPECT_THROW((void)translate(s, target(1.5, ActionMode::continuous)), ValidationError);
    EXPECT_THROW((void)translate(s, target(std::nan(""), ActionMode::continuous)), ValidationError);
}

TEST(Translator, PerNodeFlags) {
    SimState s = start_simulator({}, reference_platform(4), make_workload(4, {}));
    s.platform.nodes[0].current_state = PowerState::sleeping;
    s.platform.nodes[3].reserved_for = 0;
    PowerAction a;
    a.per_node = {1, 0, 1, 0};
    const auto ds = translate(s, a, "per_node");
    EXPECT_EQ(nodes_of<SwitchOn>(ds), (std::vector<NodeIndex>{0}));
    EXPECT_EQ(nodes_of<SwitchOff>(ds), (std::vector<NodeIndex>{1}));
    a.per_node = {1, 0};
    EXPECT_THROW((void)translate(s, a, "per_node"), ValidationError);
    a.per_node = {1, 0, 2, 0};
    EXPECT_THROW((void)translate(s, a, "per_node"), ValidationError);
}

TEST(Env, DiscreteStepsAreExactlyDtApart) {
    Env env(discrete_config(1800), reference_platform(4), small_workload());
    Time last = env.state().clock;
    std::vector<Time> stamps;
    while (!env.done()) {
        const auto r = env.step(target(4));
        stamps.push_back(r.observation.timestamp);
        ASSERT_LE(stamps.size(), 100u);
    }
    ASSERT_GE(stamps.size(), 3u);
    for (std::size_t i = 0; i + 1 < stamps.size(); ++i) {
        EXPECT_EQ(stamps[i] - last, sec(1800));
        last = stamps[i];
    }
    EXPECT_GT(stamps.back() - last, 0);
    EXPECT_LE(stamps.back() - last, sec(1800));
    EXPECT_EQ(stamps.back(), env.results().end_time);
}

TEST(Env, IdleWindowRewardIsMinusOne) {
    Env env(discrete_config(1800), reference_platform(4), make_workload(4, {{1, 1, 3600, 10, 10}}));
    const auto r = env.step(target(4));
    EXPECT_EQ(r.observation.timestamp, sec(1800));
    EXPECT_EQ(r.reward, -1.0);
}

TEST(Env, StepAfterDoneThrows) {
    Env env(discrete_config(1800), reference_platform(2), make_workload(2, {{1, 1, 0, 10, 10}}));
    const auto r = env.step(target(2));
    EXPECT_TRUE(r.done);
    EXPECT_THROW((void)env.step(target(2)), EnvClosed);
    (void)env.reset();
    EXPECT_FALSE(env.done());
}

TEST(Env, DiscreteModeRequiresDt) {
    EnvConfig cfg;
    EXPECT_THROW(Env(cfg, reference_platform(2), make_workload(2, {})), ValidationError);
    cfg.mode = ActionMode::continuous;
    EXPECT_NO_THROW(Env(cfg, reference_platform(2), make_workload(2, {})));
}

TEST(Env, ContinuousModeAdvancesOneBatch) {
    EnvConfig cfg;
    cfg.mode = ActionMode::continuous;
    Env env(cfg, reference_platform(4), small_workload());
    std::vector<Time> stamps;
    while (!env.done()) {
        stamps.push_back(env.step(target(1.0, ActionMode::continuous)).observation.timestamp);
        ASSERT_LE(stamps.size(), 100u);
    }
    // Arrivals at 0, 100, 200, 4000, 4100 and the finishes all get their own step.
    EXPECT_EQ(stamps.front(), 0);
    EXPECT_EQ(stamps.at(1), sec(100));
    EXPECT_EQ(stamps.at(2), sec(200));
    EXPECT_EQ(env.state().policy_invocations, stamps.size());
}

TEST(Env, AdversarialZeroTargetStillTerminates) {
    for (ActionMode mode : {ActionMode::discrete, ActionMode::continuous}) {
        EnvConfig cfg = discrete_config(1800);
        cfg.mode = mode;
        Env env(cfg, reference_platform(4), small_workload());
        std::size_t steps = 0;
        double worst = 0;
        while (!env.done()) {
            const auto r = env.step(target(0, mode));
            ASSERT_TRUE(std::isfinite(r.reward));
            ASSERT_LE(r.reward, 0.0);
            ASSERT_EQ(r.observation.features.size(), kDefaultObsDim);
            EXPECT_NEAR(partition_sum(r.observation), 1.0, 1e-9);
            worst = std::min(worst, r.reward);
            ASSERT_LT(++steps, 10'000u) << to_string(mode);
        }
        const auto results = env.results();
        EXPECT_EQ(results.job_records.size(), 5u) << to_string(mode);
        EXPECT_LT(worst, 0.0);
    }
}

TEST(Env, StallWithoutGuardIsAFault) {
    EnvConfig cfg;
    cfg.mode = ActionMode::continuous;
    cfg.stall_guard.reset();
    Env env(cfg, reference_platform(2), make_workload(2, {{1, 1, 10, 10, 10}}));
    // Arrival at 10 s, then both nodes finish switching off at 1800 s.
    EXPECT_EQ(env.step(target(0, ActionMode::continuous)).observation.timestamp, sec(10));
    EXPECT_EQ(env.step(target(0, ActionMode::continuous)).observation.timestamp, sec(1800));
    EXPECT_THROW((void)env.step(target(0, ActionMode::continuous)), PolicyFault);
}

TEST(Env, EpisodeEnergyBalances) {
    Env env(discrete_config(900), reference_platform(4), small_workload());
    while (!env.done()) {
        (void)env.step(target(2));
    }
    const auto results = env.results();
    const auto summary = summarize(results);
    Energy sum;
    for (const auto& e : summary.energy_by_state) {
        sum += e;
    }
    EXPECT_EQ(summary.total_energy, sum);
}

TEST(Protocol, ParsesActions) {
    auto a = parse_action_message(R"({"type":"action","value":3,"extra":true})", ActionMode::discrete);
    EXPECT_EQ(a.value, 3.0);
    a = parse_action_message(R"({"type":"action","value":[1,0]})", ActionMode::discrete);
    EXPECT_EQ(a.per_node, (std::vector<int>{1, 0}));
    EXPECT_THROW((void)parse_action_message("not json", ActionMode::discrete), ValidationError);
    EXPECT_THROW((void)parse_action_message(R"({"type":"act","value":1})", ActionMode::discrete), ValidationError);
    EXPECT_THROW((void)parse_action_message(R"({"type":"action"})", ActionMode::discrete), ValidationError);
    EXPECT_THROW((void)parse_action_message(R"({"type":"action","value":"x"})", ActionMode::discrete),
                 ValidationError);
}

TEST(Protocol, ObservationMessageShape) {
    const auto line = obs_message({{0, 1, 0, 0, 0, 0}, sec(1800)}, std::nullopt, false, 2);
    EXPECT_EQ(line, R"({"done":false,"episode":2,"features":[0.0,1.0,0.0,0.0,0.0,0.0],"reward":null,"t":1800.0,"type":"obs"})");
    EXPECT_EQ(line.find('\n'), std::string::npos);
}

TEST(Protocol, MalformedMessageResendsObservation) {
    Env env(discrete_config(1800), reference_platform(2), make_workload(2, {{1, 1, 0, 10, 10}}));
    ScriptedChannel ch({"garbage", R"({"type":"action","value":7})", R"({"type":"action","value":2})"});
    const auto out = serve_episodes(env, ch, 1, {"easy_psas_ipm", 0});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].steps, 1u);
    EXPECT_EQ(out[0].rejected_messages, 2u);
    ASSERT_EQ(ch.sent.size(), 7u);
    EXPECT_EQ(json::parse(ch.sent[1])["type"], "error");
    EXPECT_EQ(ch.sent[2], ch.sent[0]);
    EXPECT_EQ(json::parse(ch.sent[3])["type"], "error");
    EXPECT_EQ(ch.sent[4], ch.sent[0]);
    const auto final_obs = json::parse(ch.sent[5]);
    EXPECT_TRUE(final_obs["done"].get<bool>());
    const auto summary = json::parse(ch.sent[6]);
    EXPECT_EQ(summary["type"], "episode_summary");
    EXPECT_EQ(summary["job_count"], 1);
}

TEST(Protocol, TooManyConsecutiveErrorsAborts) {
    Env env(discrete_config(1800), reference_platform(2), make_workload(2, {{1, 1, 0, 10, 10}}));
    ScriptedChannel ch({"x", "y", "z"});
    EXPECT_THROW((void)serve_episodes(env, ch, 1, {}, 3), IoError);
}

TEST(Protocol, AgentErrorAndEofAbort) {
    Env env(discrete_config(1800), reference_platform(2), make_workload(2, {{1, 1, 0, 10, 10}}));
    ScriptedChannel err({R"({"type":"error","msg":"diverged"})"});
    EXPECT_THROW((void)serve_episodes(env, err, 1, {}), IoError);
    ScriptedChannel eof({});
    EXPECT_THROW((void)serve_episodes(env, eof, 1, {}), IoError);
}

TEST(Protocol, EpisodesRunBackToBack) {
    Env env(discrete_config(600), reference_platform(4), small_workload());
    ConstantAgent agent(R"({"type":"action","value":3})");
    const auto out = serve_episodes(env, agent, 2, {"easy_psas_ipm", 0});
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(render_jobs_csv(out[0].results), render_jobs_csv(out[1].results));
    std::size_t summaries = 0;
    for (const auto& m : agent.sent) {
        if (m["type"] == "obs") {
            EXPECT_EQ(m["features"].size(), kDefaultObsDim);
        } else {
            EXPECT_EQ(m["type"], "episode_summary");
            EXPECT_EQ(m["episode"], summaries);
            ++summaries;
        }
    }
    EXPECT_EQ(summaries, 2u);
    EXPECT_TRUE(agent.sent.front()["reward"].is_null());
}

TEST(Transport, SpawnedAgentOverPipes) {
    const std::string script =
        R"(while read -r line; do case "$line" in *'"done":true'*) ;; *'"type":"obs"'*) echo '{"type":"action","value":4}' ;; esac; done)";
    auto ch = SpawnChannel::launch({"/bin/sh", "-c", script});
    Env env(discrete_config(1800), reference_platform(4), small_workload());
    const auto out = serve_episodes(env, *ch, 2, {"easy_psas_ipm", 0});
    EXPECT_EQ(out.size(), 2u);
    EXPECT_EQ(out[1].results.job_records.size(), 5u);
    EXPECT_EQ(ch->finish(), 0);
}

TEST(Transport, MissingAgentExecutableIsAnIoError) {
    auto ch = SpawnChannel::launch({"/nonexistent/agent"});
    Env env(discrete_config(1800), reference_platform(2), make_workload(2, {{1, 1, 0, 10, 10}}));
    EXPECT_THROW((void)serve_episodes(env, *ch, 1, {}), IoError);
    EXPECT_EQ(ch->finish(), 127);
}

TEST(Transport, UnixSocket) {
    const auto path = (std::filesystem::temp_directory_path() /
                       ("pwrsim_test_" + std::to_string(::getpid()) + ".sock"))
                          .string();
    std::thread agent([&] {
        std::unique_ptr<FdChannel> ch;
        for (int attempt = 0; attempt < 500 && !ch; ++attempt) {
            try {
                ch = connect_unix_socket(path);
            } catch (const IoError&) {
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
        }
        if (!ch) {
            return;
        }
        while (auto line = ch->read_line()) {
            const auto msg = json::parse(*line);
            if (msg["type"] == "obs" && !msg["done"].get<bool>()) {
                ch->write_line(R"({"type":"action","value":2})");
            }
            if (msg["type"] == "episode_summary") {
                break;
            }
        }
    });
    auto server = accept_unix_socket(path);
    Env env(discrete_config(1800), reference_platform(4), small_workload());
    const auto out = serve_episodes(env, *server, 1, {"easy_psas_ipm", 0});
    agent.join();
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].results.job_records.size(), 5u);
    EXPECT_FALSE(std::filesystem::exists(path));
}
