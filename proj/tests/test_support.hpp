#pragma once

#include <pwrsim/engine.hpp>
#include <pwrsim/platform.hpp>
#include <pwrsim/workload.hpp>

#include <string>
#include <vector>

namespace pwrsim::testing {

/// Job description in whole seconds, for compact fixtures.
struct JobSpec {
    std::int64_t id = 0;
    std::int64_t res = 1;
    std::int64_t subtime = 0;
    std::int64_t reqtime = 1;
    std::int64_t runtime = 1;
};

inline Time sec(std::int64_t s) { return s * kMicrosPerSecond; }

inline Workload make_workload(std::int64_t nb_res, const std::vector<JobSpec>& specs) {
    Workload w;
    w.nb_res = nb_res;
    for (const auto& s : specs) {
        Job j;
        j.job_id = std::to_string(s.id);
        j.res = s.res;
        j.subtime = sec(s.subtime);
        j.reqtime = sec(s.reqtime);
        j.runtime = sec(s.runtime);
        w.jobs.push_back(j);
    }
    return w;
}

/// Platform whose nodes only have the active state.
inline Platform always_on_platform(std::size_t n, double watts = 190.0) {
    std::string doc = R"({"nodes": [)";
    for (std::size_t i = 0; i < n; ++i) {
        doc += (i ? "," : "") + std::string(R"({"id": )") + std::to_string(i) +
               R"(, "dvfs_profiles": {"base": {"power": )" + std::to_string(watts) +
               R"(, "speed": 1.0}}, "dvfs_mode": "base", "states": {"active": {"power": null, "speed": null}}})";
    }
    return parse_platform(doc + "]}");
}

/// Wraps a policy and records each invocation's clock and batch.
class RecordingPolicy final : public Policy {
public:
    explicit RecordingPolicy(Policy& inner) : inner_(inner) {}
    std::vector<Decision> decide(const SimState& state) override {
        times.push_back(state.clock);
        auto out = inner_.decide(state);
        decisions.push_back(out);
        return out;
    }
    std::vector<Time> times;
    std::vector<std::vector<Decision>> decisions;

private:
    Policy& inner_;
};

/// Policy that never decides anything.
class NullPolicy final : public Policy {
public:
    std::vector<Decision> decide(const SimState&) override { return {}; }
};

inline const JobRecord& record_of(const ResultsBundle& r, const std::string& job_id) {
    for (const auto& rec : r.job_records) {
        if (r.workload.jobs[rec.job].job_id == job_id) {
            return rec;
        }
    }
    throw std::runtime_error("no record for job " + job_id);
}

}  // namespace pwrsim::testing
