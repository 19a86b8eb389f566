#pragma once

#include <pwrsim/units.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pwrsim {

struct Job {
    /// Identifier as written in the input; integers keep their decimal text.
    std::string job_id;
    bool numeric_id = true;
    std::int64_t res = 1;
    Time subtime = 0;
    /// Requested wall-time.
    Time reqtime = 0;
    /// Actual runtime at compute speed 1.0.
    Time runtime = 0;
    std::int64_t user_id = 0;
    std::string profile = "default";

    friend bool operator==(const Job&, const Job&) = default;
};

/// Orders job ids numerically when both are integers, textually otherwise.
[[nodiscard]] bool job_id_less(const Job& a, const Job& b);

struct Workload {
    std::int64_t nb_res = 0;
    /// Sorted by subtime; ties keep input order.
    std::vector<Job> jobs;

    friend bool operator==(const Workload&, const Workload&) = default;
};

[[nodiscard]] Workload parse_workload(std::string_view json_text);
[[nodiscard]] std::string serialize_workload(const Workload& workload);

struct GenSpec {
    std::int64_t num_jobs = 100;
    /// Jobs per second.
    double arrival_rate = 1.0 / 600.0;
    /// Seconds.
    double mean_runtime = 600.0;
    double runtime_cv = 1.0;
    std::int64_t min_res = 1;
    std::int64_t max_res = 1;
    double reqtime_factor = 1.5;
    /// Size the workload declares; 0 means max_res.
    std::int64_t nb_res = 0;
    std::uint64_t seed = 0;
};

/// Throws ValidationError on an invalid spec; returns non-fatal warnings.
std::vector<std::string> validate(const GenSpec& spec);

/// Exponential inter-arrivals (first job at t=0), log-normal runtimes,
/// uniform integer sizes, reqtime = ceil(reqtime_factor * runtime).
[[nodiscard]] Workload generate_workload(const GenSpec& spec);

struct SwfConversion {
    Workload workload;
    /// Jobs with missing processors or runtime, or wider than nb_res.
    std::size_t dropped = 0;
    /// Lines that could not be read as an SWF record.
    std::size_t malformed = 0;
};

[[nodiscard]] SwfConversion convert_swf(std::string_view swf_text, std::int64_t nb_res);

}  // namespace pwrsim
