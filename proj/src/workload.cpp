#include <pwrsim/workload.hpp>

#include <pwrsim/error.hpp>
#include <pwrsim/random.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace pwrsim {

using nlohmann::json;

namespace {

[[noreturn]] void fail_job(const std::string& job_id, std::string_view what) {
    throw ValidationError("workload: job " + job_id + ": " + std::string(what));
}

Time seconds_field(const json& j, const std::string& job_id, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) {
        fail_job(job_id, std::string("field '") + key + "' must be a number");
    }
    const double v = j.at(key).get<double>();
    if (!std::isfinite(v)) {
        fail_job(job_id, std::string("field '") + key + "' must be finite");
    }
    if (v < 0) {
        fail_job(job_id, std::string("field '") + key + "' must be non-negative");
    }
    return seconds_to_time(v);
}

void sort_jobs(std::vector<Job>& jobs) {
    std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) { return a.subtime < b.subtime; });
}

bool parse_int(std::string_view text, std::int64_t& out) {
    if (text.empty()) {
        return false;
    }
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

bool job_id_less(const Job& a, const Job& b) {
    if (a.numeric_id && b.numeric_id) {
        std::int64_t x = 0;
        std::int64_t y = 0;
        if (parse_int(a.job_id, x) && parse_int(b.job_id, y)) {
            return x < y;
        }
    }
    if (a.numeric_id != b.numeric_id) {
        return a.numeric_id;
    }
    return a.job_id < b.job_id;
}

Workload parse_workload(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("workload: malformed JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("nb_res") || !doc.at("nb_res").is_number_integer()) {
        throw ValidationError("workload: expected an object with integer 'nb_res'");
    }
    Workload w;
    w.nb_res = doc.at("nb_res").get<std::int64_t>();
    if (w.nb_res < 0) {
        throw ValidationError("workload: 'nb_res' must be non-negative");
    }
    if (!doc.contains("jobs") || !doc.at("jobs").is_array()) {
        throw ValidationError("workload: expected a 'jobs' array");
    }
    std::set<std::string> seen;
    for (const auto& jj : doc.at("jobs")) {
        if (!jj.is_object() || !jj.contains("job_id")) {
            throw ValidationError("workload: job entry without 'job_id'");
        }
        Job job;
        const auto& id = jj.at("job_id");
        if (id.is_number_integer()) {
            job.job_id = std::to_string(id.get<std::int64_t>());
            job.numeric_id = true;
        } else if (id.is_string()) {
            job.job_id = id.get<std::string>();
            job.numeric_id = false;
        } else {
            throw ValidationError("workload: 'job_id' must be a string or an integer");
        }
        if (!seen.insert(job.job_id).second) {
            fail_job(job.job_id, "duplicate job_id");
        }
        if (!jj.contains("res") || !jj.at("res").is_number_integer()) {
            fail_job(job.job_id, "field 'res' must be an integer");
        }
        job.res = jj.at("res").get<std::int64_t>();
        if (job.res < 1) {
            fail_job(job.job_id, "field 'res' must be at least 1");
        }
        if (job.res > w.nb_res) {
            fail_job(job.job_id, "requests " + std::to_string(job.res) + " nodes but nb_res is " +
                                     std::to_string(w.nb_res));
        }
        job.subtime = seconds_field(jj, job.job_id, "subtime");
        job.reqtime = seconds_field(jj, job.job_id, "reqtime");
        job.runtime = seconds_field(jj, job.job_id, "runtime");
        if (job.reqtime == 0) {
            fail_job(job.job_id, "field 'reqtime' must be positive");
        }
        if (job.runtime == 0) {
            fail_job(job.job_id, "field 'runtime' must be positive");
        }
        if (jj.contains("user_id") && !jj.at("user_id").is_null()) {
            if (!jj.at("user_id").is_number_integer()) {
                fail_job(job.job_id, "field 'user_id' must be an integer");
            }
            job.user_id = jj.at("user_id").get<std::int64_t>();
        }
        if (jj.contains("profile") && !jj.at("profile").is_null()) {
            if (!jj.at("profile").is_string()) {
                fail_job(job.job_id, "field 'profile' must be a string");
            }
            job.profile = jj.at("profile").get<std::string>();
        }
        w.jobs.push_back(std::move(job));
    }
    sort_jobs(w.jobs);
    return w;
}

std::string serialize_workload(const Workload& workload) {
    json jobs = json::array();
    for (const auto& job : workload.jobs) {
        json jj;
        if (job.numeric_id) {
            jj["job_id"] = std::stoll(job.job_id);
        } else {
            jj["job_id"] = job.job_id;
        }
        jj["res"] = job.res;
        jj["subtime"] = time_to_seconds(job.subtime);
        jj["user_id"] = job.user_id;
        jj["reqtime"] = time_to_seconds(job.reqtime);
        jj["runtime"] = time_to_seconds(job.runtime);
        jj["profile"] = job.profile;
        jobs.push_back(std::move(jj));
    }
    json doc;
    doc["nb_res"] = workload.nb_res;
    doc["jobs"] = std::move(jobs);
    return doc.dump(1) + "\n";
}

std::vector<std::string> validate(const GenSpec& spec) {
    if (spec.num_jobs < 1) {
        throw ValidationError("generator: num_jobs must be at least 1");
    }
    if (!(spec.arrival_rate > 0) || !std::isfinite(spec.arrival_rate)) {
        throw ValidationError("generator: arrival_rate must be positive");
    }
    if (!(spec.mean_runtime > 0) || !std::isfinite(spec.mean_runtime)) {
        throw ValidationError("generator: mean_runtime must be positive");
    }
    if (!(spec.runtime_cv >= 0) || !std::isfinite(spec.runtime_cv)) {
        throw ValidationError("generator: runtime_cv must be non-negative");
    }
    if (spec.min_res < 1 || spec.min_res > spec.max_res) {
        throw ValidationError("generator: need 1 <= min_res <= max_res");
    }
    if (spec.nb_res != 0 && spec.nb_res < spec.max_res) {
        throw ValidationError("generator: nb_res must be at least max_res");
    }
    if (!(spec.reqtime_factor > 0) || !std::isfinite(spec.reqtime_factor)) {
        throw ValidationError("generator: reqtime_factor must be positive");
    }
    std::vector<std::string> warnings;
    if (spec.reqtime_factor < 1.0) {
        warnings.emplace_back("reqtime_factor < 1: every job will exceed its requested wall-time");
    }
    return warnings;
}

Workload generate_workload(const GenSpec& spec) {
    (void)validate(spec);
    Rng rng(spec.seed);
    Workload w;
    w.nb_res = spec.nb_res != 0 ? spec.nb_res : spec.max_res;
    w.jobs.reserve(static_cast<std::size_t>(spec.num_jobs));
    Time clock = 0;
    for (std::int64_t i = 0; i < spec.num_jobs; ++i) {
        if (i > 0) {
            clock += seconds_to_time(rng.exponential(spec.arrival_rate));
        }
        Job job;
        job.job_id = std::to_string(i + 1);
        job.numeric_id = true;
        job.subtime = clock;
        job.runtime = std::max<Time>(1, seconds_to_time(rng.lognormal_mean_cv(spec.mean_runtime, spec.runtime_cv)));
        job.res = rng.uniform_int(spec.min_res, spec.max_res);
        job.reqtime =
            std::max<Time>(1, static_cast<Time>(std::ceil(spec.reqtime_factor * static_cast<double>(job.runtime))));
        w.jobs.push_back(std::move(job));
    }
    return w;
}

SwfConversion convert_swf(std::string_view swf_text, std::int64_t nb_res) {
    SwfConversion out;
    out.workload.nb_res = nb_res;
    std::istringstream in{std::string(swf_text)};
    std::string line;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == ';') {
            continue;
        }
        std::istringstream fields(line);
        std::vector<double> v;
        std::string tok;
        bool ok = true;
        while (fields >> tok) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(tok, &used));
                ok = ok && used == tok.size();
            } catch (const std::exception&) {
                ok = false;
            }
        }
        if (!ok || v.size() < 12) {
            ++out.malformed;
            continue;
        }
        const double submit = v[1];
        const double run = v[3];
        const double procs = v[4];
        const double requested = v[8];
        if (!(procs > 0) || !(run > 0) || submit < 0 || static_cast<std::int64_t>(procs) > nb_res) {
            ++out.dropped;
            continue;
        }
        Job job;
        job.job_id = std::to_string(static_cast<std::int64_t>(v[0]));
        job.numeric_id = true;
        if (!seen.insert(job.job_id).second) {
            ++out.malformed;
            continue;
        }
        job.subtime = seconds_to_time(submit);
        job.runtime = seconds_to_time(run);
        job.reqtime = requested > 0 ? seconds_to_time(requested) : job.runtime;
        job.res = static_cast<std::int64_t>(procs);
        job.user_id = static_cast<std::int64_t>(v[11]);
        out.workload.jobs.push_back(std::move(job));
    }
    sort_jobs(out.workload.jobs);
    return out;
}

}  // namespace pwrsim
