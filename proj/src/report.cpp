#include <pwrsim/report.hpp>

#include <pwrsim/error.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

namespace pwrsim {

using nlohmann::ordered_json;

namespace {

constexpr Time kMicrosPerHour = 3600 * kMicrosPerSecond;
constexpr int kMarginLeft = 60;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 30;
constexpr int kAxisHeight = 30;
constexpr int kLegendHeight = 24;

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c == '"' ? "\"\"" : std::string(1, c);
    }
    return out + "\"";
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string int128_text(__int128 v) {
    if (v == 0) {
        return "0";
    }
    const bool neg = v < 0;
    unsigned __int128 u = neg ? static_cast<unsigned __int128>(-(v + 1)) + 1 : static_cast<unsigned __int128>(v);
    std::string out;
    while (u > 0) {
        out += static_cast<char>('0' + static_cast<int>(u % 10));
        u /= 10;
    }
    if (neg) {
        out += '-';
    }
    return {out.rbegin(), out.rend()};
}

/// Pixel coordinate with three decimals, computed in integers so that the
/// output does not depend on the platform's floating-point formatting.
std::string px(__int128 milli) {
    const bool neg = milli < 0;
    const __int128 a = neg ? -milli : milli;
    std::string frac = int128_text(a % 1000);
    frac.insert(0, 3 - frac.size(), '0');
    return (neg ? "-" : "") + int128_text(a / 1000) + "." + frac;
}

std::uint32_t fnv1a(std::string_view s) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : s) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

/// Deterministic color from the job id: hue from the hash, fixed saturation
/// and lightness band, converted to RGB with integer arithmetic.
std::string job_color(std::string_view job_id) {
    const std::uint32_t h = fnv1a(job_id);
    const int hue = static_cast<int>(h % 360);
    const int light = 45 + static_cast<int>((h >> 16) % 20);  // percent
    const int sat = 60;
    // HSL -> RGB in units of 1/100.
    const int c = (100 - std::abs(2 * light - 100)) * sat / 100;
    const int hp = hue % 120;
    const int x = c * (60 - std::abs(hp - 60)) / 60;
    const int m = light - c / 2;
    std::array<int, 3> rgb{};
    switch (hue / 60) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", (rgb[0] + m) * 255 / 100, (rgb[1] + m) * 255 / 100,
                  (rgb[2] + m) * 255 / 100);
    return buf;
}

std::vector<const JobRecord*> records_in_output_order(const ResultsBundle& r) {
    std::vector<const JobRecord*> out;
    out.reserve(r.job_records.size());
    for (const auto& rec : r.job_records) {
        out.push_back(&rec);
    }
    std::sort(out.begin(), out.end(), [&](const JobRecord* a, const JobRecord* b) {
        if (a->start_time != b->start_time) {
            return a->start_time < b->start_time;
        }
        return job_id_less(r.workload.jobs[a->job], r.workload.jobs[b->job]);
    });
    return out;
}

/// Hour step for axis ticks, keeping at most ~24 labels.
Time tick_step(Time horizon) {
    static constexpr std::array<Time, 10> kSteps = {
        kMicrosPerHour / 12, kMicrosPerHour / 4, kMicrosPerHour / 2, kMicrosPerHour,      2 * kMicrosPerHour,
        6 * kMicrosPerHour,  12 * kMicrosPerHour, 24 * kMicrosPerHour, 7 * 24 * kMicrosPerHour, 30 * 24 * kMicrosPerHour};
    for (Time s : kSteps) {
        if (horizon / s <= 24) {
            return s;
        }
    }
    return kSteps.back() * (horizon / (kSteps.back() * 24) + 1);
}

std::string hours_label(Time t) {
    // Whole minutes are enough for the tick steps above.
    const Time minutes = t / (60 * kMicrosPerSecond);
    if (minutes % 60 == 0) {
        return std::to_string(minutes / 60) + "h";
    }
    return std::to_string(minutes / 60) + "h" + (minutes % 60 < 10 ? "0" : "") + std::to_string(minutes % 60);
}

}  // namespace

std::string format_micro(__int128 units) {
    const bool neg = units < 0;
    const __int128 a = neg ? -units : units;
    std::string frac = int128_text(a % 1'000'000);
    frac.insert(0, 6 - frac.size(), '0');
    return (neg ? "-" : "") + int128_text(a / 1'000'000) + "." + frac;
}

RewardNormalization reward_normalization(const Platform& platform) {
    return {platform.num_nodes(), platform.max_active_power()};
}

std::string render_jobs_csv(const ResultsBundle& r) {
    std::string out = "job_id,subtime,start_time,finish_time,waiting_time,res,nodes,outcome\n";
    for (const JobRecord* rec : records_in_output_order(r)) {
        const Job& job = r.workload.jobs[rec->job];
        std::vector<std::int64_t> ids;
        for (NodeIndex n : rec->nodes) {
            ids.push_back(r.platform.nodes[n].external_id);
        }
        std::sort(ids.begin(), ids.end());
        std::string nodes;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            nodes += (i ? " " : "") + std::to_string(ids[i]);
        }
        out += csv_field(job.job_id) + "," + format_seconds(rec->subtime) + "," + format_seconds(rec->start_time) +
               "," + format_seconds(rec->finish_time) + "," + format_seconds(rec->start_time - rec->subtime) + "," +
               std::to_string(job.res) + "," + nodes + "," + std::string(to_string(rec->outcome)) + "\n";
    }
    return out;
}

std::string render_node_states_csv(const ResultsBundle& r, std::span<const NodeStateTrace> traces) {
    std::string out = "node_id,state,begin,end\n";
    for (const auto& t : traces) {
        const auto ext = std::to_string(r.platform.nodes[t.node_id].external_id);
        for (const auto& iv : t.intervals) {
            out += ext + "," + std::string(to_string(iv.state)) + "," + format_seconds(iv.begin) + "," +
                   format_seconds(iv.end) + "\n";
        }
    }
    return out;
}

std::string render_summary_json(const Summary& s, const ResultsBundle& r, const RunInfo& info) {
    auto joules = [](Energy e) { return ordered_json::parse(format_micro(e.microjoules())); };
    ordered_json by_state_j = ordered_json::object();
    ordered_json by_state_uj = ordered_json::object();
    for (auto st : kAllTraceStates) {
        const Energy e = s.energy_by_state[static_cast<std::size_t>(st)];
        by_state_j[std::string(to_string(st))] = joules(e);
        by_state_uj[std::string(to_string(st))] = e.microjoules();
    }
    const auto norm = reward_normalization(r.platform);
    ordered_json j;
    j["algorithm"] = info.algorithm;
    j["seed"] = info.seed;
    j["start_time_us"] = s.start_time;
    j["end_time_us"] = s.end_time;
    j["num_nodes"] = r.platform.num_nodes();
    j["job_count"] = s.job_count;
    j["terminated_count"] = s.terminated_count;
    j["total_energy_j"] = joules(s.total_energy);
    j["total_energy_uj"] = s.total_energy.microjoules();
    j["energy_by_state_j"] = by_state_j;
    j["energy_by_state_uj"] = by_state_uj;
    j["wasted_energy_j"] = joules(s.wasted_energy);
    j["wasted_energy_uj"] = s.wasted_energy.microjoules();
    j["mean_waiting_s"] = s.mean_waiting / static_cast<double>(kMicrosPerSecond);
    j["mean_waiting_us"] = s.mean_waiting;
    j["max_waiting_s"] = ordered_json::parse(format_seconds(s.max_waiting));
    j["max_waiting_us"] = s.max_waiting;
    j["utilization"] = s.utilization;
    j["makespan_s"] = ordered_json::parse(format_seconds(s.makespan));
    j["makespan_us"] = s.makespan;
    j["policy_invocations"] = r.policy_invocations;
    j["reward_normalization"] = {{"num_nodes", norm.num_nodes},
                                 {"max_active_power_mw", norm.max_active_power},
                                 {"waste_scale", "num_nodes * max_active_power_mw * window_us (nJ)"},
                                 {"wait_scale", "num_nodes * window_us (job us)"}};
    return j.dump(2) + "\n";
}

std::string render_gantt(const ResultsBundle& r, std::span<const NodeStateTrace> traces, const GanttOptions& opt) {
    const Time start = r.start_time;
    const Time horizon = r.end_time - r.start_time;
    const std::size_t lanes = r.platform.num_nodes();
    auto x_of = [&](Time t) {
        return px(kMarginLeft * 1000 +
                  static_cast<__int128>(t - start) * opt.pixels_per_hour * 1000 / static_cast<__int128>(kMicrosPerHour));
    };
    auto w_of = [&](Time d) {
        return px(static_cast<__int128>(d) * opt.pixels_per_hour * 1000 / static_cast<__int128>(kMicrosPerHour));
    };
    auto y_of = [&](std::size_t lane) { return std::to_string(kMarginTop + static_cast<int>(lane) * opt.lane_height); };
    const __int128 plot_w_milli =
        static_cast<__int128>(horizon) * opt.pixels_per_hour * 1000 / static_cast<__int128>(kMicrosPerHour);
    const int plot_w = static_cast<int>((plot_w_milli + 999) / 1000);
    const int width = std::max(kMarginLeft + plot_w + kMarginRight, 420);
    const int plot_h = static_cast<int>(lanes) * opt.lane_height;
    const int axis_y = kMarginTop + plot_h;
    const int height = axis_y + kAxisHeight + kLegendHeight;

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\" font-family=\"sans-serif\" font-size=\"10\">\n"
      << "<defs>\n"
      << "<pattern id=\"hatch\" patternUnits=\"userSpaceOnUse\" width=\"6\" height=\"6\" "
         "patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#d9d9d9\"/>"
         "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#7f7f7f\" stroke-width=\"2\"/></pattern>\n"
      << "<style>.band.sleeping{fill:#303030}.band.switching_on,.band.switching_off{fill:url(#hatch)}"
         ".lane{fill:none;stroke:#e0e0e0;stroke-width:0.5}.job,.job-cont{stroke:#202020;stroke-width:0.3}</style>\n"
      << "</defs>\n";

    o << "<g class=\"lanes\">\n";
    for (std::size_t lane = 0; lane < lanes; ++lane) {
        o << "<rect class=\"lane\" x=\"" << kMarginLeft << "\" y=\"" << y_of(lane) << "\" width=\"" << px(plot_w_milli)
          << "\" height=\"" << opt.lane_height << "\"/>"
          << "<text x=\"" << kMarginLeft - 4 << "\" y=\"" << kMarginTop + static_cast<int>(lane) * opt.lane_height + opt.lane_height - 3
          << "\" text-anchor=\"end\">" << r.platform.nodes[lane].external_id << "</text>\n";
    }
    o << "</g>\n";

    o << "<g class=\"bands\">\n";
    for (const auto& t : traces) {
        for (const auto& iv : t.intervals) {
            if (iv.state == TraceState::computing || iv.state == TraceState::idle) {
                continue;
            }
            o << "<rect class=\"band " << to_string(iv.state) << "\" x=\"" << x_of(iv.begin) << "\" y=\""
              << y_of(t.node_id) << "\" width=\"" << w_of(iv.end - iv.begin) << "\" height=\"" << opt.lane_height
              << "\"/>\n";
        }
    }
    o << "</g>\n";

    o << "<g class=\"jobs\">\n";
    for (const JobRecord* rec : records_in_output_order(r)) {
        const Job& job = r.workload.jobs[rec->job];
        const std::string color = job_color(job.job_id);
        std::vector<NodeIndex> nodes = rec->nodes;
        std::sort(nodes.begin(), nodes.end());
        // One rectangle per run of adjacent lanes; the first carries the job.
        std::size_t i = 0;
        bool first = true;
        while (i < nodes.size()) {
            std::size_t j = i;
            while (j + 1 < nodes.size() && nodes[j + 1] == nodes[j] + 1) {
                ++j;
            }
            o << "<rect class=\"" << (first ? "job" : "job-cont") << "\" x=\"" << x_of(rec->start_time) << "\" y=\""
              << y_of(nodes[i]) << "\" width=\"" << w_of(rec->finish_time - rec->start_time) << "\" height=\""
              << static_cast<int>(j - i + 1) * opt.lane_height << "\" fill=\"" << color << "\"><title>job "
              << xml_escape(job.job_id) << "</title></rect>\n";
            first = false;
            i = j + 1;
        }
    }
    o << "</g>\n";

    o << "<g class=\"axis\">\n"
      << "<line x1=\"" << kMarginLeft << "\" y1=\"" << axis_y << "\" x2=\"" << kMarginLeft << "\" y2=\"" << kMarginTop
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kMarginLeft << "\" y1=\"" << axis_y << "\" x2=\"" << x_of(r.end_time) << "\" y2=\""
      << axis_y << "\" stroke=\"black\"/>\n";
    const Time step = tick_step(horizon);
    for (Time t = 0; t <= horizon; t += step) {
        o << "<line x1=\"" << x_of(start + t) << "\" y1=\"" << axis_y << "\" x2=\"" << x_of(start + t) << "\" y2=\""
          << axis_y + 4 << "\" stroke=\"black\"/><text x=\"" << x_of(start + t) << "\" y=\"" << axis_y + 14
          << "\" text-anchor=\"middle\">" << hours_label(t) << "</text>\n";
    }
    o << "<text x=\"" << kMarginLeft << "\" y=\"" << kMarginTop - 8 << "\">node</text>\n"
      << "<text x=\"" << kMarginLeft + plot_w / 2 << "\" y=\"" << axis_y + 26
      << "\" text-anchor=\"middle\">time since start</text>\n"
      << "</g>\n";

    const int ly = axis_y + kAxisHeight + 4;
    o << "<g class=\"legend\">\n";
    const std::array<std::pair<const char*, const char*>, 5> entries = {{{"job", "fill=\"#4f81bd\""},
                                                                         {"idle", "fill=\"white\" stroke=\"#999\""},
                                                                         {"sleeping", "fill=\"#303030\""},
                                                                         {"switching_on", "fill=\"url(#hatch)\""},
                                                                         {"switching_off", "fill=\"url(#hatch)\""}}};
    int lx = kMarginLeft;
    for (const auto& [name, style] : entries) {
        o << "<rect x=\"" << lx << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" " << style << "/><text x=\""
          << lx + 14 << "\" y=\"" << ly + 9 << "\">" << name << "</text>\n";
        lx += 80;
    }
    o << "</g>\n</svg>\n";
    return o.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
        }
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            throw IoError("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

OutputBundle write_outputs(const std::filesystem::path& dir, const ResultsBundle& results, const RunInfo& info,
                           const GanttOptions& gantt) {
    const auto traces = build_traces(results);
    check_tiling(traces, results.platform.num_nodes(), results.start_time, results.end_time);
    const Summary summary = summarize(results);
    OutputBundle out{dir / "jobs.csv", dir / "node_states.csv", dir / "summary.json", dir / "gantt.svg"};
    write_file_atomic(out.jobs_csv, render_jobs_csv(results));
    write_file_atomic(out.node_states_csv, render_node_states_csv(results, traces));
    write_file_atomic(out.summary_json, render_summary_json(summary, results, info));
    write_file_atomic(out.gantt_svg, render_gantt(results, traces, gantt));
    return out;
}

}  // namespace pwrsim
