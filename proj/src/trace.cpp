#include "esched/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "esched/oracle.hpp"
#include "esched/placement.hpp"
#include "json.hpp"

namespace esched {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        const auto begin = field.find_first_not_of(" \t\r");
        const auto end = field.find_last_not_of(" \t\r");
        fields.push_back(begin == std::string::npos ? ""
                                                    : field.substr(begin, end - begin + 1));
    }
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

[[noreturn]] void row_error(int line_no, const std::string& what) {
    throw std::invalid_argument("trace line " + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& s, int line_no, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        row_error(line_no, std::string("bad ") + what + " '" + s + "'");
    }
}

std::int64_t parse_int(const std::string& s, int line_no, const char* what) {
    try {
        std::size_t used = 0;
        const std::int64_t v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        row_error(line_no, std::string("bad ") + what + " '" + s + "'");
    }
}

// Feasibility: some power-of-two worker count must divide the global batch
// size into the profile's per-GPU range on this cluster.
std::vector<int> feasible_counts(const HardwareProfile& profile, int global_batch_size,
                                 const ClusterSpec& cluster) {
    std::vector<int> out;
    for (int n = 1; n <= cluster.total_gpus(); n *= 2) {
        if (global_batch_size % n != 0) continue;
        const int bs = global_batch_size / n;
        if (bs >= profile.bs_min && bs <= profile.bs_max) out.push_back(n);
    }
    return out;
}

}  // namespace

std::vector<JobSpec> parse_trace_text(const std::string& text, const ClusterSpec& cluster) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("trace: empty file");
    const std::vector<std::string> header = split_csv_line(line);
    const std::vector<std::string> with_iters = {"job_id",  "submit_time_s",
                                                 "requested_gpus", "model",
                                                 "global_batch_size", "iterations"};
    const std::vector<std::string> with_duration = {"job_id",  "submit_time_s",
                                                    "requested_gpus", "model",
                                                    "global_batch_size", "duration_s"};
    bool duration_form = false;
    if (header == with_duration)
        duration_form = true;
    else if (header != with_iters)
        throw std::invalid_argument(
            "trace: header must be job_id,submit_time_s,requested_gpus,model,"
            "global_batch_size,iterations (or duration_s)");

    std::vector<JobSpec> trace;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 6) row_error(line_no, "expected 6 fields, got " + std::to_string(f.size()));

        JobSpec job;
        job.id = f[0];
        if (job.id.empty()) row_error(line_no, "empty job_id");
        job.submit_time = parse_double(f[1], line_no, "submit_time_s");
        if (job.submit_time < 0.0) row_error(line_no, "negative submit_time_s");
        job.requested_gpus = static_cast<int>(parse_int(f[2], line_no, "requested_gpus"));
        if (job.requested_gpus < 1) row_error(line_no, "requested_gpus must be >= 1");
        job.profile_name = f[3];
        const HardwareProfile* profile = nullptr;
        try {
            profile = &find_profile(job.profile_name);
        } catch (const std::invalid_argument&) {
            row_error(line_no, "unknown model '" + job.profile_name + "'");
        }
        job.global_batch_size = static_cast<int>(parse_int(f[4], line_no, "global_batch_size"));
        if (job.global_batch_size < 1) row_error(line_no, "global_batch_size must be >= 1");

        const std::vector<int> feasible =
            feasible_counts(*profile, job.global_batch_size, cluster);
        if (feasible.empty())
            row_error(line_no, "global_batch_size " + std::to_string(job.global_batch_size) +
                                   " not divisible into the per-GPU range of '" +
                                   job.profile_name + "' at any power of two <= " +
                                   std::to_string(cluster.total_gpus()));

        if (duration_form) {
            const double duration = parse_double(f[5], line_no, "duration_s");
            if (duration <= 0.0) row_error(line_no, "duration_s must be positive");
            const int n = std::clamp(round_worker_count(job.requested_gpus), feasible.front(),
                                     feasible.back());
            const Config c = make_config(n, job.global_batch_size, cluster.max_frequency(),
                                         cluster.gpus_per_node);
            const double step = ground_truth_perf(*profile, c).step_time;
            job.total_iters = std::max<std::int64_t>(1, std::llround(duration / step));
        } else {
            job.total_iters = parse_int(f[5], line_no, "iterations");
            if (job.total_iters < 1) row_error(line_no, "iterations must be >= 1");
        }
        trace.push_back(std::move(job));
    }
    return trace;
}

std::vector<JobSpec> parse_trace(const std::string& path, const ClusterSpec& cluster) {
    return parse_trace_text(read_file(path), cluster);
}

std::string trace_to_csv(const std::vector<JobSpec>& trace) {
    std::ostringstream out;
    out.precision(17);
    out << "job_id,submit_time_s,requested_gpus,model,global_batch_size,iterations\n";
    for (const JobSpec& j : trace)
        out << j.id << ',' << j.submit_time << ',' << j.requested_gpus << ',' << j.profile_name
            << ',' << j.global_batch_size << ',' << j.total_iters << '\n';
    return out.str();
}

std::vector<JobSpec> generate_trace(const TraceGenOptions& options,
                                    const ClusterSpec& cluster) {
    if (options.num_jobs < 0) throw std::invalid_argument("gen: num_jobs must be >= 0");
    std::mt19937_64 rng(options.seed);
    std::exponential_distribution<double> interarrival(1.0 / options.mean_interarrival_s);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    const std::vector<std::string> pool = {"resnet18", "vgg16", "inception_v3", "gpt2",
                                           "deepspeech2"};
    std::vector<JobSpec> trace;
    double t = 0.0;
    for (int i = 0; i < options.num_jobs; ++i) {
        t += interarrival(rng);
        JobSpec job;
        {
            std::ostringstream id;
            id << 'j';
            id.width(4);
            id.fill('0');
            id << i;
            job.id = id.str();
        }
        job.submit_time = t;
        job.profile_name = pool[static_cast<std::size_t>(u01(rng) * pool.size()) % pool.size()];
        const HardwareProfile& profile = find_profile(job.profile_name);

        // Requested size: mostly powers of two, occasionally off by one to
        // exercise the rounding path.
        static const int size_menu[] = {1, 1, 1, 2, 2, 2, 4, 4, 8};
        int requested = size_menu[static_cast<std::size_t>(u01(rng) * 9) % 9];
        requested = std::min(requested, cluster.total_gpus());
        const int n_pow = round_worker_count(requested);
        if (u01(rng) < 0.1 && requested > 1) requested += 1;
        job.requested_gpus = requested;

        // Per-GPU batch drawn from the powers of two inside the profile range,
        // so the requested configuration itself is feasible.
        std::vector<int> bs_menu;
        for (int bs = 1; bs <= profile.bs_max; bs *= 2)
            if (bs >= profile.bs_min && static_cast<std::int64_t>(bs) * n_pow <= 1 << 20)
                bs_menu.push_back(bs);
        const int bs = bs_menu[static_cast<std::size_t>(u01(rng) * bs_menu.size()) %
                               bs_menu.size()];
        job.global_batch_size = bs * n_pow;

        const double log_lo = std::log(static_cast<double>(options.min_iters));
        const double log_hi = std::log(static_cast<double>(options.max_iters));
        job.total_iters = std::max<std::int64_t>(
            1, std::llround(std::exp(log_lo + (log_hi - log_lo) * u01(rng))));
        trace.push_back(std::move(job));
    }
    return trace;
}

ClusterSpec cluster_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ClusterSpec c;
    c.num_nodes = j.at("num_nodes").get<int>();
    c.gpus_per_node = j.at("gpus_per_node").get<int>();
    c.supported_frequencies = j.at("supported_frequencies_mhz").get<std::vector<double>>();
    c.eta = j.at("eta").get<double>();
    c.p_max = j.at("p_max_w").get<double>();
    c.p_idle = j.at("p_idle_w").get<double>();
    if (j.contains("migration_delay_s"))
        c.migration_delay_s = j.at("migration_delay_s").get<double>();
    if (j.contains("prerun_s")) c.prerun_s = j.at("prerun_s").get<double>();
    c.validate();
    return c;
}

std::string cluster_to_json(const ClusterSpec& c) {
    const nlohmann::json j{{"num_nodes", c.num_nodes},
                           {"gpus_per_node", c.gpus_per_node},
                           {"supported_frequencies_mhz", c.supported_frequencies},
                           {"eta", c.eta},
                           {"p_max_w", c.p_max},
                           {"p_idle_w", c.p_idle},
                           {"migration_delay_s", c.migration_delay_s},
                           {"prerun_s", c.prerun_s}};
    return j.dump(2);
}

ClusterSpec load_cluster(const std::string& path) { return cluster_from_json(read_file(path)); }

ClusterSpec default_cluster() {
    ClusterSpec c;
    c.num_nodes = 4;
    c.gpus_per_node = 8;
    c.supported_frequencies = {600.0, 750.0, 900.0, 1050.0, 1200.0, 1350.0};
    c.eta = 0.5;
    c.p_max = 300.0;
    c.p_idle = 40.0;
    c.migration_delay_s = 30.0;
    c.prerun_s = 240.0;
    c.validate();
    return c;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open file '" + path + "'");
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write file '" + path + "'");
    out << content;
}

}  // namespace esched
