#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "esched/types.hpp"

namespace esched {

// CSV trace: `job_id,submit_time_s,requested_gpus,model,global_batch_size,iterations`.
// A `duration_s` column may replace `iterations`; the duration is converted
// via the oracle step time at the requested configuration and the cluster's
// highest frequency. Malformed rows report their line number; unknown models
// report the model name.
std::vector<JobSpec> parse_trace(const std::string& path, const ClusterSpec& cluster);
std::vector<JobSpec> parse_trace_text(const std::string& text, const ClusterSpec& cluster);

std::string trace_to_csv(const std::vector<JobSpec>& trace);

struct TraceGenOptions {
    int num_jobs = 100;
    double mean_interarrival_s = 60.0;  // Poisson arrivals
    std::uint64_t seed = 1;
    std::int64_t min_iters = 200;
    std::int64_t max_iters = 5000;  // log-uniform between min and max
};

// Synthetic workload: models and batch sizes drawn uniformly from the builtin
// evaluation pool, power-of-two worker requests. Deterministic per seed.
std::vector<JobSpec> generate_trace(const TraceGenOptions& options,
                                    const ClusterSpec& cluster);

// Cluster description as JSON with the ClusterSpec field names.
ClusterSpec cluster_from_json(const std::string& text);
std::string cluster_to_json(const ClusterSpec& cluster);
ClusterSpec load_cluster(const std::string& path);

// 600-1350 MHz in 150 MHz steps, 4x8 GPUs, defaults from the spec sheet.
ClusterSpec default_cluster();

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace esched
