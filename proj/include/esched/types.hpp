#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace esched {

// Units used throughout: time in seconds, frequency in MHz, power in watts,
// energy in joules, batch sizes in samples.

struct Config {
    int n = 1;       // GPUs allocated to the job
    int bs = 1;      // local (per-GPU) batch size, bs = BS / n
    double f = 0.0;  // GPU core frequency, MHz
    int r = 1;       // GPUs of this job per node (uniform fill)
};

struct ClusterSpec {
    int num_nodes = 1;
    int gpus_per_node = 8;  // power of two
    std::vector<double> supported_frequencies;  // ascending, MHz
    double eta = 0.5;          // fraction of full-power budget, [0, 1)
    double p_max = 300.0;      // average per-GPU power at the highest frequency, W
    double p_idle = 40.0;      // idle power of a powered-on GPU, W
    double migration_delay_s = 30.0;
    double prerun_s = 240.0;   // profiling window length

    int total_gpus() const { return num_nodes * gpus_per_node; }
    double power_limit() const { return eta * total_gpus() * p_max; }
    double max_frequency() const { return supported_frequencies.back(); }

    bool supports_frequency(double f) const {
        for (double v : supported_frequencies)
            if (v == f) return true;
        return false;
    }

    // Index of f in the supported set, -1 if absent.
    int frequency_index(double f) const {
        for (std::size_t i = 0; i < supported_frequencies.size(); ++i)
            if (supported_frequencies[i] == f) return static_cast<int>(i);
        return -1;
    }

    void validate() const {
        if (num_nodes < 1) throw std::invalid_argument("cluster: num_nodes must be >= 1");
        if (gpus_per_node < 1 || (gpus_per_node & (gpus_per_node - 1)) != 0)
            throw std::invalid_argument("cluster: gpus_per_node must be a power of two");
        if (supported_frequencies.empty())
            throw std::invalid_argument("cluster: supported_frequencies must be non-empty");
        for (std::size_t i = 1; i < supported_frequencies.size(); ++i)
            if (supported_frequencies[i] <= supported_frequencies[i - 1])
                throw std::invalid_argument("cluster: supported_frequencies must be strictly ascending");
        if (eta < 0.0 || eta >= 1.0) throw std::invalid_argument("cluster: eta must be in [0, 1)");
        if (p_max <= 0.0 || p_idle < 0.0) throw std::invalid_argument("cluster: bad power parameters");
        if (migration_delay_s < 0.0 || prerun_s < 0.0)
            throw std::invalid_argument("cluster: delays must be non-negative");
    }
};

struct JobSpec {
    std::string id;
    double submit_time = 0.0;    // seconds
    int requested_gpus = 1;      // from trace; only baselines honor it
    std::string profile_name;
    int global_batch_size = 1;   // BS
    std::int64_t total_iters = 1;
};

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// Largest power of two <= n_raw.
inline int round_down_pow2(int n_raw) {
    if (n_raw < 1) throw std::invalid_argument("round_down_pow2: input must be >= 1");
    int p = 1;
    while (p * 2 <= n_raw) p *= 2;
    return p;
}

// Builds a Config for n GPUs of a job with global batch size BS on a cluster
// with the given node width. Throws if the combination is invalid.
inline Config make_config(int n, int global_batch_size, double f, int gpus_per_node) {
    if (n < 1) throw std::invalid_argument("config: n must be >= 1");
    if (global_batch_size % n != 0)
        throw std::invalid_argument("config: global batch size not divisible by n");
    if (n > gpus_per_node && n % gpus_per_node != 0)
        throw std::invalid_argument("config: multi-node jobs must fill whole nodes");
    Config c;
    c.n = n;
    c.bs = global_batch_size / n;
    c.f = f;
    c.r = n > gpus_per_node ? gpus_per_node : n;
    return c;
}

}  // namespace esched
