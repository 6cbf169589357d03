#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "esched/perf_model.hpp"
#include "esched/types.hpp"

namespace esched {

// Synthetic ground truth standing in for on-device measurement. Each profile
// hides one parameter set of the prediction model family; the simulator and
// tests query it instead of real hardware.
struct HardwareProfile {
    std::string name;
    ThroughputParams hidden_tparams;
    EnergyParams hidden_eparams;
    int bs_min = 1;
    int bs_max = 1;
    double f_min = 0.0;   // MHz, inclusive domain bounds
    double f_max = 0.0;
    double p_idle = 0.0;  // W per idle GPU
    double p_max = 0.0;   // W, average per-GPU power at the highest frequency
};

struct GroundTruth {
    double step_time = 0.0;        // s
    double energy_per_iter = 0.0;  // J across all n GPUs
};

// Deterministic, noise-free evaluation of the hidden models.
GroundTruth ground_truth_perf(const HardwareProfile& profile, const Config& config);

// `count` noisy observations of the ground truth at one config; each field is
// scaled by an independent (1 + eps), eps ~ U(-noise_rel, +noise_rel).
std::vector<PerfSample> sample_profile(const HardwareProfile& profile, const Config& config,
                                       int count, double noise_rel, std::uint64_t seed);

// The five evaluation profiles plus the motivating-example fixture
// "vgg16-fixture" (calibrated so BS=64 costs 0.114 s / 27 J on one GPU and
// 0.112 s / 39 J on two).
const std::vector<HardwareProfile>& builtin_profiles();

// Throws std::invalid_argument when the name is unknown. Searches builtin
// profiles first, then any registered user profiles.
const HardwareProfile& find_profile(const std::string& name);

// Makes user-supplied profiles (e.g. loaded from JSON files) resolvable by
// name. Call before starting simulations; not thread-safe with them.
void register_profile(const HardwareProfile& profile);

// Frequency from `frequencies` minimizing step_time * energy_per_iter of the
// hidden models (the true energy-efficiency argmax); ties go to the lower
// frequency. Used to price the pre-run window.
double oracle_best_frequency(const HardwareProfile& profile, int n, int global_batch_size,
                             const std::vector<double>& frequencies, int gpus_per_node);

std::string profile_to_json(const HardwareProfile& profile);
HardwareProfile profile_from_json(const std::string& text);

}  // namespace esched
