#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "esched/baselines.hpp"
#include "esched/model_fit.hpp"
#include "esched/oracle.hpp"
#include "esched/placement.hpp"
#include "esched/scheduler.hpp"
#include "esched/types.hpp"

namespace esched {

enum class EventKind : int { completion = 0, migration_done = 1, scaling = 2, arrival = 3 };

struct SchedulingEvent {
    double time = 0.0;
    EventKind kind = EventKind::arrival;
    int job_index = 0;  // position in the trace
    std::uint64_t generation = 0;
};

struct PowerSample {
    double time_s = 0.0;
    double power_w = 0.0;      // constant until the next sample
    int gpus_allocated = 0;
};

struct Metrics {
    std::vector<std::pair<std::string, double>> per_job_jct;  // trace order
    double avg_jct = 0.0;
    double total_energy = 0.0;  // jobs + idle + profiling overhead
    double makespan = 0.0;
    std::vector<PowerSample> power_series;
    DecisionLog decisions;
};

struct MetricsSummary {
    double avg_jct_s = 0.0;
    double total_energy_j = 0.0;
    double peak_power_w = 0.0;
    double mean_gpu_utilization = 0.0;  // time-averaged fraction of G in use
};

// Test/audit hook. Called with every non-empty inter-event interval and after
// every plan application.
class SimObserver {
  public:
    virtual ~SimObserver() = default;
    virtual void on_interval(double /*t0*/, double /*t1*/, double /*predicted_job_power_w*/,
                             double /*oracle_job_power_w*/) {}
    virtual void on_plan_applied(const std::vector<NodeState>& /*nodes*/,
                                 const std::vector<Placement>& /*placements*/) {}
};

struct SimOptions {
    std::string policy = "energy_aware";
    double uniform_frequency = 0.0;  // fixed-frequency baselines; 0 = highest supported
    std::uint64_t seed = 1;
    double noise_rel = 0.03;  // measurement noise of profiling samples
    FitOptions fit;           // in-simulator fitting configuration
    SimObserver* observer = nullptr;
};

// Drives the trace to completion: pre-run profiling on arrival (for policies
// that fit models), plan recomputation on every scheduling event, placement
// with migration/shutdown, oracle-driven progress and energy integration.
Metrics run_simulation(const std::vector<JobSpec>& trace, const ClusterSpec& cluster,
                       const SimOptions& options);

MetricsSummary metrics_summary(const Metrics& metrics, const ClusterSpec& cluster);

// Integral of the power series; equals Metrics::total_energy exactly.
double power_series_integral(const std::vector<PowerSample>& series);

std::string power_series_csv(const std::vector<PowerSample>& series);
std::string metrics_to_json(const Metrics& metrics, const MetricsSummary& summary);

}  // namespace esched
