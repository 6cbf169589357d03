#pragma once

#include <memory>
#include <string>
#include <vector>

#include "esched/scheduler.hpp"

namespace esched {

// One scheduling policy driven by the simulator at every scheduling event.
// plan() returns assignments parallel to `jobs`; `gpus_avail` already excludes
// GPUs held by profiling windows.
class SchedulerPolicy {
  public:
    virtual ~SchedulerPolicy() = default;
    virtual std::string name() const = 0;
    // Whether jobs must be profiled and fitted before this policy can place them.
    virtual bool uses_models() const = 0;
    // Elastic policies may change a running job's allocation; others only admit.
    virtual bool elastic() const = 0;
    virtual AllocationPlan plan(const std::vector<const JobState*>& jobs,
                                const PowerBudget& budget, int gpus_avail,
                                SchedContext& ctx) = 0;
};

// Names: "energy_aware", "fixed_fifo", "elastic_max_tpt", "pareto_per_job".
// uniform_frequency <= 0 selects the highest supported frequency; it applies
// to fixed_fifo and elastic_max_tpt and is rejected elsewhere by the CLI.
std::unique_ptr<SchedulerPolicy> make_policy(const std::string& name,
                                             const ClusterSpec& cluster,
                                             double uniform_frequency = 0.0);

std::vector<std::string> policy_names();

// Requested worker count rounded to a power of two and clamped into the job's
// feasible chain.
int clamp_requested_gpus(const JobState& job, const ClusterSpec& cluster);

}  // namespace esched
