#pragma once

#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "esched/perf_model.hpp"
#include "esched/types.hpp"

namespace esched {

struct JobModels {
    ThroughputParams tparams;
    EnergyParams eparams;
};

enum class JobPhase { pending, profiling, running, finished };

struct JobState {
    JobSpec spec;
    int n = 0;          // current GPU count; 0 while unallocated
    double f = 0.0;     // current frequency, MHz
    double iters_done = 0.0;
    double energy_used = 0.0;  // J, non-decreasing
    std::optional<JobModels> models;
    std::set<int> profiled_ns;
    JobPhase phase = JobPhase::pending;

    // Profile metadata known at submission (spec sheet, not hidden internals).
    int bs_min = 1;
    int bs_max = 1 << 30;
    double profile_p_max = 0.0;

    double remaining_iters() const {
        const double rem = static_cast<double>(spec.total_iters) - iters_done;
        return rem > 0.0 ? rem : 0.0;
    }
};

struct PowerBudget {
    double eta = 0.0;
    int total_gpus = 0;
    double p_max = 0.0;  // W per GPU at the highest frequency
    double power_limit() const { return eta * total_gpus * p_max; }
};

struct Assignment {
    int n = 0;
    double f = 0.0;
};

struct AllocationPlan {
    std::vector<Assignment> assignments;  // parallel to the job vector planned over
    double projected_total_power = 0.0;   // predicted W, sum over allocated jobs
};

struct DecisionRecord {
    double event_time = 0.0;
    std::string job_id;
    std::string action;  // "gpu" or "freq"
    int old_n = 0;
    int new_n = 0;
    double old_f = 0.0;
    double new_f = 0.0;
    double projected_power = 0.0;
};
using DecisionLog = std::vector<DecisionRecord>;

std::string decision_log_csv(const DecisionLog& log);

// Remaining-work totals over all unfinished jobs, fixed for one scheduling
// pass so priorities stay comparable across queue entries.
struct ClusterTotals {
    double jct = 0.0;    // s
    double energy = 0.0; // J
};

struct SchedContext {
    const ClusterSpec* cluster = nullptr;
    ClusterTotals totals;
    double event_time = 0.0;
    double reserved_power = 0.0;  // W held back for profiling windows
    DecisionLog* log = nullptr;
};

inline constexpr double kInfinitePriority = std::numeric_limits<double>::infinity();

// Remaining-work prediction for a job at a candidate configuration.
struct WorkEstimate {
    double jct = 0.0;     // s to finish the remaining iterations
    double energy = 0.0;  // J for the remaining iterations
    double power = 0.0;   // predicted W while running
};

WorkEstimate estimate_remaining(const JobState& job, int n, double f,
                                const ClusterSpec& cluster);

// Shared form of both marginal returns: relative JCT reduction over relative
// energy increase. A non-positive energy delta returns the +infinity sentinel.
double marginal_priority(double jct_before, double jct_after, double energy_before,
                         double energy_after, double jct_total, double energy_total);

// Feasible GPU counts for a job: a contiguous doubling chain bounded by batch
// divisibility, the profile's batch-size range, and the cluster size.
std::vector<int> feasible_gpu_counts(const JobState& job, const ClusterSpec& cluster);

// iter / (JCT_est * E_est) with both estimates over the job's full iteration
// budget; identical to throughput-per-joule by algebra.
double energy_efficiency(const JobState& job, const Config& config);

// Argmax of energy_efficiency over the supported set at the given GPU count;
// ties resolve to the lower frequency.
double most_efficient_frequency(const JobState& job, int n, const ClusterSpec& cluster);

// Marginal return of growing the job from its current allocation step to the
// next (doubling; admission goes to the smallest feasible count).
double priority_g(const JobState& job, int current_n, const ClusterTotals& totals,
                  const ClusterSpec& cluster);

// Marginal return of raising the job's frequency one supported step at fixed
// n. Empty when f is already maximal (the job leaves the frequency queue).
std::optional<double> priority_f(const JobState& job, int n, double f,
                                 const ClusterTotals& totals, const ClusterSpec& cluster);

// Phase 1 of the scheduling pass: grows allocations one doubling at a time by
// falling marginal return, checking the power limit before every commit.
AllocationPlan allocate_gpus(const std::vector<const JobState*>& jobs,
                             const PowerBudget& budget, int gpus_free,
                             const SchedContext& ctx);

// Phase 2: raises frequencies by falling marginal return under the same
// check-before-commit power rule.
AllocationPlan configure_frequencies(AllocationPlan plan,
                                     const std::vector<const JobState*>& jobs,
                                     const PowerBudget& budget, const SchedContext& ctx);

// Full pass: recompute totals, then allocate_gpus + configure_frequencies.
AllocationPlan schedule(const std::vector<const JobState*>& jobs, const PowerBudget& budget,
                        int gpus_free, SchedContext& ctx);

ClusterTotals compute_totals(const std::vector<const JobState*>& jobs,
                             const ClusterSpec& cluster);

struct ParetoPoint {
    Config config;
    double throughput = 0.0;       // iterations per second
    double energy_per_iter = 0.0;  // J
};

// Non-dominated (max throughput, min energy) configurations over all feasible
// (n, f) pairs, ordered by ascending throughput.
std::vector<ParetoPoint> pareto_frontier(const JobState& job, const ClusterSpec& cluster);

}  // namespace esched
