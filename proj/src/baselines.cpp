#include "esched/baselines.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>

#include "esched/placement.hpp"

namespace esched {

namespace {

double resolve_frequency(const ClusterSpec& cluster, double uniform_frequency) {
    if (uniform_frequency <= 0.0) return cluster.max_frequency();
    if (!cluster.supports_frequency(uniform_frequency))
        throw std::invalid_argument("policy: uniform frequency not in the supported set");
    return uniform_frequency;
}

class EnergyAwarePolicy final : public SchedulerPolicy {
  public:
    std::string name() const override { return "energy_aware"; }
    bool uses_models() const override { return true; }
    bool elastic() const override { return true; }
    AllocationPlan plan(const std::vector<const JobState*>& jobs, const PowerBudget& budget,
                        int gpus_avail, SchedContext& ctx) override {
        return schedule(jobs, budget, gpus_avail, ctx);
    }
};

// FIFO admission at the trace-requested (rounded) worker count and one uniform
// frequency; running jobs are never touched. Head-of-line blocking.
class FixedFifoPolicy final : public SchedulerPolicy {
  public:
    explicit FixedFifoPolicy(double frequency) : frequency_(frequency) {}
    std::string name() const override { return "fixed_fifo"; }
    bool uses_models() const override { return false; }
    bool elastic() const override { return false; }

    AllocationPlan plan(const std::vector<const JobState*>& jobs, const PowerBudget&,
                        int gpus_avail, SchedContext& ctx) override {
        AllocationPlan plan;
        plan.assignments.assign(jobs.size(), Assignment{});
        int remaining = gpus_avail;
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (jobs[i]->n > 0) {  // keep running jobs exactly as they are
                plan.assignments[i] = {jobs[i]->n, jobs[i]->f};
                remaining -= jobs[i]->n;
            }
        }
        for (std::size_t i = 0; i < jobs.size(); ++i) {  // jobs arrive in FIFO order
            if (jobs[i]->n > 0) continue;
            const int want = clamp_requested_gpus(*jobs[i], *ctx.cluster);
            if (want > remaining) break;  // strict FIFO: the head blocks the queue
            plan.assignments[i] = {want, frequency_};
            remaining -= want;
            if (ctx.log)
                ctx.log->push_back({ctx.event_time, jobs[i]->spec.id, "gpu", 0, want,
                                    frequency_, frequency_, 0.0});
        }
        return plan;
    }

  private:
    double frequency_;
};

// Elastic greedy on marginal relative JCT reduction alone; always runs at the
// uniform (default: maximal) frequency and ignores the power limit.
class ElasticMaxTptPolicy final : public SchedulerPolicy {
  public:
    explicit ElasticMaxTptPolicy(double frequency) : frequency_(frequency) {}
    std::string name() const override { return "elastic_max_tpt"; }
    bool uses_models() const override { return true; }
    bool elastic() const override { return true; }

    AllocationPlan plan(const std::vector<const JobState*>& jobs, const PowerBudget&,
                        int gpus_avail, SchedContext& ctx) override {
        const ClusterSpec& cluster = *ctx.cluster;
        ctx.totals = compute_totals(jobs, cluster);

        AllocationPlan plan;
        plan.assignments.assign(jobs.size(), Assignment{});

        struct Entry {
            double priority;
            double submit;
            const std::string* id;
            std::size_t index;
        };
        const auto less = [](const Entry& a, const Entry& b) {
            if (a.priority != b.priority) return a.priority < b.priority;
            if (a.submit != b.submit) return a.submit > b.submit;
            return *a.id > *b.id;
        };
        std::priority_queue<Entry, std::vector<Entry>, decltype(less)> queue(less);

        for (std::size_t i = 0; i < jobs.size(); ++i) {
            const auto feasible = feasible_gpu_counts(*jobs[i], cluster);
            if (feasible.empty()) continue;
            plan.assignments[i].f = frequency_;
            queue.push({admission_priority(*jobs[i], feasible.front(), ctx),
                        jobs[i]->spec.submit_time, &jobs[i]->spec.id, i});
        }

        int g = gpus_avail;
        while (g > 0 && !queue.empty()) {
            const Entry top = queue.top();
            queue.pop();
            if (top.priority <= 0.0) break;
            const std::size_t i = top.index;
            const JobState& job = *jobs[i];
            const int cur = plan.assignments[i].n;
            const int next =
                cur == 0 ? feasible_gpu_counts(job, cluster).front() : cur * 2;
            const auto feasible = feasible_gpu_counts(job, cluster);
            if (next > feasible.back() || job.spec.global_batch_size % next != 0) continue;
            const int need = next - cur;
            if (need > g) continue;

            if (ctx.log)
                ctx.log->push_back({ctx.event_time, job.spec.id, "gpu", cur, next, frequency_,
                                    frequency_, 0.0});
            plan.assignments[i].n = next;
            g -= need;

            if (next * 2 <= feasible.back() && job.spec.global_batch_size % (next * 2) == 0) {
                const double d_jct = estimate_remaining(job, next, frequency_, cluster).jct -
                                     estimate_remaining(job, next * 2, frequency_, cluster).jct;
                queue.push({d_jct / ctx.totals.jct, job.spec.submit_time, &job.spec.id, i});
            }
        }
        plan.projected_total_power = 0.0;
        for (std::size_t i = 0; i < jobs.size(); ++i)
            if (plan.assignments[i].n > 0)
                plan.projected_total_power +=
                    estimate_remaining(*jobs[i], plan.assignments[i].n, frequency_, cluster)
                        .power;
        return plan;
    }

  private:
    double admission_priority(const JobState& job, int n1, const SchedContext& ctx) const {
        // Pending JCT counts the full queue wait, so admissions rank first.
        const double jct1 = estimate_remaining(job, n1, frequency_, *ctx.cluster).jct;
        return ((ctx.totals.jct + jct1) - jct1) / ctx.totals.jct;
    }

    double frequency_;
};

// Per-job Pareto pick at the requested (rounded) size: the most efficient
// frequency at that fixed n, FIFO admission, no elasticity.
class ParetoPerJobPolicy final : public SchedulerPolicy {
  public:
    std::string name() const override { return "pareto_per_job"; }
    bool uses_models() const override { return true; }
    bool elastic() const override { return false; }

    AllocationPlan plan(const std::vector<const JobState*>& jobs, const PowerBudget&,
                        int gpus_avail, SchedContext& ctx) override {
        AllocationPlan plan;
        plan.assignments.assign(jobs.size(), Assignment{});
        int remaining = gpus_avail;
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (jobs[i]->n > 0) {
                plan.assignments[i] = {jobs[i]->n,
                                       most_efficient_frequency(*jobs[i], jobs[i]->n,
                                                                *ctx.cluster)};
                remaining -= jobs[i]->n;
            }
        }
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (jobs[i]->n > 0) continue;
            const int want = clamp_requested_gpus(*jobs[i], *ctx.cluster);
            if (want > remaining) break;
            const double f = most_efficient_frequency(*jobs[i], want, *ctx.cluster);
            plan.assignments[i] = {want, f};
            remaining -= want;
            if (ctx.log)
                ctx.log->push_back({ctx.event_time, jobs[i]->spec.id, "gpu", 0, want, f, f,
                                    0.0});
        }
        for (std::size_t i = 0; i < jobs.size(); ++i)
            if (plan.assignments[i].n > 0)
                plan.projected_total_power +=
                    estimate_remaining(*jobs[i], plan.assignments[i].n,
                                       plan.assignments[i].f, *ctx.cluster)
                        .power;
        return plan;
    }
};

}  // namespace

int clamp_requested_gpus(const JobState& job, const ClusterSpec& cluster) {
    const std::vector<int> feasible = feasible_gpu_counts(job, cluster);
    if (feasible.empty())
        throw std::invalid_argument("job '" + job.spec.id + "' has no feasible GPU count");
    const int rounded = round_worker_count(std::max(1, job.spec.requested_gpus));
    return std::clamp(rounded, feasible.front(), feasible.back());
}

std::unique_ptr<SchedulerPolicy> make_policy(const std::string& name,
                                             const ClusterSpec& cluster,
                                             double uniform_frequency) {
    if (name == "energy_aware") return std::make_unique<EnergyAwarePolicy>();
    if (name == "fixed_fifo")
        return std::make_unique<FixedFifoPolicy>(resolve_frequency(cluster, uniform_frequency));
    if (name == "elastic_max_tpt")
        return std::make_unique<ElasticMaxTptPolicy>(
            resolve_frequency(cluster, uniform_frequency));
    if (name == "pareto_per_job") return std::make_unique<ParetoPerJobPolicy>();
    throw std::invalid_argument("unknown policy '" + name + "'");
}

std::vector<std::string> policy_names() {
    return {"energy_aware", "fixed_fifo", "elastic_max_tpt", "pareto_per_job"};
}

}  // namespace esched
