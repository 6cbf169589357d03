#include "esched/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace esched {

namespace {

const JobModels& models_of(const JobState& job) {
    if (!job.models) throw std::logic_error("scheduler: job '" + job.spec.id + "' has no fitted models");
    return *job.models;
}

int min_feasible_n(const JobState& job, const ClusterSpec& cluster) {
    const std::vector<int> ns = feasible_gpu_counts(job, cluster);
    return ns.empty() ? 0 : ns.front();
}

bool n_is_feasible(const JobState& job, int n, const ClusterSpec& cluster) {
    if (n < 1 || n > cluster.total_gpus()) return false;
    if (job.spec.global_batch_size % n != 0) return false;
    const int bs = job.spec.global_batch_size / n;
    return bs >= job.bs_min && bs <= job.bs_max;
}

// Max-heap entry; ties fall back to FIFO order (submit time, then id).
struct QueueEntry {
    double priority;
    double submit_time;
    const std::string* id;
    std::size_t index;
};

struct EntryLess {
    bool operator()(const QueueEntry& a, const QueueEntry& b) const {
        if (a.priority != b.priority) return a.priority < b.priority;
        if (a.submit_time != b.submit_time) return a.submit_time > b.submit_time;
        return *a.id > *b.id;
    }
};

using MaxHeap = std::priority_queue<QueueEntry, std::vector<QueueEntry>, EntryLess>;

void log_decision(const SchedContext& ctx, const JobState& job, const char* action,
                  int old_n, int new_n, double old_f, double new_f, double projected) {
    if (!ctx.log) return;
    ctx.log->push_back({ctx.event_time, job.spec.id, action, old_n, new_n, old_f, new_f,
                        projected});
}

}  // namespace

double marginal_priority(double jct_before, double jct_after, double energy_before,
                         double energy_after, double jct_total, double energy_total) {
    const double d_energy = energy_after - energy_before;
    if (d_energy <= 0.0) return kInfinitePriority;  // faster and cheaper: take it first
    const double num = (jct_before - jct_after) / jct_total;
    const double den = d_energy / energy_total;
    return num / den;
}

std::vector<int> feasible_gpu_counts(const JobState& job, const ClusterSpec& cluster) {
    std::vector<int> out;
    for (int n = 1; n <= cluster.total_gpus(); n *= 2)
        if (n_is_feasible(job, n, cluster)) out.push_back(n);
    return out;
}

WorkEstimate estimate_remaining(const JobState& job, int n, double f,
                                const ClusterSpec& cluster) {
    const JobModels& m = models_of(job);
    const Config c = make_config(n, job.spec.global_batch_size, f, cluster.gpus_per_node);
    const double t_iter = predict_step_time(m.tparams, c);
    const double e_iter = predict_energy_per_iter(m.tparams, m.eparams, c);
    const double rem = job.remaining_iters();
    return {rem * t_iter, rem * e_iter, e_iter / t_iter};
}

double energy_efficiency(const JobState& job, const Config& config) {
    const JobModels& m = models_of(job);
    const double iters = static_cast<double>(job.spec.total_iters);
    const double jct_est = iters * predict_step_time(m.tparams, config);
    const double e_est = iters * predict_energy_per_iter(m.tparams, m.eparams, config);
    return iters / (jct_est * e_est);
}

double most_efficient_frequency(const JobState& job, int n, const ClusterSpec& cluster) {
    double best_f = cluster.supported_frequencies.front();
    double best_ee = -1.0;
    for (double f : cluster.supported_frequencies) {
        const Config c = make_config(n, job.spec.global_batch_size, f, cluster.gpus_per_node);
        const double ee = energy_efficiency(job, c);
        if (ee > best_ee) {  // strict: ties keep the lower frequency
            best_ee = ee;
            best_f = f;
        }
    }
    return best_f;
}

double priority_g(const JobState& job, int current_n, const ClusterTotals& totals,
                  const ClusterSpec& cluster) {
    if (current_n == 0) {
        // Admission: treat the pending JCT as queue wait (the cluster's total
        // remaining work) plus the job's own estimate, so the numerator is the
        // whole wait and the ranking favors cheap, short jobs.
        const int n1 = min_feasible_n(job, cluster);
        if (n1 == 0) throw std::logic_error("priority_g: job has no feasible GPU count");
        const WorkEstimate e1 = estimate_remaining(job, n1, most_efficient_frequency(job, n1, cluster),
                                         cluster);
        return marginal_priority(totals.jct + e1.jct, e1.jct, 0.0, e1.energy, totals.jct,
                                 totals.energy);
    }
    const int next_n = current_n * 2;
    if (!n_is_feasible(job, next_n, cluster))
        throw std::logic_error("priority_g: no feasible next step");
    const WorkEstimate cur = estimate_remaining(job, current_n,
                                      most_efficient_frequency(job, current_n, cluster),
                                      cluster);
    const WorkEstimate nxt = estimate_remaining(job, next_n,
                                      most_efficient_frequency(job, next_n, cluster), cluster);
    return marginal_priority(cur.jct, nxt.jct, cur.energy, nxt.energy, totals.jct,
                             totals.energy);
}

std::optional<double> priority_f(const JobState& job, int n, double f,
                                 const ClusterTotals& totals, const ClusterSpec& cluster) {
    const int idx = cluster.frequency_index(f);
    if (idx < 0) throw std::invalid_argument("priority_f: frequency not in the supported set");
    if (idx + 1 >= static_cast<int>(cluster.supported_frequencies.size()))
        return std::nullopt;  // already maximal: excluded from the frequency queue
    const double f_next = cluster.supported_frequencies[idx + 1];
    const WorkEstimate cur = estimate_remaining(job, n, f, cluster);
    const WorkEstimate nxt = estimate_remaining(job, n, f_next, cluster);
    return marginal_priority(cur.jct, nxt.jct, cur.energy, nxt.energy, totals.jct,
                             totals.energy);
}

ClusterTotals compute_totals(const std::vector<const JobState*>& jobs,
                             const ClusterSpec& cluster) {
    ClusterTotals totals;
    for (const JobState* job : jobs) {
        int n = job->n;
        double f = job->f;
        if (n == 0) {
            n = min_feasible_n(*job, cluster);
            if (n == 0) continue;
            f = most_efficient_frequency(*job, n, cluster);
        }
        const WorkEstimate e = estimate_remaining(*job, n, f, cluster);
        totals.jct += e.jct;
        totals.energy += e.energy;
    }
    return totals;
}

AllocationPlan allocate_gpus(const std::vector<const JobState*>& jobs,
                             const PowerBudget& budget, int gpus_free,
                             const SchedContext& ctx) {
    const ClusterSpec& cluster = *ctx.cluster;
    const double available = std::max(0.0, budget.power_limit() - ctx.reserved_power);

    AllocationPlan plan;
    plan.assignments.assign(jobs.size(), Assignment{});
    plan.projected_total_power = 0.0;

    MaxHeap queue;
    std::vector<double> job_power(jobs.size(), 0.0);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const JobState& job = *jobs[i];
        const int n1 = min_feasible_n(job, cluster);
        if (n1 == 0) continue;  // no runnable configuration on this cluster
        plan.assignments[i].n = 0;
        plan.assignments[i].f = most_efficient_frequency(job, n1, cluster);
        queue.push({priority_g(job, 0, ctx.totals, cluster), job.spec.submit_time,
                    &job.spec.id, i});
    }

    int g = gpus_free;
    while (g > 0 && !queue.empty()) {
        const QueueEntry top = queue.top();
        queue.pop();
        if (top.priority <= 0.0) break;  // the maximum is non-positive: nothing left to gain

        const std::size_t i = top.index;
        const JobState& job = *jobs[i];
        const int cur_n = plan.assignments[i].n;
        const int next_n = cur_n == 0 ? min_feasible_n(job, cluster) : cur_n * 2;
        if (!n_is_feasible(job, next_n, cluster)) continue;  // cannot grow further
        const int need = next_n - cur_n;
        if (need > g) continue;  // smaller jobs may still fit

        const double f_next = most_efficient_frequency(job, next_n, cluster);
        const WorkEstimate nxt = estimate_remaining(job, next_n, f_next, cluster);
        const double projected = plan.projected_total_power - job_power[i] + nxt.power;
        if (projected > available) break;  // power limit reached: stop the phase

        log_decision(ctx, job, "gpu", cur_n, next_n, plan.assignments[i].f, f_next, projected);
        plan.assignments[i] = {next_n, f_next};
        job_power[i] = nxt.power;
        plan.projected_total_power = projected;
        g -= need;

        if (n_is_feasible(job, next_n * 2, cluster))
            queue.push({priority_g(job, next_n, ctx.totals, cluster), job.spec.submit_time,
                        &job.spec.id, i});
    }
    return plan;
}

AllocationPlan configure_frequencies(AllocationPlan plan,
                                     const std::vector<const JobState*>& jobs,
                                     const PowerBudget& budget, const SchedContext& ctx) {
    const ClusterSpec& cluster = *ctx.cluster;
    const double available = std::max(0.0, budget.power_limit() - ctx.reserved_power);

    std::vector<double> job_power(jobs.size(), 0.0);
    MaxHeap queue;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (plan.assignments[i].n < 1) continue;
        const JobState& job = *jobs[i];
        job_power[i] = estimate_remaining(job, plan.assignments[i].n, plan.assignments[i].f, cluster).power;
        const auto prio = priority_f(job, plan.assignments[i].n, plan.assignments[i].f,
                                     ctx.totals, cluster);
        if (prio) queue.push({*prio, job.spec.submit_time, &job.spec.id, i});
    }

    while (!queue.empty()) {
        const QueueEntry top = queue.top();
        queue.pop();
        if (top.priority <= 0.0) break;

        const std::size_t i = top.index;
        const JobState& job = *jobs[i];
        const int n = plan.assignments[i].n;
        const double f_cur = plan.assignments[i].f;
        const int idx = cluster.frequency_index(f_cur);
        const double f_next = cluster.supported_frequencies[idx + 1];

        const WorkEstimate nxt = estimate_remaining(job, n, f_next, cluster);
        const double projected = plan.projected_total_power - job_power[i] + nxt.power;
        if (projected > available) continue;  // this raise never fits again; try others

        log_decision(ctx, job, "freq", n, n, f_cur, f_next, projected);
        plan.assignments[i].f = f_next;
        job_power[i] = nxt.power;
        plan.projected_total_power = projected;

        const auto prio = priority_f(job, n, f_next, ctx.totals, cluster);
        if (prio) queue.push({*prio, job.spec.submit_time, &job.spec.id, i});
    }
    return plan;
}

AllocationPlan schedule(const std::vector<const JobState*>& jobs, const PowerBudget& budget,
                        int gpus_free, SchedContext& ctx) {
    ctx.totals = compute_totals(jobs, *ctx.cluster);
    AllocationPlan plan = allocate_gpus(jobs, budget, gpus_free, ctx);
    return configure_frequencies(std::move(plan), jobs, budget, ctx);
}

std::vector<ParetoPoint> pareto_frontier(const JobState& job, const ClusterSpec& cluster) {
    std::vector<ParetoPoint> points;
    const JobModels& m = models_of(job);
    for (int n : feasible_gpu_counts(job, cluster)) {
        for (double f : cluster.supported_frequencies) {
            const Config c = make_config(n, job.spec.global_batch_size, f, cluster.gpus_per_node);
            ParetoPoint p;
            p.config = c;
            p.throughput = 1.0 / predict_step_time(m.tparams, c);
            p.energy_per_iter = predict_energy_per_iter(m.tparams, m.eparams, c);
            points.push_back(p);
        }
    }
    std::vector<ParetoPoint> frontier;
    for (const ParetoPoint& a : points) {
        bool dominated = false;
        for (const ParetoPoint& b : points) {
            if (b.throughput >= a.throughput && b.energy_per_iter <= a.energy_per_iter &&
                (b.throughput > a.throughput || b.energy_per_iter < a.energy_per_iter)) {
                dominated = true;
                break;
            }
        }
        if (!dominated) frontier.push_back(a);
    }
    std::sort(frontier.begin(), frontier.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
        if (a.throughput != b.throughput) return a.throughput < b.throughput;
        if (a.energy_per_iter != b.energy_per_iter) return a.energy_per_iter < b.energy_per_iter;
        if (a.config.n != b.config.n) return a.config.n < b.config.n;
        return a.config.f < b.config.f;
    });
    return frontier;
}

std::string decision_log_csv(const DecisionLog& log) {
    std::ostringstream out;
    out << "event_time_s,job_id,action,old_n,new_n,old_f_mhz,new_f_mhz,projected_power_w\n";
    out.precision(17);
    for (const DecisionRecord& r : log) {
        out << r.event_time << ',' << r.job_id << ',' << r.action << ',' << r.old_n << ','
            << r.new_n << ',' << r.old_f << ',' << r.new_f << ',' << r.projected_power << '\n';
    }
    return out.str();
}

}  // namespace esched
