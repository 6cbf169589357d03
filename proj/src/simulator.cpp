#include "esched/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace esched {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = seed;
    h ^= (a + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2));
    h ^= (b + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2));
    return h;
}

struct RuntimeJob {
    JobState state;
    const HardwareProfile* profile = nullptr;
    Placement placement;

    bool arrived = false;
    bool awaiting_prerun = false;
    bool in_prerun = false;
    double prerun_until = -1.0;
    double prerun_power = 0.0;  // oracle W drawn by the offline pre-run
    int prerun_gpus = 0;

    double profiling_until = -1.0;  // online window end; < 0 when inactive

    bool migrating = false;
    double migration_until = -1.0;

    double true_step = 0.0;   // oracle step time at the current config
    double true_power = 0.0;  // oracle W across the job's GPUs
    double predicted_power = 0.0;

    std::uint64_t generation = 0;  // invalidates stale completion events
    double finish_time = -1.0;
    std::vector<PerfSample> samples;

    bool running() const {
        return state.n > 0 && (state.phase == JobPhase::running ||
                               state.phase == JobPhase::profiling) &&
               !in_prerun;
    }
};

struct EventAfter {
    bool operator()(const SchedulingEvent& a, const SchedulingEvent& b) const {
        if (a.time != b.time) return a.time > b.time;
        if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
        return a.job_index > b.job_index;
    }
};

class Simulation {
  public:
    Simulation(const std::vector<JobSpec>& trace, const ClusterSpec& cluster,
               const SimOptions& options)
        : cluster_(cluster), options_(options) {
        cluster_.validate();
        policy_ = make_policy(options.policy, cluster_, options.uniform_frequency);
        nodes_ = make_nodes(cluster_.num_nodes, cluster_.gpus_per_node);

        jobs_.resize(trace.size());
        for (std::size_t i = 0; i < trace.size(); ++i) {
            RuntimeJob& job = jobs_[i];
            job.state.spec = trace[i];
            if (trace[i].submit_time < 0.0)
                throw std::invalid_argument("trace: negative submit time for job '" +
                                            trace[i].id + "'");
            job.profile = &find_profile(trace[i].profile_name);
            job.state.bs_min = job.profile->bs_min;
            job.state.bs_max = job.profile->bs_max;
            job.state.profile_p_max = job.profile->p_max;
            if (feasible_gpu_counts(job.state, cluster_).empty())
                throw std::invalid_argument(
                    "trace: job '" + trace[i].id +
                    "' has no feasible GPU count on this cluster (batch size " +
                    std::to_string(trace[i].global_batch_size) + ")");
            events_.push({trace[i].submit_time, EventKind::arrival, static_cast<int>(i), 0});
        }
    }

    Metrics run() {
        while (!events_.empty()) {
            const double t = events_.top().time;
            advance_to(t);
            bool replan_needed = false;
            while (!events_.empty() && events_.top().time == t) {
                const SchedulingEvent ev = events_.top();
                events_.pop();
                replan_needed |= handle_event(ev);
            }
            if (replan_needed) replan(t);
        }
        finalize_metrics();
        return std::move(metrics_);
    }

  private:
    // --- time integration --------------------------------------------------

    void advance_to(double t) {
        if (t < now_) throw std::logic_error("simulator: time went backwards");
        if (t == now_) return;
        const double dt = t - now_;

        double oracle_jobs = 0.0;    // running jobs + pre-run windows
        double predicted_jobs = 0.0; // planned jobs only
        int gpus_used = 0;
        int migrating_gpus = 0;
        for (RuntimeJob& job : jobs_) {
            if (job.in_prerun) {
                oracle_jobs += job.prerun_power;
                gpus_used += job.prerun_gpus;
                job.state.energy_used += job.prerun_power * dt;
            } else if (job.running()) {
                gpus_used += job.state.n;
                if (job.migrating) {
                    migrating_gpus += job.state.n;
                } else {
                    oracle_jobs += job.true_power;
                    predicted_jobs += job.predicted_power;
                    job.state.energy_used += job.true_power * dt;
                    job.state.iters_done += dt / job.true_step;
                }
            }
        }
        int idle_gpus = migrating_gpus;
        for (const NodeState& node : nodes_)
            if (node.powered_on) idle_gpus += node.free_count();

        const double total_power = oracle_jobs + cluster_.p_idle * idle_gpus;
        metrics_.total_energy += total_power * dt;
        metrics_.power_series.push_back({now_, total_power, gpus_used});
        if (options_.observer)
            options_.observer->on_interval(now_, t, predicted_jobs, oracle_jobs);
        now_ = t;
    }

    // --- event handling ----------------------------------------------------

    bool handle_event(const SchedulingEvent& ev) {
        RuntimeJob& job = jobs_[ev.job_index];
        switch (ev.kind) {
            case EventKind::arrival: {
                job.arrived = true;
                job.awaiting_prerun = policy_->uses_models();
                job.state.phase = JobPhase::pending;
                return true;
            }
            case EventKind::completion: {
                if (ev.generation != job.generation || !job.running() || job.migrating)
                    return false;  // stale
                job.state.iters_done = static_cast<double>(job.state.spec.total_iters);
                job.state.phase = JobPhase::finished;
                job.finish_time = now_;
                if (!job.placement.blocks.empty()) {
                    buddy_free(nodes_, job.placement);
                    job.placement.blocks.clear();
                }
                job.state.n = 0;
                ++job.generation;
                return true;
            }
            case EventKind::scaling: {
                if (job.in_prerun && now_ == job.prerun_until) {
                    finish_prerun(job);
                    return true;
                }
                if (job.state.phase == JobPhase::profiling && !job.in_prerun &&
                    now_ == job.profiling_until) {
                    finish_profiling_window(job);
                    return true;
                }
                return false;  // stale window
            }
            case EventKind::migration_done: {
                if (!job.migrating || now_ != job.migration_until) return false;
                job.migrating = false;
                job.migration_until = -1.0;
                schedule_completion(job);
                return false;  // capacity unchanged; no replan
            }
        }
        return false;
    }

    void finish_prerun(RuntimeJob& job) {
        collect_samples(job, job.prerun_gpus);
        fit_models(job);
        job.state.profiled_ns.insert(job.prerun_gpus);
        buddy_free(nodes_, job.placement);
        job.placement.blocks.clear();
        job.in_prerun = false;
        job.prerun_until = -1.0;
        job.prerun_gpus = 0;
        job.prerun_power = 0.0;
        job.state.phase = JobPhase::pending;
    }

    void finish_profiling_window(RuntimeJob& job) {
        if (!job.state.profiled_ns.count(job.state.n)) {
            collect_samples(job, job.state.n);
            fit_models(job);
            job.state.profiled_ns.insert(job.state.n);
        }
        job.profiling_until = -1.0;
        job.state.phase = JobPhase::running;
    }

    // One sample per supported frequency at the given GPU count, with the
    // configured measurement noise.
    void collect_samples(RuntimeJob& job, int n) {
        const int job_index = static_cast<int>(&job - jobs_.data());
        for (std::size_t fi = 0; fi < cluster_.supported_frequencies.size(); ++fi) {
            const Config c = make_config(n, job.state.spec.global_batch_size,
                                         cluster_.supported_frequencies[fi],
                                         cluster_.gpus_per_node);
            const std::uint64_t seed = mix_seed(options_.seed,
                                                static_cast<std::uint64_t>(job_index),
                                                static_cast<std::uint64_t>(n) * 64 + fi);
            const auto sampled = sample_profile(*job.profile, c, 1, options_.noise_rel, seed);
            job.samples.insert(job.samples.end(), sampled.begin(), sampled.end());
        }
    }

    void fit_models(RuntimeJob& job) {
        FitOptions opts = options_.fit;
        const ThroughputFit tf = fit_throughput_model(job.samples, opts);
        const EnergyFit ef =
            fit_energy_model(job.samples, tf.params, cluster_.supported_frequencies, opts);
        job.state.models = JobModels{tf.params, ef.params};
    }

    // --- planning ----------------------------------------------------------

    std::vector<std::size_t> schedulable_indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < jobs_.size(); ++i) {
            const RuntimeJob& job = jobs_[i];
            if (!job.arrived || job.state.phase == JobPhase::finished) continue;
            if (job.awaiting_prerun || job.in_prerun) continue;
            if (policy_->uses_models() && !job.state.models) continue;
            idx.push_back(i);
        }
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const JobSpec& sa = jobs_[a].state.spec;
            const JobSpec& sb = jobs_[b].state.spec;
            if (sa.submit_time != sb.submit_time) return sa.submit_time < sb.submit_time;
            return sa.id < sb.id;
        });
        return idx;
    }

    void replan(double t) {
        // Pre-run reservations come off the top, FIFO by submission.
        int prerun_held = 0;
        double reserved_power = 0.0;
        for (const RuntimeJob& job : jobs_)
            if (job.in_prerun) {
                prerun_held += job.prerun_gpus;
                reserved_power += job.profile->p_max * job.prerun_gpus;
            }
        std::vector<std::size_t> starters;
        if (policy_->uses_models()) {
            std::vector<std::size_t> waiting;
            for (std::size_t i = 0; i < jobs_.size(); ++i)
                if (jobs_[i].arrived && jobs_[i].awaiting_prerun) waiting.push_back(i);
            std::sort(waiting.begin(), waiting.end(), [&](std::size_t a, std::size_t b) {
                const JobSpec& sa = jobs_[a].state.spec;
                const JobSpec& sb = jobs_[b].state.spec;
                if (sa.submit_time != sb.submit_time) return sa.submit_time < sb.submit_time;
                return sa.id < sb.id;
            });
            for (std::size_t i : waiting) {
                const int need = feasible_gpu_counts(jobs_[i].state, cluster_).front();
                if (prerun_held + need > cluster_.total_gpus()) break;
                starters.push_back(i);
                prerun_held += need;
                reserved_power += jobs_[i].profile->p_max * need;
            }
        }

        const std::vector<std::size_t> idx = schedulable_indices();
        std::vector<const JobState*> view(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) view[k] = &jobs_[idx[k]].state;

        SchedContext ctx;
        ctx.cluster = &cluster_;
        ctx.event_time = t;
        ctx.reserved_power = reserved_power;
        ctx.log = &metrics_.decisions;
        const PowerBudget budget{cluster_.eta, cluster_.total_gpus(), cluster_.p_max};

        const AllocationPlan plan =
            policy_->plan(view, budget, cluster_.total_gpus() - prerun_held, ctx);
        apply_plan(plan, idx, t);
        start_preruns(starters, t);
        shutdown_empty_nodes();
        audit_placements();
        if (options_.observer) options_.observer->on_plan_applied(nodes_, all_placements());
    }

    void apply_plan(const AllocationPlan& plan, const std::vector<std::size_t>& idx,
                    double t) {
        // Free every changed allocation first so repacking sees all the space.
        for (std::size_t k = 0; k < idx.size(); ++k) {
            RuntimeJob& job = jobs_[idx[k]];
            const int new_n = plan.assignments[k].n;
            if (new_n != job.state.n && !job.placement.blocks.empty()) {
                buddy_free(nodes_, job.placement);
                job.placement.blocks.clear();
                if (job.migrating) {  // reassignment supersedes the pending move
                    job.migrating = false;
                    job.migration_until = -1.0;
                }
            }
        }

        // Allocate grown/admitted jobs, largest blocks first.
        std::vector<std::size_t> to_place;
        for (std::size_t k = 0; k < idx.size(); ++k)
            if (plan.assignments[k].n > 0 && plan.assignments[k].n != jobs_[idx[k]].state.n)
                to_place.push_back(k);
        std::sort(to_place.begin(), to_place.end(), [&](std::size_t a, std::size_t b) {
            if (plan.assignments[a].n != plan.assignments[b].n)
                return plan.assignments[a].n > plan.assignments[b].n;
            return jobs_[idx[a]].state.spec.id < jobs_[idx[b]].state.spec.id;
        });
        for (std::size_t k : to_place) {
            RuntimeJob& job = jobs_[idx[k]];
            job.placement = allocate_with_defrag(job.state.spec.id, plan.assignments[k].n, t);
        }

        // Commit assignments and start profiling windows where needed.
        for (std::size_t k = 0; k < idx.size(); ++k) {
            RuntimeJob& job = jobs_[idx[k]];
            const Assignment a = plan.assignments[k];
            const bool n_changed = a.n != job.state.n;
            const bool f_changed = a.n > 0 && a.f != job.state.f;
            if (!n_changed && !f_changed) continue;

            job.state.n = a.n;
            if (a.n > 0) job.state.f = a.f;
            ++job.generation;

            if (a.n == 0) {
                job.state.phase = JobPhase::pending;
                job.profiling_until = -1.0;
                continue;
            }
            if (n_changed && policy_->uses_models() && !job.state.profiled_ns.count(a.n)) {
                job.state.phase = JobPhase::profiling;
                job.profiling_until = t + cluster_.prerun_s;
                const int ji = static_cast<int>(idx[k]);
                events_.push({job.profiling_until, EventKind::scaling, ji, job.generation});
            } else if (job.profiling_until < 0 || n_changed) {
                job.state.phase = JobPhase::running;
                job.profiling_until = -1.0;
            }
            refresh_rates(job);
            schedule_completion(job);
        }

        defragment(t);
    }

    Placement allocate_with_defrag(const std::string& job_id, int n, double t) {
        try {
            return buddy_allocate(nodes_, job_id, n);
        } catch (const placement_error&) {
            run_defrag_migrations(t);
            return buddy_allocate(nodes_, job_id, n);  // rethrow means a real invariant break
        }
    }

    void defragment(double t) { run_defrag_migrations(t); }

    void run_defrag_migrations(double t) {
        // Movable: running, not migrating, not mid-profiling, single node.
        std::vector<std::size_t> movable;
        for (std::size_t i = 0; i < jobs_.size(); ++i) {
            const RuntimeJob& job = jobs_[i];
            if (!job.running() || job.migrating || job.state.phase == JobPhase::profiling)
                continue;
            if (job.placement.blocks.size() != 1) continue;
            movable.push_back(i);
        }
        std::vector<Placement> placements;
        placements.reserve(movable.size());
        for (std::size_t i : movable) placements.push_back(jobs_[i].placement);

        const std::vector<MigrationMove> moves = plan_migrations(nodes_, placements);
        for (std::size_t k = 0; k < movable.size(); ++k)
            jobs_[movable[k]].placement = placements[k];
        for (const MigrationMove& move : moves) {
            for (std::size_t i : movable) {
                RuntimeJob& job = jobs_[i];
                if (job.state.spec.id != move.job_id) continue;
                ++job.generation;
                if (cluster_.migration_delay_s > 0.0) {
                    job.migrating = true;
                    job.migration_until = t + cluster_.migration_delay_s;
                    events_.push({job.migration_until, EventKind::migration_done,
                                  static_cast<int>(i), job.generation});
                } else {
                    schedule_completion(job);
                }
                break;
            }
        }
    }

    void start_preruns(const std::vector<std::size_t>& starters, double t) {
        for (std::size_t i : starters) {
            RuntimeJob& job = jobs_[i];
            const int need = feasible_gpu_counts(job.state, cluster_).front();
            job.placement = allocate_with_defrag(job.state.spec.id, need, t);
            job.awaiting_prerun = false;
            job.in_prerun = true;
            job.prerun_gpus = need;
            job.prerun_until = t + cluster_.prerun_s;
            job.state.phase = JobPhase::profiling;

            const double f = oracle_best_frequency(*job.profile, need,
                                                   job.state.spec.global_batch_size,
                                                   cluster_.supported_frequencies,
                                                   cluster_.gpus_per_node);
            const Config c = make_config(need, job.state.spec.global_batch_size, f,
                                         cluster_.gpus_per_node);
            const GroundTruth g = ground_truth_perf(*job.profile, c);
            job.prerun_power = g.energy_per_iter / g.step_time;
            events_.push({job.prerun_until, EventKind::scaling, static_cast<int>(i),
                          job.generation});
        }
    }

    void refresh_rates(RuntimeJob& job) {
        const Config c = make_config(job.state.n, job.state.spec.global_batch_size,
                                     job.state.f, cluster_.gpus_per_node);
        const GroundTruth g = ground_truth_perf(*job.profile, c);
        job.true_step = g.step_time;
        job.true_power = g.energy_per_iter / g.step_time;
        job.predicted_power = 0.0;
        if (job.state.models)
            job.predicted_power = predict_job_power(job.state.models->tparams,
                                                    job.state.models->eparams, c);
    }

    void schedule_completion(RuntimeJob& job) {
        if (!job.running() || job.migrating) return;
        const double rem = job.state.remaining_iters();
        const double when = now_ + rem * job.true_step;
        events_.push({when, EventKind::completion,
                      static_cast<int>(&job - jobs_.data()), job.generation});
    }

    void shutdown_empty_nodes() {
        for (NodeState& node : nodes_)
            if (node.powered_on && node.free_count() == node.gpus_total)
                node.powered_on = false;
    }

    std::vector<Placement> all_placements() const {
        std::vector<Placement> out;
        for (const RuntimeJob& job : jobs_)
            if (!job.placement.blocks.empty()) out.push_back(job.placement);
        return out;
    }

    void audit_placements() const { validate_placements(nodes_, all_placements()); }

    void finalize_metrics() {
        metrics_.power_series.push_back({now_, 0.0, 0});
        metrics_.makespan = now_;
        double jct_sum = 0.0;
        for (const RuntimeJob& job : jobs_) {
            if (job.state.phase != JobPhase::finished)
                throw std::logic_error("simulator: job '" + job.state.spec.id +
                                       "' never finished");
            const double jct = job.finish_time - job.state.spec.submit_time;
            metrics_.per_job_jct.push_back({job.state.spec.id, jct});
            jct_sum += jct;
        }
        metrics_.avg_jct = jobs_.empty() ? 0.0 : jct_sum / static_cast<double>(jobs_.size());
        if (jobs_.empty()) metrics_.power_series.clear();
    }

    ClusterSpec cluster_;
    SimOptions options_;
    std::unique_ptr<SchedulerPolicy> policy_;
    std::vector<RuntimeJob> jobs_;
    std::vector<NodeState> nodes_;
    std::priority_queue<SchedulingEvent, std::vector<SchedulingEvent>, EventAfter> events_;
    Metrics metrics_;
    double now_ = 0.0;
};

}  // namespace

Metrics run_simulation(const std::vector<JobSpec>& trace, const ClusterSpec& cluster,
                       const SimOptions& options) {
    Simulation sim(trace, cluster, options);
    return sim.run();
}

MetricsSummary metrics_summary(const Metrics& metrics, const ClusterSpec& cluster) {
    MetricsSummary s;
    s.avg_jct_s = metrics.avg_jct;
    s.total_energy_j = metrics.total_energy;
    double gpu_seconds = 0.0;
    for (std::size_t i = 0; i + 1 < metrics.power_series.size(); ++i) {
        const PowerSample& a = metrics.power_series[i];
        s.peak_power_w = std::max(s.peak_power_w, a.power_w);
        gpu_seconds += static_cast<double>(a.gpus_allocated) *
                       (metrics.power_series[i + 1].time_s - a.time_s);
    }
    if (metrics.makespan > 0.0)
        s.mean_gpu_utilization =
            gpu_seconds / (metrics.makespan * cluster.total_gpus());
    return s;
}

double power_series_integral(const std::vector<PowerSample>& series) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < series.size(); ++i)
        total += series[i].power_w * (series[i + 1].time_s - series[i].time_s);
    return total;
}

std::string power_series_csv(const std::vector<PowerSample>& series) {
    std::ostringstream out;
    out.precision(17);
    out << "time_s,power_w,gpus_allocated\n";
    for (const PowerSample& s : series)
        out << s.time_s << ',' << s.power_w << ',' << s.gpus_allocated << '\n';
    return out.str();
}

std::string metrics_to_json(const Metrics& metrics, const MetricsSummary& summary) {
    nlohmann::json per_job = nlohmann::json::array();
    for (const auto& [id, jct] : metrics.per_job_jct)
        per_job.push_back({{"id", id}, {"jct_s", jct}});
    const nlohmann::json j{{"avg_jct_s", summary.avg_jct_s},
                           {"total_energy_j", summary.total_energy_j},
                           {"peak_power_w", summary.peak_power_w},
                           {"mean_gpu_utilization", summary.mean_gpu_utilization},
                           {"makespan_s", metrics.makespan},
                           {"num_jobs", metrics.per_job_jct.size()},
                           {"per_job", per_job}};
    return j.dump(2);
}

}  // namespace esched
