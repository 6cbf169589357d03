// Times the fitting kernel and the sweep runner with the serial path against
// the OpenMP path and prints a small comparison table.

#include <chrono>
#include <cstdio>
#include <vector>

#include "esched/model_fit.hpp"
#include "esched/oracle.hpp"
#include "esched/simulator.hpp"
#include "esched/trace.hpp"

#ifdef ESCHED_HAVE_OPENMP
#include <omp.h>
#endif

namespace {

using namespace esched;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<PerfSample> fit_corpus(const ClusterSpec& cluster) {
    const HardwareProfile& profile = find_profile("resnet18");
    std::vector<PerfSample> samples;
    std::uint64_t seed = 7;
    for (int n : {1, 2, 4, 8}) {
        for (double f : cluster.supported_frequencies) {
            const Config c = make_config(n, 256, f, cluster.gpus_per_node);
            const auto batch = sample_profile(profile, c, 3, 0.03, seed++);
            samples.insert(samples.end(), batch.begin(), batch.end());
        }
    }
    return samples;
}

double time_fit(const std::vector<PerfSample>& samples, const ClusterSpec& cluster,
                bool parallel, int repeats) {
    FitOptions opts;
    opts.parallel = parallel;
    const auto start = Clock::now();
    for (int i = 0; i < repeats; ++i) {
        const ThroughputFit tf = fit_throughput_model(samples, opts);
        fit_energy_model(samples, tf.params, cluster.supported_frequencies, opts);
    }
    return seconds_since(start) / repeats;
}

double time_sweep(const std::vector<JobSpec>& trace, const ClusterSpec& cluster,
                  const std::vector<double>& etas, bool parallel) {
    const auto start = Clock::now();
    std::vector<double> energy(etas.size());
#ifdef ESCHED_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic) if (parallel)
#endif
    for (std::size_t i = 0; i < etas.size(); ++i) {
        ClusterSpec c = cluster;
        c.eta = etas[i];
        SimOptions options;
        options.policy = "energy_aware";
        energy[i] = run_simulation(trace, c, options).total_energy;
    }
    if (!parallel && energy.empty()) std::puts("");  // keep the optimizer honest
    return seconds_since(start);
}

}  // namespace

int main() {
    const ClusterSpec cluster = default_cluster();
#ifdef ESCHED_HAVE_OPENMP
    std::printf("openmp threads available: %d\n", omp_get_max_threads());
#else
    std::printf("openmp not available; both paths run serially\n");
#endif

    const std::vector<PerfSample> samples = fit_corpus(cluster);
    const double fit_serial = time_fit(samples, cluster, false, 3);
    const double fit_parallel = time_fit(samples, cluster, true, 3);
    std::printf("fit (%zu samples)        serial %8.3f s   openmp %8.3f s   speedup %.2fx\n",
                samples.size(), fit_serial, fit_parallel, fit_serial / fit_parallel);

    TraceGenOptions gen;
    gen.num_jobs = 12;
    gen.seed = 11;
    ClusterSpec small = cluster;
    small.num_nodes = 1;
    small.prerun_s = 60.0;
    const std::vector<JobSpec> trace = generate_trace(gen, small);
    const std::vector<double> etas = {0.4, 0.5, 0.6, 0.7};
    const double sweep_serial = time_sweep(trace, small, etas, false);
    const double sweep_parallel = time_sweep(trace, small, etas, true);
    std::printf("sweep (%zu jobs, %zu etas) serial %8.3f s   openmp %8.3f s   speedup %.2fx\n",
                trace.size(), etas.size(), sweep_serial, sweep_parallel,
                sweep_serial / sweep_parallel);
    return 0;
}
