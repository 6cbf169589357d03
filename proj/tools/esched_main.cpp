#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "esched/oracle.hpp"
#include "esched/simulator.hpp"
#include "esched/trace.hpp"

#ifdef ESCHED_HAVE_OPENMP
#include <omp.h>
#endif

namespace {

using namespace esched;

struct CommonArgs {
    std::string trace_path;
    std::string cluster_path;
    std::string policy = "energy_aware";
    double eta = -1.0;        // < 0 keeps the cluster file's value
    double frequency = 0.0;   // uniform frequency for fixed-frequency baselines
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    double noise = 0.03;
    std::vector<std::string> profile_files;
};

ClusterSpec resolve_cluster(const CommonArgs& args) {
    ClusterSpec cluster =
        args.cluster_path.empty() ? default_cluster() : load_cluster(args.cluster_path);
    if (args.eta >= 0.0) {
        cluster.eta = args.eta;
        cluster.validate();
    }
    return cluster;
}

void load_profiles(const CommonArgs& args) {
    for (const std::string& path : args.profile_files) {
        const auto j = nlohmann::json::parse(read_file(path));
        if (j.is_array())
            for (const auto& entry : j) register_profile(profile_from_json(entry.dump()));
        else
            register_profile(profile_from_json(j.dump()));
    }
}

void check_frequency_flag(const CommonArgs& args) {
    if (args.frequency > 0.0 && args.policy != "fixed_fifo" &&
        args.policy != "elastic_max_tpt")
        throw std::invalid_argument("--frequency applies only to fixed-frequency baselines");
}

struct RunOutput {
    Metrics metrics;
    MetricsSummary summary;
};

RunOutput run_once(const std::vector<JobSpec>& trace, const ClusterSpec& cluster,
                   const CommonArgs& args) {
    SimOptions options;
    options.policy = args.policy;
    options.uniform_frequency = args.frequency;
    options.seed = args.seed;
    options.noise_rel = args.noise;
    RunOutput out;
    out.metrics = run_simulation(trace, cluster, options);
    out.summary = metrics_summary(out.metrics, cluster);
    return out;
}

void write_run_outputs(const RunOutput& run, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_file(out_dir + "/summary.json", metrics_to_json(run.metrics, run.summary) + "\n");
    write_file(out_dir + "/power_allocation.csv", power_series_csv(run.metrics.power_series));
    write_file(out_dir + "/decisions.csv", decision_log_csv(run.metrics.decisions));
}

int cmd_run(const CommonArgs& args) {
    load_profiles(args);
    check_frequency_flag(args);
    const ClusterSpec cluster = resolve_cluster(args);
    const std::vector<JobSpec> trace = parse_trace(args.trace_path, cluster);
    const RunOutput run = run_once(trace, cluster, args);
    write_run_outputs(run, args.out_dir);
    std::printf("policy=%s jobs=%zu avg_jct_s=%.6f total_energy_j=%.6f\n",
                args.policy.c_str(), trace.size(), run.summary.avg_jct_s,
                run.summary.total_energy_j);
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& axis,
              const std::vector<double>& values, int parallel) {
    load_profiles(args);
    if (values.empty()) throw std::invalid_argument("sweep: --values must be non-empty");
    if (axis == "frequency") {
        if (args.policy != "fixed_fifo" && args.policy != "elastic_max_tpt")
            throw std::invalid_argument(
                "sweep: the frequency axis applies only to fixed-frequency baselines");
    } else if (axis == "eta") {
        if (args.policy != "energy_aware")
            throw std::invalid_argument("sweep: the eta axis applies only to energy_aware");
    } else {
        throw std::invalid_argument("sweep: axis must be eta or frequency");
    }

    const ClusterSpec base_cluster = resolve_cluster(args);
    const std::vector<JobSpec> trace = parse_trace(args.trace_path, base_cluster);

    std::vector<RunOutput> runs(values.size());
    std::vector<std::string> errors(values.size());
    const auto run_value = [&](std::size_t i) {
        try {
            CommonArgs run_args = args;
            ClusterSpec cluster = base_cluster;
            if (axis == "eta") {
                cluster.eta = values[i];
                cluster.validate();
            } else {
                run_args.frequency = values[i];
            }
            runs[i] = run_once(trace, cluster, run_args);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };

#ifdef ESCHED_HAVE_OPENMP
    if (parallel > 1) {
        omp_set_num_threads(parallel);
#pragma omp parallel for schedule(dynamic)
        for (std::size_t i = 0; i < values.size(); ++i) run_value(i);
    } else {
        for (std::size_t i = 0; i < values.size(); ++i) run_value(i);
    }
#else
    (void)parallel;
    for (std::size_t i = 0; i < values.size(); ++i) run_value(i);
#endif

    for (std::size_t i = 0; i < values.size(); ++i)
        if (!errors[i].empty()) throw std::invalid_argument(errors[i]);

    std::filesystem::create_directories(args.out_dir);
    std::string csv = "value,avg_jct_s,total_energy_j\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        char row[160];
        std::snprintf(row, sizeof row, "%.17g,%.17g,%.17g\n", values[i],
                      runs[i].summary.avg_jct_s, runs[i].summary.total_energy_j);
        csv += row;
        char sub[64];
        std::snprintf(sub, sizeof sub, "/run_%zu", i);
        write_run_outputs(runs[i], args.out_dir + sub);
    }
    write_file(args.out_dir + "/sweep.csv", csv);
    std::printf("sweep axis=%s points=%zu -> %s/sweep.csv\n", axis.c_str(), values.size(),
                args.out_dir.c_str());
    return 0;
}

int cmd_gen_trace(const CommonArgs& args, const TraceGenOptions& gen,
                  const std::string& out_file) {
    load_profiles(args);
    const ClusterSpec cluster = resolve_cluster(args);
    const std::vector<JobSpec> trace = generate_trace(gen, cluster);
    write_file(out_file, trace_to_csv(trace));
    std::printf("wrote %d jobs to %s\n", gen.num_jobs, out_file.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Energy-aware GPU cluster scheduling simulator"};
    app.require_subcommand(1);

    CommonArgs args;
    TraceGenOptions gen;
    std::string axis = "eta";
    std::vector<double> values;
    int parallel = 1;
    std::string gen_out = "trace.csv";

    const auto add_common = [&](CLI::App* cmd, bool needs_trace) {
        if (needs_trace)
            cmd->add_option("--trace", args.trace_path, "trace CSV path")->required();
        cmd->add_option("--cluster", args.cluster_path, "cluster JSON path");
        cmd->add_option("--seed", args.seed, "random seed");
        cmd->add_option("--out", args.out_dir, "output directory");
        cmd->add_option("--profile", args.profile_files, "extra profile JSON file(s)");
    };

    CLI::App* run = app.add_subcommand("run", "run one experiment");
    add_common(run, true);
    run->add_option("--policy", args.policy, "scheduling policy");
    run->add_option("--eta", args.eta, "power budget fraction override");
    run->add_option("--frequency", args.frequency, "uniform frequency (baselines)");
    run->add_option("--noise", args.noise, "profiling noise fraction");

    CLI::App* sweep = app.add_subcommand("sweep", "run one experiment per value");
    add_common(sweep, true);
    sweep->add_option("--policy", args.policy, "scheduling policy");
    sweep->add_option("--axis", axis, "eta or frequency");
    sweep->add_option("--values", values, "sweep values")->required()->delimiter(',');
    sweep->add_option("--parallel", parallel, "concurrent simulations");
    sweep->add_option("--noise", args.noise, "profiling noise fraction");

    CLI::App* gen_cmd = app.add_subcommand("gen-trace", "generate a synthetic trace");
    add_common(gen_cmd, false);
    gen_cmd->add_option("--jobs", gen.num_jobs, "number of jobs");
    gen_cmd->add_option("--mean-interarrival", gen.mean_interarrival_s,
                        "mean interarrival seconds");
    gen_cmd->add_option("--min-iters", gen.min_iters, "minimum iterations");
    gen_cmd->add_option("--max-iters", gen.max_iters, "maximum iterations");
    gen_cmd->add_option("--out-file", gen_out, "output trace path");

    CLI11_PARSE(app, argc, argv);

    try {
        gen.seed = args.seed;
        if (run->parsed()) return cmd_run(args);
        if (sweep->parsed()) return cmd_sweep(args, axis, values, parallel);
        if (gen_cmd->parsed()) return cmd_gen_trace(args, gen, gen_out);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 2;
    }
    return 0;
}
