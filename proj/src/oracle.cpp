#include "esched/oracle.hpp"

#include <cassert>
#include <cmath>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace esched {

namespace {

void check_domain(const HardwareProfile& p, const Config& c) {
    if (c.bs < p.bs_min || c.bs > p.bs_max)
        throw std::invalid_argument("oracle: local batch size " + std::to_string(c.bs) +
                                    " outside profile '" + p.name + "' range [" +
                                    std::to_string(p.bs_min) + ", " + std::to_string(p.bs_max) +
                                    "]");
    if (c.f < p.f_min || c.f > p.f_max)
        throw std::invalid_argument("oracle: frequency outside profile '" + p.name + "' range");
}

constexpr double kCalibrationFreq = 1350.0;  // highest frequency of the default cluster

double cubic(double a, double b, double c, double d, double f) {
    return ((a * f + b) * f + c) * f + d;
}

// The motivating-example fixture. Coefficient values are solved at
// construction so the published step-time/energy pairs are hit exactly at the
// calibration frequency.
HardwareProfile make_vgg16_fixture() {
    const double f = kCalibrationFreq;
    const double t1_target = 0.114, e1_target = 27.0;   // n = 1, bs = 64
    const double t2_target = 0.112, e2_target = 39.0;   // n = 2, bs = 32

    ThroughputParams tp;
    tp.alpha_io = 0.004;
    tp.beta_io = 1e-4;
    tp.alpha_grad = 0.002;
    tp.kappa_grad = 1.62;
    tp.gamma1 = 1.0;
    tp.gamma2 = 1.0;
    const double t_io = tp.alpha_io + tp.beta_io * 64.0;  // bs*r = 64 for both configs
    tp.beta_grad = (t1_target - t_io - tp.alpha_grad) / 64.0 - tp.kappa_grad / f;
    const double t_grad64 = tp.alpha_grad + (tp.beta_grad + tp.kappa_grad / f) * 64.0;
    const double t_grad32 = tp.alpha_grad + (tp.beta_grad + tp.kappa_grad / f) * 32.0;
    tp.sync_local.alpha = 13.5;
    tp.sync_local.beta = 5e-4;
    tp.sync_local.kappa = 2.7;
    tp.sync_local.theta = t2_target - t_io - t_grad32 - tp.sync_local.alpha / f;
    tp.sync_node = {27.0, 1.5e-3, 0.08, 5.4};
    assert(tp.beta_grad > 0.0 && tp.sync_local.theta > 0.0);

    EnergyParams ep;
    ep.f0 = 900.0;
    ep.c_h = 40.0 / f;
    ep.p_static_low = ep.c_h * ep.f0;

    // Grad power: P = s * base(f) * ln(bs + 1); s solved from the n = 1 energy.
    const double grad_needed = (e1_target - ep.c_h * f * t1_target) / t_grad64;
    const double base_g = cubic(1e-8, 0.0, 0.01, 5.0, f);
    const double s_g = grad_needed / (base_g * std::log(65.0));
    ep.grad_high = {s_g * 1e-8, 0.0, s_g * 0.01, s_g * 5.0, 1.0, 0.0, 1.0};
    const double high_at_f0 = cubic(ep.grad_high.a, ep.grad_high.b, ep.grad_high.c,
                                    ep.grad_high.d, ep.f0);
    ep.grad_low = {s_g * 0.012, high_at_f0 - s_g * 0.012 * ep.f0, 0.0, 0.0, 1.0, 0.0, 1.0};

    // Sync power solved from the n = 2 energy.
    const double t_sync2 = t2_target - t_io - t_grad32;
    const double p_grad32 = s_g * base_g * std::log(33.0);
    const double sync_needed =
        (e2_target / 2.0 - ep.c_h * f * t2_target - p_grad32 * t_grad32) / t_sync2;
    const double base_s = cubic(1e-8, 0.0, 0.01, 0.0, f);
    const double s_s = sync_needed / base_s;
    ep.sync_high = {s_s * 1e-8, 0.0, s_s * 0.01, 0.0};
    const double sync_at_f0 =
        cubic(ep.sync_high.a, ep.sync_high.b, ep.sync_high.c, ep.sync_high.d, ep.f0);
    ep.sync_low = {s_s * 0.012, sync_at_f0 - s_s * 0.012 * ep.f0, 0.0, 0.0};
    assert(ep.grad_low.b > 0.0 && ep.sync_low.b > 0.0);

    HardwareProfile p;
    p.name = "vgg16-fixture";
    p.hidden_tparams = tp;
    p.hidden_eparams = ep;
    p.bs_min = 32;
    p.bs_max = 512;
    p.f_min = 600.0;
    p.f_max = 1500.0;
    p.p_idle = 40.0;
    return p;
}

// GPT-2 fixture: two GPUs at bs = 16 and the calibration frequency take
// 0.1328 s / 53.986 J per iteration, which places the two-job motivating
// scenario at roughly 180.4 s average JCT and 85546 J under a fixed FIFO
// schedule at the default frequency.
HardwareProfile make_gpt2_profile() {
    const double f = kCalibrationFreq;
    const double t2_target = 0.1328, e2_target = 53.986;  // n = 2, bs = 16

    ThroughputParams tp;
    tp.alpha_io = 0.004;
    tp.beta_io = 5e-6;
    tp.alpha_grad = 0.006;
    tp.beta_grad = 2.2e-3;
    tp.kappa_grad = 3.4;
    tp.gamma1 = 1.0;
    tp.gamma2 = 1.0;
    const double t_io = tp.alpha_io + tp.beta_io * 32.0;
    const double t_grad16 = tp.alpha_grad + (tp.beta_grad + tp.kappa_grad / f) * 16.0;
    tp.sync_local.alpha = 20.0;
    tp.sync_local.beta = 8e-4;
    tp.sync_local.kappa = 4.0;
    tp.sync_local.theta = t2_target - t_io - t_grad16 - tp.sync_local.alpha / f;
    tp.sync_node = {40.0, 2.4e-3, 0.09, 8.0};
    assert(tp.sync_local.theta > 0.0);

    EnergyParams ep;
    ep.f0 = 900.0;
    ep.c_h = 40.0 / f;
    ep.p_static_low = ep.c_h * ep.f0;

    const double grad_share = 14.67;  // W*s split of the per-GPU energy target
    const double base_g = cubic(1.5e-8, 0.0, 0.015, 6.0, f);
    const double s_g = (grad_share / t_grad16) / (base_g * std::log(17.0));
    ep.grad_high = {s_g * 1.5e-8, 0.0, s_g * 0.015, s_g * 6.0, 1.0, 0.0, 1.0};
    const double high_at_f0 = cubic(ep.grad_high.a, ep.grad_high.b, ep.grad_high.c,
                                    ep.grad_high.d, ep.f0);
    ep.grad_low = {s_g * 0.014, high_at_f0 - s_g * 0.014 * ep.f0, 0.0, 0.0, 1.0, 0.0, 1.0};

    const double t_sync2 = t2_target - t_io - t_grad16;
    const double p_grad16 = s_g * base_g * std::log(17.0);
    const double sync_needed =
        (e2_target / 2.0 - ep.c_h * f * t2_target - p_grad16 * t_grad16) / t_sync2;
    const double base_s = cubic(2e-8, 0.0, 0.05, 4.0, f);
    const double s_s = sync_needed / base_s;
    ep.sync_high = {s_s * 2e-8, 0.0, s_s * 0.05, s_s * 4.0};
    const double sync_at_f0 =
        cubic(ep.sync_high.a, ep.sync_high.b, ep.sync_high.c, ep.sync_high.d, ep.f0);
    ep.sync_low = {s_s * 0.06, sync_at_f0 - s_s * 0.06 * ep.f0, 0.0, 0.0};
    assert(ep.grad_low.b > 0.0 && ep.sync_low.b > 0.0);

    HardwareProfile p;
    p.name = "gpt2";
    p.hidden_tparams = tp;
    p.hidden_eparams = ep;
    p.bs_min = 8;
    p.bs_max = 128;
    p.f_min = 600.0;
    p.f_max = 1500.0;
    p.p_idle = 40.0;
    return p;
}

HardwareProfile make_plain_profile(std::string name, int bs_min, int bs_max,
                                   ThroughputParams tp, double f0, double gh_a, double gh_c,
                                   double gh_d, double gl_a, double sh_a, double sh_c,
                                   double sh_d, double sl_a, double c_h) {
    EnergyParams ep;
    ep.f0 = f0;
    ep.c_h = c_h;
    ep.p_static_low = c_h * f0;
    ep.grad_high = {gh_a, 0.0, gh_c, gh_d, 1.0, 0.0, 1.0};
    const double gh_at_f0 = cubic(gh_a, 0.0, gh_c, gh_d, f0);
    ep.grad_low = {gl_a, gh_at_f0 - gl_a * f0, 0.0, 0.0, 1.0, 0.0, 1.0};
    ep.sync_high = {sh_a, 0.0, sh_c, sh_d};
    const double sh_at_f0 = cubic(sh_a, 0.0, sh_c, sh_d, f0);
    ep.sync_low = {sl_a, sh_at_f0 - sl_a * f0, 0.0, 0.0};
    assert(ep.grad_low.b > 0.0 && ep.sync_low.b >= 0.0);

    HardwareProfile p;
    p.name = std::move(name);
    p.hidden_tparams = tp;
    p.hidden_eparams = ep;
    p.bs_min = bs_min;
    p.bs_max = bs_max;
    p.f_min = 600.0;
    p.f_max = 1500.0;
    p.p_idle = 40.0;
    return p;
}

std::vector<HardwareProfile> build_profiles() {
    std::vector<HardwareProfile> out;

    {
        ThroughputParams tp;
        tp.alpha_io = 0.0015;
        tp.beta_io = 6e-7;
        tp.alpha_grad = 0.0008;
        tp.beta_grad = 3e-5;
        tp.kappa_grad = 0.075;
        tp.sync_local = {4.5, 1.2e-4, 0.002, 1.0};
        tp.sync_node = {9.0, 4e-4, 0.006, 2.0};
        tp.gamma1 = 1.6;
        tp.gamma2 = 1.25;
        out.push_back(make_plain_profile("resnet18", 32, 512, tp, 900.0, 1.1e-8, 0.009, 4.0,
                                         0.01, 7e-9, 0.007, 2.0, 0.008, 0.028));
    }
    {
        ThroughputParams tp;
        tp.alpha_io = 0.003;
        tp.beta_io = 1.5e-6;
        tp.alpha_grad = 0.002;
        tp.beta_grad = 2.5e-4;
        tp.kappa_grad = 0.9;
        tp.sync_local = {9.0, 3.5e-4, 0.018, 2.2};
        tp.sync_node = {18.0, 1e-3, 0.05, 4.5};
        tp.gamma1 = 1.7;
        tp.gamma2 = 1.3;
        out.push_back(make_plain_profile("vgg16", 32, 512, tp, 900.0, 1.3e-8, 0.011, 5.0,
                                         0.011, 9e-9, 0.009, 3.0, 0.009, 0.03));
    }
    {
        ThroughputParams tp;
        tp.alpha_io = 0.002;
        tp.beta_io = 1e-6;
        tp.alpha_grad = 0.0015;
        tp.beta_grad = 1.1e-4;
        tp.kappa_grad = 0.28;
        tp.sync_local = {6.0, 2e-4, 0.008, 1.5};
        tp.sync_node = {12.0, 6e-4, 0.02, 3.0};
        tp.gamma1 = 1.5;
        tp.gamma2 = 1.2;
        out.push_back(make_plain_profile("inception_v3", 16, 512, tp, 1050.0, 1.0e-8, 0.008,
                                         4.5, 0.009, 6e-9, 0.006, 2.5, 0.007, 0.026));
    }
    out.push_back(make_gpt2_profile());
    {
        ThroughputParams tp;
        tp.alpha_io = 0.0025;
        tp.beta_io = 2e-6;
        tp.alpha_grad = 0.003;
        tp.beta_grad = 6e-4;
        tp.kappa_grad = 0.55;
        tp.sync_local = {7.0, 3e-4, 0.012, 1.8};
        tp.sync_node = {14.0, 9e-4, 0.035, 3.6};
        tp.gamma1 = 1.4;
        tp.gamma2 = 1.15;
        out.push_back(make_plain_profile("deepspeech2", 8, 256, tp, 1050.0, 9e-9, 0.0075, 4.0,
                                         0.0085, 5.5e-9, 0.0055, 2.2, 0.0065, 0.027));
    }
    out.push_back(make_vgg16_fixture());

    // Average per-GPU power at the top calibration frequency and the largest
    // batch; the scheduler reserves this much for a job's profiling window.
    for (HardwareProfile& p : out) {
        Config c;
        c.n = 1;
        c.r = 1;
        c.bs = p.bs_max;
        c.f = kCalibrationFreq;
        const GroundTruth g = ground_truth_perf(p, c);
        p.p_max = g.energy_per_iter / g.step_time;
        assert(p.p_idle < p.p_max);
    }
    return out;
}

}  // namespace

GroundTruth ground_truth_perf(const HardwareProfile& profile, const Config& config) {
    check_domain(profile, config);
    GroundTruth g;
    g.step_time = predict_step_time(profile.hidden_tparams, config);
    g.energy_per_iter =
        predict_energy_per_iter(profile.hidden_tparams, profile.hidden_eparams, config);
    return g;
}

std::vector<PerfSample> sample_profile(const HardwareProfile& profile, const Config& config,
                                       int count, double noise_rel, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("sample_profile: count must be >= 1");
    if (noise_rel < 0.0 || noise_rel >= 1.0)
        throw std::invalid_argument("sample_profile: noise_rel must be in [0, 1)");
    const GroundTruth g = ground_truth_perf(profile, config);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> eps(-noise_rel, noise_rel);
    std::vector<PerfSample> samples(count);
    for (PerfSample& s : samples) {
        s.config = config;
        s.step_time = g.step_time * (noise_rel > 0.0 ? 1.0 + eps(rng) : 1.0);
        s.energy_per_iter = g.energy_per_iter * (noise_rel > 0.0 ? 1.0 + eps(rng) : 1.0);
    }
    return samples;
}

const std::vector<HardwareProfile>& builtin_profiles() {
    static const std::vector<HardwareProfile> profiles = build_profiles();
    return profiles;
}

namespace {
std::vector<HardwareProfile>& registered_profiles() {
    static std::vector<HardwareProfile> extra;
    return extra;
}
}  // namespace

void register_profile(const HardwareProfile& profile) {
    for (HardwareProfile& p : registered_profiles())
        if (p.name == profile.name) {
            p = profile;
            return;
        }
    registered_profiles().push_back(profile);
}

const HardwareProfile& find_profile(const std::string& name) {
    for (const HardwareProfile& p : builtin_profiles())
        if (p.name == name) return p;
    for (const HardwareProfile& p : registered_profiles())
        if (p.name == name) return p;
    throw std::invalid_argument("unknown profile '" + name + "'");
}

double oracle_best_frequency(const HardwareProfile& profile, int n, int global_batch_size,
                             const std::vector<double>& frequencies, int gpus_per_node) {
    double best_f = frequencies.front();
    double best_cost = std::numeric_limits<double>::infinity();
    for (double f : frequencies) {
        const Config c = make_config(n, global_batch_size, f, gpus_per_node);
        const GroundTruth g = ground_truth_perf(profile, c);
        const double cost = g.step_time * g.energy_per_iter;
        if (cost < best_cost) {  // strict: ties keep the lower frequency
            best_cost = cost;
            best_f = f;
        }
    }
    return best_f;
}

std::string profile_to_json(const HardwareProfile& profile) {
    nlohmann::json j{
        {"name", profile.name},
        {"bs_min", profile.bs_min},
        {"bs_max", profile.bs_max},
        {"f_min", profile.f_min},
        {"f_max", profile.f_max},
        {"p_idle", profile.p_idle},
        {"p_max", profile.p_max},
        {"throughput", nlohmann::json::parse(throughput_params_to_json(profile.hidden_tparams))},
        {"energy", nlohmann::json::parse(energy_params_to_json(profile.hidden_eparams))}};
    return j.dump();
}

HardwareProfile profile_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    HardwareProfile p;
    p.name = j.at("name").get<std::string>();
    p.bs_min = j.at("bs_min").get<int>();
    p.bs_max = j.at("bs_max").get<int>();
    p.f_min = j.at("f_min").get<double>();
    p.f_max = j.at("f_max").get<double>();
    p.p_idle = j.at("p_idle").get<double>();
    p.p_max = j.at("p_max").get<double>();
    p.hidden_tparams = throughput_params_from_json(j.at("throughput").dump());
    p.hidden_eparams = energy_params_from_json(j.at("energy").dump());
    if (p.p_idle >= p.p_max)
        throw std::invalid_argument("profile: p_idle must be below p_max");
    return p;
}

}  // namespace esched
