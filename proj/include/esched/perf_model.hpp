#pragma once

#include <string>

#include "esched/types.hpp"

namespace esched {

// Coefficients of one synchronization branch: t = alpha/f + (kappa/f + beta)*(n-2) + theta.
struct SyncTimeParams {
    double alpha = 0.0;  // MHz*s
    double beta = 0.0;   // s per extra GPU
    double theta = 0.0;  // s
    double kappa = 0.0;  // MHz*s per extra GPU
};

struct ThroughputParams {
    double alpha_io = 0.0;  // s
    double beta_io = 0.0;   // s/sample
    double alpha_grad = 0.0;  // s
    double beta_grad = 0.0;   // s/sample
    double kappa_grad = 0.0;  // MHz*s/sample
    SyncTimeParams sync_local;
    SyncTimeParams sync_node;
    double gamma1 = 1.0;  // overlap exponents, >= 1
    double gamma2 = 1.0;
};

// Power of the gradient-compute component on one branch:
// P = (polynomial in f) * (alpha*log(bs + theta) + beta).
struct GradPowerParams {
    double a = 0.0;  // cubic term (high branch) or linear slope (low branch)
    double b = 0.0;
    double c = 0.0;  // unused on the low branch
    double d = 0.0;  // unused on the low branch
    double alpha = 0.0;
    double beta = 1.0;
    double theta = 1.0;  // >= 1 so the log argument stays >= 1
};

struct SyncPowerParams {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;  // unused on the low branch
    double d = 0.0;  // unused on the low branch
};

struct EnergyParams {
    double f0 = 0.0;  // breakpoint frequency, MHz; low branch applies when f < f0
    GradPowerParams grad_low;
    GradPowerParams grad_high;
    SyncPowerParams sync_low;   // P = a*f + b
    SyncPowerParams sync_high;  // P = a*f^3 + b*f^2 + c*f + d
    double p_static_low = 0.0;  // W
    double c_h = 0.0;           // W/MHz
};

struct PerfSample {
    Config config;
    double step_time = 0.0;        // seconds
    double energy_per_iter = 0.0;  // joules, summed over the job's n GPUs
};

struct StepTimeBreakdown {
    double t_io = 0.0;
    double t_grad = 0.0;
    double t_sync = 0.0;
    double t_iter = 0.0;
};

// Throughput model. t_iter combines the components as
// ((t_io^g1 + t_grad^g1)^(g2/g1) + t_sync^g2)^(1/g2), which degenerates to the
// plain sum at g1 = g2 = 1 and tends to the max as the exponents grow.
StepTimeBreakdown predict_step_breakdown(const ThroughputParams& p, const Config& c);
double predict_step_time(const ThroughputParams& p, const Config& c);

// Per-iteration GPU energy across all n GPUs:
// (P_grad*t_grad + P_sync*t_sync + P_static*t_iter) * n.
double predict_energy_per_iter(const ThroughputParams& tp, const EnergyParams& ep,
                               const Config& c);

// Average power of the job across its n GPUs: energy_per_iter / step_time.
double predict_job_power(const ThroughputParams& tp, const EnergyParams& ep,
                         const Config& c);

// Per-GPU component powers at frequency f and local batch size bs.
double grad_power(const EnergyParams& ep, double f, int bs);
double sync_power(const EnergyParams& ep, double f);
double static_power(const EnergyParams& ep, double f);

// JSON (de)serialization; one key per named coefficient, lossless round trip.
std::string throughput_params_to_json(const ThroughputParams& p);
std::string energy_params_to_json(const EnergyParams& p);
ThroughputParams throughput_params_from_json(const std::string& text);
EnergyParams energy_params_from_json(const std::string& text);

}  // namespace esched
