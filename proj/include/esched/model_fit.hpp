#pragma once

#include <cstdint>
#include <vector>

#include "esched/perf_model.hpp"

namespace esched {

struct FitOptions {
    int num_starts = 8;       // deterministic seeded perturbations of unit defaults
    int max_iters = 500;
    double rel_tol = 1e-8;
    std::uint64_t seed = 1;
    bool parallel = false;    // OpenMP across starts; result is identical either way
};

struct ThroughputFit {
    ThroughputParams params;
    double train_error = 0.0;  // mean squared relative error on the input samples
    bool converged = false;
};

struct EnergyFit {
    EnergyParams params;
    double train_error = 0.0;
    bool converged = false;
};

// Fits the step-time model by bounded nonlinear least squares on relative
// residuals. Coefficients that the sample set cannot identify (single
// frequency, no multi-GPU samples, ...) stay at their defaults.
ThroughputFit fit_throughput_model(const std::vector<PerfSample>& samples,
                                   const FitOptions& opts = {});

// Fits the per-iteration energy model on top of fixed throughput parameters.
// The breakpoint f0 is chosen by grid search over `f0_candidates` (one bounded
// fit per candidate, lowest training error wins).
EnergyFit fit_energy_model(const std::vector<PerfSample>& samples,
                           const ThroughputParams& tparams,
                           const std::vector<double>& f0_candidates,
                           const FitOptions& opts = {});

// Mean absolute percentage error of model predictions against samples.
double throughput_mape(const ThroughputParams& p, const std::vector<PerfSample>& samples);
double energy_mape(const ThroughputParams& tp, const EnergyParams& ep,
                   const std::vector<PerfSample>& samples);

}  // namespace esched
