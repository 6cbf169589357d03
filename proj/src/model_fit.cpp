#include "esched/model_fit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "esched/nls.hpp"

#ifdef ESCHED_HAVE_OPENMP
#include <omp.h>
#endif

namespace esched {

namespace {

// A fit works on a flat parameter array; frozen entries keep their default
// value and free entries carry a box constraint and a unit start value.
struct FreeSlot {
    int index;
    double lo;
    double hi;
    double start;
};

template <int N>
struct FitProblem {
    std::array<double, N> values{};  // defaults; overwritten at free slots
    std::vector<FreeSlot> free;

    void add_free(int index, double lo, double hi, double start = 1.0) {
        free.push_back({index, lo, hi, start});
    }
};

template <int N>
std::array<double, N> apply_free(const FitProblem<N>& prob, const Eigen::VectorXd& x) {
    std::array<double, N> vals = prob.values;
    for (std::size_t i = 0; i < prob.free.size(); ++i) vals[prob.free[i].index] = x[i];
    return vals;
}

// Start vectors: start 0 is the unit defaults, starts 1.. are deterministic
// multiplicative perturbations of them.
Eigen::VectorXd make_start(const std::vector<FreeSlot>& free, int start_index,
                           std::uint64_t seed) {
    Eigen::VectorXd x(free.size());
    if (start_index == 0) {
        for (std::size_t i = 0; i < free.size(); ++i) x[i] = free[i].start;
        return x;
    }
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(start_index));
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (std::size_t i = 0; i < free.size(); ++i) {
        const double v = free[i].start * std::exp(u(rng));
        x[i] = std::clamp(v, free[i].lo, free[i].hi);
    }
    return x;
}

template <int N>
nls::Result run_multi_start(const FitProblem<N>& prob,
                            const std::function<void(const std::array<double, N>&,
                                                     Eigen::VectorXd&)>& residuals,
                            int num_residuals, const FitOptions& opts) {
    const std::size_t k = prob.free.size();
    Eigen::VectorXd lo(k), hi(k);
    for (std::size_t i = 0; i < k; ++i) {
        lo[i] = prob.free[i].lo;
        hi[i] = prob.free[i].hi;
    }
    nls::Options nopts;
    nopts.max_iters = opts.max_iters;
    nopts.rel_tol = opts.rel_tol;

    const auto run_one = [&](int s) {
        auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
            residuals(apply_free(prob, x), r);
        };
        return nls::minimize(fn, num_residuals, make_start(prob.free, s, opts.seed), lo, hi,
                             nopts);
    };

    std::vector<nls::Result> results(opts.num_starts);
#ifdef ESCHED_HAVE_OPENMP
    if (opts.parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int s = 0; s < opts.num_starts; ++s) results[s] = run_one(s);
    } else {
        for (int s = 0; s < opts.num_starts; ++s) results[s] = run_one(s);
    }
#else
    for (int s = 0; s < opts.num_starts; ++s) results[s] = run_one(s);
#endif

    int best = 0;
    for (int s = 1; s < opts.num_starts; ++s)
        if (results[s].cost < results[best].cost) best = s;  // ties keep the lower index
    return results[best];
}

// --- throughput parameter layout -----------------------------------------

enum TpIndex {
    TP_ALPHA_IO,
    TP_BETA_IO,
    TP_ALPHA_GRAD,
    TP_BETA_GRAD,
    TP_KAPPA_GRAD,
    TP_SL_ALPHA,
    TP_SL_BETA,
    TP_SL_THETA,
    TP_SL_KAPPA,
    TP_SN_ALPHA,
    TP_SN_BETA,
    TP_SN_THETA,
    TP_SN_KAPPA,
    TP_GAMMA1,
    TP_GAMMA2,
    TP_COUNT
};

std::array<double, TP_COUNT> tp_to_array(const ThroughputParams& p) {
    return {p.alpha_io,         p.beta_io,        p.alpha_grad,      p.beta_grad,
            p.kappa_grad,       p.sync_local.alpha, p.sync_local.beta, p.sync_local.theta,
            p.sync_local.kappa, p.sync_node.alpha,  p.sync_node.beta,  p.sync_node.theta,
            p.sync_node.kappa,  p.gamma1,           p.gamma2};
}

ThroughputParams tp_from_array(const std::array<double, TP_COUNT>& a) {
    ThroughputParams p;
    p.alpha_io = a[TP_ALPHA_IO];
    p.beta_io = a[TP_BETA_IO];
    p.alpha_grad = a[TP_ALPHA_GRAD];
    p.beta_grad = a[TP_BETA_GRAD];
    p.kappa_grad = a[TP_KAPPA_GRAD];
    p.sync_local = {a[TP_SL_ALPHA], a[TP_SL_BETA], a[TP_SL_THETA], a[TP_SL_KAPPA]};
    p.sync_node = {a[TP_SN_ALPHA], a[TP_SN_BETA], a[TP_SN_THETA], a[TP_SN_KAPPA]};
    p.gamma1 = a[TP_GAMMA1];
    p.gamma2 = a[TP_GAMMA2];
    return p;
}

// --- energy parameter layout ----------------------------------------------

enum EpIndex {
    EP_GL_A,
    EP_GL_B,
    EP_GL_ALPHA,
    EP_GL_THETA,
    EP_GH_A,
    EP_GH_B,
    EP_GH_C,
    EP_GH_D,
    EP_GH_ALPHA,
    EP_GH_THETA,
    EP_SL_A,
    EP_SL_B,
    EP_SH_A,
    EP_SH_B,
    EP_SH_C,
    EP_SH_D,
    EP_PSTATIC,
    EP_CH,
    EP_COUNT
};

std::array<double, EP_COUNT> ep_to_array(const EnergyParams& p) {
    return {p.grad_low.a,  p.grad_low.b,  p.grad_low.alpha,  p.grad_low.theta,
            p.grad_high.a, p.grad_high.b, p.grad_high.c,     p.grad_high.d,
            p.grad_high.alpha, p.grad_high.theta,
            p.sync_low.a,  p.sync_low.b,  p.sync_high.a,     p.sync_high.b,
            p.sync_high.c, p.sync_high.d, p.p_static_low,    p.c_h};
}

EnergyParams ep_from_array(const std::array<double, EP_COUNT>& a, double f0) {
    EnergyParams p;
    p.f0 = f0;
    p.grad_low.a = a[EP_GL_A];
    p.grad_low.b = a[EP_GL_B];
    p.grad_low.alpha = a[EP_GL_ALPHA];
    p.grad_low.theta = a[EP_GL_THETA];
    p.grad_low.beta = 1.0;  // pinned; absorbs the polynomial scale degeneracy
    p.grad_high.a = a[EP_GH_A];
    p.grad_high.b = a[EP_GH_B];
    p.grad_high.c = a[EP_GH_C];
    p.grad_high.d = a[EP_GH_D];
    p.grad_high.alpha = a[EP_GH_ALPHA];
    p.grad_high.theta = a[EP_GH_THETA];
    p.grad_high.beta = 1.0;
    p.sync_low = {a[EP_SL_A], a[EP_SL_B], 0.0, 0.0};
    p.sync_high = {a[EP_SH_A], a[EP_SH_B], a[EP_SH_C], a[EP_SH_D]};
    p.p_static_low = a[EP_PSTATIC];
    p.c_h = a[EP_CH];
    return p;
}

struct SampleFacts {
    std::set<double> freqs;
    std::set<int> bs_values;
    std::set<int> bsr_values;
    std::set<int> local_n;  // n >= 2 on one node
    std::set<int> node_n;   // n spanning nodes
    bool multi_gpu = false;
};

SampleFacts survey(const std::vector<PerfSample>& samples) {
    SampleFacts f;
    for (const PerfSample& s : samples) {
        f.freqs.insert(s.config.f);
        f.bs_values.insert(s.config.bs);
        f.bsr_values.insert(s.config.bs * s.config.r);
        if (s.config.n >= 2) {
            f.multi_gpu = true;
            if (s.config.n == s.config.r)
                f.local_n.insert(s.config.n);
            else
                f.node_n.insert(s.config.n);
        }
    }
    return f;
}

void validate_samples(const std::vector<PerfSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("fit: sample list is empty");
    for (const PerfSample& s : samples) {
        if (!(s.step_time > 0.0)) throw std::invalid_argument("fit: step_time must be positive");
        if (!(s.energy_per_iter > 0.0))
            throw std::invalid_argument("fit: energy_per_iter must be positive");
    }
}

constexpr double kHi = 1e6;

}  // namespace

ThroughputFit fit_throughput_model(const std::vector<PerfSample>& samples,
                                   const FitOptions& opts) {
    validate_samples(samples);
    const SampleFacts facts = survey(samples);
    const bool multi_f = facts.freqs.size() >= 2;

    FitProblem<TP_COUNT> prob;
    prob.values = tp_to_array(ThroughputParams{});

    prob.add_free(TP_ALPHA_IO, 0.0, kHi);
    if (facts.bsr_values.size() >= 2) prob.add_free(TP_BETA_IO, 0.0, kHi);
    prob.add_free(TP_ALPHA_GRAD, 0.0, kHi);
    if (facts.bs_values.size() >= 2) prob.add_free(TP_BETA_GRAD, 0.0, kHi);
    if (multi_f) prob.add_free(TP_KAPPA_GRAD, 0.0, kHi);
    if (!facts.local_n.empty()) {
        if (multi_f) prob.add_free(TP_SL_ALPHA, 0.0, kHi);
        if (facts.local_n.size() >= 2) {
            prob.add_free(TP_SL_BETA, 0.0, kHi);
            if (multi_f) prob.add_free(TP_SL_KAPPA, 0.0, kHi);
        }
        prob.add_free(TP_SL_THETA, 0.0, kHi, 0.01);
    }
    if (!facts.node_n.empty()) {
        if (multi_f) prob.add_free(TP_SN_ALPHA, 0.0, kHi);
        if (facts.node_n.size() >= 2) {
            prob.add_free(TP_SN_BETA, 0.0, kHi);
            if (multi_f) prob.add_free(TP_SN_KAPPA, 0.0, kHi);
        }
        prob.add_free(TP_SN_THETA, 0.0, kHi, 0.01);
    }
    if (samples.size() >= 3) {
        prob.add_free(TP_GAMMA1, 1.0, 64.0);
        prob.add_free(TP_GAMMA2, 1.0, 64.0);
    }

    const auto residuals = [&](const std::array<double, TP_COUNT>& vals, Eigen::VectorXd& r) {
        const ThroughputParams p = tp_from_array(vals);
        for (std::size_t i = 0; i < samples.size(); ++i)
            r[static_cast<Eigen::Index>(i)] =
                predict_step_time(p, samples[i].config) / samples[i].step_time - 1.0;
    };

    const nls::Result res =
        run_multi_start<TP_COUNT>(prob, residuals, static_cast<int>(samples.size()), opts);

    ThroughputFit fit;
    fit.params = tp_from_array(apply_free(prob, res.x));
    fit.train_error = res.cost;
    fit.converged = res.converged;
    return fit;
}

EnergyFit fit_energy_model(const std::vector<PerfSample>& samples,
                           const ThroughputParams& tparams,
                           const std::vector<double>& f0_candidates, const FitOptions& opts) {
    validate_samples(samples);
    if (f0_candidates.empty())
        throw std::invalid_argument("fit: need at least one f0 candidate");
    const SampleFacts facts = survey(samples);

    EnergyFit best;
    bool have_best = false;

    for (const double f0 : f0_candidates) {
        std::set<double> low_f, high_f;
        for (double f : facts.freqs) (f < f0 ? low_f : high_f).insert(f);
        const bool multi_bs = facts.bs_values.size() >= 2;

        FitProblem<EP_COUNT> prob;
        prob.values = ep_to_array(EnergyParams{});
        // theta defaults must stay >= 1 even when frozen
        prob.values[EP_GL_THETA] = 1.0;
        prob.values[EP_GH_THETA] = 1.0;

        if (!low_f.empty()) {
            if (low_f.size() >= 2) prob.add_free(EP_GL_A, 0.0, kHi, 0.01);
            prob.add_free(EP_GL_B, 0.0, kHi);
            if (multi_bs) {
                prob.add_free(EP_GL_ALPHA, 0.0, kHi);
                prob.add_free(EP_GL_THETA, 1.0, kHi);
            }
            prob.add_free(EP_PSTATIC, 0.0, kHi);
            if (facts.multi_gpu) {
                if (low_f.size() >= 2) prob.add_free(EP_SL_A, 0.0, kHi, 0.01);
                prob.add_free(EP_SL_B, 0.0, kHi);
            }
        }
        if (!high_f.empty()) {
            if (high_f.size() >= 2) {
                prob.add_free(EP_GH_A, 0.0, kHi, 1e-8);
                prob.add_free(EP_GH_B, 0.0, kHi, 1e-5);
                prob.add_free(EP_GH_C, 0.0, kHi, 0.01);
            }
            prob.add_free(EP_GH_D, 0.0, kHi);
            if (multi_bs) {
                prob.add_free(EP_GH_ALPHA, 0.0, kHi);
                prob.add_free(EP_GH_THETA, 1.0, kHi);
            }
            prob.add_free(EP_CH, 0.0, kHi, 0.01);
            if (facts.multi_gpu) {
                if (high_f.size() >= 2) {
                    prob.add_free(EP_SH_A, 0.0, kHi, 1e-8);
                    prob.add_free(EP_SH_B, 0.0, kHi, 1e-5);
                    prob.add_free(EP_SH_C, 0.0, kHi, 0.01);
                }
                prob.add_free(EP_SH_D, 0.0, kHi);
            }
        }

        const auto residuals = [&](const std::array<double, EP_COUNT>& vals,
                                   Eigen::VectorXd& r) {
            const EnergyParams p = ep_from_array(vals, f0);
            for (std::size_t i = 0; i < samples.size(); ++i)
                r[static_cast<Eigen::Index>(i)] =
                    predict_energy_per_iter(tparams, p, samples[i].config) /
                        samples[i].energy_per_iter -
                    1.0;
        };

        const nls::Result res =
            run_multi_start<EP_COUNT>(prob, residuals, static_cast<int>(samples.size()), opts);
        if (!have_best || res.cost < best.train_error) {
            best.params = ep_from_array(apply_free(prob, res.x), f0);
            best.train_error = res.cost;
            best.converged = res.converged;
            have_best = true;
        }
    }
    return best;
}

double throughput_mape(const ThroughputParams& p, const std::vector<PerfSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("mape: sample list is empty");
    double acc = 0.0;
    for (const PerfSample& s : samples)
        acc += std::abs(predict_step_time(p, s.config) / s.step_time - 1.0);
    return acc / static_cast<double>(samples.size());
}

double energy_mape(const ThroughputParams& tp, const EnergyParams& ep,
                   const std::vector<PerfSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("mape: sample list is empty");
    double acc = 0.0;
    for (const PerfSample& s : samples)
        acc += std::abs(predict_energy_per_iter(tp, ep, s.config) / s.energy_per_iter - 1.0);
    return acc / static_cast<double>(samples.size());
}

}  // namespace esched
