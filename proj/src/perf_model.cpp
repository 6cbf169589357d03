#include "esched/perf_model.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace esched {

namespace {

void check_config(const Config& c) {
    if (c.n < 1) throw std::invalid_argument("config: n must be >= 1");
    if (c.bs < 1) throw std::invalid_argument("config: bs must be >= 1");
    if (!(c.f > 0.0)) throw std::invalid_argument("config: f must be positive");
    if (c.r < 1 || c.r > c.n) throw std::invalid_argument("config: r must satisfy 1 <= r <= n");
}

}  // namespace

StepTimeBreakdown predict_step_breakdown(const ThroughputParams& p, const Config& c) {
    check_config(c);
    StepTimeBreakdown b;
    b.t_io = p.alpha_io + p.beta_io * c.bs * c.r;
    b.t_grad = p.alpha_grad + (p.beta_grad + p.kappa_grad / c.f) * c.bs;
    if (c.n == 1) {
        b.t_sync = 0.0;
    } else {
        const SyncTimeParams& s = (c.n == c.r) ? p.sync_local : p.sync_node;
        b.t_sync = s.alpha / c.f + (s.kappa / c.f + s.beta) * (c.n - 2) + s.theta;
    }
    const double g1 = p.gamma1;
    const double g2 = p.gamma2;
    const double compute = std::pow(std::pow(b.t_io, g1) + std::pow(b.t_grad, g1), g2 / g1);
    b.t_iter = std::pow(compute + std::pow(b.t_sync, g2), 1.0 / g2);
    return b;
}

double predict_step_time(const ThroughputParams& p, const Config& c) {
    return predict_step_breakdown(p, c).t_iter;
}

double grad_power(const EnergyParams& ep, double f, int bs) {
    const GradPowerParams& g = (f < ep.f0) ? ep.grad_low : ep.grad_high;
    const double poly = (f < ep.f0) ? (g.a * f + g.b)
                                    : (((g.a * f + g.b) * f + g.c) * f + g.d);
    return poly * (g.alpha * std::log(bs + g.theta) + g.beta);
}

double sync_power(const EnergyParams& ep, double f) {
    if (f < ep.f0) return ep.sync_low.a * f + ep.sync_low.b;
    const SyncPowerParams& s = ep.sync_high;
    return ((s.a * f + s.b) * f + s.c) * f + s.d;
}

double static_power(const EnergyParams& ep, double f) {
    return (f < ep.f0) ? ep.p_static_low : ep.c_h * f;
}

double predict_energy_per_iter(const ThroughputParams& tp, const EnergyParams& ep,
                               const Config& c) {
    const StepTimeBreakdown b = predict_step_breakdown(tp, c);
    const double p_grad = grad_power(ep, c.f, c.bs);
    const double p_sync = sync_power(ep, c.f);
    const double p_static = static_power(ep, c.f);
    return (p_grad * b.t_grad + p_sync * b.t_sync + p_static * b.t_iter) * c.n;
}

double predict_job_power(const ThroughputParams& tp, const EnergyParams& ep,
                         const Config& c) {
    return predict_energy_per_iter(tp, ep, c) / predict_step_time(tp, c);
}

namespace {

using nlohmann::json;

json sync_time_to_json(const SyncTimeParams& s) {
    return json{{"alpha", s.alpha}, {"beta", s.beta}, {"theta", s.theta}, {"kappa", s.kappa}};
}

SyncTimeParams sync_time_from_json(const json& j) {
    SyncTimeParams s;
    s.alpha = j.at("alpha").get<double>();
    s.beta = j.at("beta").get<double>();
    s.theta = j.at("theta").get<double>();
    s.kappa = j.at("kappa").get<double>();
    return s;
}

json grad_power_to_json(const GradPowerParams& g) {
    return json{{"a", g.a},         {"b", g.b},       {"c", g.c},        {"d", g.d},
                {"alpha", g.alpha}, {"beta", g.beta}, {"theta", g.theta}};
}

GradPowerParams grad_power_from_json(const json& j) {
    GradPowerParams g;
    g.a = j.at("a").get<double>();
    g.b = j.at("b").get<double>();
    g.c = j.at("c").get<double>();
    g.d = j.at("d").get<double>();
    g.alpha = j.at("alpha").get<double>();
    g.beta = j.at("beta").get<double>();
    g.theta = j.at("theta").get<double>();
    return g;
}

json sync_power_to_json(const SyncPowerParams& s) {
    return json{{"a", s.a}, {"b", s.b}, {"c", s.c}, {"d", s.d}};
}

SyncPowerParams sync_power_from_json(const json& j) {
    SyncPowerParams s;
    s.a = j.at("a").get<double>();
    s.b = j.at("b").get<double>();
    s.c = j.at("c").get<double>();
    s.d = j.at("d").get<double>();
    return s;
}

}  // namespace

std::string throughput_params_to_json(const ThroughputParams& p) {
    json j{{"alpha_io", p.alpha_io},     {"beta_io", p.beta_io},
           {"alpha_grad", p.alpha_grad}, {"beta_grad", p.beta_grad},
           {"kappa_grad", p.kappa_grad}, {"sync_local", sync_time_to_json(p.sync_local)},
           {"sync_node", sync_time_to_json(p.sync_node)},
           {"gamma1", p.gamma1},         {"gamma2", p.gamma2}};
    return j.dump();
}

ThroughputParams throughput_params_from_json(const std::string& text) {
    const json j = json::parse(text);
    ThroughputParams p;
    p.alpha_io = j.at("alpha_io").get<double>();
    p.beta_io = j.at("beta_io").get<double>();
    p.alpha_grad = j.at("alpha_grad").get<double>();
    p.beta_grad = j.at("beta_grad").get<double>();
    p.kappa_grad = j.at("kappa_grad").get<double>();
    p.sync_local = sync_time_from_json(j.at("sync_local"));
    p.sync_node = sync_time_from_json(j.at("sync_node"));
    p.gamma1 = j.at("gamma1").get<double>();
    p.gamma2 = j.at("gamma2").get<double>();
    return p;
}

std::string energy_params_to_json(const EnergyParams& p) {
    json j{{"f0", p.f0},
           {"grad_low", grad_power_to_json(p.grad_low)},
           {"grad_high", grad_power_to_json(p.grad_high)},
           {"sync_low", sync_power_to_json(p.sync_low)},
           {"sync_high", sync_power_to_json(p.sync_high)},
           {"p_static_low", p.p_static_low},
           {"c_h", p.c_h}};
    return j.dump();
}

EnergyParams energy_params_from_json(const std::string& text) {
    const json j = json::parse(text);
    EnergyParams p;
    p.f0 = j.at("f0").get<double>();
    p.grad_low = grad_power_from_json(j.at("grad_low"));
    p.grad_high = grad_power_from_json(j.at("grad_high"));
    p.sync_low = sync_power_from_json(j.at("sync_low"));
    p.sync_high = sync_power_from_json(j.at("sync_high"));
    p.p_static_low = j.at("p_static_low").get<double>();
    p.c_h = j.at("c_h").get<double>();
    return p;
}

}  // namespace esched
