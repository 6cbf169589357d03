#pragma once

#include <Eigen/Dense>
#include <functional>

namespace esched::nls {

struct Options {
    int max_iters = 500;
    double rel_tol = 1e-8;  // stop when the relative cost improvement drops below this
};

struct Result {
    Eigen::VectorXd x;
    double cost = 0.0;  // mean of squared residuals
    bool converged = false;
    int iters = 0;
};

using ResidualFn = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Minimizes mean(r(x)^2) over the box lo <= x <= hi with a Levenberg-Marquardt
// iteration; steps are clamped to the box and the Jacobian is taken by forward
// differences. Deterministic for identical inputs.
Result minimize(const ResidualFn& residuals, int num_residuals, Eigen::VectorXd x0,
                const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const Options& opts);

}  // namespace esched::nls
