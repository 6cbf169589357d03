#include "esched/nls.hpp"

#include <algorithm>
#include <cmath>

namespace esched::nls {

namespace {

Eigen::VectorXd clamp_to_box(Eigen::VectorXd x, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
}

}  // namespace

Result minimize(const ResidualFn& residuals, int num_residuals, Eigen::VectorXd x0,
                const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const Options& opts) {
    const Eigen::Index k = x0.size();
    const Eigen::Index m = num_residuals;

    Result best;
    best.x = clamp_to_box(std::move(x0), lo, hi);

    Eigen::VectorXd r(m), r_trial(m), r_step(m);
    residuals(best.x, r);
    best.cost = r.squaredNorm() / static_cast<double>(m);
    if (k == 0) {
        best.converged = true;
        return best;
    }

    Eigen::MatrixXd jac(m, k);
    double lambda = 1e-3;

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        best.iters = iter + 1;

        // Forward-difference Jacobian; steps flip direction at the upper bound.
        for (Eigen::Index j = 0; j < k; ++j) {
            const double h0 = 1e-7 * std::max(1.0, std::abs(best.x[j]));
            double h = h0;
            if (best.x[j] + h > hi[j]) h = -h0;
            Eigen::VectorXd xs = best.x;
            xs[j] += h;
            residuals(xs, r_step);
            jac.col(j) = (r_step - r) / h;
        }

        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;

        bool accepted = false;
        for (int attempt = 0; attempt < 16; ++attempt) {
            Eigen::MatrixXd damped = jtj;
            for (Eigen::Index j = 0; j < k; ++j)
                damped(j, j) += lambda * std::max(jtj(j, j), 1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(-jtr);
            if (!delta.allFinite()) {
                lambda *= 4.0;
                continue;
            }
            const Eigen::VectorXd x_trial = clamp_to_box(best.x + delta, lo, hi);
            residuals(x_trial, r_trial);
            const double cost_trial = r_trial.squaredNorm() / static_cast<double>(m);
            if (std::isfinite(cost_trial) && cost_trial < best.cost) {
                const double improvement = (best.cost - cost_trial) / std::max(best.cost, 1e-300);
                best.x = x_trial;
                r = r_trial;
                best.cost = cost_trial;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                if (improvement < opts.rel_tol) {
                    best.converged = true;
                    return best;
                }
                break;
            }
            lambda *= 4.0;
        }

        if (!accepted) {
            // No descent direction within the damping budget: local optimum.
            best.converged = true;
            return best;
        }
        if (best.cost < 1e-30) {
            best.converged = true;
            return best;
        }
    }
    return best;  // iteration budget exhausted, converged stays false
}

}  // namespace esched::nls
