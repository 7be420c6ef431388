#ifndef ODSC_GRAD_CHECK_HPP
#define ODSC_GRAD_CHECK_HPP

#include "odsc/tensor.hpp"

#include <functional>

namespace odsc {

/// Central-difference check of an analytic gradient.
/// Returns max_i |g_i - fd_i| / max(||g||_inf, ||fd||_inf, 1e-12).
inline double grad_check(const std::function<double(const Eigen::VectorXd&)>& fn,
                         const Eigen::VectorXd& point,
                         const Eigen::VectorXd& analytic_grad,
                         double h = 1e-5) {
    Eigen::VectorXd fd(point.size());
    Eigen::VectorXd p = point;
    for (Eigen::Index i = 0; i < point.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + h;
        const double fp = fn(p);
        p[i] = orig - h;
        const double fm = fn(p);
        p[i] = orig;
        fd[i] = (fp - fm) / (2.0 * h);
    }
    const double scale = std::max({analytic_grad.cwiseAbs().maxCoeff(),
                                   fd.cwiseAbs().maxCoeff(), 1e-12});
    return (analytic_grad - fd).cwiseAbs().maxCoeff() / scale;
}

} // namespace odsc

#endif
