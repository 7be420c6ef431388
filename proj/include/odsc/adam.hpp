#ifndef ODSC_ADAM_HPP
#define ODSC_ADAM_HPP

#include "odsc/tensor.hpp"

namespace odsc {

struct AdamState {
    Eigen::VectorXd m, v;
    long t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(double lr_ = 1e-3) : lr(lr_) {}
};

/// One bias-corrected Adam update in place.
inline void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& s) {
    if (s.m.size() == 0) {
        s.m = Eigen::VectorXd::Zero(params.size());
        s.v = Eigen::VectorXd::Zero(params.size());
    }
    if (params.size() != grad.size() || params.size() != s.m.size())
        throw ShapeError("adam_step: size mismatch");
    s.t += 1;
    s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
    s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        params[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

} // namespace odsc

#endif
