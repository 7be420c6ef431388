#ifndef ODSC_LAYERS_HPP
#define ODSC_LAYERS_HPP

#include "odsc/tensor.hpp"

#include <utility>
#include <vector>

namespace odsc {

/// Weights of one convolution layer. Kernel layout: w[((co*cin+ci)*k+dy)*k+dx].
/// bias_on_input = per-input-channel bias added before the convolution
/// (cin bias entries instead of cout); used by the final ODSC decoder layer.
struct ConvWeights {
    int k = 0, cin = 0, cout = 0;
    bool bias_on_input = false;
    Eigen::VectorXd w;
    Eigen::VectorXd b;

    ConvWeights() = default;
    ConvWeights(int k_, int cin_, int cout_, bool bias_on_input_ = false)
        : k(k_), cin(cin_), cout(cout_), bias_on_input(bias_on_input_),
          w(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k_) * k_ * cin_ * cout_)),
          b(Eigen::VectorXd::Zero(bias_on_input_ ? cin_ : cout_)) {
        if (k_ % 2 == 0) throw ConfigError("conv kernel size must be odd, got " + std::to_string(k_));
        if (k_ <= 0 || cin_ <= 0 || cout_ <= 0) throw ConfigError("conv: bad dimensions");
    }

    Eigen::Index wi(int co, int ci, int dy, int dx) const {
        return ((static_cast<Eigen::Index>(co) * cin + ci) * k + dy) * k + dx;
    }
    Eigen::Index param_count() const { return w.size() + b.size(); }
};

struct ConvGrads {
    Tensor dx;
    Eigen::VectorXd dw;
    Eigen::VectorXd db;
};

/// "Same" zero-padded convolution; spatial dims preserved.
Tensor conv2d(const Tensor& x, const ConvWeights& wgt);
ConvGrads conv2d_backward(const Tensor& x, const ConvWeights& wgt, const Tensor& dy);

/// 2x2 max-pool, stride 2, ceil mode (implicit -inf right/bottom padding).
/// Ties break to the first position in row-major scan order.
struct PoolResult {
    Tensor out;
    std::vector<Eigen::Index> argmax; // flat index into the input, one per output element
};
PoolResult maxpool2(const Tensor& x);
Tensor maxpool2_backward(const Tensor& x, const PoolResult& fwd, const Tensor& dy);

/// Max-pool over non-overlapping windows with edges at round(j*H/outH),
/// reducing any spatial size to (outH, outW).
PoolResult adaptive_maxpool(const Tensor& x, int out_h, int out_w);
Tensor adaptive_maxpool_backward(const Tensor& x, const PoolResult& fwd, const Tensor& dy);

/// Bilinear resize, align-corners=false, edge-clamped.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
/// Exact adjoint (transpose of the interpolation matrix).
Tensor resize_bilinear_backward(int in_h, int in_w, const Tensor& dy);

inline Tensor upsample_bilinear2(const Tensor& x) { return resize_bilinear(x, 2 * x.h, 2 * x.w); }
inline Tensor upsample_bilinear2_backward(const Tensor& x, const Tensor& dy) {
    return resize_bilinear_backward(x.h, x.w, dy);
}

Tensor relu(const Tensor& x);
/// Gradient passes where x > 0 (subgradient 0 at the kink).
Tensor relu_backward(const Tensor& x, const Tensor& dy);

} // namespace odsc

#endif
