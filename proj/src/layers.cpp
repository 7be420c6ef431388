#include "odsc/layers.hpp"

#include <cmath>
#include <limits>

namespace odsc {

namespace {

Tensor add_input_bias(const Tensor& x, const Eigen::VectorXd& b) {
    Tensor out = x;
    for (int bi = 0; bi < x.n; ++bi)
        for (int ci = 0; ci < x.c; ++ci)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx)
                    out.at(bi, ci, y, xx) += b[ci];
    return out;
}

} // namespace

Tensor conv2d(const Tensor& x, const ConvWeights& wgt) {
    if (x.c != wgt.cin)
        throw ShapeError("conv2d: input has " + std::to_string(x.c) + " channels, kernel expects " +
                         std::to_string(wgt.cin));
    const int r = (wgt.k - 1) / 2;
    const Tensor& xin = wgt.bias_on_input ? add_input_bias(x, wgt.b) : x;
    Tensor out(x.n, wgt.cout, x.h, x.w);
    for (int b = 0; b < x.n; ++b) {
        for (int co = 0; co < wgt.cout; ++co) {
            const double bias = wgt.bias_on_input ? 0.0 : wgt.b[co];
            for (int y = 0; y < x.h; ++y) {
                for (int xx = 0; xx < x.w; ++xx) {
                    double acc = bias;
                    for (int ci = 0; ci < wgt.cin; ++ci) {
                        for (int dy = 0; dy < wgt.k; ++dy) {
                            const int sy = y + dy - r;
                            if (sy < 0 || sy >= x.h) continue;
                            for (int dx = 0; dx < wgt.k; ++dx) {
                                const int sx = xx + dx - r;
                                if (sx < 0 || sx >= x.w) continue;
                                acc += wgt.w[wgt.wi(co, ci, dy, dx)] * xin.at(b, ci, sy, sx);
                            }
                        }
                    }
                    out.at(b, co, y, xx) = acc;
                }
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& x, const ConvWeights& wgt, const Tensor& dy) {
    if (x.c != wgt.cin || dy.c != wgt.cout || dy.n != x.n || dy.h != x.h || dy.w != x.w)
        throw ShapeError("conv2d_backward: shape mismatch " + x.shape_str() + " vs " + dy.shape_str());
    const int r = (wgt.k - 1) / 2;
    const Tensor& xin = wgt.bias_on_input ? add_input_bias(x, wgt.b) : x;
    ConvGrads g;
    g.dx = Tensor(x.n, x.c, x.h, x.w);
    g.dw = Eigen::VectorXd::Zero(wgt.w.size());
    g.db = Eigen::VectorXd::Zero(wgt.b.size());
    for (int b = 0; b < x.n; ++b) {
        for (int co = 0; co < wgt.cout; ++co) {
            for (int y = 0; y < x.h; ++y) {
                for (int xx = 0; xx < x.w; ++xx) {
                    const double gy = dy.at(b, co, y, xx);
                    if (!wgt.bias_on_input) g.db[co] += gy;
                    for (int ci = 0; ci < wgt.cin; ++ci) {
                        for (int dyk = 0; dyk < wgt.k; ++dyk) {
                            const int sy = y + dyk - r;
                            if (sy < 0 || sy >= x.h) continue;
                            for (int dxk = 0; dxk < wgt.k; ++dxk) {
                                const int sx = xx + dxk - r;
                                if (sx < 0 || sx >= x.w) continue;
                                g.dw[wgt.wi(co, ci, dyk, dxk)] += gy * xin.at(b, ci, sy, sx);
                                g.dx.at(b, ci, sy, sx) += gy * wgt.w[wgt.wi(co, ci, dyk, dxk)];
                            }
                        }
                    }
                }
            }
        }
    }
    if (wgt.bias_on_input) {
        // y = K * (x + b_in): bias gradient is the input gradient summed per channel.
        for (int b = 0; b < x.n; ++b)
            for (int ci = 0; ci < x.c; ++ci)
                for (int y = 0; y < x.h; ++y)
                    for (int xx = 0; xx < x.w; ++xx)
                        g.db[ci] += g.dx.at(b, ci, y, xx);
    }
    return g;
}

namespace {

PoolResult pool_windows(const Tensor& x, const std::vector<int>& ye, const std::vector<int>& xe) {
    const int oh = static_cast<int>(ye.size()) - 1;
    const int ow = static_cast<int>(xe.size()) - 1;
    PoolResult res;
    res.out = Tensor(x.n, x.c, oh, ow);
    res.argmax.assign(res.out.size(), -1);
    Eigen::Index oi = 0;
    for (int b = 0; b < x.n; ++b) {
        for (int c = 0; c < x.c; ++c) {
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j, ++oi) {
                    double best = -std::numeric_limits<double>::infinity();
                    Eigen::Index best_idx = -1;
                    for (int y = ye[i]; y < ye[i + 1]; ++y) {
                        for (int xx = xe[j]; xx < xe[j + 1]; ++xx) {
                            const double v = x.at(b, c, y, xx);
                            if (v > best) { // strict: ties keep the first row-major hit
                                best = v;
                                best_idx = x.idx(b, c, y, xx);
                            }
                        }
                    }
                    res.out.data[oi] = best;
                    res.argmax[static_cast<size_t>(oi)] = best_idx;
                }
            }
        }
    }
    return res;
}

Tensor pool_backward(const Tensor& x, const PoolResult& fwd, const Tensor& dy) {
    if (!dy.same_shape(fwd.out))
        throw ShapeError("pool backward: gradient shape " + dy.shape_str() + " != " + fwd.out.shape_str());
    Tensor dx(x.n, x.c, x.h, x.w);
    for (Eigen::Index i = 0; i < dy.size(); ++i)
        dx.data[fwd.argmax[static_cast<size_t>(i)]] += dy.data[i];
    return dx;
}

std::vector<int> halving_edges(int extent) {
    const int out = (extent + 1) / 2;
    std::vector<int> e(out + 1);
    for (int i = 0; i < out; ++i) e[i] = 2 * i;
    e[out] = extent;
    return e;
}

std::vector<int> adaptive_edges(int extent, int out) {
    if (out <= 0 || out > extent)
        throw ShapeError("adaptive_maxpool: target " + std::to_string(out) + " invalid for extent " +
                         std::to_string(extent));
    std::vector<int> e(out + 1);
    for (int i = 0; i <= out; ++i)
        e[i] = static_cast<int>(std::llround(static_cast<double>(i) * extent / out));
    return e;
}

} // namespace

PoolResult maxpool2(const Tensor& x) {
    return pool_windows(x, halving_edges(x.h), halving_edges(x.w));
}

Tensor maxpool2_backward(const Tensor& x, const PoolResult& fwd, const Tensor& dy) {
    return pool_backward(x, fwd, dy);
}

PoolResult adaptive_maxpool(const Tensor& x, int out_h, int out_w) {
    return pool_windows(x, adaptive_edges(x.h, out_h), adaptive_edges(x.w, out_w));
}

Tensor adaptive_maxpool_backward(const Tensor& x, const PoolResult& fwd, const Tensor& dy) {
    return pool_backward(x, fwd, dy);
}

namespace {

// One axis of align-corners=false sampling: out i reads in at (i+0.5)*in/out - 0.5,
// neighbour indices clamped to the valid range.
struct AxisMap {
    std::vector<int> lo, hi;
    std::vector<double> t; // weight of hi
};

AxisMap axis_map(int in, int out) {
    AxisMap m;
    m.lo.resize(out);
    m.hi.resize(out);
    m.t.resize(out);
    for (int i = 0; i < out; ++i) {
        const double src = (i + 0.5) * static_cast<double>(in) / out - 0.5;
        const double f = std::floor(src);
        int lo = static_cast<int>(f);
        int hi = lo + 1;
        double t = src - f;
        if (lo < 0) lo = 0;
        if (hi > in - 1) hi = in - 1;
        if (lo > in - 1) lo = in - 1;
        m.lo[i] = lo;
        m.hi[i] = hi;
        m.t[i] = t;
    }
    return m;
}

} // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw ConfigError("resize_bilinear: target dims must be >= 1");
    const AxisMap my = axis_map(x.h, out_h);
    const AxisMap mx = axis_map(x.w, out_w);
    Tensor out(x.n, x.c, out_h, out_w);
    for (int b = 0; b < x.n; ++b)
        for (int c = 0; c < x.c; ++c)
            for (int i = 0; i < out_h; ++i) {
                const double ty = my.t[i];
                for (int j = 0; j < out_w; ++j) {
                    const double tx = mx.t[j];
                    out.at(b, c, i, j) =
                        (1 - ty) * (1 - tx) * x.at(b, c, my.lo[i], mx.lo[j]) +
                        (1 - ty) * tx * x.at(b, c, my.lo[i], mx.hi[j]) +
                        ty * (1 - tx) * x.at(b, c, my.hi[i], mx.lo[j]) +
                        ty * tx * x.at(b, c, my.hi[i], mx.hi[j]);
                }
            }
    return out;
}

Tensor resize_bilinear_backward(int in_h, int in_w, const Tensor& dy) {
    const AxisMap my = axis_map(in_h, dy.h);
    const AxisMap mx = axis_map(in_w, dy.w);
    Tensor dx(dy.n, dy.c, in_h, in_w);
    for (int b = 0; b < dy.n; ++b)
        for (int c = 0; c < dy.c; ++c)
            for (int i = 0; i < dy.h; ++i) {
                const double ty = my.t[i];
                for (int j = 0; j < dy.w; ++j) {
                    const double tx = mx.t[j];
                    const double g = dy.at(b, c, i, j);
                    dx.at(b, c, my.lo[i], mx.lo[j]) += (1 - ty) * (1 - tx) * g;
                    dx.at(b, c, my.lo[i], mx.hi[j]) += (1 - ty) * tx * g;
                    dx.at(b, c, my.hi[i], mx.lo[j]) += ty * (1 - tx) * g;
                    dx.at(b, c, my.hi[i], mx.hi[j]) += ty * tx * g;
                }
            }
    return dx;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    out.data = x.data.cwiseMax(0.0);
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    if (!x.same_shape(dy)) throw ShapeError("relu_backward: shape mismatch");
    Tensor dx = dy;
    for (Eigen::Index i = 0; i < x.data.size(); ++i)
        if (x.data[i] <= 0.0) dx.data[i] = 0.0;
    return dx;
}

} // namespace odsc
