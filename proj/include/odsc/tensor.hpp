#ifndef ODSC_TENSOR_HPP
#define ODSC_TENSOR_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace odsc {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense 4-D array (batch, channels, height, width), row-major, doubles.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    Eigen::VectorXd data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), data(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_) * c_ * h_ * w_)) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
            throw ShapeError("Tensor: negative dimension");
    }

    Eigen::Index size() const { return data.size(); }

    Eigen::Index idx(int b, int ch, int y, int x) const {
        return ((static_cast<Eigen::Index>(b) * c + ch) * h + y) * w + x;
    }
    double& at(int b, int ch, int y, int x) { return data[idx(b, ch, y, x)]; }
    double at(int b, int ch, int y, int x) const { return data[idx(b, ch, y, x)]; }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool all_finite() const { return data.allFinite(); }

    std::string shape_str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

/// splitmix64: tiny seedable generator, bit-exact across platforms.
struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0,1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound) by rejection.
    uint64_t uniform_int(uint64_t bound) {
        if (bound == 0) throw ConfigError("Rng::uniform_int: zero bound");
        uint64_t threshold = (0ULL - bound) % bound;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Standard normal via Box-Muller (two uniforms per draw).
    double normal() {
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        double u2 = uniform();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    /// Derive an independent stream for sub-task i (sweep points, k-means restarts).
    Rng derive(uint64_t i) const {
        Rng r(state ^ (0xA0761D6478BD642FULL * (i + 1)));
        r.next();
        return r;
    }
};

} // namespace odsc

#endif
