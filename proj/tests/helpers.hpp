#ifndef ODSC_TEST_HELPERS_HPP
#define ODSC_TEST_HELPERS_HPP

#include "odsc/model.hpp"
#include "odsc/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace odsc::test {

inline Tensor random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
    Tensor t(n, c, h, w);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = scale * (2.0 * rng.uniform() - 1.0);
    return t;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * (2.0 * rng.uniform() - 1.0);
    return m;
}

// Independently coded triple-loop matrix product.
inline Eigen::MatrixXd naive_matmul(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j)
            for (Eigen::Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
    return out;
}

// Gaussian elimination with partial pivoting, solving A X = B.
inline Eigen::MatrixXd gaussian_solve(Eigen::MatrixXd a, Eigen::MatrixXd b) {
    const Eigen::Index n = a.rows();
    for (Eigen::Index col = 0; col < n; ++col) {
        Eigen::Index piv = col;
        for (Eigen::Index r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        a.row(col).swap(a.row(piv));
        b.row(col).swap(b.row(piv));
        for (Eigen::Index r = col + 1; r < n; ++r) {
            const double f = a(r, col) / a(col, col);
            a.row(r) -= f * a.row(col);
            b.row(r) -= f * b.row(col);
        }
    }
    for (Eigen::Index col = n; col-- > 0;) {
        b.row(col) /= a(col, col);
        for (Eigen::Index r = 0; r < col; ++r) b.row(r) -= a(r, col) * b.row(col);
    }
    return b;
}

// Brute-force minimum-cost assignment over all permutations.
inline std::pair<std::vector<int>, double> brute_force_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    std::vector<int> perm(n), best;
    std::iota(perm.begin(), perm.end(), 0);
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {best, best_cost};
}

// Samples from 3 pairwise-orthogonal 2-D subspaces of R^9, unit norm, 30 per subspace.
inline std::pair<Eigen::MatrixXd, std::vector<int>> three_orthogonal_subspaces(uint64_t seed,
                                                                              int per_subspace = 30) {
    Rng rng(seed);
    const int dim = 9;
    Eigen::MatrixXd z(3 * per_subspace, dim);
    std::vector<int> labels;
    for (int s = 0; s < 3; ++s) {
        for (int i = 0; i < per_subspace; ++i) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
            // Subspace s spans coordinates 3s and 3s+1.
            v[3 * s] = 2.0 * rng.uniform() - 1.0;
            v[3 * s + 1] = 2.0 * rng.uniform() - 1.0;
            if (v.norm() < 1e-6) v[3 * s] = 1.0;
            v /= v.norm();
            z.row(static_cast<Eigen::Index>(labels.size())) = v;
            labels.push_back(s);
        }
    }
    return {z, labels};
}

// A tiny but structurally complete ODSC spec (both branches, concat fusion).
inline NetworkSpec tiny_spec(int n_samples, int h = 6, int w = 6) {
    NetworkSpec spec;
    spec.variant = Variant::Odsc;
    spec.fusion = Fusion::Concat;
    spec.in_h = h;
    spec.in_w = w;
    spec.n_samples = n_samples;
    spec.enc_u = {{3, 2}, {3, 2}};
    spec.enc_o = {{3, 2}};
    spec.dec = {{3, 2}, {3, 1}};
    spec.lambda1 = 1.0;
    spec.lambda2 = 0.5;
    spec.lambda3 = 0.25;
    return spec;
}

} // namespace odsc::test

#endif
