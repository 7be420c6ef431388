#include "odsc/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

namespace odsc {

Eigen::MatrixXd build_affinity(const Eigen::MatrixXd& c, double keep_fraction) {
    if (c.rows() != c.cols()) throw ShapeError("build_affinity: C must be square");
    if (keep_fraction <= 0.0 || keep_fraction > 1.0)
        throw ConfigError("build_affinity: keep_fraction must be in (0,1]");
    if (c.cwiseAbs().maxCoeff() == 0.0) throw DataError("build_affinity: degenerate coefficients");
    const Eigen::Index n = c.rows();
    Eigen::MatrixXd w = 0.5 * (c.cwiseAbs() + c.transpose().cwiseAbs());
    w.diagonal().setZero();
    if (keep_fraction < 1.0) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double row_sum = w.row(i).sum();
            if (row_sum == 0.0) continue;
            std::vector<Eigen::Index> order(n);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](Eigen::Index a, Eigen::Index b) { return w(i, a) > w(i, b); });
            double cum = 0.0;
            Eigen::Index kept = 0;
            while (kept < n && cum < keep_fraction * row_sum) {
                cum += w(i, order[kept]);
                ++kept;
            }
            for (Eigen::Index j = kept; j < n; ++j) w(i, order[j]) = 0.0;
        }
        w = 0.5 * (w + w.transpose()).eval();
    }
    return w;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> sym_eigen(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw ShapeError("sym_eigen: matrix must be square");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ShapeError("sym_eigen: matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (m + m.transpose()));
    if (solver.info() != Eigen::Success) throw NumericError("sym_eigen: eigensolver failed");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

KmeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed, int restarts) {
    const Eigen::Index n = points.rows();
    if (k < 1 || n < k) throw ConfigError("kmeans: need N >= k >= 1");
    if (restarts < 1) throw ConfigError("kmeans: restarts must be >= 1");
    const Rng base(seed);

    auto run_once = [&](Rng rng) {
        Eigen::MatrixXd centroids(k, points.cols());
        // k-means++ seeding
        centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.uniform_int(n)));
        Eigen::VectorXd d2 = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
        for (int c = 1; c < k; ++c) {
            const double total = d2.sum();
            Eigen::Index pick = 0;
            if (total > 0.0) {
                const double target = rng.uniform() * total;
                double cum = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    cum += d2[i];
                    if (cum >= target) { pick = i; break; }
                    pick = i;
                }
            } else {
                pick = static_cast<Eigen::Index>(rng.uniform_int(n));
            }
            centroids.row(c) = points.row(pick);
            d2 = d2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
        }

        std::vector<int> labels(n, -1);
        for (int iter = 0; iter < 300; ++iter) {
            bool changed = false;
            for (Eigen::Index i = 0; i < n; ++i) {
                int best = 0;
                double best_d = (points.row(i) - centroids.row(0)).squaredNorm();
                for (int c = 1; c < k; ++c) {
                    const double d = (points.row(i) - centroids.row(c)).squaredNorm();
                    if (d < best_d) { best_d = d; best = c; }
                }
                if (labels[i] != best) { labels[i] = best; changed = true; }
            }
            // Repair empty clusters with the point farthest from its centroid.
            std::vector<Eigen::Index> count(k, 0);
            for (Eigen::Index i = 0; i < n; ++i) count[labels[i]]++;
            for (int c = 0; c < k; ++c) {
                if (count[c] > 0) continue;
                Eigen::Index far = -1;
                double far_d = -1.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    if (count[labels[i]] <= 1) continue;
                    const double d = (points.row(i) - centroids.row(labels[i])).squaredNorm();
                    if (d > far_d) { far_d = d; far = i; }
                }
                if (far >= 0) {
                    count[labels[far]]--;
                    labels[far] = c;
                    count[c] = 1;
                    changed = true;
                }
            }
            if (!changed && iter > 0) break;
            centroids.setZero();
            for (Eigen::Index i = 0; i < n; ++i) centroids.row(labels[i]) += points.row(i);
            for (int c = 0; c < k; ++c)
                if (count[c] > 0) centroids.row(c) /= static_cast<double>(count[c]);
        }
        KmeansResult res;
        res.labels = labels;
        for (Eigen::Index i = 0; i < n; ++i)
            res.wcss += (points.row(i) - centroids.row(labels[i])).squaredNorm();
        return res;
    };

    KmeansResult best;
    best.wcss = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        KmeansResult cur = run_once(base.derive(static_cast<uint64_t>(r)));
        if (cur.wcss < best.wcss) best = std::move(cur);
    }
    return best;
}

std::vector<int> spectral_clustering(const Eigen::MatrixXd& w, int k, uint64_t seed, int restarts) {
    const Eigen::Index n = w.rows();
    if (w.cols() != n) throw ShapeError("spectral_clustering: W must be square");
    if (k < 2) throw ConfigError("spectral_clustering: k must be >= 2");
    if (k > n) throw ConfigError("spectral_clustering: k exceeds the number of samples");

    Eigen::MatrixXd a = w;
    for (Eigen::Index i = 0; i < n; ++i)
        if (a.row(i).sum() == 0.0) a(i, i) = 1e-12;
    Eigen::VectorXd deg = a.rowwise().sum();
    Eigen::VectorXd dinv_sqrt = deg.array().rsqrt();
    Eigen::MatrixXd lsym =
        Eigen::MatrixXd::Identity(n, n) -
        dinv_sqrt.asDiagonal() * a * dinv_sqrt.asDiagonal();

    auto [evals, evecs] = sym_eigen(lsym);
    Eigen::MatrixXd embedding = evecs.leftCols(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = embedding.row(i).norm();
        if (norm > 1e-300) embedding.row(i) /= norm;
    }
    return kmeans(embedding, k, seed, restarts).labels;
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
    const Eigen::Index n = cost.rows();
    if (cost.cols() != n) throw ShapeError("hungarian: cost matrix must be square (pad upstream)");
    if (!cost.allFinite()) throw ConfigError("hungarian: costs must be finite");
    const double inf = std::numeric_limits<double>::infinity();
    // Row-by-row augmentation with potentials (1-based scratch arrays).
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<Eigen::Index> p(n + 1, 0), way(n + 1, 0);
    for (Eigen::Index i = 1; i <= n; ++i) {
        p[0] = i;
        Eigen::Index j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const Eigen::Index i0 = p[j0];
            double delta = inf;
            Eigen::Index j1 = 0;
            for (Eigen::Index j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) { minv[j] = cur; way[j] = j0; }
                if (minv[j] < delta) { delta = minv[j]; j1 = j; }
            }
            for (Eigen::Index j = 0; j <= n; ++j) {
                if (used[j]) { u[p[j]] += delta; v[j] -= delta; }
                else minv[j] -= delta;
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const Eigen::Index j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(n, -1);
    for (Eigen::Index j = 1; j <= n; ++j)
        if (p[j] > 0) assignment[p[j] - 1] = static_cast<int>(j - 1);
    return assignment;
}

double clustering_error(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw ShapeError("clustering_error: label vectors differ in length");
    if (pred.empty()) throw ShapeError("clustering_error: empty label vectors");
    std::map<int, int> pmap, tmap;
    for (int x : pred) pmap.emplace(x, static_cast<int>(pmap.size()));
    for (int x : truth) tmap.emplace(x, static_cast<int>(tmap.size()));
    const int k = static_cast<int>(std::max(pmap.size(), tmap.size()));
    Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(k, k);
    for (size_t i = 0; i < pred.size(); ++i)
        confusion(pmap[pred[i]], tmap[truth[i]]) += 1.0;
    const std::vector<int> assign = hungarian(-confusion);
    double matched = 0.0;
    for (int r = 0; r < k; ++r) matched += confusion(r, assign[r]);
    return 100.0 * (1.0 - matched / static_cast<double>(pred.size()));
}

} // namespace odsc
