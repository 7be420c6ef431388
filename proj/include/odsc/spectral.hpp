#ifndef ODSC_SPECTRAL_HPP
#define ODSC_SPECTRAL_HPP

#include "odsc/tensor.hpp"

#include <utility>
#include <vector>

namespace odsc {

/// SSC-style affinity from coefficients: W = (|C| + |C^T|)/2, zero diagonal,
/// per row keep the largest entries until their cumulative mass reaches
/// keep_fraction of the row sum, then re-symmetrize.
Eigen::MatrixXd build_affinity(const Eigen::MatrixXd& c, double keep_fraction);

/// Eigenvalues ascending + orthonormal eigenvectors of a symmetric matrix.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> sym_eigen(const Eigen::MatrixXd& m);

/// Normalized spectral clustering (symmetric Laplacian, k smallest eigenvectors,
/// row normalization, seeded k-means with restarts).
std::vector<int> spectral_clustering(const Eigen::MatrixXd& w, int k, uint64_t seed, int restarts);

struct KmeansResult {
    std::vector<int> labels;
    double wcss = 0.0;
};
/// k-means++ seeding, Lloyd iterations to a fixpoint (max 300), empty clusters
/// repaired by stealing the point farthest from its centroid. Best of `restarts`
/// runs by WCSS, ties broken by lowest restart index.
KmeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed, int restarts);

/// Clustering error percent: 100 * (1 - best-matched accuracy) via Hungarian
/// assignment on the confusion matrix.
double clustering_error(const std::vector<int>& pred, const std::vector<int>& truth);

/// Exact minimum-cost assignment of a square cost matrix; returns col for each row.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

} // namespace odsc

#endif
