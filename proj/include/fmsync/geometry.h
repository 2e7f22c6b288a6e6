#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace fmsync {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// One scan X_k. Construct through make() to get the invariants checked.
struct PointCloud {
  Points points;
  int id = 0;

  static PointCloud make(Points points, int id);
  Eigen::Index size() const { return points.rows(); }
};

struct KnnResult {
  Eigen::MatrixXi indices;    // Q x k, nearest first
  Eigen::MatrixXd distances;  // Q x k, ascending
};

// Exhaustive k-nearest-neighbour search. Ties go to the lowest point index.
KnnResult knn_query(const Points& cloud, const Eigen::MatrixXd& queries, int k);
KnnResult knn_query(const PointCloud& cloud, const Eigen::MatrixXd& queries, int k);

// Symmetrized k-NN graph with Gaussian edge weights exp(-d^2 / sigma^2).
// neighbors[i] is sorted ascending and weights[i] is parallel to it.
struct KnnGraph {
  std::vector<std::vector<int>> neighbors;
  std::vector<std::vector<double>> weights;
  double sigma = 0.0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(neighbors.size()); }
  Eigen::SparseMatrix<double> weight_matrix() const;
};

// sigma = nullopt selects the automatic bandwidth: mean distance from each
// point to its k-th neighbour.
KnnGraph build_knn_graph(const PointCloud& cloud, int k, std::optional<double> sigma = std::nullopt);

// Combinatorial Laplacian L = D - W.
struct GraphLaplacian {
  Eigen::SparseMatrix<double> matrix;
};

GraphLaplacian graph_laplacian(const KnnGraph& graph);

}  // namespace fmsync
