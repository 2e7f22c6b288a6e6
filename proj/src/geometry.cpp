#include "fmsync/geometry.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fmsync/error.h"

namespace fmsync {

PointCloud PointCloud::make(Points points, int id) {
  if (points.rows() < 1) throw DataError("point cloud must contain at least one point");
  if (!points.allFinite()) throw DataError("point cloud has non-finite coordinates");
  return PointCloud{std::move(points), id};
}

KnnResult knn_query(const Points& cloud, const Eigen::MatrixXd& queries, int k) {
  const Eigen::Index n = cloud.rows();
  if (queries.cols() != 3) throw DataError("knn queries must have 3 columns");
  if (k < 1) throw DataError("knn requires k >= 1");
  if (k > n) throw DataError("insufficient points: k exceeds the cloud size");

  const Eigen::Index q = queries.rows();
  KnnResult out{Eigen::MatrixXi(q, k), Eigen::MatrixXd(q, k)};
  const Eigen::Matrix3Xd pts = cloud.transpose();
  std::vector<double> dist2(n);
  std::vector<int> order(n);
  for (Eigen::Index i = 0; i < q; ++i) {
    const Eigen::Vector3d p = queries.row(i).transpose();
    for (Eigen::Index j = 0; j < n; ++j) dist2[j] = (pts.col(j) - p).squaredNorm();
    std::iota(order.begin(), order.end(), 0);
    auto closer = [&](int a, int b) { return dist2[a] < dist2[b] || (dist2[a] == dist2[b] && a < b); };
    std::partial_sort(order.begin(), order.begin() + k, order.end(), closer);
    for (int j = 0; j < k; ++j) {
      out.indices(i, j) = order[j];
      out.distances(i, j) = std::sqrt(dist2[order[j]]);
    }
  }
  return out;
}

KnnResult knn_query(const PointCloud& cloud, const Eigen::MatrixXd& queries, int k) {
  return knn_query(cloud.points, queries, k);
}

Eigen::SparseMatrix<double> KnnGraph::weight_matrix() const {
  std::vector<Eigen::Triplet<double>> trips;
  for (size_t i = 0; i < neighbors.size(); ++i)
    for (size_t e = 0; e < neighbors[i].size(); ++e)
      trips.emplace_back(static_cast<int>(i), neighbors[i][e], weights[i][e]);
  Eigen::SparseMatrix<double> w(size(), size());
  w.setFromTriplets(trips.begin(), trips.end());
  return w;
}

KnnGraph build_knn_graph(const PointCloud& cloud, int k, std::optional<double> sigma) {
  const Eigen::Index n = cloud.size();
  if (k < 1 || k >= n) {
    std::ostringstream msg;
    msg << "knn graph requires 1 <= k < N (k=" << k << ", N=" << n << ")";
    throw DataError(msg.str());
  }
  // k+1 neighbours; the point itself normally comes first but duplicates can
  // displace it, so self-matches are filtered explicitly.
  KnnResult knn = knn_query(cloud.points, cloud.points, k + 1);

  std::vector<std::vector<std::pair<int, double>>> adj(n);
  double kth_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int taken = 0;
    double kth = 0.0;
    for (int j = 0; j <= k && taken < k; ++j) {
      int nb = knn.indices(i, j);
      if (nb == i) continue;
      adj[i].emplace_back(nb, knn.distances(i, j));
      adj[nb].emplace_back(static_cast<int>(i), knn.distances(i, j));
      kth = knn.distances(i, j);
      ++taken;
    }
    kth_sum += kth;
  }

  KnnGraph g;
  g.sigma = sigma ? *sigma : kth_sum / static_cast<double>(n);
  if (!(g.sigma > 0.0) || !std::isfinite(g.sigma)) throw DataError("zero bandwidth: sigma must be positive");

  g.neighbors.resize(n);
  g.weights.resize(n);
  const double inv_s2 = 1.0 / (g.sigma * g.sigma);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& list = adj[i];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end(),
                           [](const auto& a, const auto& b) { return a.first == b.first; }),
               list.end());
    for (const auto& [nb, d] : list) {
      g.neighbors[i].push_back(nb);
      g.weights[i].push_back(std::exp(-d * d * inv_s2));
    }
  }
  return g;
}

GraphLaplacian graph_laplacian(const KnnGraph& graph) {
  const Eigen::Index n = graph.size();
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index i = 0; i < n; ++i) {
    double degree = 0.0;
    for (size_t e = 0; e < graph.neighbors[i].size(); ++e) {
      trips.emplace_back(static_cast<int>(i), graph.neighbors[i][e], -graph.weights[i][e]);
      degree += graph.weights[i][e];
    }
    trips.emplace_back(static_cast<int>(i), static_cast<int>(i), degree);
  }
  GraphLaplacian lap{Eigen::SparseMatrix<double>(n, n)};
  lap.matrix.setFromTriplets(trips.begin(), trips.end());
  return lap;
}

}  // namespace fmsync
