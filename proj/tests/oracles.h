#pragma once

// Naive double-loop reference implementations of the metrics.

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "fmsync/geometry.h"
#include "fmsync/metrics.h"

namespace fmsync::oracle {

inline double dist2(const Points& a, Eigen::Index i, const Points& b, Eigen::Index j) {
  double s = 0.0;
  for (int d = 0; d < 3; ++d) s += (a(i, d) - b(j, d)) * (a(i, d) - b(j, d));
  return s;
}

inline Eigen::Index nearest(const Points& from, Eigen::Index i, const Points& to) {
  Eigen::Index best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < to.rows(); ++j) {
    double d = dist2(from, i, to, j);
    if (d < bd) bd = d, best = j;
  }
  return best;
}

inline FlowMetrics flow_metrics(const Points& pred, const Points& gt, const std::optional<std::vector<bool>>& mask) {
  FlowMetrics m;
  double sum = 0.0, s = 0.0, r = 0.0, o = 0.0, n = 0.0;
  for (Eigen::Index i = 0; i < gt.rows(); ++i) {
    if (mask && !(*mask)[i]) continue;
    double e2 = 0.0, g2 = 0.0;
    for (int d = 0; d < 3; ++d) {
      e2 += (pred(i, d) - gt(i, d)) * (pred(i, d) - gt(i, d));
      g2 += gt(i, d) * gt(i, d);
    }
    double e = std::sqrt(e2), g = std::max(std::sqrt(g2), 1e-12);
    sum += e;
    if (e / g < 0.05 || e < 0.02) s += 1;
    if (e / g < 0.10 || e < 0.05) r += 1;
    if (e / g > 0.30) o += 1;
    n += 1;
  }
  m.l2_error = sum / n;
  m.acc_s = 100 * s / n;
  m.acc_r = 100 * r / n;
  m.outlier = 100 * o / n;
  m.points = static_cast<Eigen::Index>(n);
  return m;
}

inline double chamfer(const Points& a, const Points& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) s += dist2(a, i, b, nearest(a, i, b));
  for (Eigen::Index j = 0; j < b.rows(); ++j) s += dist2(b, j, a, nearest(b, j, a));
  return s;
}

// Neighbour sets read off the dense adjacency of the graph.
inline std::vector<std::vector<Eigen::Index>> adjacency(const KnnGraph& g) {
  Eigen::MatrixXd w = g.weight_matrix();
  std::vector<std::vector<Eigen::Index>> nb(static_cast<size_t>(w.rows()));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      if (w(i, j) != 0.0) nb[static_cast<size_t>(i)].push_back(j);
  return nb;
}

inline double smoothness(const Points& flow, const KnnGraph& g) {
  auto nb = adjacency(g);
  double total = 0.0;
  for (Eigen::Index i = 0; i < flow.rows(); ++i) {
    const auto& n = nb[static_cast<size_t>(i)];
    if (n.empty()) continue;
    double s = 0.0;
    for (Eigen::Index j : n) s += dist2(flow, i, flow, j);
    total += s / static_cast<double>(n.size());
  }
  return total;
}

inline Eigen::Vector3d delta(const Points& p, Eigen::Index i, const std::vector<Eigen::Index>& n) {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  if (n.empty()) return mean;
  for (Eigen::Index j : n) mean += p.row(j).transpose();
  return mean / static_cast<double>(n.size()) - p.row(i).transpose();
}

inline double laplacian_loss(const Points& warped, const Points& target, const KnnGraph& gw, const KnnGraph& gt) {
  auto nw = adjacency(gw), nt = adjacency(gt);
  double total = 0.0;
  for (Eigen::Index i = 0; i < warped.rows(); ++i) {
    Eigen::Index j = nearest(warped, i, target);
    total += (delta(warped, i, nw[static_cast<size_t>(i)]) - delta(target, j, nt[static_cast<size_t>(j)])).squaredNorm();
  }
  return total;
}

inline Eigen::MatrixXd matmul(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

inline double frob2_minus_identity(const Eigen::MatrixXd& p) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      double v = p(i, j) - (i == j ? 1.0 : 0.0);
      s += v * v;
    }
  return s;
}

inline double map_consistency(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return frob2_minus_identity(matmul(a, b));
}

inline double cycle_residual(const std::vector<Eigen::MatrixXd>& maps) {
  Eigen::MatrixXd p = maps.front();
  for (size_t i = 1; i < maps.size(); ++i) p = matmul(p, maps[i]);
  return std::sqrt(frob2_minus_identity(p));
}

}  // namespace fmsync::oracle
