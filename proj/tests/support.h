#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "fmsync/error.h"
#include "fmsync/geometry.h"

namespace fmsync::test {

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline Points random_points(std::mt19937_64& rng, Eigen::Index n, double extent = 1.0) {
  std::uniform_real_distribution<double> u(0.0, extent);
  Points p(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) p(i, d) = u(rng);
  return p;
}

inline Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng, Eigen::Index m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(rng, m, m));
  return qr.householderQ() * Eigen::MatrixXd::Identity(m, m);
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Dense M^2 x M^2 assembly of the pair-map normal equations, solved by LU.
inline Eigen::MatrixXd dense_pair_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& h_k,
                                         const Eigen::MatrixXd& h_l, double ridge = 0.0) {
  const Eigen::Index m = a.cols();
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd gamma = kron(eye, a.transpose() * a) + kron(h_l * h_l.transpose(), eye);
  gamma.diagonal().array() += ridge;
  Eigen::MatrixXd rhs = a.transpose() * b + h_k * h_l.transpose();
  Eigen::VectorXd x = gamma.fullPivLu().solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), m * m));
  return Eigen::Map<const Eigen::MatrixXd>(x.data(), m, m);
}

// Rigid motion about the origin: rotation by `angle` around a random axis, then translation.
inline Eigen::Matrix4d random_rigid(std::mt19937_64& rng, double angle, double shift) {
  Eigen::Vector3d axis = random_matrix(rng, 3, 1).col(0).normalized();
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  t.topRightCorner<3, 1>() = shift * random_matrix(rng, 3, 1).col(0);
  return t;
}

inline Points apply(const Eigen::Matrix4d& t, const Points& p) {
  Points out = (p * t.topLeftCorner<3, 3>().transpose()).rowwise() + t.topRightCorner<3, 1>().transpose();
  return out;
}

}  // namespace fmsync::test

#include "fmsync/correspond.h"

namespace fmsync::test {

// Rows of a pairwise problem B = A C_gt where a fraction of target rows are
// replaced by uniform noise ten times the signal magnitude.
struct OutlierProblem {
  AlignedRows rows;
  Eigen::MatrixXd c_gt;
};

inline OutlierProblem outlier_problem(std::uint64_t seed, Eigen::Index n = 200, Eigen::Index m = 8,
                                      double outlier_frac = 0.2) {
  std::mt19937_64 rng(seed);
  OutlierProblem p;
  p.rows.source = random_matrix(rng, n, m, 1.0 / std::sqrt(static_cast<double>(n)));
  p.c_gt = Eigen::MatrixXd::Identity(m, m) + random_matrix(rng, m, m, 0.3);
  p.rows.target = p.rows.source * p.c_gt;
  const double signal = p.rows.target.cwiseAbs().maxCoeff();
  std::uniform_real_distribution<double> u(-10.0 * signal, 10.0 * signal);
  const auto bad = static_cast<Eigen::Index>(outlier_frac * static_cast<double>(n));
  for (Eigen::Index i = 0; i < bad; ++i)
    for (Eigen::Index j = 0; j < m; ++j) p.rows.target(i * n / bad, j) = u(rng);
  return p;
}

}  // namespace fmsync::test

#include "fmsync/sync.h"

namespace fmsync::test {

// K clouds sharing one point set, with bases Phi_k = Phi_0 R_k^T for random
// orthogonal R_k, so C_kl = R_k R_l^T is exactly consistent. Identity
// correspondences on every edge; `row_noise` perturbs each basis afterwards.
struct ConsistentGraph {
  CloudGraph graph;
  MapSet gt;
};

inline ConsistentGraph consistent_graph(std::uint64_t seed, int k, Eigen::Index n, Eigen::Index m,
                                        double row_noise = 0.0) {
  std::mt19937_64 rng(seed);
  ConsistentGraph out;
  Eigen::MatrixXd phi0 = random_matrix(rng, n, m, 1.0 / std::sqrt(static_cast<double>(n)));
  std::vector<Eigen::MatrixXd> r;
  for (int i = 0; i < k; ++i) {
    r.push_back(random_orthogonal(rng, m));
    Eigen::MatrixXd phi = phi0 * r.back().transpose();
    if (row_noise > 0.0) phi += random_matrix(rng, n, m, row_noise / std::sqrt(static_cast<double>(n)));
    out.graph.bases.push_back(BasisMatrix{phi, i, BasisKind::External});
  }
  out.graph.edges = complete_edges(k);
  CorrespondenceSet ident;
  ident.pairs.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) ident.pairs.row(i) << static_cast<int>(i), static_cast<int>(i);
  for (const Edge& e : out.graph.edges) {
    out.graph.corrs[e] = ident;
    out.gt[e] = r[e.source] * r[e.target].transpose();
  }
  return out;
}

inline MapSet perturb(const MapSet& maps, std::mt19937_64& rng, double rel_sigma) {
  MapSet out;
  for (const auto& [e, c] : maps) out[e] = c + random_matrix(rng, c.rows(), c.cols(), rel_sigma * c.norm());
  return out;
}

inline double mean_map_error(const MapSet& maps, const MapSet& gt) {
  double e = 0.0;
  for (const auto& [edge, c] : gt) e += (maps.at(edge) - c).norm();
  return e / static_cast<double>(gt.size());
}

inline double max_three_cycle(const MapSet& maps, int k) {
  double worst = 0.0;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(maps.begin()->second.rows(), maps.begin()->second.rows());
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      for (int c = b + 1; c < k; ++c)
        worst = std::max(worst, (maps.at({a, b}) * maps.at({b, c}) * maps.at({c, a}) - eye).norm());
  return worst;
}

}  // namespace fmsync::test
