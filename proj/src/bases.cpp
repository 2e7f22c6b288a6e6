#include "fmsync/bases.h"

#include <sstream>

#include "fmsync/error.h"

namespace fmsync {

const char* to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::Spectral: return "spectral";
    case BasisKind::Affinity: return "affinity";
    case BasisKind::External: return "external";
    case BasisKind::Preconditioned: return "preconditioned";
  }
  return "external";
}

BasisKind basis_kind_from_string(const std::string& name) {
  if (name == "spectral") return BasisKind::Spectral;
  if (name == "affinity") return BasisKind::Affinity;
  if (name == "external") return BasisKind::External;
  if (name == "preconditioned") return BasisKind::Preconditioned;
  throw DataError("unknown basis kind '" + name + "'");
}

void check_full_rank(const Eigen::MatrixXd& phi, const char* what) {
  if (phi.cols() < 1 || phi.cols() > phi.rows()) {
    std::ostringstream msg;
    msg << what << " must satisfy 1 <= M <= N (got " << phi.rows() << "x" << phi.cols() << ")";
    throw DataError(msg.str());
  }
  if (!phi.allFinite()) throw DataError(std::string(what) + " has non-finite entries");
  if (numerical_rank(phi) < phi.cols()) throw DataError(std::string(what) + " is rank deficient");
}

BasisMatrix external_basis(Eigen::MatrixXd phi, int cloud_id) {
  check_full_rank(phi, "external basis");
  return BasisMatrix{std::move(phi), cloud_id, BasisKind::External};
}

BasisMatrix spectral_bases(const GraphLaplacian& laplacian, int m, int cloud_id,
                           const EigenOptions& opts) {
  const Eigen::Index n = laplacian.matrix.rows();
  if (m < 1 || m > n) {
    std::ostringstream msg;
    msg << "spectral basis width must satisfy 1 <= M <= N (M=" << m << ", N=" << n << ")";
    throw DataError(msg.str());
  }
  EigenPairs pairs = smallest_eigenpairs(laplacian.matrix, m, opts);
  Eigen::MatrixXd residual = laplacian.matrix * pairs.vectors - pairs.vectors * pairs.values.asDiagonal();
  double res = residual.colwise().norm().maxCoeff();
  double scale = std::max(1.0, pairs.values.cwiseAbs().maxCoeff());
  if (!(res < 1e-6 * scale)) {
    std::ostringstream msg;
    msg << "eigensolver did not converge: residual norm " << res;
    throw SolverError(msg.str());
  }
  canonicalize_signs(pairs.vectors);
  return BasisMatrix{std::move(pairs.vectors), cloud_id, BasisKind::Spectral};
}

void RigidSegmentation::validate(Eigen::Index n_points) const {
  if (labels.size() != n_points) throw DataError("segmentation length does not match the cloud");
  if (body_count < 1) throw DataError("segmentation needs at least one body");
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(body_count);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) < 0 || labels(i) >= body_count) {
      std::ostringstream msg;
      msg << "segmentation label " << labels(i) << " out of range at point " << i;
      throw DataError(msg.str());
    }
    ++counts(labels(i));
  }
  for (int s = 0; s < body_count; ++s) {
    if (counts(s) < 4) {
      std::ostringstream msg;
      msg << "body " << s << " has " << counts(s) << " points; at least 4 are required";
      throw DataError(msg.str());
    }
  }
}

BasisMatrix affinity_bases(const PointCloud& cloud, const RigidSegmentation& seg) {
  seg.validate(cloud.size());
  const Eigen::Index n = cloud.size();
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(n, 4 * seg.body_count);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int s = seg.labels(i);
    phi.block<1, 3>(i, 4 * s) = cloud.points.row(i);
    phi(i, 4 * s + 3) = 1.0;
  }
  for (int s = 0; s < seg.body_count; ++s) {
    if (numerical_rank(phi.middleCols(4 * s, 4)) < 4) {
      std::ostringstream msg;
      msg << "degenerate body " << s << ": its points are coplanar or collinear";
      throw DataError(msg.str());
    }
  }
  return BasisMatrix{std::move(phi), cloud.id, BasisKind::Affinity};
}

std::pair<BasisMatrix, Preconditioner> precondition(const BasisMatrix& basis) {
  check_full_rank(basis.phi, "basis");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis.phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  Preconditioner pre;
  pre.s = sv.asDiagonal() * svd.matrixV().transpose();
  pre.s_inv = svd.matrixV() * sv.cwiseInverse().asDiagonal();
  BasisMatrix u{svd.matrixU(), basis.cloud_id, BasisKind::Preconditioned};
  return {std::move(u), std::move(pre)};
}

Eigen::MatrixXd convert_map_basis(const Eigen::MatrixXd& c, const Preconditioner& s_k,
                                  const Preconditioner& s_l, MapFrame direction) {
  if (s_k.s.rows() != c.rows() || s_l.s.rows() != c.cols()) {
    std::ostringstream msg;
    msg << "map of shape " << c.rows() << "x" << c.cols() << " does not match preconditioners ("
        << s_k.s.rows() << ", " << s_l.s.rows() << ")";
    throw DataError(msg.str());
  }
  if (!s_k.s_inv.allFinite() || !s_l.s_inv.allFinite() || numerical_rank(s_k.s) < s_k.s.rows() ||
      numerical_rank(s_l.s) < s_l.s.rows())
    throw DataError("singular preconditioner");
  if (direction == MapFrame::ToPreconditioned) return s_k.s * c * s_l.s_inv;
  return s_k.s_inv * c * s_l.s;
}

}  // namespace fmsync
