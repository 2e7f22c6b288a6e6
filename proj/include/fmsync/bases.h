#pragma once

#include <string>
#include <utility>

#include <Eigen/Dense>

#include "fmsync/geometry.h"
#include "fmsync/linalg.h"

namespace fmsync {

enum class BasisKind { Spectral, Affinity, External, Preconditioned };

const char* to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& name);

// Phi_k: N x M, full column rank.
struct BasisMatrix {
  Eigen::MatrixXd phi;
  int cloud_id = 0;
  BasisKind kind = BasisKind::External;

  Eigen::Index points() const { return phi.rows(); }
  Eigen::Index width() const { return phi.cols(); }
};

// Throws DataError unless phi has M <= N and full column rank.
void check_full_rank(const Eigen::MatrixXd& phi, const char* what = "basis");

// Wraps a user-provided matrix (e.g. loaded from file); only rank is enforced.
BasisMatrix external_basis(Eigen::MatrixXd phi, int cloud_id);

// The m eigenvectors of L with smallest eigenvalues, ascending, unit norm,
// each column's largest-magnitude entry positive.
BasisMatrix spectral_bases(const GraphLaplacian& laplacian, int m, int cloud_id = 0,
                           const EigenOptions& opts = {.dense_limit = 1500, .tol = 1e-9});

// Per-body labels G_k in [0, body_count).
struct RigidSegmentation {
  Eigen::VectorXi labels;
  int body_count = 0;

  // Throws DataError on out-of-range labels or a body with fewer than 4 points.
  void validate(Eigen::Index n_points) const;
};

// Block s (columns 4s..4s+3) holds [x y z 1] on rows of body s, zero elsewhere.
BasisMatrix affinity_bases(const PointCloud& cloud, const RigidSegmentation& seg);

// Phi = U * S with S = Sigma V^T.
struct Preconditioner {
  Eigen::MatrixXd s;
  Eigen::MatrixXd s_inv;
};

std::pair<BasisMatrix, Preconditioner> precondition(const BasisMatrix& basis);

enum class MapFrame { ToPreconditioned, FromPreconditioned };

// Transports C_kl between the original and preconditioned frames:
//   to:   C' = S_k C S_l^-1
//   from: C  = S_k^-1 C' S_l
// which keeps Phi_k C ~ Pi Phi_l equivalent to U_k C' ~ Pi U_l.
Eigen::MatrixXd convert_map_basis(const Eigen::MatrixXd& c, const Preconditioner& s_k,
                                  const Preconditioner& s_l, MapFrame direction);

}  // namespace fmsync
