#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace fmsync {

// Relative singular-value cutoff used by every pseudo-inverse and rank test.
inline constexpr double kPinvRelTol = 1e-10;

// Moore-Penrose pseudo-inverse via SVD; singular values below
// kPinvRelTol * sigma_max are treated as zero.
Eigen::MatrixXd pinv(const Eigen::MatrixXd& a);

// Numerical rank under the same relative cutoff.
int numerical_rank(const Eigen::MatrixXd& a);

struct EigenPairs {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // unit-norm columns
};

enum class EigenMethod { Auto, Dense, Iterative };

struct EigenOptions {
  EigenMethod method = EigenMethod::Auto;
  // Auto picks the dense solver up to this dimension.
  int dense_limit = 512;
  int max_iters = 2000;
  double tol = 1e-10;
};

// The `count` smallest eigenpairs of a symmetric matrix. The iterative path
// is block LOBPCG without preconditioning; it throws SolverError with the
// worst residual norm when it fails to converge.
EigenPairs smallest_eigenpairs(const Eigen::MatrixXd& a, int count,
                               const EigenOptions& opts = {});
EigenPairs smallest_eigenpairs(const Eigen::SparseMatrix<double>& a, int count,
                               const EigenOptions& opts = {});

// Flip each column so that its largest-magnitude entry is positive.
void canonicalize_signs(Eigen::MatrixXd& vectors);

}  // namespace fmsync
