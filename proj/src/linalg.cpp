#include "fmsync/linalg.h"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <sstream>

#include "fmsync/error.h"

namespace fmsync {

namespace {

WarningSink& sink_storage() {
  static WarningSink sink = [](const std::string& m) { std::cerr << "warning: " << m << "\n"; };
  return sink;
}

// Orthonormal basis for the column span of s (SVQB). Columns whose Gram
// eigenvalue falls below the cutoff are dropped. Returns the coefficient
// transform t such that s * t is orthonormal.
Eigen::MatrixXd svqb_transform(const Eigen::MatrixXd& s) {
  Eigen::MatrixXd gram = s.transpose() * s;
  Eigen::VectorXd d = gram.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd scaled = d.asDiagonal() * gram * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled);
  const Eigen::VectorXd& ev = es.eigenvalues();
  double cutoff = 1e-12 * ev.cwiseAbs().maxCoeff();
  int keep = 0;
  for (int i = 0; i < ev.size(); ++i) keep += ev(i) > cutoff ? 1 : 0;
  Eigen::MatrixXd t(s.cols(), keep);
  int c = 0;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) <= cutoff) continue;
    t.col(c++) = d.asDiagonal() * es.eigenvectors().col(i) / std::sqrt(ev(i));
  }
  return t;
}

template <typename Mat>
double inf_norm(const Mat& a) {
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(a.rows());
  if constexpr (std::is_same_v<Mat, Eigen::SparseMatrix<double>>) {
    for (int k = 0; k < a.outerSize(); ++k)
      for (typename Mat::InnerIterator it(a, k); it; ++it) rows(it.row()) += std::abs(it.value());
  } else {
    rows = a.cwiseAbs().rowwise().sum();
  }
  return rows.maxCoeff();
}

template <typename Mat>
EigenPairs lobpcg(const Mat& a, int count, const EigenOptions& opts) {
  const int n = static_cast<int>(a.rows());
  const int block = std::min(n, count + std::min(count, 8));
  const double scale = std::max(inf_norm(a), 1e-300);

  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd x(n, block);
  for (int j = 0; j < block; ++j)
    for (int i = 0; i < n; ++i) x(i, j) = gauss(rng);
  x = x * svqb_transform(x);

  Eigen::MatrixXd ax = a * x;
  Eigen::MatrixXd p(n, 0), ap(n, 0);
  Eigen::VectorXd lambda;
  double worst = 0.0;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    // Rayleigh-Ritz on span[X, R, P].
    Eigen::MatrixXd rr = x.transpose() * ax;
    rr = 0.5 * (rr + rr.transpose());
    if (iter == 0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rr);
      x = x * es.eigenvectors();
      ax = ax * es.eigenvectors();
      lambda = es.eigenvalues();
    } else {
      lambda = rr.diagonal();
    }
    Eigen::MatrixXd r = ax - x * lambda.asDiagonal();

    worst = 0.0;
    for (int j = 0; j < count; ++j) worst = std::max(worst, r.col(j).norm());
    if (worst <= opts.tol * scale) {
      EigenPairs out{lambda.head(count), x.leftCols(count)};
      return out;
    }

    Eigen::MatrixXd s(n, block + r.cols() + p.cols());
    s << x, r, p;
    Eigen::MatrixXd as(n, s.cols());
    as << ax, a * r, ap;
    Eigen::MatrixXd t = svqb_transform(s);
    Eigen::MatrixXd q = s * t;
    Eigen::MatrixXd aq = as * t;
    Eigen::MatrixXd small = q.transpose() * aq;
    small = 0.5 * (small + small.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(small);
    Eigen::MatrixXd y = es.eigenvectors().leftCols(block);
    Eigen::MatrixXd coef = t * y;

    const int tail = static_cast<int>(s.cols()) - block;
    p = s.rightCols(tail) * coef.bottomRows(tail);
    ap = as.rightCols(tail) * coef.bottomRows(tail);
    x = q * y;
    ax = aq * y;
    // Re-orthonormalize occasionally; X drifts after many steps.
    if (iter % 20 == 19) {
      Eigen::MatrixXd tx = svqb_transform(x);
      x = x * tx;
      ax = ax * tx;
    }
  }
  std::ostringstream msg;
  msg << "iterative eigensolver did not converge: residual norm " << worst << " after "
      << opts.max_iters << " iterations";
  throw SolverError(msg.str());
}

void check_count(Eigen::Index n, int count) {
  if (count < 1 || count > n) {
    std::ostringstream msg;
    msg << "requested " << count << " eigenpairs of a " << n << "x" << n << " matrix";
    throw DataError(msg.str());
  }
}

EigenPairs dense_smallest(const Eigen::MatrixXd& a, int count) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw SolverError("dense symmetric eigensolver failed");
  EigenPairs out{es.eigenvalues().head(count), es.eigenvectors().leftCols(count)};
  return out;
}

bool use_dense(Eigen::Index n, int count, const EigenOptions& opts) {
  if (opts.method == EigenMethod::Dense) return true;
  if (opts.method == EigenMethod::Iterative) return false;
  // LOBPCG needs room for its search block.
  return n <= opts.dense_limit || 3 * (2 * count) >= n;
}

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
  WarningSink old = sink_storage();
  sink_storage() = std::move(sink);
  return old;
}

void warn(const std::string& message) {
  if (sink_storage()) sink_storage()(message);
}

Eigen::MatrixXd pinv(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return Eigen::MatrixXd::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  double cutoff = kPinvRelTol * sv(0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

int numerical_rank(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const Eigen::VectorXd& sv = svd.singularValues();
  double cutoff = kPinvRelTol * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) rank += sv(i) > cutoff ? 1 : 0;
  return rank;
}

EigenPairs smallest_eigenpairs(const Eigen::MatrixXd& a, int count, const EigenOptions& opts) {
  check_count(a.rows(), count);
  if (use_dense(a.rows(), count, opts)) return dense_smallest(a, count);
  return lobpcg(a, count, opts);
}

EigenPairs smallest_eigenpairs(const Eigen::SparseMatrix<double>& a, int count,
                               const EigenOptions& opts) {
  check_count(a.rows(), count);
  if (use_dense(a.rows(), count, opts)) return dense_smallest(Eigen::MatrixXd(a), count);
  return lobpcg(a, count, opts);
}

void canonicalize_signs(Eigen::MatrixXd& vectors) {
  for (int j = 0; j < vectors.cols(); ++j) {
    Eigen::Index arg = 0;
    vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, j) < 0) vectors.col(j) *= -1.0;
  }
}

}  // namespace fmsync
