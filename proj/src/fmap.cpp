#include "fmsync/fmap.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fmsync/error.h"
#include "fmsync/linalg.h"

namespace fmsync {

void IrlsConfig::validate() const {
  if (!(kappa > 0.0)) throw DataError("Huber scale kappa must be positive");
  if (iters < 1) throw DataError("IRLS needs at least one iteration");
  if (!(tikhonov >= 0.0)) throw DataError("tikhonov ridge must be non-negative");
}

double huber_weight(double r, double kappa) {
  r = std::abs(r);
  return r < kappa ? 1.0 : kappa / r;
}

double huber_rho(double r, double kappa) {
  r = std::abs(r);
  return r < kappa ? r * r : 2.0 * kappa * r - kappa * kappa;
}

Eigen::VectorXd row_residuals(const AlignedRows& rows, const Eigen::MatrixXd& c) {
  return (rows.target - rows.source * c).rowwise().norm();
}

double robust_energy(const AlignedRows& rows, const Eigen::MatrixXd& c, double kappa) {
  Eigen::VectorXd r = row_residuals(rows, c);
  double e = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) e += huber_rho(r(i), kappa);
  return e;
}

Eigen::MatrixXd solve_least_squares(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                    double tikhonov) {
  const Eigen::Index m = a.cols();
  if (a.rows() >= m) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(kPinvRelTol);
    if (qr.rank() == m) return qr.solve(b);
  }
  std::ostringstream msg;
  msg << "least-squares system with " << a.rows() << " rows and " << m
      << " unknown columns is rank deficient; using a ridge-regularized solution";
  warn(msg.str());
  Eigen::MatrixXd ata = a.transpose() * a;
  double scale = ata.diagonal().maxCoeff();
  if (!(scale > 0.0)) scale = 1.0;
  ata.diagonal().array() += tikhonov * scale;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(ata);
  if (ldlt.info() != Eigen::Success) throw SolverError("ridge-regularized least squares failed");
  return ldlt.solve(a.transpose() * b);
}

FunctionalMap estimate_fmap(const AlignedRows& rows, const IrlsConfig& cfg,
                            const std::optional<Eigen::MatrixXd>& warm_start) {
  cfg.validate();
  const Eigen::Index n = rows.source.rows();
  if (n < 1) throw DataError("functional map estimation needs at least one correspondence");
  if (rows.target.rows() != n) throw DataError("aligned basis rows differ in count");
  if (rows.source.isZero(0.0)) throw DataError("source basis rows are all zero");
  if (warm_start && (warm_start->rows() != rows.source.cols() || warm_start->cols() != rows.target.cols()))
    throw DataError("warm start has the wrong shape");

  Eigen::MatrixXd c;
  for (int t = 1; t <= cfg.iters; ++t) {
    Eigen::VectorXd sqrt_w = Eigen::VectorXd::Ones(n);
    if (t > 1 || warm_start) {
      const Eigen::MatrixXd& prev = t == 1 ? *warm_start : c;
      Eigen::VectorXd r = row_residuals(rows, prev);
      for (Eigen::Index i = 0; i < n; ++i) sqrt_w(i) = std::sqrt(huber_weight(r(i), cfg.kappa));
    }
    Eigen::MatrixXd a = sqrt_w.asDiagonal() * rows.source;
    Eigen::MatrixXd b = sqrt_w.asDiagonal() * rows.target;
    c = solve_least_squares(a, b, cfg.tikhonov);
  }
  FunctionalMap out;
  out.residual = robust_energy(rows, c, cfg.kappa);
  out.c = std::move(c);
  return out;
}

const char* to_string(FlowVariant v) {
  switch (v) {
    case FlowVariant::NN: return "nn";
    case FlowVariant::BS: return "bs";
    case FlowVariant::Blend: return "blend";
  }
  return "blend";
}

FlowVariant flow_variant_from_string(const std::string& name) {
  if (name == "nn") return FlowVariant::NN;
  if (name == "bs") return FlowVariant::BS;
  if (name == "blend") return FlowVariant::Blend;
  throw DataError("unknown flow variant '" + name + "'");
}

namespace {

void check_flow_inputs(const Eigen::MatrixXd& phi_k, const Eigen::MatrixXd& c, const Eigen::MatrixXd& phi_l,
                       const PointCloud& x_l, const PointCloud& x_k) {
  if (phi_k.cols() != c.rows() || phi_l.cols() != c.cols()) {
    std::ostringstream msg;
    msg << "map " << c.rows() << "x" << c.cols() << " incompatible with basis widths " << phi_k.cols()
        << " and " << phi_l.cols();
    throw DataError(msg.str());
  }
  if (phi_k.rows() != x_k.size() || phi_l.rows() != x_l.size())
    throw DataError("basis row count does not match its point cloud");
}

}  // namespace

Eigen::MatrixXd soft_permutation(const Eigen::MatrixXd& phi_k, const Eigen::MatrixXd& c,
                                 const Eigen::MatrixXd& phi_l, double t) {
  if (!(t > 0.0)) throw DataError("softmax temperature must be positive");
  if (phi_k.cols() != c.rows() || phi_l.cols() != c.cols()) throw DataError("map shape does not match bases");
  const Eigen::MatrixXd mapped = phi_k * c;
  const Eigen::VectorXd a2 = mapped.rowwise().squaredNorm();
  const Eigen::RowVectorXd b2 = phi_l.rowwise().squaredNorm().transpose();
  Eigen::MatrixXd d2 = -2.0 * mapped * phi_l.transpose();
  d2.colwise() += a2;
  d2.rowwise() += b2;
  // Softmax of -d / t, row max subtracted.
  Eigen::MatrixXd logits = -d2.cwiseMax(0.0).cwiseSqrt() / t;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - mx).exp();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

Eigen::VectorXd permutation_confidence(const Eigen::MatrixXd& pi) {
  const Eigen::Index n = pi.cols();
  Eigen::VectorXd conf = Eigen::VectorXd::Ones(pi.rows());
  if (n < 2) return conf;
  const double log_n = std::log(static_cast<double>(n));
  for (Eigen::Index i = 0; i < pi.rows(); ++i) {
    double h = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      double p = pi(i, j);
      if (p > 0.0) h -= p * std::log(p);
    }
    conf(i) = std::clamp(1.0 - h / log_n, 0.0, 1.0);
  }
  return conf;
}

namespace {

FlowField nn_from_permutation(const Eigen::MatrixXd& pi, const PointCloud& x_l, const PointCloud& x_k) {
  FlowField f;
  f.flow = pi * x_l.points - x_k.points;
  f.from_cloud = x_k.id;
  f.to_cloud = x_l.id;
  f.variant = FlowVariant::NN;
  return f;
}

}  // namespace

FlowField flow_nn(const BasisMatrix& phi_k, const Eigen::MatrixXd& c, const BasisMatrix& phi_l,
                  const PointCloud& x_l, const PointCloud& x_k, double t) {
  check_flow_inputs(phi_k.phi, c, phi_l.phi, x_l, x_k);
  return nn_from_permutation(soft_permutation(phi_k.phi, c, phi_l.phi, t), x_l, x_k);
}

FlowField flow_bs(const BasisMatrix& phi_k, const Eigen::MatrixXd& c, const BasisMatrix& phi_l,
                  const PointCloud& x_l, const PointCloud& x_k) {
  check_flow_inputs(phi_k.phi, c, phi_l.phi, x_l, x_k);
  if (numerical_rank(phi_l.phi) < phi_l.width()) throw DataError("target basis is rank deficient");
  Eigen::MatrixXd coords = pinv(phi_l.phi) * x_l.points;
  FlowField f;
  f.flow = phi_k.phi * (c * coords) - x_k.points;
  f.from_cloud = x_k.id;
  f.to_cloud = x_l.id;
  f.variant = FlowVariant::BS;
  return f;
}

FlowField blend_flows(const FlowField& f_nn, const FlowField& f_bs, const Eigen::VectorXd& confidence) {
  if (f_nn.flow.rows() != f_bs.flow.rows() || confidence.size() != f_nn.flow.rows())
    throw DataError("flow fields and confidence differ in length");
  if (f_nn.from_cloud != f_bs.from_cloud || f_nn.to_cloud != f_bs.to_cloud)
    throw DataError("flow fields belong to different cloud pairs");
  FlowField f;
  const Eigen::VectorXd w = confidence.cwiseMax(0.0).cwiseMin(1.0);
  f.flow = w.asDiagonal() * f_nn.flow + (Eigen::VectorXd::Ones(w.size()) - w).asDiagonal() * f_bs.flow;
  f.from_cloud = f_nn.from_cloud;
  f.to_cloud = f_nn.to_cloud;
  f.variant = FlowVariant::Blend;
  return f;
}

const FlowField& PairFlows::get(FlowVariant v) const {
  switch (v) {
    case FlowVariant::NN: return nn;
    case FlowVariant::BS: return bs;
    case FlowVariant::Blend: return blend;
  }
  return blend;
}

PairFlows compute_pair_flows(const BasisMatrix& phi_k, const Eigen::MatrixXd& c, const BasisMatrix& phi_l,
                             const PointCloud& x_l, const PointCloud& x_k, double t) {
  check_flow_inputs(phi_k.phi, c, phi_l.phi, x_l, x_k);
  PairFlows out;
  Eigen::MatrixXd pi = soft_permutation(phi_k.phi, c, phi_l.phi, t);
  out.confidence = permutation_confidence(pi);
  out.nn = nn_from_permutation(pi, x_l, x_k);
  out.bs = flow_bs(phi_k, c, phi_l, x_l, x_k);
  out.blend = blend_flows(out.nn, out.bs, out.confidence);
  return out;
}

}  // namespace fmsync
