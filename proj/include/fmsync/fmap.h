#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "fmsync/bases.h"
#include "fmsync/correspond.h"
#include "fmsync/geometry.h"

namespace fmsync {

inline constexpr double kDefaultHuberScale = 0.05;
inline constexpr int kDefaultPairwiseIters = 2;
inline constexpr double kDefaultTemperature = 0.1;

// C_kl maps coefficients of functions on cloud l (from_cloud) to coefficients
// on cloud k (to_cloud), i.e. Phi_k C_kl ~ Pi_kl Phi_l.
struct FunctionalMap {
  Eigen::MatrixXd c;
  int from_cloud = 0;
  int to_cloud = 0;
  double residual = 0.0;  // robust energy at c
};

struct IrlsConfig {
  double kappa = kDefaultHuberScale;
  int iters = kDefaultPairwiseIters;
  // Relative ridge for underdetermined or rank-deficient solves.
  double tikhonov = 1e-8;

  void validate() const;
};

// Huber influence: 1 below kappa, kappa / r above.
double huber_weight(double r, double kappa);

// Robust penalty whose IRLS surrogate is w(r0) r^2: r^2 below kappa,
// 2 kappa r - kappa^2 above.
double huber_rho(double r, double kappa);

// Per-row residual norms ||target_i - source_i C||.
Eigen::VectorXd row_residuals(const AlignedRows& rows, const Eigen::MatrixXd& c);

// E_kl(C): sum of huber_rho over the row residuals.
double robust_energy(const AlignedRows& rows, const Eigen::MatrixXd& c, double kappa);

// argmin_C ||a C - b||_F. Falls back to a Tikhonov-regularized normal
// equation (with a warning) when a has fewer rows than columns or is rank
// deficient.
Eigen::MatrixXd solve_least_squares(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                    double tikhonov);

// Huber-robust IRLS estimate of C from aligned basis rows. The first pass
// uses unit weights unless a warm start is given.
FunctionalMap estimate_fmap(const AlignedRows& rows, const IrlsConfig& cfg = {},
                            const std::optional<Eigen::MatrixXd>& warm_start = std::nullopt);

enum class FlowVariant { NN, BS, Blend };

const char* to_string(FlowVariant v);
FlowVariant flow_variant_from_string(const std::string& name);

// Per-point displacement from cloud from_cloud (k) toward cloud to_cloud (l).
struct FlowField {
  Points flow;
  int from_cloud = 0;
  int to_cloud = 0;
  FlowVariant variant = FlowVariant::Blend;
};

// Row-stochastic soft permutation softmax(-||(Phi_k C)_i - (Phi_l)_j|| / t).
Eigen::MatrixXd soft_permutation(const Eigen::MatrixXd& phi_k, const Eigen::MatrixXd& c,
                                 const Eigen::MatrixXd& phi_l, double t);

// Per-row confidence 1 - H(Pi_i) / log(N_l): 1 for a one-hot row, 0 for uniform.
Eigen::VectorXd permutation_confidence(const Eigen::MatrixXd& pi);

// F^nn = Pi X_l - X_k.
FlowField flow_nn(const BasisMatrix& phi_k, const Eigen::MatrixXd& c, const BasisMatrix& phi_l,
                  const PointCloud& x_l, const PointCloud& x_k, double t = kDefaultTemperature);

// F^bs = Phi_k C Phi_l^+ X_l - X_k.
FlowField flow_bs(const BasisMatrix& phi_k, const Eigen::MatrixXd& c, const BasisMatrix& phi_l,
                  const PointCloud& x_l, const PointCloud& x_k);

// w * F^nn + (1 - w) * F^bs, per point.
FlowField blend_flows(const FlowField& f_nn, const FlowField& f_bs, const Eigen::VectorXd& confidence);

// Convenience: every variant for one directed pair, sharing one soft permutation.
struct PairFlows {
  FlowField nn;
  FlowField bs;
  FlowField blend;
  Eigen::VectorXd confidence;

  const FlowField& get(FlowVariant v) const;
};

PairFlows compute_pair_flows(const BasisMatrix& phi_k, const Eigen::MatrixXd& c,
                             const BasisMatrix& phi_l, const PointCloud& x_l, const PointCloud& x_k,
                             double t = kDefaultTemperature);

}  // namespace fmsync
