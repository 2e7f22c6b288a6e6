#pragma once

#include <compare>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "fmsync/bases.h"
#include "fmsync/correspond.h"
#include "fmsync/fmap.h"
#include "fmsync/geometry.h"
#include "fmsync/linalg.h"

namespace fmsync {

inline constexpr double kDefaultSyncTol = 3e-4;
inline constexpr int kDefaultSyncMaxIters = 20;

// Directed edge (source, target). It carries the map C_{source,target}, which
// transports functions on `target` into the basis of `source`, and the flow
// from `source` points toward `target`.
struct Edge {
  int source = 0;
  int target = 0;

  auto operator<=>(const Edge&) const = default;
  Edge reversed() const { return {target, source}; }
};

using MapSet = std::map<Edge, Eigen::MatrixXd>;

// Both directions of every unordered pair over `count` clouds.
std::vector<Edge> complete_edges(int count);

struct CloudGraph {
  std::vector<PointCloud> clouds;  // optional; when present sizes must match bases
  std::vector<BasisMatrix> bases;
  std::vector<Edge> edges;
  std::map<Edge, CorrespondenceSet> corrs;

  int cloud_count() const { return static_cast<int>(bases.size()); }
  // Throws DataError unless K >= 2, widths agree, and every edge has valid
  // correspondences plus its reverse edge.
  void validate() const;
};

// KM x KM block matrix: off-diagonal block (k,l) is -(C_kl + C_lk^T), diagonal
// block k is sum_{(k,l)} I + sum_{(l,k)} C_lk^T C_lk. Returned symmetrized.
Eigen::MatrixXd connection_laplacian(const MapSet& maps, int cloud_count, int width);

// Stacked canonical functions H (KM x V) with H^T H = I.
struct CanonicalFunctions {
  Eigen::MatrixXd h;
  int width = 0;  // M
  Eigen::VectorXd eigenvalues;

  Eigen::MatrixXd block(int cloud) const { return h.middleRows(static_cast<Eigen::Index>(cloud) * width, width); }
};

CanonicalFunctions solve_canonical(const Eigen::MatrixXd& laplacian, int v, int width,
                                   const EigenOptions& opts = {});

// sum over edges of ||H_k - C_kl H_l||_F^2.
double cycle_energy(const MapSet& maps, const CanonicalFunctions& canonical);

struct PairSolve {
  Eigen::MatrixXd c;
  bool ridge_used = false;
  double ridge = 0.0;  // absolute amount added to the system diagonal
};

// Minimizer of ||a C - b||_F^2 + ||h_k - C h_l||_F^2, i.e. the solution of
//   (I (x) a^T a + h_l h_l^T (x) I) vec(C) = vec(a^T b + h_k h_l^T).
// Solved as a Sylvester equation through eigendecompositions of a^T a and
// h_l h_l^T. A ridge of `ridge` times the largest system eigenvalue is added
// when the system is near singular.
PairSolve solve_pair_map(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& h_k,
                         const Eigen::MatrixXd& h_l, double ridge = 1e-8);

struct SyncConfig {
  int v = 0;  // canonical function count; 0 selects M - 2
  double tol = kDefaultSyncTol;
  int max_iters = kDefaultSyncMaxIters;
  bool precondition = true;
  EigenOptions eigen{};

  void validate() const;
};

struct SyncEnergy {
  double cycle = 0.0;
  double data = 0.0;
  double total() const { return cycle + data; }
};

struct SyncResult {
  MapSet maps;
  CanonicalFunctions canonical;
  int iters_used = 0;
  double final_change = 0.0;
  bool converged = false;
  // energy[0] is taken after the first spectral step, before any map update;
  // energy[t] after the map update of iteration t. Evaluated in the frame the
  // solver optimizes (preconditioned when enabled).
  std::vector<SyncEnergy> energy;
};

// Mean over maps of mean_ij |C_new - C_old| / (|C_old| + 1e-8).
double mean_relative_change(const MapSet& before, const MapSet& after);

SyncResult synchronize(const CloudGraph& graph, const MapSet& init_maps, const SyncConfig& cfg = {},
                       const IrlsConfig& irls = {.iters = 1});

}  // namespace fmsync
