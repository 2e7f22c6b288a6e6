#include "fmsync/sync.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fmsync/error.h"

namespace fmsync {

std::vector<Edge> complete_edges(int count) {
  std::vector<Edge> edges;
  for (int k = 0; k < count; ++k)
    for (int l = 0; l < count; ++l)
      if (k != l) edges.push_back({k, l});
  return edges;
}

void CloudGraph::validate() const {
  const int k = cloud_count();
  if (k < 2) throw DataError("synchronization needs at least two clouds");
  if (!clouds.empty() && static_cast<int>(clouds.size()) != k)
    throw DataError("cloud and basis counts differ");
  const Eigen::Index width = bases.front().width();
  for (int i = 0; i < k; ++i) {
    if (bases[i].width() != width) throw DataError("all bases must share the same width M");
    if (!clouds.empty() && clouds[i].size() != bases[i].points())
      throw DataError("basis row count does not match its point cloud");
  }
  if (edges.empty()) throw DataError("cloud graph has no edges");
  for (const Edge& e : edges) {
    if (e.source < 0 || e.source >= k || e.target < 0 || e.target >= k || e.source == e.target) {
      std::ostringstream msg;
      msg << "invalid edge (" << e.source << ", " << e.target << ")";
      throw DataError(msg.str());
    }
    if (std::find(edges.begin(), edges.end(), e.reversed()) == edges.end()) {
      std::ostringstream msg;
      msg << "edge (" << e.source << ", " << e.target << ") has no reverse edge";
      throw DataError(msg.str());
    }
    auto it = corrs.find(e);
    if (it == corrs.end()) {
      std::ostringstream msg;
      msg << "no correspondences for edge (" << e.source << ", " << e.target << ")";
      throw DataError(msg.str());
    }
    it->second.validate(bases[e.source].points(), bases[e.target].points());
  }
}

Eigen::MatrixXd connection_laplacian(const MapSet& maps, int cloud_count, int width) {
  const Eigen::Index m = width;
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(cloud_count * m, cloud_count * m);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
  for (const auto& [e, c] : maps) {
    if (e.source < 0 || e.source >= cloud_count || e.target < 0 || e.target >= cloud_count)
      throw DataError("map edge refers to a cloud outside the graph");
    if (c.rows() != m || c.cols() != m) throw DataError("map shape does not match the basis width");
    if (!maps.contains(e.reversed())) {
      std::ostringstream msg;
      msg << "missing direction: map (" << e.target << ", " << e.source << ") absent";
      throw DataError(msg.str());
    }
    const Eigen::Index k = e.source * m;
    const Eigen::Index l = e.target * m;
    lap.block(k, k, m, m) += eye;
    lap.block(l, l, m, m) += c.transpose() * c;
    lap.block(k, l, m, m) -= c;
    lap.block(l, k, m, m) -= c.transpose();
  }
  return 0.5 * (lap + lap.transpose());
}

CanonicalFunctions solve_canonical(const Eigen::MatrixXd& laplacian, int v, int width,
                                   const EigenOptions& opts) {
  if (laplacian.rows() != laplacian.cols()) throw DataError("connection Laplacian must be square");
  if (v < 1 || v > laplacian.rows()) {
    std::ostringstream msg;
    msg << "canonical function count V=" << v << " outside [1, " << laplacian.rows() << "]";
    throw DataError(msg.str());
  }
  EigenPairs pairs = smallest_eigenpairs(laplacian, v, opts);
  CanonicalFunctions out;
  out.width = width;
  out.eigenvalues = std::move(pairs.values);
  out.h = std::move(pairs.vectors);
  const double ortho = (out.h.transpose() * out.h - Eigen::MatrixXd::Identity(v, v)).norm();
  if (!(ortho < 1e-8)) {
    // Iterative eigenvectors can lose orthogonality; a QR pass restores it.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(out.h);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(out.h.rows(), v);
    out.h = q;
  }
  return out;
}

double cycle_energy(const MapSet& maps, const CanonicalFunctions& canonical) {
  double e = 0.0;
  for (const auto& [edge, c] : maps)
    e += (canonical.block(edge.source) - c * canonical.block(edge.target)).squaredNorm();
  return e;
}

PairSolve solve_pair_map(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& h_k,
                         const Eigen::MatrixXd& h_l, double ridge) {
  const Eigen::Index m = a.cols();
  if (b.rows() != a.rows() || b.cols() != m) throw DataError("pair solve: a and b shapes differ");
  if (h_k.rows() != m || h_l.rows() != m || h_k.cols() != h_l.cols())
    throw DataError("pair solve: canonical blocks must be M x V");

  const Eigen::MatrixXd data_gram = a.transpose() * a;
  const Eigen::MatrixXd cycle_gram = h_l * h_l.transpose();
  const Eigen::MatrixXd rhs = a.transpose() * b + h_k * h_l.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> left(data_gram);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> right(cycle_gram);
  const Eigen::VectorXd p = left.eigenvalues().cwiseMax(0.0);
  const Eigen::VectorXd q = right.eigenvalues().cwiseMax(0.0);

  // Eigenvalues of the Kronecker system are p_i + q_j.
  Eigen::MatrixXd denom = p.replicate(1, m) + q.transpose().replicate(m, 1);
  const double largest = denom.maxCoeff();
  PairSolve out;
  if (!(largest > 0.0)) throw SolverError("pair system is identically zero");
  if (denom.minCoeff() <= kPinvRelTol * largest) {
    out.ridge_used = true;
    out.ridge = ridge * largest;
    denom.array() += out.ridge;
    std::ostringstream msg;
    msg << "pair map system is near singular; added ridge " << out.ridge;
    warn(msg.str());
  }
  if (!(denom.minCoeff() > 0.0)) throw SolverError("pair map system is singular after ridge");

  const Eigen::MatrixXd& u = left.eigenvectors();
  const Eigen::MatrixXd& w = right.eigenvectors();
  Eigen::MatrixXd rotated = u.transpose() * rhs * w;
  rotated.array() /= denom.array();
  out.c = u * rotated * w.transpose();
  return out;
}

void SyncConfig::validate() const {
  if (v < 0) throw DataError("V must be positive");
  if (!(tol > 0.0)) throw DataError("sync tolerance must be positive");
  if (max_iters < 1) throw DataError("sync needs at least one iteration");
}

double mean_relative_change(const MapSet& before, const MapSet& after) {
  if (before.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [e, old_c] : before) {
    const Eigen::MatrixXd& new_c = after.at(e);
    total += ((new_c - old_c).cwiseAbs().array() / (old_c.cwiseAbs().array() + 1e-8)).mean();
  }
  return total / static_cast<double>(before.size());
}

namespace {

double data_energy(const std::map<Edge, AlignedRows>& rows, const MapSet& maps, double kappa) {
  double e = 0.0;
  for (const auto& [edge, r] : rows) e += robust_energy(r, maps.at(edge), kappa);
  return e;
}

}  // namespace

SyncResult synchronize(const CloudGraph& graph, const MapSet& init_maps, const SyncConfig& cfg,
                       const IrlsConfig& irls) {
  graph.validate();
  cfg.validate();
  irls.validate();
  const int k = graph.cloud_count();
  const int m = static_cast<int>(graph.bases.front().width());

  int v = cfg.v == 0 ? m - 2 : cfg.v;
  if (v < 1) v = 1;
  if (v > k * m - 1) {
    std::ostringstream msg;
    msg << "V=" << v << " exceeds KM-1=" << (k * m - 1) << "; clamping";
    warn(msg.str());
    v = k * m - 1;
  }

  for (const Edge& e : graph.edges) {
    auto it = init_maps.find(e);
    if (it == init_maps.end()) {
      std::ostringstream msg;
      msg << "no initial map for edge (" << e.source << ", " << e.target << ")";
      throw DataError(msg.str());
    }
    if (it->second.rows() != m || it->second.cols() != m) throw DataError("initial map has the wrong shape");
  }

  // Optimization frame.
  std::vector<Eigen::MatrixXd> frame_bases;
  std::vector<Preconditioner> pre;
  for (const BasisMatrix& basis : graph.bases) {
    if (cfg.precondition) {
      auto [u, s] = precondition(basis);
      frame_bases.push_back(std::move(u.phi));
      pre.push_back(std::move(s));
    } else {
      frame_bases.push_back(basis.phi);
    }
  }

  MapSet maps;
  std::map<Edge, AlignedRows> rows;
  for (const Edge& e : graph.edges) {
    const Eigen::MatrixXd& c0 = init_maps.at(e);
    maps[e] = cfg.precondition ? convert_map_basis(c0, pre[e.source], pre[e.target], MapFrame::ToPreconditioned)
                               : c0;
    rows[e] = gather_basis_rows(graph.corrs.at(e), frame_bases[e.source], frame_bases[e.target]);
  }

  SyncResult result;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    Eigen::MatrixXd lap = connection_laplacian(maps, k, m);
    result.canonical = solve_canonical(lap, v, m, cfg.eigen);
    if (iter == 1)
      result.energy.push_back({cycle_energy(maps, result.canonical), data_energy(rows, maps, irls.kappa)});

    MapSet updated;
    for (const Edge& e : graph.edges) {
      const AlignedRows& r = rows.at(e);
      Eigen::MatrixXd c = maps.at(e);
      // One IRLS pass per outer iteration (T = 1 by default), warm-started.
      for (int t = 0; t < irls.iters; ++t) {
        Eigen::VectorXd res = row_residuals(r, c);
        Eigen::VectorXd sqrt_w(res.size());
        for (Eigen::Index i = 0; i < res.size(); ++i) sqrt_w(i) = std::sqrt(huber_weight(res(i), irls.kappa));
        Eigen::MatrixXd a = sqrt_w.asDiagonal() * r.source;
        Eigen::MatrixXd b = sqrt_w.asDiagonal() * r.target;
        c = solve_pair_map(a, b, result.canonical.block(e.source), result.canonical.block(e.target),
                           irls.tikhonov)
                .c;
      }
      updated[e] = std::move(c);
    }

    result.final_change = mean_relative_change(maps, updated);
    maps = std::move(updated);
    result.energy.push_back({cycle_energy(maps, result.canonical), data_energy(rows, maps, irls.kappa)});
    result.iters_used = iter;
    if (result.final_change < cfg.tol) {
      result.converged = true;
      break;
    }
  }

  for (auto& [e, c] : maps) {
    result.maps[e] = cfg.precondition ? convert_map_basis(c, pre[e.source], pre[e.target], MapFrame::FromPreconditioned)
                                      : c;
  }
  return result;
}

}  // namespace fmsync
