#include "fmsync/metrics.h"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "fmsync/error.h"

namespace fmsync {

FlowMetrics flow_metrics(const Points& pred, const Points& gt, const std::optional<std::vector<bool>>& mask,
                         const FlowThresholds& th) {
  if (pred.rows() != gt.rows()) throw DataError("predicted and ground-truth flows differ in length");
  if (mask && static_cast<Eigen::Index>(mask->size()) != gt.rows())
    throw DataError("mask length does not match the flow");

  FlowMetrics out;
  double err_sum = 0.0;
  Eigen::Index strict = 0, relaxed = 0, outliers = 0;
  for (Eigen::Index i = 0; i < gt.rows(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const double e = (pred.row(i) - gt.row(i)).norm();
    const double rel = e / std::max(gt.row(i).norm(), 1e-12);
    err_sum += e;
    strict += (rel < th.strict_rel || e < th.strict_abs) ? 1 : 0;
    relaxed += (rel < th.relaxed_rel || e < th.relaxed_abs) ? 1 : 0;
    outliers += rel > th.outlier_rel ? 1 : 0;
    ++out.points;
  }
  if (out.points == 0) throw DataError("mask selects no points");
  const double n = static_cast<double>(out.points);
  out.l2_error = err_sum / n;
  out.acc_s = 100.0 * static_cast<double>(strict) / n;
  out.acc_r = 100.0 * static_cast<double>(relaxed) / n;
  out.outlier = 100.0 * static_cast<double>(outliers) / n;
  return out;
}

FlowMetrics flow_metrics(const FlowField& pred, const FlowField& gt, const std::optional<std::vector<bool>>& mask,
                         const FlowThresholds& thresholds) {
  return flow_metrics(pred.flow, gt.flow, mask, thresholds);
}

double chamfer(const Points& warped, const Points& target) {
  if (warped.rows() == 0 || target.rows() == 0) throw DataError("chamfer distance needs non-empty clouds");
  KnnResult fwd = knn_query(target, warped, 1);
  KnnResult bwd = knn_query(warped, target, 1);
  return fwd.distances.col(0).squaredNorm() + bwd.distances.col(0).squaredNorm();
}

double smoothness(const Points& flow, const KnnGraph& graph) {
  if (graph.size() != flow.rows()) throw DataError("graph size does not match the flow");
  double total = 0.0;
  for (Eigen::Index i = 0; i < flow.rows(); ++i) {
    const auto& nbs = graph.neighbors[i];
    if (nbs.empty()) continue;
    double s = 0.0;
    for (int j : nbs) s += (flow.row(i) - flow.row(j)).squaredNorm();
    total += s / static_cast<double>(nbs.size());
  }
  return total;
}

Points laplacian_coordinates(const Points& points, const KnnGraph& graph) {
  if (graph.size() != points.rows()) throw DataError("graph size does not match the cloud");
  Points delta = Points::Zero(points.rows(), 3);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto& nbs = graph.neighbors[i];
    if (nbs.empty()) continue;
    for (int j : nbs) delta.row(i) += points.row(j) - points.row(i);
    delta.row(i) /= static_cast<double>(nbs.size());
  }
  return delta;
}

double laplacian_loss(const Points& warped, const Points& target, const KnnGraph& warped_graph,
                      const KnnGraph& target_graph) {
  Points dw = laplacian_coordinates(warped, warped_graph);
  Points dl = laplacian_coordinates(target, target_graph);
  KnnResult nearest = knn_query(target, warped, 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < warped.rows(); ++i)
    total += (dw.row(i) - dl.row(nearest.indices(i, 0))).squaredNorm();
  return total;
}

double map_consistency(const Eigen::MatrixXd& c_kl, const Eigen::MatrixXd& c_lk) {
  if (c_kl.cols() != c_lk.rows() || c_kl.rows() != c_lk.cols()) throw DataError("maps are not composable");
  return (c_kl * c_lk - Eigen::MatrixXd::Identity(c_kl.rows(), c_kl.rows())).squaredNorm();
}

double cycle_residual(const std::vector<Eigen::MatrixXd>& maps, const std::vector<int>& cycle) {
  if (cycle.size() < 2 || cycle.front() != cycle.back()) throw DataError("open cycle: first and last ids differ");
  if (maps.size() != cycle.size() - 1) throw DataError("cycle length does not match the number of maps");
  Eigen::MatrixXd prod = maps.front();
  for (size_t i = 1; i < maps.size(); ++i) {
    if (prod.cols() != maps[i].rows()) throw DataError("maps along the cycle are not composable");
    prod = prod * maps[i];
  }
  if (prod.rows() != prod.cols()) throw DataError("cycle product is not square");
  return (prod - Eigen::MatrixXd::Identity(prod.rows(), prod.cols())).norm();
}

namespace {

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  for (double v : values) s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(values.size()));
  return s;
}

}  // namespace

PairAggregate aggregate(const std::vector<FlowMetrics>& per_pair) {
  if (per_pair.empty()) throw DataError("aggregate needs at least one pair");
  std::vector<double> l2, s, r, o;
  for (const FlowMetrics& m : per_pair) {
    l2.push_back(m.l2_error);
    s.push_back(m.acc_s);
    r.push_back(m.acc_r);
    o.push_back(m.outlier);
  }
  PairAggregate out;
  out.l2_error = summarize(l2);
  out.acc_s = summarize(s);
  out.acc_r = summarize(r);
  out.outlier = summarize(o);
  out.pairs = per_pair.size();
  return out;
}

std::string format_summary(const MetricSummary& s, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << s.mean << " ± " << s.std;
  return os.str();
}

}  // namespace fmsync
