#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmsync/fmap.h"
#include "fmsync/geometry.h"

namespace fmsync {

// Accuracy thresholds. A point is accurate when its relative error is below
// the relative bound OR its absolute error is below the absolute bound.
struct FlowThresholds {
  double strict_rel = 0.05;
  double strict_abs = 0.02;
  double relaxed_rel = 0.10;
  double relaxed_abs = 0.05;
  double outlier_rel = 0.30;
};

struct FlowMetrics {
  double l2_error = 0.0;  // mean end-point error
  double acc_s = 0.0;     // percent
  double acc_r = 0.0;     // percent
  double outlier = 0.0;   // percent
  Eigen::Index points = 0;
};

// Points with mask false are excluded. Throws DataError when nothing remains.
FlowMetrics flow_metrics(const Points& pred, const Points& gt,
                         const std::optional<std::vector<bool>>& mask = std::nullopt,
                         const FlowThresholds& thresholds = {});
FlowMetrics flow_metrics(const FlowField& pred, const FlowField& gt,
                         const std::optional<std::vector<bool>>& mask = std::nullopt,
                         const FlowThresholds& thresholds = {});

// Two-sided sum of squared nearest-neighbour distances.
double chamfer(const Points& warped, const Points& target);

// sum_i mean_{j in N(i)} ||f_i - f_j||^2 over the graph's neighbour lists.
double smoothness(const Points& flow, const KnnGraph& graph);

// Delta(x_i) = mean_{j in N(i)} (x_j - x_i).
Points laplacian_coordinates(const Points& points, const KnnGraph& graph);

// sum_i ||Delta_w(x_i^w) - Delta_l(x_l^inter(i))||^2, where x_l^inter(i) is the
// nearest point of the target to x_i^w. warped_graph is built over the warped
// source, target_graph over the target.
double laplacian_loss(const Points& warped, const Points& target, const KnnGraph& warped_graph,
                      const KnnGraph& target_graph);

// ||C_kl C_lk - I||_F^2.
double map_consistency(const Eigen::MatrixXd& c_kl, const Eigen::MatrixXd& c_lk);

// ||C_{k1 k2} C_{k2 k3} ... C_{kp k1} - I||_F for the maps along a closed cycle,
// listed in that multiplication order. `cycle` holds the visited cloud ids with
// the first repeated at the end.
double cycle_residual(const std::vector<Eigen::MatrixXd>& maps, const std::vector<int>& cycle);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct PairAggregate {
  MetricSummary l2_error, acc_s, acc_r, outlier;
  size_t pairs = 0;
};

PairAggregate aggregate(const std::vector<FlowMetrics>& per_pair);

// "mean ± std" with fixed precision.
std::string format_summary(const MetricSummary& s, int precision = 4);

}  // namespace fmsync
