#include "fmsync/synth.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Geometry>

#include "fmsync/error.h"

namespace fmsync {

const char* to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::MultibodyRigid: return "multibody_rigid";
    case SceneKind::Bend: return "bend";
    case SceneKind::Identity: return "identity";
  }
  return "identity";
}

SceneKind scene_kind_from_string(const std::string& name) {
  if (name == "multibody_rigid") return SceneKind::MultibodyRigid;
  if (name == "bend") return SceneKind::Bend;
  if (name == "identity") return SceneKind::Identity;
  throw DataError("unknown scene kind '" + name + "'");
}

void SceneSpec::validate() const {
  if (clouds < 2) throw DataError("scene needs K >= 2 clouds");
  if (points < 8) throw DataError("scene needs at least 8 points per cloud");
  if (kind != SceneKind::Bend && (bodies < 1 || bodies > 64))
    throw DataError("multibody scene needs 1 <= bodies <= 64");
  if (kind != SceneKind::Bend && points < 8 * bodies)
    throw DataError("multibody scene needs at least 8 points per body");
  if (!(outlier_frac >= 0.0 && outlier_frac < 1.0)) throw DataError("outlier fraction must lie in [0, 1)");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DataError("dropout rate must lie in [0, 1)");
  if (!(desc_noise >= 0.0) || !(coord_noise >= 0.0)) throw DataError("noise levels must be non-negative");
}

namespace {

// Per component; the displacement norm stays below sqrt(3) * 0.06 < 0.1 * diameter.
constexpr double kBendAmplitude = 0.06;
constexpr double kBendFrequency = std::numbers::pi;
constexpr double kMaxRotationDeg = 30.0;

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Eigen::Vector3d random_unit(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

// Surface samples of an axis-aligned box (half extents h) centred at c.
void sample_box(Rng& rng, const Eigen::Vector3d& c, const Eigen::Vector3d& h, int count, Points& out, int row) {
  const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
  const double total = areas[0] + areas[1] + areas[2];
  for (int i = 0; i < count; ++i) {
    double pick = uniform(rng, 0.0, total);
    int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
    Eigen::Vector3d p;
    for (int d = 0; d < 3; ++d) p(d) = uniform(rng, -h(d), h(d));
    p(axis) = uniform(rng, 0.0, 1.0) < 0.5 ? -h(axis) : h(axis);
    out.row(row + i) = (c + p).transpose();
  }
}

void sample_ellipsoid(Rng& rng, const Eigen::Vector3d& c, const Eigen::Vector3d& r, int count, Points& out, int row) {
  for (int i = 0; i < count; ++i) out.row(row + i) = (c + r.cwiseProduct(random_unit(rng))).transpose();
}

struct Canonical {
  Points points;
  Eigen::VectorXi labels;  // multibody only
  std::vector<Eigen::Vector3d> centers;
  std::vector<double> body_diameters;
};

Canonical multibody_canonical(Rng& rng, const SceneSpec& spec) {
  const int s_count = spec.bodies;
  const int grid = static_cast<int>(std::ceil(std::cbrt(static_cast<double>(s_count)) - 1e-9));
  // Bodies fit in a sphere of diameter 0.7; the pitch keeps every gap at least
  // 0.1 of the scene diameter.
  const double pitch = 0.77 / (1.0 - 0.1 * std::sqrt(3.0) * (grid - 1)) + 0.05;

  Canonical out;
  out.points.resize(spec.points, 3);
  out.labels.resize(spec.points);
  int row = 0;
  for (int s = 0; s < s_count; ++s) {
    const int count = spec.points / s_count + (s < spec.points % s_count ? 1 : 0);
    Eigen::Vector3d c(pitch * (s % grid), pitch * ((s / grid) % grid), pitch * (s / (grid * grid)));
    Eigen::Vector3d h(uniform(rng, 0.1, 0.2), uniform(rng, 0.1, 0.2), uniform(rng, 0.1, 0.2));
    if (s % 2 == 0)
      sample_box(rng, c, h, count, out.points, row);
    else
      sample_ellipsoid(rng, c, h, count, out.points, row);
    out.labels.segment(row, count).setConstant(s);
    out.centers.push_back(c);
    out.body_diameters.push_back(2.0 * h.norm());
    row += count;
  }
  return out;
}

// Jittered grid on a 1.0 x 0.6 sheet in the z = 0 plane.
Canonical sheet_canonical(Rng& rng, const SceneSpec& spec) {
  const double width = 1.0, height = 0.6;
  const int nx = static_cast<int>(std::ceil(std::sqrt(spec.points * width / height)));
  const int ny = (spec.points + nx - 1) / nx;
  const double dx = width / nx, dy = height / ny;
  std::vector<Eigen::Vector3d> grid;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      grid.emplace_back((i + 0.5 + uniform(rng, -0.2, 0.2)) * dx, (j + 0.5 + uniform(rng, -0.2, 0.2)) * dy, 0.0);
  std::shuffle(grid.begin(), grid.end(), rng);
  grid.resize(spec.points);
  std::sort(grid.begin(), grid.end(), [](const auto& a, const auto& b) {
    return a.y() < b.y() || (a.y() == b.y() && a.x() < b.x());
  });
  Canonical out;
  out.points.resize(spec.points, 3);
  for (int i = 0; i < spec.points; ++i) out.points.row(i) = grid[i].transpose();
  return out;
}

Eigen::Matrix4d random_pose(Rng& rng, const Eigen::Vector3d& center, double body_diameter) {
  const double angle = uniform(rng, -kMaxRotationDeg, kMaxRotationDeg) * std::numbers::pi / 180.0;
  Eigen::Matrix3d rot = Eigen::AngleAxisd(angle, random_unit(rng)).toRotationMatrix();
  Eigen::Vector3d shift = random_unit(rng) * uniform(rng, 0.0, 0.3 * body_diameter);
  Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
  pose.topLeftCorner<3, 3>() = rot;
  pose.topRightCorner<3, 1>() = center + shift - rot * center;
  return pose;
}

Eigen::RowVector3d bend(const Eigen::RowVector3d& x, const Eigen::Vector3d& phase) {
  return kBendAmplitude * Eigen::RowVector3d(std::sin(kBendFrequency * x.y() + phase.x()),
                                             std::sin(kBendFrequency * x.z() + phase.y()),
                                             std::sin(kBendFrequency * x.x() + phase.z()));
}

}  // namespace

double SyntheticScene::diameter() const {
  Eigen::RowVector3d lo = canonical.colwise().minCoeff();
  Eigen::RowVector3d hi = canonical.colwise().maxCoeff();
  return (hi - lo).norm();
}

std::vector<Eigen::Matrix4d> SyntheticScene::relative_transforms(int source, int target) const {
  std::vector<Eigen::Matrix4d> out;
  if (body_poses.empty()) return out;
  for (size_t s = 0; s < body_poses[source].size(); ++s)
    out.push_back(body_poses[target][s] * body_poses[source][s].inverse());
  return out;
}

SyntheticScene generate(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticScene scene;
  scene.spec = spec;

  // Identity scenes are static rigid bodies, so they carry a segmentation too.
  const bool rigid = spec.kind != SceneKind::Bend;
  Canonical canon = rigid ? multibody_canonical(rng, spec) : sheet_canonical(rng, spec);
  scene.canonical = canon.points;
  const int n = spec.points;
  const int k_count = spec.clouds;

  // Full (pre-dropout) observed positions per frame.
  std::vector<Points> full(k_count, Points(n, 3));
  std::normal_distribution<double> coord_noise(0.0, spec.coord_noise > 0.0 ? spec.coord_noise : 1.0);
  for (int f = 0; f < k_count; ++f) {
    if (spec.kind == SceneKind::MultibodyRigid) {
      std::vector<Eigen::Matrix4d> poses;
      for (int s = 0; s < spec.bodies; ++s) poses.push_back(random_pose(rng, canon.centers[s], canon.body_diameters[s]));
      for (int i = 0; i < n; ++i) {
        const Eigen::Matrix4d& pose = poses[canon.labels(i)];
        Eigen::Vector3d x = canon.points.row(i).transpose();
        full[f].row(i) = (pose.topLeftCorner<3, 3>() * x + pose.topRightCorner<3, 1>()).transpose();
      }
      scene.body_poses.push_back(std::move(poses));
    } else if (spec.kind == SceneKind::Bend) {
      Eigen::Vector3d phase(uniform(rng, 0.0, 2.0 * std::numbers::pi), uniform(rng, 0.0, 2.0 * std::numbers::pi),
                            uniform(rng, 0.0, 2.0 * std::numbers::pi));
      for (int i = 0; i < n; ++i) full[f].row(i) = canon.points.row(i) + bend(canon.points.row(i), phase);
    } else {
      full[f] = canon.points;
      scene.body_poses.emplace_back(spec.bodies, Eigen::Matrix4d::Identity());
    }
    if (spec.coord_noise > 0.0)
      for (int i = 0; i < n; ++i)
        for (int d = 0; d < 3; ++d) full[f](i, d) += coord_noise(rng);
  }

  // Dropout, keeping at least 4 points per body (or 4 overall).
  std::vector<std::vector<bool>> present(k_count, std::vector<bool>(n, true));
  for (int f = 0; f < k_count; ++f) {
    if (spec.dropout <= 0.0) continue;
    for (int i = 0; i < n; ++i) present[f][i] = uniform(rng, 0.0, 1.0) >= spec.dropout;
    const int groups = rigid ? spec.bodies : 1;
    for (int s = 0; s < groups; ++s) {
      int kept = 0;
      for (int i = 0; i < n; ++i)
        if (present[f][i] && (groups == 1 || canon.labels(i) == s)) ++kept;
      for (int i = 0; i < n && kept < 4; ++i) {
        if (!present[f][i] && (groups == 1 || canon.labels(i) == s)) {
          present[f][i] = true;
          ++kept;
        }
      }
    }
  }

  // Observed clouds, segmentation and descriptors.
  const Eigen::RowVector3d lo = scene.canonical.colwise().minCoeff();
  const Eigen::RowVector3d hi = scene.canonical.colwise().maxCoeff();
  std::normal_distribution<double> desc_noise(0.0, spec.desc_noise > 0.0 ? spec.desc_noise : 1.0);
  std::vector<std::vector<int>> row_of(k_count, std::vector<int>(n, -1));
  for (int f = 0; f < k_count; ++f) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (present[f][i]) {
        row_of[f][i] = static_cast<int>(idx.size());
        idx.push_back(i);
      }
    const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
    Points pts(m, 3);
    Eigen::MatrixXd desc(m, 3);
    Eigen::VectorXi labels(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const int i = idx[r];
      pts.row(r) = full[f].row(i);
      if (uniform(rng, 0.0, 1.0) < spec.outlier_frac) {
        for (int d = 0; d < 3; ++d) desc(r, d) = uniform(rng, lo(d), hi(d));
      } else {
        desc.row(r) = scene.canonical.row(i);
        if (spec.desc_noise > 0.0)
          for (int d = 0; d < 3; ++d) desc(r, d) += desc_noise(rng);
      }
      if (rigid) labels(r) = canon.labels(i);
    }
    scene.clouds.push_back(PointCloud::make(std::move(pts), f));
    scene.descriptors.push_back(DescriptorSet{std::move(desc), f});
    if (rigid)
      scene.segmentation.push_back(RigidSegmentation{std::move(labels), spec.bodies});
    scene.canonical_index.push_back(std::move(idx));
  }

  // Ground truth per directed pair.
  for (const Edge& e : complete_edges(k_count)) {
    const auto& src_idx = scene.canonical_index[e.source];
    FlowField flow;
    flow.flow.resize(static_cast<Eigen::Index>(src_idx.size()), 3);
    flow.from_cloud = e.source;
    flow.to_cloud = e.target;
    std::vector<bool> vis(src_idx.size());
    std::vector<std::pair<int, int>> pairs;
    for (size_t r = 0; r < src_idx.size(); ++r) {
      const int i = src_idx[r];
      flow.flow.row(static_cast<Eigen::Index>(r)) = full[e.target].row(i) - full[e.source].row(i);
      vis[r] = present[e.target][i];
      if (vis[r]) pairs.emplace_back(static_cast<int>(r), row_of[e.target][i]);
    }
    CorrespondenceSet corr;
    corr.pairs.resize(static_cast<Eigen::Index>(pairs.size()), 2);
    for (size_t p = 0; p < pairs.size(); ++p) {
      corr.pairs(static_cast<Eigen::Index>(p), 0) = pairs[p].first;
      corr.pairs(static_cast<Eigen::Index>(p), 1) = pairs[p].second;
    }
    scene.gt_flows[e] = std::move(flow);
    scene.gt_corr[e] = std::move(corr);
    scene.visible[e] = std::move(vis);
    if (rigid)
      scene.gt_maps[e] = gt_map_from_rigid(scene.segmentation[e.source], scene.relative_transforms(e.source, e.target));
  }
  return scene;
}

Eigen::MatrixXd gt_map_from_rigid(const RigidSegmentation& seg, const std::vector<Eigen::Matrix4d>& transforms,
                                  const std::optional<std::vector<int>>& body_perm) {
  const int s_count = seg.body_count;
  if (static_cast<int>(transforms.size()) != s_count) {
    std::ostringstream msg;
    msg << "segmentation has " << s_count << " bodies but " << transforms.size() << " transforms were given";
    throw DataError(msg.str());
  }
  std::vector<int> perm(s_count);
  for (int s = 0; s < s_count; ++s) perm[s] = s;
  if (body_perm) {
    if (static_cast<int>(body_perm->size()) != s_count) throw DataError("body permutation has the wrong length");
    std::vector<int> sorted = *body_perm;
    std::sort(sorted.begin(), sorted.end());
    for (int s = 0; s < s_count; ++s)
      if (sorted[s] != s) throw DataError("body permutation is not a permutation");
    perm = *body_perm;
  }
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(4 * s_count, 4 * s_count);
  for (int s = 0; s < s_count; ++s) c.block<4, 4>(4 * s, 4 * perm[s]) = transforms[s].transpose();
  return c;
}

}  // namespace fmsync
