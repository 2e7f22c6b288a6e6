#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmsync/bases.h"
#include "fmsync/correspond.h"
#include "fmsync/fmap.h"
#include "fmsync/geometry.h"
#include "fmsync/sync.h"

namespace fmsync {

enum class SceneKind { MultibodyRigid, Bend, Identity };

const char* to_string(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& name);

struct SceneSpec {
  SceneKind kind = SceneKind::Bend;
  int clouds = 4;
  int points = 1000;  // per cloud, before dropout
  int bodies = 2;     // multibody_rigid only
  double desc_noise = 0.0;
  double outlier_frac = 0.0;
  double coord_noise = 0.0;
  double dropout = 0.0;  // per-frame uniform point dropout rate
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticScene {
  SceneSpec spec;
  Points canonical;                              // shared pre-motion coordinates
  std::vector<PointCloud> clouds;                // observed frames (after dropout)
  std::vector<std::vector<int>> canonical_index; // per cloud row -> canonical point
  std::vector<DescriptorSet> descriptors;
  std::vector<RigidSegmentation> segmentation;   // multibody only
  // Per frame, per body: 4x4 pose taking canonical coordinates to the frame.
  std::vector<std::vector<Eigen::Matrix4d>> body_poses;
  std::map<Edge, FlowField> gt_flows;
  std::map<Edge, CorrespondenceSet> gt_corr;
  // Source points whose counterpart survives dropout in the target.
  std::map<Edge, std::vector<bool>> visible;
  // Affinity-basis ground-truth maps (multibody only).
  std::map<Edge, Eigen::MatrixXd> gt_maps;

  double diameter() const;
  // Relative per-body transforms taking frame `source` to frame `target`.
  std::vector<Eigen::Matrix4d> relative_transforms(int source, int target) const;
};

SyntheticScene generate(const SceneSpec& spec);

// Block-structured C for affinity bases: block (s, perm[s]) is T_s^T, so a
// row [x 1] of body s maps to [T_s (x,1)] in body perm[s]. Identity
// permutation when none is given.
Eigen::MatrixXd gt_map_from_rigid(const RigidSegmentation& seg, const std::vector<Eigen::Matrix4d>& transforms,
                                  const std::optional<std::vector<int>>& body_perm = std::nullopt);

}  // namespace fmsync
