#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fmsync/bases.h"
#include "fmsync/correspond.h"
#include "fmsync/fmap.h"
#include "fmsync/io.h"
#include "fmsync/metrics.h"
#include "fmsync/sync.h"
#include "fmsync/synth.h"

// Scene directories: a manifest.txt of key=value entries plus the files it
// references. Each pipeline stage reads the manifest, writes its outputs, and
// records them under its own keys:
//
//   cloud_<i>, desc_<i>, seg_<i>          inputs (synth or user supplied)
//   gt_flow_<k>_<l>, gt_corr_<k>_<l>, visible_<k>_<l>, gt_map_<k>_<l>
//   basis_<i>                             bases stage
//   corr_<k>_<l>                          match stage
//   map_pairwise_<k>_<l>, map_sync_<k>_<l> pairwise / sync stages
//   flow_<maps>_<k>_<l>                   flow stage, per map source
namespace fmsync {

namespace fs = std::filesystem;

inline constexpr const char* kManifestName = "manifest.txt";
inline constexpr int kDefaultBasisWidth = 24;
inline constexpr int kDefaultLaplacianKnn = 10;
inline constexpr int kDefaultMetricKnn = 8;

SceneSpec read_scene_spec(const fs::path& path);
void write_scene_spec(const fs::path& path, const SceneSpec& spec);

// Writes a generated scene and its manifest into dir.
void write_scene(const SyntheticScene& scene, const fs::path& dir);

// Read-side view of a scene directory.
class SceneDir {
 public:
  explicit SceneDir(fs::path dir);

  const fs::path& dir() const { return dir_; }
  Manifest& manifest() { return manifest_; }
  const Manifest& manifest() const { return manifest_; }
  void save() const;

  int cloud_count() const;
  std::vector<Edge> edges() const { return complete_edges(cloud_count()); }

  std::vector<PointCloud> clouds() const;
  std::vector<DescriptorSet> descriptors() const;
  std::optional<std::vector<RigidSegmentation>> segmentation() const;
  std::vector<BasisMatrix> bases() const;
  std::map<Edge, CorrespondenceSet> correspondences(const std::string& prefix = "corr_") const;
  // Maps from a stage ("pairwise" or "sync"); empty when the stage has not run.
  MapSet maps(const std::string& stage) const;

  bool has_edge_files(const std::string& prefix) const;
  Eigen::MatrixXd matrix(const std::string& key) const;
  void put_matrix(const std::string& key, const fs::path& rel, const Eigen::MatrixXd& m);

 private:
  fs::path dir_;
  Manifest manifest_;
};

std::string edge_suffix(const Edge& e);

struct BasisOptions {
  BasisKind kind = BasisKind::Spectral;
  int m = kDefaultBasisWidth;
  int knn = kDefaultLaplacianKnn;
  std::optional<fs::path> external_dir;  // holds basis_<i>.fmx for kind=external
};

struct FlowOptions {
  FlowVariant variant = FlowVariant::Blend;
  double t = kDefaultTemperature;
  std::string maps = "auto";  // pairwise, sync, or auto (sync when present)
};

struct EvalOptions {
  FlowThresholds thresholds;
  bool visible_only = true;  // restrict to points whose counterpart survives dropout
  int metric_knn = kDefaultMetricKnn;
  std::optional<fs::path> report;
};

struct StageEval {
  std::string stage;  // map source the flows were computed from
  PairAggregate aggregate;
  std::vector<std::pair<Edge, FlowMetrics>> per_pair;
  double max_cycle3 = 0.0;        // max over 3-cycles of ||C C C - I||_F
  double mean_consistency = 0.0;  // mean over pairs of ||C_kl C_lk - I||_F^2
  std::optional<double> mean_map_error;  // vs gt maps, relative Frobenius
  double chamfer = 0.0, smooth = 0.0, lap = 0.0;  // means over pairs
};

void run_synth(const SceneSpec& spec, const fs::path& dir);
void run_bases(const fs::path& dir, const BasisOptions& opts);
void run_match(const fs::path& dir, double threshold, bool use_ground_truth = false);
void run_pairwise(const fs::path& dir, const IrlsConfig& irls);
SyncResult run_sync(const fs::path& dir, const SyncConfig& cfg, const IrlsConfig& irls);
void run_flow(const fs::path& dir, const FlowOptions& opts);
std::vector<StageEval> run_eval(const fs::path& dir, const EvalOptions& opts);

void print_eval_table(std::ostream& os, const std::vector<StageEval>& evals);

struct PipelineOptions {
  std::optional<SceneSpec> spec;  // generate first when set
  std::optional<BasisKind> basis_kind;  // default: affinity with segmentation, else spectral
  BasisOptions bases;
  double threshold = kDefaultMatchThreshold;
  bool gt_correspondences = false;
  IrlsConfig irls;
  SyncConfig sync;
  IrlsConfig sync_irls{.iters = 1};
  FlowOptions flow;
  EvalOptions eval;
};

// synth (optional) -> bases -> match -> pairwise -> flows -> sync -> flows -> eval.
std::vector<StageEval> run_pipeline(const fs::path& dir, const PipelineOptions& opts);

}  // namespace fmsync
