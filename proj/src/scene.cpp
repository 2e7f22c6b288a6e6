#include "fmsync/scene.h"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "fmsync/error.h"

namespace fmsync {

namespace {

std::string real_str(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Eigen::MatrixXd to_matrix(const CorrespondenceSet& c) { return c.pairs.cast<double>(); }

CorrespondenceSet to_corr(const Eigen::MatrixXd& m, const std::string& key) {
  if (m.rows() > 0 && m.cols() != 2) throw DataError("correspondence file '" + key + "' must have 2 columns");
  CorrespondenceSet c;
  c.pairs.resize(m.rows(), 2);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (int j = 0; j < 2; ++j) {
      double v = m(i, j);
      if (v != std::floor(v) || v < 0) throw DataError("correspondence file '" + key + "' has a non-index entry");
      c.pairs(i, j) = static_cast<int>(v);
    }
  return c;
}

Eigen::MatrixXd bools_to_matrix(const std::vector<bool>& v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  for (size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i] ? 1.0 : 0.0;
  return m;
}

}  // namespace

std::string edge_suffix(const Edge& e) { return std::to_string(e.source) + "_" + std::to_string(e.target); }

SceneSpec read_scene_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scene spec '" + path.string() + "'");
  Manifest m = read_manifest(in, path.string());
  SceneSpec spec;
  for (const auto& [key, value] : m.entries()) {
    if (key == "kind") spec.kind = scene_kind_from_string(value);
    else if (key == "k") spec.clouds = m.get_int(key);
    else if (key == "points") spec.points = m.get_int(key);
    else if (key == "bodies") spec.bodies = m.get_int(key);
    else if (key == "desc_noise") spec.desc_noise = m.get_double(key);
    else if (key == "outlier_frac") spec.outlier_frac = m.get_double(key);
    else if (key == "coord_noise") spec.coord_noise = m.get_double(key);
    else if (key == "dropout") spec.dropout = m.get_double(key);
    else if (key == "rng_seed") spec.seed = static_cast<std::uint64_t>(std::stoull(value));
    else throw DataError("unknown scene spec key '" + key + "'");
  }
  spec.validate();
  return spec;
}

namespace {

void put_spec(Manifest& m, const SceneSpec& spec) {
  m.set("kind", to_string(spec.kind));
  m.set("k", std::to_string(spec.clouds));
  m.set("points", std::to_string(spec.points));
  m.set("bodies", std::to_string(spec.bodies));
  m.set("desc_noise", real_str(spec.desc_noise));
  m.set("outlier_frac", real_str(spec.outlier_frac));
  m.set("coord_noise", real_str(spec.coord_noise));
  m.set("dropout", real_str(spec.dropout));
  m.set("rng_seed", std::to_string(spec.seed));
}

}  // namespace

void write_scene_spec(const fs::path& path, const SceneSpec& spec) {
  Manifest m;
  put_spec(m, spec);
  write_manifest(path, m);
}

void write_scene(const SyntheticScene& scene, const fs::path& dir) {
  fs::create_directories(dir);
  Manifest m;
  put_spec(m, scene.spec);
  for (size_t i = 0; i < scene.clouds.size(); ++i) {
    const std::string id = std::to_string(i);
    write_cloud(dir / "clouds" / ("cloud_" + id + ".xyz"), scene.clouds[i].points);
    m.set("cloud_" + id, "clouds/cloud_" + id + ".xyz");
    write_matrix(dir / "descriptors" / ("desc_" + id + ".fmx"), scene.descriptors[i].desc);
    m.set("desc_" + id, "descriptors/desc_" + id + ".fmx");
    if (!scene.segmentation.empty()) {
      write_matrix(dir / "segmentation" / ("seg_" + id + ".fmx"), scene.segmentation[i].labels.cast<double>());
      m.set("seg_" + id, "segmentation/seg_" + id + ".fmx");
    }
  }
  for (const auto& [e, flow] : scene.gt_flows) {
    const std::string s = edge_suffix(e);
    write_matrix(dir / "gt" / ("flow_" + s + ".fmx"), flow.flow);
    m.set("gt_flow_" + s, "gt/flow_" + s + ".fmx");
    write_matrix(dir / "gt" / ("corr_" + s + ".fmx"), to_matrix(scene.gt_corr.at(e)));
    m.set("gt_corr_" + s, "gt/corr_" + s + ".fmx");
    write_matrix(dir / "gt" / ("visible_" + s + ".fmx"), bools_to_matrix(scene.visible.at(e)));
    m.set("visible_" + s, "gt/visible_" + s + ".fmx");
    if (scene.gt_maps.contains(e)) {
      write_matrix(dir / "gt" / ("map_" + s + ".fmx"), scene.gt_maps.at(e));
      m.set("gt_map_" + s, "gt/map_" + s + ".fmx");
    }
  }
  if (!scene.segmentation.empty()) m.set("body_count", std::to_string(scene.spec.bodies));
  write_manifest(dir / kManifestName, m);
}

SceneDir::SceneDir(fs::path dir) : dir_(std::move(dir)) {
  if (!fs::exists(dir_ / kManifestName)) throw DataError("no manifest found in '" + dir_.string() + "'");
  manifest_ = read_manifest(dir_ / kManifestName);
}

void SceneDir::save() const { write_manifest(dir_ / kManifestName, manifest_); }

int SceneDir::cloud_count() const {
  int k = manifest_.get_int("k");
  if (k < 2) throw DataError("scene must contain at least two clouds");
  return k;
}

Eigen::MatrixXd SceneDir::matrix(const std::string& key) const { return read_matrix(dir_ / manifest_.get(key)); }

void SceneDir::put_matrix(const std::string& key, const fs::path& rel, const Eigen::MatrixXd& m) {
  write_matrix(dir_ / rel, m);
  manifest_.set(key, rel.generic_string());
}

std::vector<PointCloud> SceneDir::clouds() const {
  std::vector<PointCloud> out;
  for (int i = 0; i < cloud_count(); ++i)
    out.push_back(PointCloud::make(read_cloud(dir_ / manifest_.get("cloud_" + std::to_string(i))), i));
  return out;
}

std::vector<DescriptorSet> SceneDir::descriptors() const {
  std::vector<DescriptorSet> out;
  for (int i = 0; i < cloud_count(); ++i) out.push_back(DescriptorSet{matrix("desc_" + std::to_string(i)), i});
  return out;
}

std::optional<std::vector<RigidSegmentation>> SceneDir::segmentation() const {
  if (!manifest_.has("seg_0")) return std::nullopt;
  const int bodies = manifest_.get_int("body_count");
  std::vector<RigidSegmentation> out;
  for (int i = 0; i < cloud_count(); ++i) {
    Eigen::MatrixXd m = matrix("seg_" + std::to_string(i));
    if (m.cols() != 1) throw DataError("segmentation files must have one column");
    out.push_back(RigidSegmentation{m.col(0).cast<int>(), bodies});
  }
  return out;
}

std::vector<BasisMatrix> SceneDir::bases() const {
  if (!manifest_.has("basis_0")) throw DataError("scene has no bases; run the bases stage first");
  const BasisKind kind = basis_kind_from_string(manifest_.get_or("basis_kind", "external"));
  std::vector<BasisMatrix> out;
  for (int i = 0; i < cloud_count(); ++i) {
    BasisMatrix b = external_basis(matrix("basis_" + std::to_string(i)), i);
    b.kind = kind;
    out.push_back(std::move(b));
  }
  return out;
}

std::map<Edge, CorrespondenceSet> SceneDir::correspondences(const std::string& prefix) const {
  std::map<Edge, CorrespondenceSet> out;
  for (const Edge& e : edges()) {
    const std::string key = prefix + edge_suffix(e);
    if (!manifest_.has(key)) throw DataError("scene has no '" + key + "'; run the match stage first");
    out[e] = to_corr(matrix(key), key);
  }
  return out;
}

MapSet SceneDir::maps(const std::string& stage) const {
  MapSet out;
  const std::string prefix = "map_" + stage + "_";
  if (!has_edge_files(prefix)) return out;
  for (const Edge& e : edges()) out[e] = matrix(prefix + edge_suffix(e));
  return out;
}

bool SceneDir::has_edge_files(const std::string& prefix) const {
  for (const Edge& e : edges())
    if (!manifest_.has(prefix + edge_suffix(e))) return false;
  return true;
}

void run_synth(const SceneSpec& spec, const fs::path& dir) { write_scene(generate(spec), dir); }

void run_bases(const fs::path& dir, const BasisOptions& opts) {
  SceneDir scene(dir);
  auto clouds = scene.clouds();
  std::optional<std::vector<RigidSegmentation>> seg;
  if (opts.kind == BasisKind::Affinity) {
    seg = scene.segmentation();
    if (!seg) throw DataError("affinity bases need a rigid segmentation (seg_<i> entries)");
  }
  Manifest& m = scene.manifest();
  m.erase_prefix("basis_");
  m.erase_prefix("map_");
  m.erase_prefix("flow_");
  for (const PointCloud& cloud : clouds) {
    BasisMatrix basis;
    switch (opts.kind) {
      case BasisKind::Spectral: {
        KnnGraph g = build_knn_graph(cloud, std::min<int>(opts.knn, static_cast<int>(cloud.size()) - 1));
        basis = spectral_bases(graph_laplacian(g), opts.m, cloud.id);
        break;
      }
      case BasisKind::Affinity:
        basis = affinity_bases(cloud, (*seg)[cloud.id]);
        break;
      case BasisKind::External: {
        if (!opts.external_dir) throw DataError("external bases need a directory with basis_<i>.fmx files");
        basis = external_basis(read_matrix(*opts.external_dir / ("basis_" + std::to_string(cloud.id) + ".fmx")), cloud.id);
        if (basis.points() != cloud.size()) throw DataError("external basis row count does not match its cloud");
        break;
      }
      case BasisKind::Preconditioned:
        throw DataError("preconditioned bases are produced by the sync stage, not stored");
    }
    const std::string id = std::to_string(cloud.id);
    scene.put_matrix("basis_" + id, fs::path("bases") / ("basis_" + id + ".fmx"), basis.phi);
  }
  m.set("basis_kind", to_string(opts.kind));
  m.set("basis_m", std::to_string(scene.bases().front().width()));
  if (opts.kind == BasisKind::Spectral) m.set("basis_knn", std::to_string(opts.knn));
  scene.save();
}

void run_match(const fs::path& dir, double threshold, bool use_ground_truth) {
  SceneDir scene(dir);
  Manifest& m = scene.manifest();
  std::map<Edge, CorrespondenceSet> corrs;
  if (use_ground_truth) {
    corrs = scene.correspondences("gt_corr_");
  } else {
    auto desc = scene.descriptors();
    for (const Edge& e : scene.edges()) {
      // Mutual matching is symmetric; reuse the reverse direction when available.
      auto rev = corrs.find(e.reversed());
      if (rev != corrs.end()) {
        CorrespondenceSet c;
        c.pairs.resize(rev->second.count(), 2);
        c.pairs.col(0) = rev->second.pairs.col(1);
        c.pairs.col(1) = rev->second.pairs.col(0);
        corrs[e] = std::move(c);
      } else {
        corrs[e] = match_descriptors(desc[e.source], desc[e.target], threshold);
      }
    }
  }
  m.erase_prefix("corr_");
  m.erase_prefix("map_");
  m.erase_prefix("flow_");
  for (const auto& [e, c] : corrs) {
    const std::string s = edge_suffix(e);
    if (c.count() == 0) warn("no correspondences for edge " + s);
    scene.put_matrix("corr_" + s, fs::path("corr") / ("corr_" + s + ".fmx"), to_matrix(c));
  }
  m.set("match_source", use_ground_truth ? "ground_truth" : "descriptors");
  m.set("match_threshold", real_str(threshold));
  scene.save();
}

void run_pairwise(const fs::path& dir, const IrlsConfig& irls) {
  irls.validate();
  SceneDir scene(dir);
  auto bases = scene.bases();
  auto corrs = scene.correspondences();
  Manifest& m = scene.manifest();
  m.erase_prefix("map_");
  m.erase_prefix("flow_");
  for (const Edge& e : scene.edges()) {
    const std::string s = edge_suffix(e);
    AlignedRows rows = gather_basis_rows(corrs.at(e), bases[e.source], bases[e.target]);
    if (rows.source.rows() == 0) throw DataError("edge " + s + " has no correspondences; cannot estimate its map");
    FunctionalMap fm = estimate_fmap(rows, irls);
    scene.put_matrix("map_pairwise_" + s, fs::path("maps_pairwise") / ("map_" + s + ".fmx"), fm.c);
  }
  m.set("pairwise_kappa", real_str(irls.kappa));
  m.set("pairwise_iters", std::to_string(irls.iters));
  scene.save();
}

SyncResult run_sync(const fs::path& dir, const SyncConfig& cfg, const IrlsConfig& irls) {
  SceneDir scene(dir);
  CloudGraph graph;
  graph.clouds = scene.clouds();
  graph.bases = scene.bases();
  graph.edges = scene.edges();
  graph.corrs = scene.correspondences();
  MapSet init = scene.maps("pairwise");
  if (init.empty()) throw DataError("scene has no pairwise maps; run the pairwise stage first");

  SyncResult result = synchronize(graph, init, cfg, irls);

  Manifest& m = scene.manifest();
  m.erase_prefix("map_sync_");
  m.erase_prefix("flow_sync_");
  for (const auto& [e, c] : result.maps) {
    const std::string s = edge_suffix(e);
    scene.put_matrix("map_sync_" + s, fs::path("maps_sync") / ("map_" + s + ".fmx"), c);
  }
  Eigen::MatrixXd energy(static_cast<Eigen::Index>(result.energy.size()), 2);
  for (size_t i = 0; i < result.energy.size(); ++i) {
    energy(static_cast<Eigen::Index>(i), 0) = result.energy[i].cycle;
    energy(static_cast<Eigen::Index>(i), 1) = result.energy[i].data;
  }
  scene.put_matrix("sync_energy", "maps_sync/energy.fmx", energy);
  scene.put_matrix("sync_canonical", "maps_sync/canonical.fmx", result.canonical.h);
  m.set("sync_v", std::to_string(result.canonical.h.cols()));
  m.set("sync_tol", real_str(cfg.tol));
  m.set("sync_max_iters", std::to_string(cfg.max_iters));
  m.set("sync_precondition", cfg.precondition ? "1" : "0");
  m.set("sync_iters_used", std::to_string(result.iters_used));
  m.set("sync_final_change", real_str(result.final_change));
  m.set("sync_converged", result.converged ? "1" : "0");
  scene.save();
  return result;
}

void run_flow(const fs::path& dir, const FlowOptions& opts) {
  if (!(opts.t > 0.0)) throw DataError("temperature must be positive");
  SceneDir scene(dir);
  std::string stage = opts.maps;
  if (stage == "auto") stage = scene.has_edge_files("map_sync_") ? "sync" : "pairwise";
  if (stage != "sync" && stage != "pairwise") throw DataError("unknown map source '" + opts.maps + "'");
  MapSet maps = scene.maps(stage);
  if (maps.empty()) throw DataError("scene has no " + stage + " maps");
  auto clouds = scene.clouds();
  auto bases = scene.bases();

  Manifest& m = scene.manifest();
  m.erase_prefix("flow_" + stage + "_");
  for (const Edge& e : scene.edges()) {
    PairFlows flows = compute_pair_flows(bases[e.source], maps.at(e), bases[e.target], clouds[e.target],
                                         clouds[e.source], opts.t);
    const std::string s = edge_suffix(e);
    scene.put_matrix("flow_" + stage + "_" + s, fs::path("flows_" + stage) / ("flow_" + s + ".fmx"),
                     flows.get(opts.variant).flow);
  }
  m.set("flow_variant", to_string(opts.variant));
  m.set("flow_t", real_str(opts.t));
  scene.save();
}

std::vector<StageEval> run_eval(const fs::path& dir, const EvalOptions& opts) {
  SceneDir scene(dir);
  const Manifest& m = scene.manifest();
  auto clouds = scene.clouds();
  const int k = scene.cloud_count();
  std::vector<StageEval> out;

  std::vector<KnnGraph> source_graphs;
  for (const PointCloud& c : clouds)
    source_graphs.push_back(build_knn_graph(c, std::min<int>(opts.metric_knn, static_cast<int>(c.size()) - 1)));

  for (const std::string stage : {"pairwise", "sync"}) {
    if (!scene.has_edge_files("flow_" + stage + "_")) continue;
    StageEval ev;
    ev.stage = stage;
    std::vector<FlowMetrics> all;
    double chamfer_sum = 0.0, smooth_sum = 0.0, lap_sum = 0.0;
    for (const Edge& e : scene.edges()) {
      const std::string s = edge_suffix(e);
      Points pred = scene.matrix("flow_" + stage + "_" + s);
      Points gt = scene.matrix("gt_flow_" + s);
      std::optional<std::vector<bool>> mask;
      if (opts.visible_only && m.has("visible_" + s)) {
        Eigen::MatrixXd v = scene.matrix("visible_" + s);
        mask = std::vector<bool>(static_cast<size_t>(v.rows()));
        for (Eigen::Index i = 0; i < v.rows(); ++i) (*mask)[static_cast<size_t>(i)] = v(i, 0) != 0.0;
      }
      FlowMetrics fm = flow_metrics(pred, gt, mask, opts.thresholds);
      ev.per_pair.emplace_back(e, fm);
      all.push_back(fm);

      const PointCloud& src = clouds[e.source];
      const PointCloud& dst = clouds[e.target];
      Points warped = src.points + pred;
      chamfer_sum += chamfer(warped, dst.points);
      smooth_sum += smoothness(pred, source_graphs[e.source]);
      PointCloud warped_cloud = PointCloud::make(warped, src.id);
      KnnGraph wg = build_knn_graph(warped_cloud, std::min<int>(opts.metric_knn, static_cast<int>(warped.rows()) - 1));
      lap_sum += laplacian_loss(warped, dst.points, wg, source_graphs[e.target]);
    }
    const double pairs = static_cast<double>(all.size());
    ev.aggregate = aggregate(all);
    ev.chamfer = chamfer_sum / pairs;
    ev.smooth = smooth_sum / pairs;
    ev.lap = lap_sum / pairs;

    MapSet maps = scene.maps(stage);
    if (!maps.empty()) {
      double cons = 0.0;
      int cons_n = 0;
      for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) {
          cons += map_consistency(maps.at({a, b}), maps.at({b, a}));
          ++cons_n;
        }
      ev.mean_consistency = cons / cons_n;
      for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b)
          for (int c = b + 1; c < k; ++c)
            ev.max_cycle3 = std::max(ev.max_cycle3, cycle_residual({maps.at({a, b}), maps.at({b, c}), maps.at({c, a})},
                                                                   {a, b, c, a}));
      if (scene.has_edge_files("gt_map_")) {
        double err = 0.0;
        for (const auto& [e, c] : maps) {
          Eigen::MatrixXd gt = scene.matrix("gt_map_" + edge_suffix(e));
          err += (c - gt).norm() / std::max(gt.norm(), 1e-12);
        }
        ev.mean_map_error = err / static_cast<double>(maps.size());
      }
    }
    out.push_back(std::move(ev));
  }
  if (out.empty()) throw DataError("scene has no flows to evaluate; run the flow stage first");

  if (opts.report) {
    nlohmann::json j;
    j["scene"] = scene.dir().string();
    for (const StageEval& ev : out) {
      nlohmann::json s;
      auto summary = [](const MetricSummary& ms) { return nlohmann::json{{"mean", ms.mean}, {"std", ms.std}}; };
      s["pairs"] = ev.aggregate.pairs;
      s["l2_error"] = summary(ev.aggregate.l2_error);
      s["acc_s"] = summary(ev.aggregate.acc_s);
      s["acc_r"] = summary(ev.aggregate.acc_r);
      s["outlier"] = summary(ev.aggregate.outlier);
      s["max_cycle3_residual"] = ev.max_cycle3;
      s["mean_pair_consistency"] = ev.mean_consistency;
      if (ev.mean_map_error) s["mean_map_error"] = *ev.mean_map_error;
      s["chamfer"] = ev.chamfer;
      s["smoothness"] = ev.smooth;
      s["laplacian"] = ev.lap;
      for (const auto& [e, fm] : ev.per_pair)
        s["per_pair"].push_back({{"source", e.source},
                                 {"target", e.target},
                                 {"points", fm.points},
                                 {"l2_error", fm.l2_error},
                                 {"acc_s", fm.acc_s},
                                 {"acc_r", fm.acc_r},
                                 {"outlier", fm.outlier}});
      j["stages"][ev.stage] = s;
    }
    std::ofstream f(*opts.report);
    if (!f) throw DataError("cannot write report '" + opts.report->string() + "'");
    f << j.dump(2) << "\n";
  }
  return out;
}

void print_eval_table(std::ostream& os, const std::vector<StageEval>& evals) {
  os << "stage\tpairs\tl2_mean\tl2_std\tacc_s_mean\tacc_s_std\tacc_r_mean\tacc_r_std\toutlier_mean\toutlier_std"
        "\tcycle3_max\tconsistency_mean\tmap_error\tchamfer\tsmooth\tlap\n";
  os << std::setprecision(6);
  for (const StageEval& ev : evals) {
    const PairAggregate& a = ev.aggregate;
    os << ev.stage << '\t' << a.pairs << '\t' << a.l2_error.mean << '\t' << a.l2_error.std << '\t' << a.acc_s.mean
       << '\t' << a.acc_s.std << '\t' << a.acc_r.mean << '\t' << a.acc_r.std << '\t' << a.outlier.mean << '\t'
       << a.outlier.std << '\t' << ev.max_cycle3 << '\t' << ev.mean_consistency << '\t';
    if (ev.mean_map_error)
      os << *ev.mean_map_error;
    else
      os << '-';
    os << '\t' << ev.chamfer << '\t' << ev.smooth << '\t' << ev.lap << '\n';
  }
}

std::vector<StageEval> run_pipeline(const fs::path& dir, const PipelineOptions& opts) {
  if (opts.spec) run_synth(*opts.spec, dir);
  BasisOptions bases = opts.bases;
  if (opts.basis_kind) {
    bases.kind = *opts.basis_kind;
  } else {
    SceneDir scene(dir);
    bases.kind = scene.segmentation() ? BasisKind::Affinity : BasisKind::Spectral;
  }
  run_bases(dir, bases);
  run_match(dir, opts.threshold, opts.gt_correspondences);
  run_pairwise(dir, opts.irls);
  FlowOptions flow = opts.flow;
  flow.maps = "pairwise";
  run_flow(dir, flow);
  run_sync(dir, opts.sync, opts.sync_irls);
  flow.maps = "sync";
  run_flow(dir, flow);
  return run_eval(dir, opts.eval);
}

}  // namespace fmsync
