#include "fmsync/cli.h"

#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fmsync/error.h"
#include "fmsync/scene.h"

namespace fmsync {

namespace {

// Routes library warnings to the CLI's error stream while a command runs.
class WarningScope {
 public:
  explicit WarningScope(std::ostream& err)
      : previous_(set_warning_sink([&err](const std::string& m) { err << "warning: " << m << "\n"; })) {}
  ~WarningScope() { set_warning_sink(std::move(previous_)); }

 private:
  WarningSink previous_;
};

void add_scene(CLI::App* cmd, std::string& scene) {
  cmd->add_option("--scene", scene, "Scene directory (holds manifest.txt)")->required();
}

void add_basis_flags(CLI::App* cmd, BasisOptions& opts, std::string& kind, std::string& external) {
  cmd->add_option("--kind", kind, "Basis provider")->check(CLI::IsMember({"spectral", "affinity", "external"}));
  cmd->add_option("--m", opts.m, "Spectral basis width")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--knn", opts.knn, "Neighbours in the Laplacian graph")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--external-dir", external, "Directory with basis_<i>.fmx for --kind external");
}

void add_irls_flags(CLI::App* cmd, IrlsConfig& irls, const std::string& iters_flag) {
  cmd->add_option("--kappa", irls.kappa, "Huber scale")->capture_default_str();
  cmd->add_option(iters_flag, irls.iters, "IRLS reweighting iterations")->capture_default_str();
}

void add_sync_flags(CLI::App* cmd, SyncConfig& sync, bool& no_precondition) {
  cmd->add_option("--v", sync.v, "Canonical width V (0 means M-2)")->capture_default_str();
  cmd->add_option("--tol", sync.tol, "Relative-change stopping tolerance")->capture_default_str();
  cmd->add_option("--max-iters", sync.max_iters, "Maximum alternations")->capture_default_str();
  cmd->add_flag("--no-precondition", no_precondition, "Synchronize in the raw basis frame");
}

void add_flow_flags(CLI::App* cmd, FlowOptions& flow, std::string& variant) {
  cmd->add_option("--variant", variant, "Flow variant")->capture_default_str()->check(
      CLI::IsMember({"nn", "bs", "blend"}));
  cmd->add_option("--t", flow.t, "Soft-permutation temperature")->capture_default_str();
}

void add_eval_flags(CLI::App* cmd, EvalOptions& eval, bool& all_points, std::string& report) {
  FlowThresholds& th = eval.thresholds;
  cmd->add_option("--acc-s-rel", th.strict_rel, "AccS relative threshold")->capture_default_str();
  cmd->add_option("--acc-s-abs", th.strict_abs, "AccS absolute threshold")->capture_default_str();
  cmd->add_option("--acc-r-rel", th.relaxed_rel, "AccR relative threshold")->capture_default_str();
  cmd->add_option("--acc-r-abs", th.relaxed_abs, "AccR absolute threshold")->capture_default_str();
  cmd->add_option("--outlier-rel", th.outlier_rel, "Outlier relative threshold")->capture_default_str();
  cmd->add_option("--metric-knn", eval.metric_knn, "Neighbours for smoothness and Laplacian metrics")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--all-points", all_points, "Score dropped points too");
  cmd->add_option("--report", report, "Write a JSON report to this file");
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiway point cloud registration with synchronized functional maps", "fmsync"};
  app.require_subcommand(1);

  std::string scene, spec_path, out_dir, kind = "spectral", external, variant = "blend", maps = "auto", report;
  BasisOptions bases;
  double threshold = kDefaultMatchThreshold;
  bool use_gt = false, no_precondition = false, all_points = false;
  IrlsConfig irls;
  IrlsConfig sync_irls{.iters = 1};
  SyncConfig sync;
  FlowOptions flow;
  EvalOptions eval;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  synth->add_option("--spec", spec_path, "Scene spec (key=value)")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out_dir, "Output scene directory")->required();

  auto* bases_cmd = app.add_subcommand("bases", "Compute per-cloud bases");
  add_scene(bases_cmd, scene);
  add_basis_flags(bases_cmd, bases, kind, external);

  auto* match = app.add_subcommand("match", "Match descriptors between every cloud pair");
  add_scene(match, scene);
  match->add_option("--threshold", threshold, "Descriptor distance threshold")->capture_default_str();
  match->add_flag("--gt", use_gt, "Use ground-truth correspondences instead of descriptors");

  auto* pairwise = app.add_subcommand("pairwise", "Estimate robust pairwise functional maps");
  add_scene(pairwise, scene);
  add_irls_flags(pairwise, irls, "--iters");

  auto* sync_cmd = app.add_subcommand("sync", "Synchronize the pairwise maps");
  add_scene(sync_cmd, scene);
  add_sync_flags(sync_cmd, sync, no_precondition);
  add_irls_flags(sync_cmd, sync_irls, "--irls-iters");

  auto* flow_cmd = app.add_subcommand("flow", "Recover dense flows from maps");
  add_scene(flow_cmd, scene);
  add_flow_flags(flow_cmd, flow, variant);
  flow_cmd->add_option("--maps", maps, "Map source")->capture_default_str()->check(
      CLI::IsMember({"auto", "pairwise", "sync"}));

  auto* eval_cmd = app.add_subcommand("eval", "Score flows against ground truth");
  add_scene(eval_cmd, scene);
  add_eval_flags(eval_cmd, eval, all_points, report);

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage and print the metrics table");
  add_scene(pipeline, scene);
  pipeline->add_option("--spec", spec_path, "Generate the scene from this spec first")->check(CLI::ExistingFile);
  add_basis_flags(pipeline, bases, kind, external);
  pipeline->add_option("--threshold", threshold, "Descriptor distance threshold")->capture_default_str();
  pipeline->add_flag("--gt-corr", use_gt, "Use ground-truth correspondences");
  add_irls_flags(pipeline, irls, "--iters");
  add_sync_flags(pipeline, sync, no_precondition);
  pipeline->add_option("--sync-irls-iters", sync_irls.iters, "IRLS iterations per sync C-step")->capture_default_str();
  add_flow_flags(pipeline, flow, variant);
  add_eval_flags(pipeline, eval, all_points, report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  WarningScope warnings(err);
  try {
    sync.precondition = !no_precondition;
    flow.variant = flow_variant_from_string(variant);
    flow.maps = maps;
    eval.visible_only = !all_points;
    if (!report.empty()) eval.report = report;
    if (!external.empty()) bases.external_dir = external;

    if (synth->parsed()) {
      run_synth(read_scene_spec(spec_path), out_dir);
    } else if (bases_cmd->parsed()) {
      bases.kind = basis_kind_from_string(kind);
      run_bases(scene, bases);
    } else if (match->parsed()) {
      run_match(scene, threshold, use_gt);
    } else if (pairwise->parsed()) {
      run_pairwise(scene, irls);
    } else if (sync_cmd->parsed()) {
      SyncResult r = run_sync(scene, sync, sync_irls);
      out << "iterations\t" << r.iters_used << "\nconverged\t" << (r.converged ? "yes" : "no") << "\n";
    } else if (flow_cmd->parsed()) {
      run_flow(scene, flow);
    } else if (eval_cmd->parsed()) {
      print_eval_table(out, run_eval(scene, eval));
    } else if (pipeline->parsed()) {
      PipelineOptions opts;
      if (!spec_path.empty()) opts.spec = read_scene_spec(spec_path);
      if (pipeline->count("--kind")) opts.basis_kind = basis_kind_from_string(kind);
      opts.bases = bases;
      opts.threshold = threshold;
      opts.gt_correspondences = use_gt;
      opts.irls = irls;
      opts.sync = sync;
      opts.sync_irls = sync_irls;
      opts.flow = flow;
      opts.eval = eval;
      print_eval_table(out, run_pipeline(scene, opts));
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace fmsync
