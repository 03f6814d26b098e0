#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sweepfuse/image_io.h"
#include "sweepfuse/pipeline.h"

namespace sf = sweepfuse;
namespace fs = std::filesystem;

namespace {

struct ConfigFlags {
  sf::PipelineConfig cfg;
  std::string config_path;
  std::vector<double> grid_origin;
  std::vector<int> grid_dims;

  void attach(CLI::App* app) {
    app->add_option("--planes", cfg.sweep.d, "plane-sweep depth count");
    app->add_option("--z-min", cfg.sweep.z_min, "nearest sweep depth (m)");
    app->add_option("--tau", cfg.tau, "overlap mask threshold");
    app->add_option("--mu", cfg.mu, "TSDF truncation (m)");
    app->add_option("--kernel-size", cfg.kernel_size, "reservoir kernel width (odd)");
    app->add_option("--channels", cfg.channels, "feature channels");
    app->add_option("--alpha", cfg.alpha, "depth loss weight");
    app->add_option("--beta", cfg.beta, "overlap loss weight");
    app->add_option("--gamma", cfg.gamma, "TSDF loss weight");
    app->add_option("--extractor", cfg.extractor, "feature extractor id");
    app->add_option("--aggregator", cfg.aggregator, "cost aggregator id");
    app->add_option("--kernel-seed", cfg.kernel_seed, "random kernel seed");
    app->add_option("--kernel-file", cfg.kernel_file, "reservoir kernel file");
    app->add_option("--threads", cfg.threads, "worker threads (0 = auto)");
    app->add_flag("--point-l2", cfg.point_l2, "L2 point distances in eval-3d");
    app->add_flag("--depth-denom-gt", cfg.depth_denom_gt,
                  "ground-truth denominators in depth metrics");
    app->add_option("--grid-origin", grid_origin, "voxel grid origin x y z")
        ->expected(3);
    app->add_option("--grid-pitch", cfg.grid.pitch, "voxel size (m)");
    app->add_option("--grid-dims", grid_dims, "voxel grid dims vx vy vz")->expected(3);
    app->add_option("--config", config_path, "JSON config overriding flags");
  }

  sf::PipelineConfig resolve() {
    if (grid_origin.size() == 3)
      cfg.grid.origin = Eigen::Vector3d(grid_origin[0], grid_origin[1], grid_origin[2]);
    if (grid_dims.size() == 3) {
      cfg.grid.vx = grid_dims[0];
      cfg.grid.vy = grid_dims[1];
      cfg.grid.vz = grid_dims[2];
    }
    if (!config_path.empty()) sf::apply_config_file(cfg, config_path);
    sf::validate(cfg);
    return cfg;
  }
};

sf::DepthMap load_depth_any(const std::string& path) {
  if (fs::path(path).extension() == ".fr") return sf::load_depth_raster(path);
  return sf::load_depth_png(path);
}

void print_depth_report(const sf::DepthEvalReport& r) {
  fputs(sf::report_table(&r, nullptr).c_str(), stdout);
  fputs(sf::report_kv(&r, nullptr).c_str(), stdout);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"sweepfuse: plane-sweep stereo + volumetric depth fusion"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string preset = "sphere-orbit", scene_path, out_dir;
  int synth_threads = 0;
  synth->add_option("--preset", preset, "built-in scene preset");
  synth->add_option("--scene", scene_path, "scene config JSON");
  synth->add_option("--out", out_dir, "output dataset root")->required();
  synth->add_option("--threads", synth_threads, "worker threads (0 = auto)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "stage 1: depth + overlap estimation");
  std::string data_root, stage1_dir;
  sweep->add_option("--data", data_root, "dataset root")->required();
  sweep->add_option("--out", stage1_dir, "stage-1 output directory")->required();
  ConfigFlags sweep_cf;
  sweep_cf.attach(sweep);

  // fuse
  auto* fuse = app.add_subcommand("fuse", "stage 2: volume fusion + mesh");
  std::string fuse_data, fuse_stage1, fuse_out;
  fuse->add_option("--data", fuse_data, "dataset root")->required();
  fuse->add_option("--stage1", fuse_stage1, "stage-1 output directory")->required();
  fuse->add_option("--out", fuse_out, "stage-2 output directory")->required();
  ConfigFlags fuse_cf;
  fuse_cf.attach(fuse);

  // mesh
  auto* mesh_cmd = app.add_subcommand("mesh", "extract a mesh from a TSDF volume");
  std::string mesh_tsdf, mesh_out;
  int mesh_threads = 0;
  mesh_cmd->add_option("--tsdf", mesh_tsdf, "TSDF volume file")->required();
  mesh_cmd->add_option("--out", mesh_out, "output PLY path")->required();
  mesh_cmd->add_option("--threads", mesh_threads, "worker threads (0 = auto)");

  // render-depth
  auto* render = app.add_subcommand("render-depth", "render depth from a TSDF volume");
  std::string rd_tsdf, rd_pose, rd_intr, rd_out;
  int rd_scale = 1, rd_threads = 0;
  render->add_option("--tsdf", rd_tsdf, "TSDF volume file")->required();
  render->add_option("--pose", rd_pose, "camera-to-world pose file")->required();
  render->add_option("--intrinsics", rd_intr, "intrinsics file")->required();
  render->add_option("--scale", rd_scale, "integer downscale of the intrinsics");
  render->add_option("--out", rd_out, "output depth path (.png or .fr)")->required();
  render->add_option("--threads", rd_threads, "worker threads (0 = auto)");

  // eval-depth
  auto* evd = app.add_subcommand("eval-depth", "2D depth metrics");
  std::string evd_pred, evd_gt;
  bool evd_denom_gt = false;
  evd->add_option("--pred", evd_pred, "predicted depth (.png or .fr)")->required();
  evd->add_option("--gt", evd_gt, "ground-truth depth (.png or .fr)")->required();
  evd->add_flag("--denom-gt", evd_denom_gt, "ground-truth denominators");

  // eval-3d
  auto* ev3 = app.add_subcommand("eval-3d", "3D geometry metrics");
  std::string ev3_pred, ev3_gt, ev3_pred_tsdf, ev3_gt_tsdf;
  double ev3_tau = 0.05;
  bool ev3_l2 = false;
  int ev3_threads = 0;
  ev3->add_option("--pred", ev3_pred, "predicted mesh/points PLY")->required();
  ev3->add_option("--gt", ev3_gt, "ground-truth points PLY")->required();
  ev3->add_option("--dist-tau", ev3_tau, "precision/recall threshold (m)");
  ev3->add_flag("--l2", ev3_l2, "L2 point distances");
  ev3->add_option("--pred-tsdf", ev3_pred_tsdf, "predicted TSDF for the L1 column");
  ev3->add_option("--gt-tsdf", ev3_gt_tsdf, "ground-truth TSDF for the L1 column");
  ev3->add_option("--threads", ev3_threads, "worker threads (0 = auto)");

  // rotate-kernel
  auto* rot = app.add_subcommand("rotate-kernel",
                                 "compare discrete vs interpolated kernel rotation");
  std::string rot_in, rot_out_discrete, rot_out_interp;
  std::vector<double> rot_axis{0, 0, 1};
  double rot_deg = 45;
  int rot_cout = 1, rot_cin = 1, rot_w = 3;
  uint64_t rot_seed = 17;
  rot->add_option("--in", rot_in, "reservoir kernel file (else random)");
  rot->add_option("--axis", rot_axis, "rotation axis")->expected(3);
  rot->add_option("--degrees", rot_deg, "rotation angle");
  rot->add_option("--c-out", rot_cout, "random kernel output channels");
  rot->add_option("--c-in", rot_cin, "random kernel input channels");
  rot->add_option("--size", rot_w, "random kernel width (odd)");
  rot->add_option("--seed", rot_seed, "random kernel seed");
  rot->add_option("--out-discrete", rot_out_discrete, "save the discrete rotation");
  rot->add_option("--out-interp", rot_out_interp, "save the interpolated rotation");

  // run
  auto* run = app.add_subcommand("run", "full pipeline: sweep, fuse, eval");
  std::string run_data, run_out;
  run->add_option("--data", run_data, "dataset root")->required();
  run->add_option("--out", run_out, "output directory")->required();
  ConfigFlags run_cf;
  run_cf.attach(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (synth->parsed()) {
    sf::SceneConfig sc = scene_path.empty() ? sf::scene_preset(preset)
                                            : sf::load_scene_config(scene_path);
    sf::synthesize_dataset(sc, out_dir, synth_threads);
    printf("wrote %zu frames under %s\n", sc.trajectory.poses.size(), out_dir.c_str());
  } else if (sweep->parsed()) {
    sf::PipelineConfig cfg = sweep_cf.resolve();
    sf::Dataset ds = sf::load_dataset(data_root);
    sf::run_stage1(ds, cfg, stage1_dir);
    printf("stage 1 complete: %zu frames under %s\n",
           sf::interior_frames(ds).size(), stage1_dir.c_str());
  } else if (fuse->parsed()) {
    sf::PipelineConfig cfg = fuse_cf.resolve();
    sf::Dataset ds = sf::load_dataset(fuse_data);
    sf::Stage2Result r = sf::run_stage2(ds, fuse_stage1, cfg, fuse_out);
    printf("stage 2 complete: %zu vertices, %zu faces under %s\n",
           r.mesh.vertices.size(), r.mesh.faces.size(), fuse_out.c_str());
  } else if (mesh_cmd->parsed()) {
    sf::TsdfVolume vol = sf::load_tsdf(mesh_tsdf);
    sf::TriangleMesh mesh = sf::extract_mesh(vol, mesh_threads);
    sf::save_ply(mesh_out, mesh);
    printf("wrote %zu vertices, %zu faces to %s\n", mesh.vertices.size(),
           mesh.faces.size(), mesh_out.c_str());
  } else if (render->parsed()) {
    sf::TsdfVolume vol = sf::load_tsdf(rd_tsdf);
    sf::Intrinsics k = sf::load_intrinsics(rd_intr);
    if (rd_scale > 1) k = sf::scale_intrinsics(k, rd_scale);
    sf::Camera cam{k, sf::load_pose(rd_pose)};
    sf::DepthMap d = sf::render_depth(vol, cam, rd_threads);
    if (fs::path(rd_out).extension() == ".fr")
      sf::save_depth_raster(rd_out, d);
    else
      sf::save_depth_png(rd_out, d);
    printf("wrote %s\n", rd_out.c_str());
  } else if (evd->parsed()) {
    sf::DepthEvalReport r =
        sf::eval_depth(load_depth_any(evd_pred), load_depth_any(evd_gt), !evd_denom_gt);
    print_depth_report(r);
  } else if (ev3->parsed()) {
    sf::TriangleMesh pred = sf::load_ply(ev3_pred);
    sf::TriangleMesh gt = sf::load_ply(ev3_gt);
    sf::GeomEvalReport g = sf::eval_pointcloud(
        sf::mesh_points(pred), sf::mesh_points(gt), ev3_tau,
        ev3_l2 ? sf::PointMetric::kL2 : sf::PointMetric::kL1, ev3_threads);
    if (!ev3_pred_tsdf.empty() && !ev3_gt_tsdf.empty()) {
      g.l1 = sf::eval_tsdf_l1(sf::load_tsdf(ev3_pred_tsdf), sf::load_tsdf(ev3_gt_tsdf));
      g.has_l1 = true;
    }
    fputs(sf::report_table(nullptr, &g).c_str(), stdout);
    fputs(sf::report_kv(nullptr, &g).c_str(), stdout);
  } else if (rot->parsed()) {
    sf::ReservoirKernel k = rot_in.empty()
                                ? sf::random_kernel(rot_cout, rot_cin, rot_w, rot_seed)
                                : sf::load_kernel(rot_in);
    Eigen::Matrix3d r = sf::axis_angle_rotation(
        Eigen::Vector3d(rot_axis[0], rot_axis[1], rot_axis[2]), rot_deg);
    sf::RotatedKernel discrete = sf::rotate_kernel_discrete(k, r);
    sf::RotateStats stats;
    sf::RotatedKernel interp = sf::rotate_kernel_interp(k, r, &stats);
    double max_diff = 0;
    for (size_t i = 0; i < k.v.size(); ++i)
      max_diff = std::max(max_diff,
                          std::abs(double(discrete.k.v[i]) - interp.k.v[i]));
    int exits = 0;
    for (int i = 0; i < k.w; ++i)
      for (int j = 0; j < k.w; ++j)
        for (int kk = 0; kk < k.w; ++kk) {
          Eigen::Vector3d src = sf::discrete_source_coord({i, j, kk}, k.w, r);
          for (int a = 0; a < 3; ++a)
            if (src[a] < 0 || src[a] > k.w - 1) {
              ++exits;
              break;
            }
        }
    printf("kernel %dx%dx%d^3, rotation %.3f deg\n", k.c_out, k.c_in, k.w, rot_deg);
    printf("interp_clamped_voxels=%lld\n", (long long)stats.clamped);
    printf("discrete_out_of_cube_sources=%d\n", exits);
    printf("max_abs_difference=%.9f\n", max_diff);
    if (!rot_out_discrete.empty()) sf::save_kernel(rot_out_discrete, discrete.k);
    if (!rot_out_interp.empty()) sf::save_kernel(rot_out_interp, interp.k);
  } else if (run->parsed()) {
    sf::PipelineConfig cfg = run_cf.resolve();
    sf::Dataset ds = sf::load_dataset(run_data);
    fs::path out(run_out);
    sf::run_stage1(ds, cfg, (out / "stage1").string());
    sf::run_stage2(ds, (out / "stage1").string(), cfg, run_out);
    sf::EvalResult ev = sf::run_eval(ds, run_out, cfg);
    const sf::DepthEvalReport* dr = ev.depth ? &*ev.depth : nullptr;
    const sf::GeomEvalReport* gr = ev.geom ? &*ev.geom : nullptr;
    fputs(sf::report_table(dr, gr).c_str(), stdout);
    printf("pipeline complete under %s\n", run_out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const sf::UsageError& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const sf::DataError& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
