#include "sweepfuse/pipeline.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sweepfuse/image_io.h"

namespace sweepfuse {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string frame_name(int id, const char* ext) {
  char buf[32];
  snprintf(buf, sizeof(buf), "%06d.%s", id, ext);
  return buf;
}

int feature_scale(const Intrinsics& k, const FeatureMap& f) {
  if (f.w < 1 || f.h < 1 || k.width % f.w != 0 || k.height % f.h != 0 ||
      k.width / f.w != k.height / f.h)
    throw DataError("feature resolution does not divide the image resolution");
  return k.width / f.w;
}

Pose load_frame_pose(const Dataset& ds, int fi) { return load_pose(ds.frames[fi].pose); }

struct Stage1Paths {
  fs::path depth_fr, depth_png, mask_fr, mask_png, masked_fr, masked_png;
};

Stage1Paths stage1_paths(const std::string& dir, int id) {
  fs::path d(dir);
  return {d / "depth" / frame_name(id, "fr"),   d / "depth" / frame_name(id, "png"),
          d / "mask" / frame_name(id, "fr"),    d / "mask" / frame_name(id, "png"),
          d / "masked" / frame_name(id, "fr"),  d / "masked" / frame_name(id, "png")};
}

}  // namespace

void validate(const PipelineConfig& cfg) {
  validate(cfg.sweep);
  validate(cfg.grid);
  if (!(cfg.tau >= 0 && cfg.tau <= 1)) throw std::invalid_argument("tau must be in [0,1]");
  if (!(cfg.mu > 0)) throw std::invalid_argument("mu must be positive");
  if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0)
    throw std::invalid_argument("kernel size must be odd");
  if (cfg.channels < 1) throw std::invalid_argument("channels must be positive");
  if (cfg.alpha < 0 || cfg.beta < 0 || cfg.gamma < 0)
    throw std::invalid_argument("loss weights must be non-negative");
}

void apply_config_json(PipelineConfig& cfg, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad config json: ") + e.what());
  }
  try {
    if (j.contains("planes")) cfg.sweep.d = j["planes"];
    if (j.contains("z_min")) cfg.sweep.z_min = j["z_min"];
    if (j.contains("tau")) cfg.tau = j["tau"];
    if (j.contains("mu")) cfg.mu = j["mu"];
    if (j.contains("kernel_size")) cfg.kernel_size = j["kernel_size"];
    if (j.contains("channels")) cfg.channels = j["channels"];
    if (j.contains("alpha")) cfg.alpha = j["alpha"];
    if (j.contains("beta")) cfg.beta = j["beta"];
    if (j.contains("gamma")) cfg.gamma = j["gamma"];
    if (j.contains("extractor")) cfg.extractor = j["extractor"];
    if (j.contains("aggregator")) cfg.aggregator = j["aggregator"];
    if (j.contains("kernel_seed")) cfg.kernel_seed = j["kernel_seed"];
    if (j.contains("kernel_file")) cfg.kernel_file = j["kernel_file"];
    if (j.contains("threads")) cfg.threads = j["threads"];
    if (j.contains("point_l2")) cfg.point_l2 = j["point_l2"];
    if (j.contains("depth_denom_gt")) cfg.depth_denom_gt = j["depth_denom_gt"];
    if (j.contains("grid")) {
      const json& g = j["grid"];
      if (g.contains("origin"))
        cfg.grid.origin =
            Eigen::Vector3d(g["origin"].at(0).get<double>(),
                            g["origin"].at(1).get<double>(), g["origin"].at(2).get<double>());
      if (g.contains("pitch")) cfg.grid.pitch = g["pitch"];
      if (g.contains("dims")) {
        cfg.grid.vx = g["dims"].at(0);
        cfg.grid.vy = g["dims"].at(1);
        cfg.grid.vz = g["dims"].at(2);
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("bad config json: ") + e.what());
  }
  validate(cfg);
}

void apply_config_file(PipelineConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  apply_config_json(cfg, text);
}

Dataset load_dataset(const std::string& root) {
  Dataset ds;
  ds.root = root;
  fs::path r(root);
  if (!fs::is_directory(r)) throw DataError("dataset root is not a directory: " + root);
  ds.intrinsics = load_intrinsics((r / "intrinsics.txt").string());
  int n = 0;
  while (fs::exists(r / "color" / frame_name(n, "png"))) ++n;
  if (n == 0) throw DataError("no frames found under " + (r / "color").string());
  for (const auto& entry : fs::directory_iterator(r / "color")) {
    if (entry.path().extension() != ".png") continue;
    std::string stem = entry.path().stem().string();
    bool numeric = stem.size() == 6 &&
                   stem.find_first_not_of("0123456789") == std::string::npos;
    if (!numeric || std::stoi(stem) >= n)
      throw DataError("frame ids are not dense from 0 in " + (r / "color").string());
  }
  for (int i = 0; i < n; ++i) {
    FrameRecord fr;
    fr.id = i;
    fr.color = (r / "color" / frame_name(i, "png")).string();
    fr.pose = (r / "pose" / frame_name(i, "txt")).string();
    if (!fs::exists(fr.pose)) throw DataError("missing pose file: " + fr.pose);
    std::string depth = (r / "depth" / frame_name(i, "png")).string();
    if (fs::exists(depth)) fr.depth = depth;
    ds.frames.push_back(fr);
  }
  return ds;
}

std::vector<int> interior_frames(const Dataset& ds) {
  std::vector<int> out;
  for (int i = 1; i + 1 < int(ds.frames.size()); ++i) out.push_back(i);
  return out;
}

Camera frame_camera(const Dataset& ds, int fi, int scale) {
  return {scale == 1 ? ds.intrinsics : scale_intrinsics(ds.intrinsics, scale),
          load_frame_pose(ds, fi)};
}

DepthMap downsample_depth_nearest(const DepthMap& d, int scale) {
  if (scale < 1 || d.h() % scale != 0 || d.w() % scale != 0)
    throw std::invalid_argument("scale does not divide the depth resolution");
  DepthMap out(d.h() / scale, d.w() / scale);
  for (int y = 0; y < out.h(); ++y)
    for (int x = 0; x < out.w(); ++x) {
      // Pixel centers sit at scale*(x+0.5)-0.5 in the source image.
      int sx = std::min(int(std::lround(scale * (x + 0.5) - 0.5)), d.w() - 1);
      int sy = std::min(int(std::lround(scale * (y + 0.5) - 0.5)), d.h() - 1);
      out.z.at(y, x) = d.z.at(sy, sx);
      out.valid.at(y, x) = d.valid.at(sy, sx);
    }
  return out;
}

Stage1Output stage1_frame(const Dataset& ds, int n, const PipelineConfig& cfg) {
  validate(cfg);
  if (n < 1 || n + 1 >= int(ds.frames.size()))
    throw std::invalid_argument("not an interior frame");
  Extractor extract = find_extractor(cfg.extractor, cfg.channels);
  int ids[3] = {n, n - 1, n + 1};
  FeatureMap feats[3];
  Camera cams_full[3];
  for (int i = 0; i < 3; ++i) {
    Image<float> img = load_intensity_png(ds.frames[ids[i]].color);
    if (!img.same_size(ds.intrinsics.height, ds.intrinsics.width))
      throw DataError("image size does not match intrinsics: " + ds.frames[ids[i]].color);
    feats[i] = extract(img);
    cams_full[i] = {ds.intrinsics, load_frame_pose(ds, ids[i])};
  }
  int scale = feature_scale(ds.intrinsics, feats[0]);
  std::array<Camera, 3> cams;
  for (int i = 0; i < 3; ++i)
    cams[i] = {scale_intrinsics(ds.intrinsics, scale), cams_full[i].pose};
  InitialVolume iv =
      build_initial_volume(feats[0], feats[1], feats[2], cams, cfg.sweep, cfg.threads);
  AggregateResult agg = aggregate(iv, find_aggregator(cfg.aggregator, cfg.threads));
  Stage1Output out;
  out.depth = regress_depth(agg.depth, cfg.sweep, cfg.threads);
  out.mask = overlap_mask(agg.overlap, cfg.threads);
  out.masked = mask_depth(out.depth, out.mask, cfg.tau);
  return out;
}

void run_stage1(const Dataset& ds, const PipelineConfig& cfg, const std::string& out_dir) {
  validate(cfg);
  if (ds.frames.size() < 3) throw DataError("stage 1 needs at least 3 frames");
  for (const char* sub : {"depth", "mask", "masked"})
    fs::create_directories(fs::path(out_dir) / sub);
  for (int n : interior_frames(ds)) {
    Stage1Output s1 = stage1_frame(ds, n, cfg);
    Stage1Paths p = stage1_paths(out_dir, ds.frames[n].id);
    save_depth_raster(p.depth_fr.string(), s1.depth);
    save_depth_png(p.depth_png.string(), s1.depth);
    save_mask_raster(p.mask_fr.string(), s1.mask);
    save_mask_png(p.mask_png.string(), s1.mask);
    save_depth_raster(p.masked_fr.string(), s1.masked);
    save_depth_png(p.masked_png.string(), s1.masked);
  }
}

Stage2Result run_stage2(const Dataset& ds, const std::string& stage1_dir,
                        const PipelineConfig& cfg, const std::string& out_dir) {
  validate(cfg);
  std::vector<int> interior = interior_frames(ds);
  if (interior.empty()) throw DataError("stage 2 needs at least 3 frames");

  ReservoirKernel kernel =
      cfg.kernel_file.empty()
          ? random_kernel(cfg.channels, cfg.channels, cfg.kernel_size, cfg.kernel_seed)
          : load_kernel(cfg.kernel_file);
  if (kernel.c_in != cfg.channels)
    throw DataError("kernel input channels do not match the configured channels");

  Extractor extract = find_extractor(cfg.extractor, cfg.channels);
  std::vector<DepthMap> masked;
  std::vector<Camera> cams;
  std::vector<SceneVolume> posed;
  Eigen::Matrix3d r_base_cfw;
  for (size_t vi = 0; vi < interior.size(); ++vi) {
    int n = interior[vi];
    Stage1Paths p = stage1_paths(stage1_dir, ds.frames[n].id);
    if (!fs::exists(p.masked_fr))
      throw DataError("missing stage-1 output: " + p.masked_fr.string());
    DepthMap md = load_depth_raster(p.masked_fr.string());

    Image<float> img = load_intensity_png(ds.frames[n].color);
    FeatureMap f = extract(img);
    int scale = feature_scale(ds.intrinsics, f);
    Camera cam = frame_camera(ds, n, scale);
    if (md.h() != f.h || md.w() != f.w)
      throw DataError("stage-1 output resolution mismatch: " + p.masked_fr.string());

    Eigen::Matrix3d r_cfw = cam.pose.camera_from_world().R;
    if (vi == 0) r_base_cfw = r_cfw;
    Eigen::Matrix3d r_1_to_n = r_cfw * r_base_cfw.transpose();

    SceneVolume feat_vol = backproject_features(f, cam, cfg.grid, nullptr, cfg.threads);
    posed.push_back(posed_conv3d(feat_vol, kernel, r_1_to_n, cfg.threads));
    masked.push_back(std::move(md));
    cams.push_back(cam);
  }

  Stage2Result result{SceneVolume(), TsdfVolume(cfg.grid, cfg.mu), TriangleMesh()};
  SceneVolume avg = average_posed_volumes(posed);
  posed.clear();
  SceneVolume occ = embed_depth_occupancy(masked, cams, cfg.grid);
  result.unified = build_unified_volume(avg, occ);

  bool any_valid = false;
  for (size_t vi = 0; vi < masked.size(); ++vi) {
    for (int y = 0; y < masked[vi].h() && !any_valid; ++y)
      for (int x = 0; x < masked[vi].w(); ++x)
        if (masked[vi].valid.at(y, x)) {
          any_valid = true;
          break;
        }
    integrate_depth(result.tsdf, masked[vi], cams[vi], cfg.threads);
  }
  result.mesh = extract_mesh(result.tsdf, cfg.threads);
  if (!any_valid || result.mesh.vertices.empty())
    fprintf(stderr, "warning: no surface extracted (all depths masked out?)\n");

  fs::create_directories(out_dir);
  save_volume((fs::path(out_dir) / "unified.vol").string(), result.unified);
  save_tsdf((fs::path(out_dir) / "tsdf.vol").string(), result.tsdf);
  save_ply((fs::path(out_dir) / "mesh.ply").string(), result.mesh);
  return result;
}

EvalResult run_eval(const Dataset& ds, const std::string& out_dir,
                    const PipelineConfig& cfg) {
  validate(cfg);
  fs::path dir(out_dir);
  TsdfVolume tsdf = load_tsdf((dir / "tsdf.vol").string());
  TriangleMesh mesh = load_ply((dir / "mesh.ply").string());

  EvalResult result;
  Extractor extract = find_extractor(cfg.extractor, cfg.channels);
  int scale = 0;
  double abs_rel = 0, abs_diff = 0, sq_rel = 0, sq = 0;
  int64_t n_px = 0;
  for (int n : interior_frames(ds)) {
    if (ds.frames[n].depth.empty()) continue;
    if (scale == 0) {
      Image<float> img = load_intensity_png(ds.frames[n].color);
      scale = feature_scale(ds.intrinsics, extract(img));
    }
    DepthMap gt_full = load_depth_png(ds.frames[n].depth);
    if (!gt_full.z.same_size(ds.intrinsics.height, ds.intrinsics.width))
      throw DataError("depth size does not match intrinsics: " + ds.frames[n].depth);
    DepthMap gt = downsample_depth_nearest(gt_full, scale);
    Camera cam = frame_camera(ds, n, scale);
    DepthMap rendered = render_depth(tsdf, cam, cfg.threads);
    try {
      DepthEvalReport r = eval_depth(rendered, gt, !cfg.depth_denom_gt);
      abs_rel += r.abs_rel * r.n;
      abs_diff += r.abs_diff * r.n;
      sq_rel += r.sq_rel * r.n;
      sq += r.rmse * r.rmse * r.n;
      n_px += r.n;
    } catch (const std::invalid_argument&) {
      // no jointly valid pixels in this frame
    }
  }
  if (n_px > 0) {
    DepthEvalReport r;
    r.abs_rel = abs_rel / n_px;
    r.abs_diff = abs_diff / n_px;
    r.sq_rel = sq_rel / n_px;
    r.rmse = std::sqrt(sq / n_px);
    r.n = n_px;
    result.depth = r;
  }

  std::vector<Eigen::Vector3d> gt_points;
  fs::path gt_ply = fs::path(ds.root) / "gt_points.ply";
  fs::path scene_json = fs::path(ds.root) / "scene.json";
  bool have_scene = fs::exists(scene_json);
  if (fs::exists(gt_ply)) {
    gt_points = mesh_points(load_ply(gt_ply.string()));
  } else if (have_scene) {
    gt_points = sample_surface_points(load_scene_config(scene_json.string()).scene,
                                      20000, 4242);
  }
  if (!gt_points.empty() && !mesh.vertices.empty()) {
    GeomEvalReport g =
        eval_pointcloud(mesh_points(mesh), gt_points, 0.05,
                        cfg.point_l2 ? PointMetric::kL2 : PointMetric::kL1, cfg.threads);
    if (have_scene) {
      TsdfVolume gt_tsdf =
          analytic_tsdf(load_scene_config(scene_json.string()).scene, tsdf.spec, tsdf.mu);
      g.l1 = eval_tsdf_l1(tsdf, gt_tsdf);
      g.has_l1 = true;
    }
    result.geom = g;
  }

  const DepthEvalReport* dr = result.depth ? &*result.depth : nullptr;
  const GeomEvalReport* gr = result.geom ? &*result.geom : nullptr;
  std::ofstream table(dir / "report.txt");
  if (!table) throw DataError("cannot write report under " + out_dir);
  table << report_table(dr, gr);
  std::ofstream kv(dir / "report.kv");
  if (!kv) throw DataError("cannot write report under " + out_dir);
  kv << report_kv(dr, gr);
  return result;
}

}  // namespace sweepfuse
