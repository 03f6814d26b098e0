#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sweepfuse/fusion.h"
#include "sweepfuse/geometry.h"
#include "sweepfuse/metrics.h"
#include "sweepfuse/mvs.h"
#include "sweepfuse/posedconv.h"
#include "sweepfuse/synthetic.h"
#include "sweepfuse/tsdf.h"

namespace sweepfuse {

struct PipelineConfig {
  SweepConfig sweep;
  VoxelGridSpec grid{Eigen::Vector3d(-3.2, -1.28, -3.2), 0.04, 160, 64, 160};
  double tau = 0.5;
  double mu = 0.12;
  int kernel_size = 3;
  int channels = 32;
  double alpha = 1.0, beta = 0.5, gamma = 2.0;
  std::string extractor = "pool-sobel";
  std::string aggregator = "variance";
  uint64_t kernel_seed = 17;
  std::string kernel_file;
  int threads = 0;  // 0 = hardware default
  bool point_l2 = false;
  bool depth_denom_gt = false;
};

void validate(const PipelineConfig& cfg);

// Applies the keys present in a JSON config on top of cfg.
void apply_config_json(PipelineConfig& cfg, const std::string& text);
void apply_config_file(PipelineConfig& cfg, const std::string& path);

struct FrameRecord {
  int id = 0;
  std::string color, pose;
  std::string depth;  // empty when no ground truth
};

struct Dataset {
  std::string root;
  Intrinsics intrinsics;
  std::vector<FrameRecord> frames;
};

// Expects root/color/%06d.png, root/pose/%06d.txt, root/intrinsics.txt and
// optional root/depth/%06d.png with dense ids from 0.
Dataset load_dataset(const std::string& root);

std::vector<int> interior_frames(const Dataset& ds);

struct Stage1Output {
  DepthMap depth;
  OverlapMask mask;
  DepthMap masked;
};

// Runs mvs on frames {n-1, n, n+1} at feature resolution.
Stage1Output stage1_frame(const Dataset& ds, int n, const PipelineConfig& cfg);

// Writes depth/mask/masked rasters and PNGs per interior frame under out_dir.
void run_stage1(const Dataset& ds, const PipelineConfig& cfg, const std::string& out_dir);

struct Stage2Result {
  SceneVolume unified;
  TsdfVolume tsdf;
  TriangleMesh mesh;
};

// Consumes the stage-1 masked depths in stage1_dir; writes unified.vol,
// tsdf.vol, and mesh.ply under out_dir.
Stage2Result run_stage2(const Dataset& ds, const std::string& stage1_dir,
                        const PipelineConfig& cfg, const std::string& out_dir);

struct EvalResult {
  std::optional<DepthEvalReport> depth;
  std::optional<GeomEvalReport> geom;
};

// Renders after-fusion depths from out_dir/tsdf.vol against dataset ground
// truth and compares mesh.ply to GT points (gt_points.ply, else scene.json);
// writes report.txt and report.kv under out_dir.
EvalResult run_eval(const Dataset& ds, const std::string& out_dir,
                    const PipelineConfig& cfg);

// Camera for frame index fi at the feature-map scale used by stage 1/2.
Camera frame_camera(const Dataset& ds, int fi, int scale);

// GT depth resampled to the feature scale by nearest pixel.
DepthMap downsample_depth_nearest(const DepthMap& d, int scale);

}  // namespace sweepfuse
