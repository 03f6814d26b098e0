#pragma once

#include <string>
#include <variant>
#include <vector>

#include "sweepfuse/geometry.h"
#include "sweepfuse/maps.h"
#include "sweepfuse/tsdf.h"

namespace sweepfuse {

// Finite rectangle: center p0, unit normal n, unit in-plane axis u (v = n x u),
// half extents hu/hv. The signed side of n is outside.
struct PlanePrim {
  Eigen::Vector3d p0, n, u;
  double hu = 1, hv = 1;
  uint64_t tex_seed = 1;
};

struct BoxPrim {
  Eigen::Vector3d bmin, bmax;
  uint64_t tex_seed = 1;
};

struct SpherePrim {
  Eigen::Vector3d center;
  double radius = 1;
  uint64_t tex_seed = 1;
};

using Primitive = std::variant<PlanePrim, BoxPrim, SpherePrim>;

struct Scene {
  std::vector<Primitive> primitives;
  Eigen::Vector3d bounds_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d bounds_max = Eigen::Vector3d::Zero();
  Eigen::Vector3d light = Eigen::Vector3d(-0.4, 0.8, -0.45);  // toward the light
};

struct Trajectory {
  std::vector<Pose> poses;
};

struct RenderResult {
  Image<float> intensity;
  DepthMap depth;
};

// Per-pixel closed-form ray cast to the nearest primitive; intensity is
// world-anchored value noise with Lambert shading so multi-view
// photo-consistency holds exactly. Misses are invalid with zero intensity.
RenderResult render(const Scene& scene, const Camera& cam, int threads = 1);

// Exact signed distance to the primitive union, clamped to [-mu, mu] and
// normalized by mu; every voxel is marked observed.
TsdfVolume analytic_tsdf(const Scene& scene, const VoxelGridSpec& spec, double mu);

// n cameras evenly spaced on a circle of the given radius, all looking at
// center; elevation lifts the ring. step_deg defaults to the full circle.
Trajectory orbit_trajectory(const Eigen::Vector3d& center, double radius, int n,
                            double elevation_deg, double start_deg = 0.0,
                            double step_deg = 0.0);

// Deterministic area-weighted surface samples, for ground-truth point clouds.
std::vector<Eigen::Vector3d> sample_surface_points(const Scene& scene, int n, uint64_t seed);

double scene_signed_distance(const Scene& scene, const Eigen::Vector3d& p);

struct SceneConfig {
  Scene scene;
  Trajectory trajectory;
  Intrinsics intrinsics;
};

SceneConfig load_scene_config(const std::string& path);
void save_scene_config(const std::string& path, const SceneConfig& cfg);
std::string scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const std::string& text);

// Built-in scenes: "sphere-orbit" and "two-plane-room".
SceneConfig scene_preset(const std::string& name);

// Writes color/%06d.png, depth/%06d.png (16-bit mm), pose/%06d.txt,
// intrinsics.txt, scene.json, and gt_points.ply under root.
void synthesize_dataset(const SceneConfig& cfg, const std::string& root, int threads = 1);

}  // namespace sweepfuse
