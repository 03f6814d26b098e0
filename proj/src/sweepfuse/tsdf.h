#pragma once

#include <array>
#include <string>
#include <vector>

#include "sweepfuse/fusion.h"
#include "sweepfuse/geometry.h"
#include "sweepfuse/maps.h"

namespace sweepfuse {

// Values in [-1, 1], positive in front of the surface; weight 0 means
// unobserved (value +1 by convention).
struct TsdfVolume {
  VoxelGridSpec spec;
  std::vector<float> values;
  std::vector<float> weights;
  double mu = 0.12;

  TsdfVolume() = default;
  TsdfVolume(const VoxelGridSpec& s, double mu_)
      : spec(s), values(s.voxel_count(), 1.f), weights(s.voxel_count(), 0.f), mu(mu_) {}

  size_t idx(int x, int y, int z) const {
    return (size_t(x) * spec.vy + y) * spec.vz + z;
  }
  float value_at(int x, int y, int z) const { return values[idx(x, y, z)]; }
  float weight_at(int x, int y, int z) const { return weights[idx(x, y, z)]; }
};

struct TriangleMesh {
  std::vector<std::array<float, 3>> vertices;
  std::vector<std::array<uint32_t, 3>> faces;
};

// Projective signed distance along the camera ray, clamped to [-mu, mu] and
// normalized; voxels more than mu behind the surface are skipped. Running
// weighted average with weight 1 per observation, clamped at 255.
void integrate_depth(TsdfVolume& vol, const DepthMap& z, const Camera& cam, int threads = 1);

// L1 over voxels observed in the ground truth.
double tsdf_loss(const TsdfVolume& pred, const TsdfVolume& gt);
std::vector<double> tsdf_loss_grad(const TsdfVolume& pred, const TsdfVolume& gt);

double total_loss(double lz, double lm, double ltsdf, double alpha = 1.0, double beta = 0.5,
                  double gamma = 2.0);

// Marching cubes at iso-level 0; only cubes whose 8 corners are all observed.
TriangleMesh extract_mesh(const TsdfVolume& vol, int threads = 1);

// Ray-marches each pixel in mu/2 steps; the first +to- transition is refined
// by linear interpolation. Pixels without a crossing are invalid.
DepthMap render_depth(const TsdfVolume& vol, const Camera& cam, int threads = 1);

float sample_tsdf_trilinear(const TsdfVolume& vol, const Eigen::Vector3d& ijk);

void save_tsdf(const std::string& path, const TsdfVolume& vol);
TsdfVolume load_tsdf(const std::string& path);

// Binary little-endian PLY, float32 positions and uint32 face indices.
void save_ply(const std::string& path, const TriangleMesh& mesh);
TriangleMesh load_ply(const std::string& path);

std::vector<Eigen::Vector3d> mesh_points(const TriangleMesh& mesh);

}  // namespace sweepfuse
