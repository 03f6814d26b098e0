#pragma once

#include <string>
#include <vector>

#include "sweepfuse/geometry.h"
#include "sweepfuse/maps.h"

namespace sweepfuse {

struct SceneVolume {
  VoxelGridSpec spec;
  int c = 0;
  std::vector<float> v;  // channel-major, then x, y, z

  SceneVolume() = default;
  SceneVolume(const VoxelGridSpec& s, int c_, float fill = 0.f)
      : spec(s), c(c_), v(size_t(c_) * s.voxel_count(), fill) {}

  float& at(int ch, int x, int y, int z) {
    return v[((size_t(ch) * spec.vx + x) * spec.vy + y) * spec.vz + z];
  }
  const float& at(int ch, int x, int y, int z) const {
    return v[((size_t(ch) * spec.vx + x) * spec.vy + y) * spec.vz + z];
  }
};

// Back-projects image features into the grid: each voxel center is projected
// into the view and bilinearly samples the feature map (zero outside the
// frustum). `count` gets 1 for in-frustum voxels, 0 otherwise.
SceneVolume backproject_features(const FeatureMap& f, const Camera& cam,
                                 const VoxelGridSpec& spec, SceneVolume* count = nullptr,
                                 int threads = 1);

// Per-view voxel occupancy indicators (multiple pixels of one view landing in
// one voxel count once), averaged over views; values lie in {k/N}.
SceneVolume embed_depth_occupancy(const std::vector<DepthMap>& depths,
                                  const std::vector<Camera>& cams, const VoxelGridSpec& spec);

// Channel concatenation, occupancy first.
SceneVolume build_unified_volume(const SceneVolume& posed_feature_avg,
                                 const SceneVolume& occupancy);

void save_volume(const std::string& path, const SceneVolume& vol);
SceneVolume load_volume(const std::string& path);

}  // namespace sweepfuse
