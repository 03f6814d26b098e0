#pragma once

#include <string>
#include <vector>

#include "sweepfuse/fusion.h"
#include "sweepfuse/geometry.h"

namespace sweepfuse {

// C_out x C_in x w x w x w weights, w odd.
struct ReservoirKernel {
  int c_out = 0, c_in = 0, w = 0;
  std::vector<float> v;

  ReservoirKernel() = default;
  ReservoirKernel(int c_out_, int c_in_, int w_, float init = 0.f)
      : c_out(c_out_), c_in(c_in_), w(w_),
        v(size_t(c_out_) * c_in_ * w_ * w_ * w_, init) {}
  float& at(int co, int ci, int i, int j, int k) {
    return v[(((size_t(co) * c_in + ci) * w + i) * w + j) * w + k];
  }
  float at(int co, int ci, int i, int j, int k) const {
    return v[(((size_t(co) * c_in + ci) * w + i) * w + j) * w + k];
  }
};

struct RotatedKernel {
  ReservoirKernel k;
  Eigen::Matrix3d rotation;  // the R_inv the kernel was resampled with
};

struct RotateStats {
  int64_t clamped = 0;
};

void validate(const ReservoirKernel& k);

Eigen::Vector3d norm(const Eigen::Vector3i& v, int w);
Eigen::Vector3d denorm(const Eigen::Vector3i& v, int w, const Eigen::Vector3d& s);

RotatedKernel rotate_kernel_discrete(const ReservoirKernel& k, const Eigen::Matrix3d& r_inv);
RotatedKernel rotate_kernel_interp(const ReservoirKernel& k, const Eigen::Matrix3d& r_inv,
                                   RotateStats* stats = nullptr);

// Continuous source coordinate the discrete method samples for output voxel v.
Eigen::Vector3d discrete_source_coord(const Eigen::Vector3i& v, int w,
                                      const Eigen::Matrix3d& r_inv);

SceneVolume posed_conv3d(const SceneVolume& vol, const RotatedKernel& k, int threads = 0);
SceneVolume posed_conv3d(const SceneVolume& vol, const ReservoirKernel& k,
                         const Eigen::Matrix3d& r_1_to_n, int threads = 0);

SceneVolume average_posed_volumes(const std::vector<SceneVolume>& volumes);

ReservoirKernel random_kernel(int c_out, int c_in, int w, uint64_t seed);

void save_kernel(const std::string& path, const ReservoirKernel& k);
ReservoirKernel load_kernel(const std::string& path);

}  // namespace sweepfuse
