#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sweepfuse/core.h"

namespace sweepfuse {

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
};

void validate(const Intrinsics& k);

enum class PoseConvention { kCameraFromWorld, kWorldFromCamera };

struct RigidTransform {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return R * p + t; }
  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
  RigidTransform operator*(const RigidTransform& o) const { return {R * o.R, R * o.t + t}; }
};

struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  PoseConvention convention = PoseConvention::kCameraFromWorld;

  RigidTransform camera_from_world() const;
  RigidTransform world_from_camera() const { return camera_from_world().inverse(); }
};

void validate(const Pose& pose);

struct Camera {
  Intrinsics K;
  Pose pose;
};

struct VoxelGridSpec {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double pitch = 0.04;
  int vx = 1, vy = 1, vz = 1;

  int64_t voxel_count() const { return int64_t(vx) * vy * vz; }
  bool operator==(const VoxelGridSpec& o) const {
    return origin == o.origin && pitch == o.pitch && vx == o.vx && vy == o.vy && vz == o.vz;
  }
};

void validate(const VoxelGridSpec& spec);

Eigen::Matrix3d intrinsic_matrix(const Intrinsics& k);

// Pinhole projection of a camera-frame point; returns (u, v, z).
Eigen::Vector3d project(const Eigen::Vector3d& p_cam, const Intrinsics& k);
Eigen::Vector3d backproject(double u, double v, double z, const Intrinsics& k);

// Intrinsics for an image downscaled by an integer factor, pixel centers at
// integer coordinates (half-pixel correct principal point).
Intrinsics scale_intrinsics(const Intrinsics& k, int factor);

// Homography mapping reference pixels on the fronto-parallel plane at depth z
// (reference frame, n = (0,0,1)) to source pixels:
//   H = K_src (R + t n^T / z) K_ref^{-1}
Eigen::Matrix3d plane_homography(const Intrinsics& k_ref, const Intrinsics& k_src,
                                 const RigidTransform& src_from_ref, double z);

Eigen::Vector3d world_to_voxel(const Eigen::Vector3d& p, const VoxelGridSpec& spec);
Eigen::Vector3d voxel_to_world(const Eigen::Vector3d& ijk, const VoxelGridSpec& spec);

// Transform taking src-camera coordinates to dst-camera coordinates.
RigidTransform relative_transform(const Pose& src, const Pose& dst);

Eigen::Matrix3d random_rotation(Rng& rng);
// All 24 proper axis-aligned rotations as exact integer matrices.
std::vector<Eigen::Matrix3i> axis_aligned_rotations();
Eigen::Matrix3d axis_angle_rotation(const Eigen::Vector3d& axis, double degrees);

// Pose files: 4x4 row-major camera-to-world matrix, whitespace-separated text.
Pose load_pose(const std::string& path);
void save_pose(const std::string& path, const Pose& pose);

// Intrinsics file: single line "fx fy cx cy width height".
Intrinsics load_intrinsics(const std::string& path);
void save_intrinsics(const std::string& path, const Intrinsics& k);

}  // namespace sweepfuse
