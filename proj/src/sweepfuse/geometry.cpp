#include "sweepfuse/geometry.h"

#include <cmath>
#include <fstream>
#include <sstream>

namespace sweepfuse {

void validate(const Intrinsics& k) {
  if (!(k.fx > 0) || !(k.fy > 0)) throw std::invalid_argument("focal lengths must be positive");
  if (k.cx < 0 || k.cx >= k.width || k.cy < 0 || k.cy >= k.height)
    throw std::invalid_argument("principal point outside image");
}

void validate(const Pose& pose) {
  Eigen::Matrix3d e = pose.R.transpose() * pose.R - Eigen::Matrix3d::Identity();
  if (e.cwiseAbs().maxCoeff() > 1e-9) throw std::invalid_argument("rotation not orthonormal");
  if (std::abs(pose.R.determinant() - 1.0) > 1e-9)
    throw std::invalid_argument("rotation determinant != +1");
}

void validate(const VoxelGridSpec& spec) {
  if (!(spec.pitch > 0)) throw std::invalid_argument("voxel pitch must be positive");
  if (spec.vx < 1 || spec.vy < 1 || spec.vz < 1)
    throw std::invalid_argument("voxel dims must be >= 1");
}

RigidTransform Pose::camera_from_world() const {
  RigidTransform rt{R, t};
  return convention == PoseConvention::kCameraFromWorld ? rt : rt.inverse();
}

Eigen::Matrix3d intrinsic_matrix(const Intrinsics& k) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = k.fx;
  m(1, 1) = k.fy;
  m(0, 2) = k.cx;
  m(1, 2) = k.cy;
  return m;
}

Eigen::Vector3d project(const Eigen::Vector3d& p_cam, const Intrinsics& k) {
  if (!(p_cam.z() > 0)) throw std::invalid_argument("behind camera");
  return {k.fx * p_cam.x() / p_cam.z() + k.cx, k.fy * p_cam.y() / p_cam.z() + k.cy, p_cam.z()};
}

Eigen::Vector3d backproject(double u, double v, double z, const Intrinsics& k) {
  if (!(z > 0)) throw std::invalid_argument("non-positive depth");
  return {(u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z};
}

Intrinsics scale_intrinsics(const Intrinsics& k, int factor) {
  if (factor < 1 || k.width % factor || k.height % factor)
    throw std::invalid_argument("image size not divisible by scale factor");
  double s = factor;
  return {k.fx / s,
          k.fy / s,
          (k.cx + 0.5) / s - 0.5,
          (k.cy + 0.5) / s - 0.5,
          k.width / factor,
          k.height / factor};
}

Eigen::Matrix3d plane_homography(const Intrinsics& k_ref, const Intrinsics& k_src,
                                 const RigidTransform& src_from_ref, double z) {
  if (!(z > 0)) throw std::invalid_argument("plane depth must be positive");
  validate(k_ref);
  validate(k_src);
  Eigen::Vector3d n(0, 0, 1);
  Eigen::Matrix3d m = src_from_ref.R + src_from_ref.t * n.transpose() / z;
  return intrinsic_matrix(k_src) * m * intrinsic_matrix(k_ref).inverse();
}

Eigen::Vector3d world_to_voxel(const Eigen::Vector3d& p, const VoxelGridSpec& spec) {
  return (p - spec.origin) / spec.pitch;
}

Eigen::Vector3d voxel_to_world(const Eigen::Vector3d& ijk, const VoxelGridSpec& spec) {
  return spec.origin + spec.pitch * ijk;
}

RigidTransform relative_transform(const Pose& src, const Pose& dst) {
  return dst.camera_from_world() * src.camera_from_world().inverse();
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  // Shoemake's uniform quaternion sampling.
  double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  double x = a * std::sin(2 * M_PI * u2), y = a * std::cos(2 * M_PI * u2);
  double z = b * std::sin(2 * M_PI * u3), w = b * std::cos(2 * M_PI * u3);
  return Eigen::Quaterniond(w, x, y, z).toRotationMatrix();
}

std::vector<Eigen::Matrix3i> axis_aligned_rotations() {
  std::vector<Eigen::Matrix3i> out;
  int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (auto& p : perms) {
    for (int signs = 0; signs < 8; ++signs) {
      Eigen::Matrix3i m = Eigen::Matrix3i::Zero();
      for (int c = 0; c < 3; ++c) m(p[c], c) = (signs >> c) & 1 ? -1 : 1;
      int det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
                m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
                m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
      if (det == 1) out.push_back(m);
    }
  }
  return out;
}

Eigen::Matrix3d axis_angle_rotation(const Eigen::Vector3d& axis, double degrees) {
  return Eigen::AngleAxisd(degrees * M_PI / 180.0, axis.normalized()).toRotationMatrix();
}

Pose load_pose(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open pose file: " + path);
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (!(f >> m(r, c))) throw DataError("malformed pose file: " + path);
  Pose pose{m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>(), PoseConvention::kWorldFromCamera};
  try {
    validate(pose);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string(e.what()) + ": " + path);
  }
  return pose;
}

void save_pose(const std::string& path, const Pose& pose) {
  RigidTransform wc = pose.world_from_camera();
  std::ofstream f(path);
  if (!f) throw DataError("cannot write pose file: " + path);
  char buf[256];
  for (int r = 0; r < 3; ++r) {
    snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g\n", wc.R(r, 0), wc.R(r, 1), wc.R(r, 2),
             wc.t(r));
    f << buf;
  }
  f << "0 0 0 1\n";
}

Intrinsics load_intrinsics(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open intrinsics file: " + path);
  Intrinsics k;
  if (!(f >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height))
    throw DataError("malformed intrinsics file: " + path);
  try {
    validate(k);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string(e.what()) + ": " + path);
  }
  return k;
}

void save_intrinsics(const std::string& path, const Intrinsics& k) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write intrinsics file: " + path);
  char buf[256];
  snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %d %d\n", k.fx, k.fy, k.cx, k.cy, k.width,
           k.height);
  f << buf;
}

}  // namespace sweepfuse
