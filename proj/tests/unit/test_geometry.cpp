#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "sweepfuse/geometry.h"

using namespace sweepfuse;

namespace {

Intrinsics test_k() { return {100, 100, 80, 60, 160, 120}; }

Pose random_pose(Rng& rng) {
  Pose p;
  p.R = random_rotation(rng);
  p.t = Eigen::Vector3d(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
  return p;
}

}  // namespace

TEST_CASE("project: optical axis") {
  Intrinsics k{1, 1, 0, 0, 10, 10};
  Eigen::Vector3d uvz = project({0, 0, 1}, k);
  CHECK(uvz.x() == doctest::Approx(0.0));
  CHECK(uvz.y() == doctest::Approx(0.0));
  CHECK(uvz.z() == doctest::Approx(1.0));
}

TEST_CASE("project: hand example") {
  Eigen::Vector3d uvz = project({1, 0, 2}, test_k());
  CHECK(uvz.x() == doctest::Approx(130.0));
  CHECK(uvz.y() == doctest::Approx(60.0));
  CHECK(uvz.z() == doctest::Approx(2.0));
}

TEST_CASE("project: behind camera throws") {
  CHECK_THROWS_AS(project({0, 0, -1}, test_k()), std::invalid_argument);
  CHECK_THROWS_AS(project({0, 0, 0}, test_k()), std::invalid_argument);
}

TEST_CASE("backproject: principal axis and hand example") {
  Intrinsics k0{1, 1, 0, 0, 10, 10};
  CHECK((backproject(0, 0, 1, k0) - Eigen::Vector3d(0, 0, 1)).norm() == doctest::Approx(0.0));
  Eigen::Vector3d p = backproject(130, 60, 2, test_k());
  CHECK((p - Eigen::Vector3d(1, 0, 2)).norm() == doctest::Approx(0.0));
  CHECK_THROWS_AS(backproject(0, 0, 0, test_k()), std::invalid_argument);
}

TEST_CASE("project/backproject round-trip on random pixels") {
  Intrinsics k = test_k();
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    double u = rng.uniform(0, k.width), v = rng.uniform(0, k.height);
    double z = rng.uniform(0.1, 10);
    Eigen::Vector3d uvz = project(backproject(u, v, z, k), k);
    CHECK(std::abs(uvz.x() - u) < 1e-9);
    CHECK(std::abs(uvz.y() - v) < 1e-9);
    CHECK(std::abs(uvz.z() - z) < 1e-9);
  }
}

TEST_CASE("plane_homography: identity pose gives identity for any depth") {
  Intrinsics k = test_k();
  for (double z : {0.5, 1.0, 7.0}) {
    Eigen::Matrix3d h = plane_homography(k, k, RigidTransform{}, z);
    CHECK((h - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("plane_homography: pure x-translation shifts u by fx*tx/z") {
  Intrinsics k = test_k();
  RigidTransform srt;
  srt.t = Eigen::Vector3d(0.3, 0, 0);
  Eigen::Matrix3d h = plane_homography(k, k, srt, 2.0);
  Eigen::Vector3d q = h * Eigen::Vector3d(40, 25, 1);
  q /= q.z();
  CHECK(q.x() == doctest::Approx(40 + 100 * 0.3 / 2.0).epsilon(1e-12));
  CHECK(q.y() == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("plane_homography: agrees with backproject-transform-project") {
  Intrinsics k_ref = test_k();
  Intrinsics k_src{90, 110, 70, 55, 160, 120};
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    RigidTransform srt;
    // Small rotations keep the warped plane in front of the source camera.
    srt.R = axis_angle_rotation(
        {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}, rng.uniform(-20, 20));
    srt.t = Eigen::Vector3d(rng.uniform(-.5, .5), rng.uniform(-.5, .5), rng.uniform(-.3, .3));
    double z = rng.uniform(1.0, 8.0);
    double u = rng.uniform(0, k_ref.width), v = rng.uniform(0, k_ref.height);

    Eigen::Vector3d p_src = srt.apply(backproject(u, v, z, k_ref));
    REQUIRE(p_src.z() > 0);
    Eigen::Vector3d direct = project(p_src, k_src);
    Eigen::Vector3d hq = plane_homography(k_ref, k_src, srt, z) * Eigen::Vector3d(u, v, 1);
    hq /= hq.z();
    CHECK(std::abs(hq.x() - direct.x()) < 1e-6);
    CHECK(std::abs(hq.y() - direct.y()) < 1e-6);
  }
}

TEST_CASE("plane_homography: translation term vanishes as z grows") {
  Intrinsics k = test_k();
  RigidTransform srt;
  srt.R = axis_angle_rotation({0, 1, 0}, 30);
  srt.t = Eigen::Vector3d(1, 2, 3);
  Eigen::Matrix3d h = plane_homography(k, k, srt, 1e9);
  Eigen::Matrix3d pure =
      intrinsic_matrix(k) * srt.R * intrinsic_matrix(k).inverse();
  CHECK((h - pure).cwiseAbs().maxCoeff() / pure.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("world_to_voxel: origin and paper pitch") {
  VoxelGridSpec spec{Eigen::Vector3d(1, 2, 3), 0.04, 10, 10, 10};
  Eigen::Vector3d ijk = world_to_voxel(spec.origin, spec);
  CHECK(ijk.cwiseAbs().maxCoeff() < 1e-12);
  ijk = world_to_voxel(spec.origin + Eigen::Vector3d(0.04, 0.08, 0.12), spec);
  CHECK(ijk.x() == doctest::Approx(1.0));
  CHECK(ijk.y() == doctest::Approx(2.0));
  CHECK(ijk.z() == doctest::Approx(3.0));
}

TEST_CASE("world_to_voxel/voxel_to_world round-trip") {
  VoxelGridSpec spec{Eigen::Vector3d(-0.3, 0.1, 2), 0.05, 8, 8, 8};
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Eigen::Vector3d p(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4));
    CHECK((voxel_to_world(world_to_voxel(p, spec), spec) - p).norm() < 1e-9);
  }
}

TEST_CASE("pose composition associative, inverse cancels") {
  Rng rng(17);
  for (int i = 0; i < 20; ++i) {
    RigidTransform a = random_pose(rng).camera_from_world();
    RigidTransform b = random_pose(rng).camera_from_world();
    RigidTransform c = random_pose(rng).camera_from_world();
    RigidTransform ab_c = (a * b) * c, a_bc = a * (b * c);
    CHECK((ab_c.R - a_bc.R).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((ab_c.t - a_bc.t).cwiseAbs().maxCoeff() < 1e-9);
    RigidTransform id = a.inverse() * a;
    CHECK((id.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(id.t.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("pose convention: both tags describe the same camera") {
  Rng rng(29);
  Pose cw = random_pose(rng);
  Pose wc{cw.R.transpose(), -(cw.R.transpose() * cw.t), PoseConvention::kWorldFromCamera};
  RigidTransform a = cw.camera_from_world(), b = wc.camera_from_world();
  CHECK((a.R - b.R).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a.t - b.t).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("relative_transform maps src-camera points to dst-camera points") {
  Rng rng(31);
  Pose src = random_pose(rng), dst = random_pose(rng);
  Eigen::Vector3d pw(0.4, -0.2, 1.5);
  Eigen::Vector3d p_src = src.camera_from_world().apply(pw);
  Eigen::Vector3d p_dst = dst.camera_from_world().apply(pw);
  CHECK((relative_transform(src, dst).apply(p_src) - p_dst).norm() < 1e-9);
}

TEST_CASE("validate rejects bad intrinsics, poses, and grids") {
  Intrinsics k = test_k();
  k.fx = -1;
  CHECK_THROWS_AS(validate(k), std::invalid_argument);
  k = test_k();
  k.cx = 200;
  CHECK_THROWS_AS(validate(k), std::invalid_argument);

  Pose p;
  p.R(0, 0) = 2;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p.R = Eigen::Matrix3d::Identity();
  p.R(0, 0) = -1;  // reflection, det = -1
  CHECK_THROWS_AS(validate(p), std::invalid_argument);

  VoxelGridSpec spec;
  spec.pitch = 0;
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
  spec.pitch = 0.04;
  spec.vx = 0;
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
}

TEST_CASE("axis_aligned_rotations: 24 proper rotations, all distinct") {
  auto rots = axis_aligned_rotations();
  REQUIRE(rots.size() == 24);
  for (size_t i = 0; i < rots.size(); ++i) {
    Eigen::Matrix3d r = rots[i].cast<double>();
    CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0));
    for (size_t j = i + 1; j < rots.size(); ++j) CHECK(rots[i] != rots[j]);
  }
}

TEST_CASE("scale_intrinsics: half-pixel correct principal point") {
  Intrinsics k{525, 525, 319.5, 239.5, 640, 480};
  Intrinsics s = scale_intrinsics(k, 4);
  CHECK(s.fx == doctest::Approx(131.25));
  CHECK(s.width == 160);
  CHECK(s.height == 120);
  // Pixel center (0,0) at scale 4 covers full-res centers {-0.5..3.5} -> 1.5.
  CHECK(s.cx == doctest::Approx((319.5 + 0.5) / 4 - 0.5));
  CHECK(s.cy == doctest::Approx((239.5 + 0.5) / 4 - 0.5));
  CHECK_THROWS_AS(scale_intrinsics(k, 7), std::invalid_argument);
}

TEST_CASE("pose file round-trip, world-from-camera text convention") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "sf_geom_io";
  fs::create_directories(dir);
  Rng rng(41);
  Pose p = random_pose(rng);
  std::string path = (dir / "pose.txt").string();
  save_pose(path, p);
  Pose q = load_pose(path);
  CHECK(q.convention == PoseConvention::kWorldFromCamera);
  RigidTransform a = p.camera_from_world(), b = q.camera_from_world();
  CHECK((a.R - b.R).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.t - b.t).cwiseAbs().maxCoeff() < 1e-12);

  Intrinsics k{525, 525, 319.5, 239.5, 640, 480};
  std::string kpath = (dir / "intrinsics.txt").string();
  save_intrinsics(kpath, k);
  Intrinsics k2 = load_intrinsics(kpath);
  CHECK(k2.fx == k.fx);
  CHECK(k2.cy == k.cy);
  CHECK(k2.width == k.width);

  CHECK_THROWS_AS(load_pose((dir / "missing.txt").string()), DataError);
  std::FILE* f = std::fopen((dir / "bad.txt").string().c_str(), "w");
  std::fputs("1 0 0\n", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_pose((dir / "bad.txt").string()), DataError);
}
