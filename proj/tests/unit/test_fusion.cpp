#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sweepfuse/fusion.h"

using namespace sweepfuse;

namespace {

Pose camera_at(const Eigen::Vector3d& c) {
  return {Eigen::Matrix3d::Identity(), c, PoseConvention::kWorldFromCamera};
}

// The documented frustum test, recomputed directly.
bool in_frustum(const Eigen::Vector3d& pw, const Camera& cam) {
  Eigen::Vector3d pc = cam.pose.camera_from_world().apply(pw);
  if (pc.z() <= 0) return false;
  Eigen::Vector3d px = project(pc, cam.K);
  return px.x() >= 0 && px.x() <= cam.K.width - 1 && px.y() >= 0 &&
         px.y() <= cam.K.height - 1;
}

int count_occupied(const SceneVolume& vol) {
  int n = 0;
  for (float x : vol.v) n += x != 0.f;
  return n;
}

}  // namespace

TEST_CASE("backproject_features: constant map fills the frustum, count matches oracle") {
  Camera cam{{10, 10, 3.5, 2.5, 8, 6}, Pose{}};
  VoxelGridSpec spec{Eigen::Vector3d(-0.4, -0.3, -0.2), 0.1, 8, 8, 8};
  FeatureMap f(1, 6, 8, 1.f);
  SceneVolume count;
  SceneVolume vol = backproject_features(f, cam, spec, &count);
  REQUIRE(vol.c == 1);
  int inside = 0;
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y)
      for (int z = 0; z < 8; ++z) {
        bool in = in_frustum(voxel_to_world({double(x), double(y), double(z)}, spec), cam);
        inside += in;
        CHECK(count.at(0, x, y, z) == (in ? 1.f : 0.f));
        CHECK(vol.at(0, x, y, z) == (in ? 1.f : 0.f));
      }
  // The grid straddles the frustum: both cases must actually occur.
  CHECK(inside > 0);
  CHECK(inside < 8 * 8 * 8);
}

TEST_CASE("backproject_features: optical-axis voxel samples the principal point") {
  Camera cam{{10, 10, 3.5, 2.5, 8, 6}, Pose{}};
  VoxelGridSpec spec{Eigen::Vector3d(0, 0, 1), 0.05, 1, 1, 1};
  FeatureMap f(2, 6, 8);
  Rng rng(3);
  for (float& v : f.v) v = float(rng.uniform());
  SceneVolume vol = backproject_features(f, cam, spec);
  for (int ch = 0; ch < 2; ++ch) {
    float want = 0.25f * (f.at(ch, 2, 3) + f.at(ch, 2, 4) + f.at(ch, 3, 3) + f.at(ch, 3, 4));
    CHECK(vol.at(ch, 0, 0, 0) == doctest::Approx(want));
  }
}

TEST_CASE("backproject_features: mismatched feature map rejected") {
  Camera cam{{10, 10, 3.5, 2.5, 8, 6}, Pose{}};
  VoxelGridSpec spec{Eigen::Vector3d::Zero(), 0.1, 2, 2, 2};
  CHECK_THROWS_AS(backproject_features(FeatureMap(1, 5, 8), cam, spec),
                  std::invalid_argument);
}

TEST_CASE("backproject_features: world-frame consistency under translation") {
  Intrinsics k{10, 10, 3.5, 2.5, 8, 6};
  FeatureMap f(1, 6, 8);
  Rng rng(5);
  for (float& v : f.v) v = float(rng.uniform());
  Eigen::Vector3d t(0.3, -0.2, 0.1);
  VoxelGridSpec ga{Eigen::Vector3d(-0.3, -0.25, 0.4), 0.1, 7, 6, 5};
  VoxelGridSpec gb = ga;
  gb.origin += t;
  SceneVolume va = backproject_features(f, Camera{k, camera_at({0, 0, 0})}, ga);
  SceneVolume vb = backproject_features(f, Camera{k, camera_at(t)}, gb);
  for (size_t i = 0; i < va.v.size(); ++i) CHECK(std::abs(va.v[i] - vb.v[i]) <= 1e-6f);
}

TEST_CASE("backproject_features: world-frame consistency under a 90-degree roll") {
  Intrinsics k{10, 10, 3.5, 2.5, 8, 6};
  FeatureMap f(1, 6, 8);
  Rng rng(6);
  for (float& v : f.v) v = float(rng.uniform());
  // Cubic-in-xy grid centered on the optical axis; rotating the world about
  // that axis permutes voxel indices about the grid center.
  VoxelGridSpec spec{Eigen::Vector3d(-0.3, -0.3, 0.4), 0.1, 7, 7, 5};
  Eigen::Matrix3d rz = axis_angle_rotation({0, 0, 1}, 90.0);
  Camera cam_a{k, camera_at({0, 0, 0})};
  Camera cam_b{k, Pose{rz, Eigen::Vector3d::Zero(), PoseConvention::kWorldFromCamera}};
  SceneVolume va = backproject_features(f, cam_a, spec);
  SceneVolume vb = backproject_features(f, cam_b, spec);
  for (int x = 0; x < 7; ++x)
    for (int y = 0; y < 7; ++y)
      for (int z = 0; z < 5; ++z) {
        // Index image of (x,y) under the same rotation: (x,y)->(3-(y-3), 3+(x-3)).
        int xr = 3 - (y - 3), yr = 3 + (x - 3);
        CHECK(std::abs(vb.at(0, xr, yr, z) - va.at(0, x, y, z)) <= 1e-6f);
      }
}

TEST_CASE("embed_depth_occupancy: single pixel occupies a single voxel") {
  Camera cam{{10, 10, 3, 2, 8, 6}, Pose{}};
  VoxelGridSpec spec{Eigen::Vector3d(-0.5, -0.5, 0.5), 0.1, 10, 10, 10};
  DepthMap d(6, 8);
  d.z.at(2, 3) = 1.f;
  d.valid.at(2, 3) = 1;
  SceneVolume occ = embed_depth_occupancy({d}, {cam}, spec);
  CHECK(occ.at(0, 5, 5, 5) == 1.f);
  CHECK(count_occupied(occ) == 1);
}

TEST_CASE("embed_depth_occupancy: two-view agreement averages to 1.0 and 0.5") {
  Camera cam{{40, 40, 3, 2, 8, 6}, Pose{}};
  VoxelGridSpec spec{Eigen::Vector3d(-0.5, -0.5, 0.5), 0.1, 10, 10, 10};
  DepthMap d1(6, 8), d2(6, 8);
  // View 1 sees voxel A (through the principal point) and voxel B.
  d1.z.at(2, 3) = 1.f;
  d1.valid.at(2, 3) = 1;
  d1.z.at(4, 7) = 1.f;  // (0.1, 0.05, 1) -> voxel (6, 5, 5)
  d1.valid.at(4, 7) = 1;
  // View 2 sees voxel A twice; per-view multiplicity still counts once.
  d2.z.at(2, 3) = 1.f;
  d2.valid.at(2, 3) = 1;
  d2.z.at(2, 4) = 1.f;  // (0.025, 0, 1) rounds into voxel A as well
  d2.valid.at(2, 4) = 1;
  SceneVolume occ = embed_depth_occupancy({d1, d2}, {cam, cam}, spec);
  CHECK(occ.at(0, 5, 5, 5) == 1.f);   // A: both views
  CHECK(occ.at(0, 6, 5, 5) == 0.5f);  // B: view 1 only
  CHECK(count_occupied(occ) == 2);
}

TEST_CASE("embed_depth_occupancy: points outside the grid are dropped") {
  Camera cam{{10, 10, 3, 2, 8, 6}, Pose{}};
  VoxelGridSpec spec{Eigen::Vector3d(-0.5, -0.5, 0.5), 0.1, 10, 10, 10};
  DepthMap d(6, 8);
  d.z.at(2, 3) = 50.f;  // far beyond the grid
  d.valid.at(2, 3) = 1;
  SceneVolume occ = embed_depth_occupancy({d}, {cam}, spec);
  CHECK(count_occupied(occ) == 0);
}

TEST_CASE("embed_depth_occupancy: values in {k/N}, permutation invariant, monotone") {
  Intrinsics k{10, 10, 3, 2, 8, 6};
  VoxelGridSpec spec{Eigen::Vector3d(-0.6, -0.6, 0.3), 0.08, 14, 14, 14};
  Rng rng(11);
  std::vector<DepthMap> depths;
  std::vector<Camera> cams;
  for (int n = 0; n < 3; ++n) {
    DepthMap d(6, 8);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 8; ++x) {
        d.z.at(y, x) = float(rng.uniform(0.4, 1.3));
        d.valid.at(y, x) = uint8_t(rng.uniform() < 0.6);
      }
    depths.push_back(d);
    cams.push_back({k, camera_at({rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0})});
  }
  SceneVolume occ = embed_depth_occupancy(depths, cams, spec);
  for (float v : occ.v) {
    float scaled = 3 * v;
    CHECK(scaled == doctest::Approx(std::round(scaled)));
  }
  SceneVolume perm = embed_depth_occupancy({depths[2], depths[0], depths[1]},
                                           {cams[2], cams[0], cams[1]}, spec);
  CHECK(perm.v == occ.v);

  // Growing the valid set never frees an occupied voxel.
  DepthMap grow(6, 8);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) grow.z.at(y, x) = float(rng.uniform(0.4, 1.3));
  int prev = 0;
  for (int stage = 0; stage < 4; ++stage) {
    for (int i = 0; i < 12; ++i) grow.valid.v[size_t(rng.uniform_int(48))] = 1;
    int now = count_occupied(embed_depth_occupancy({grow}, {Camera{k, Pose{}}}, spec));
    CHECK(now >= prev);
    prev = now;
  }
}

TEST_CASE("embed_depth_occupancy: argument errors") {
  VoxelGridSpec spec{Eigen::Vector3d::Zero(), 0.1, 2, 2, 2};
  CHECK_THROWS_AS(embed_depth_occupancy({}, {}, spec), std::invalid_argument);
  Camera cam{{10, 10, 3, 2, 8, 6}, Pose{}};
  DepthMap d(6, 8);
  CHECK_THROWS_AS(embed_depth_occupancy({d}, {cam, cam}, spec), std::invalid_argument);
  DepthMap wrong(5, 8);
  CHECK_THROWS_AS(embed_depth_occupancy({wrong}, {cam}, spec), std::invalid_argument);
}

TEST_CASE("build_unified_volume: occupancy first, features after") {
  VoxelGridSpec spec{Eigen::Vector3d::Zero(), 0.1, 3, 4, 5};
  SceneVolume feats(spec, 32);
  SceneVolume occ(spec, 1);
  Rng rng(17);
  for (float& v : feats.v) v = float(rng.uniform(-1, 1));
  for (float& v : occ.v) v = float(rng.uniform());
  SceneVolume u = build_unified_volume(feats, occ);
  REQUIRE(u.c == 33);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 4; ++y)
      for (int z = 0; z < 5; ++z) {
        CHECK(u.at(0, x, y, z) == occ.at(0, x, y, z));
        for (int ch = 0; ch < 32; ++ch)
          CHECK(u.at(ch + 1, x, y, z) == feats.at(ch, x, y, z));
      }

  SceneVolume zero(spec, 2);
  SceneVolume u2 = build_unified_volume(zero, occ);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 4; ++y)
      for (int z = 0; z < 5; ++z) {
        CHECK(u2.at(0, x, y, z) == occ.at(0, x, y, z));
        CHECK(u2.at(1, x, y, z) == 0.f);
        CHECK(u2.at(2, x, y, z) == 0.f);
      }

  VoxelGridSpec other{Eigen::Vector3d::Zero(), 0.1, 3, 4, 4};
  CHECK_THROWS_AS(build_unified_volume(SceneVolume(other, 2), occ), std::invalid_argument);
  CHECK_THROWS_AS(build_unified_volume(feats, SceneVolume(spec, 2)), std::invalid_argument);
}

TEST_CASE("volume save/load round-trip and error paths") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "sf_volumes";
  fs::create_directories(dir);
  VoxelGridSpec spec{Eigen::Vector3d(-1.25, 0.5, 3), 0.04, 4, 3, 2};
  SceneVolume vol(spec, 5);
  Rng rng(23);
  for (float& v : vol.v) v = float(rng.uniform(-2, 2));
  std::string path = (dir / "v.vol").string();
  save_volume(path, vol);
  SceneVolume back = load_volume(path);
  CHECK(back.c == 5);
  CHECK(back.spec == spec);
  CHECK(back.v == vol.v);

  CHECK_THROWS_AS(load_volume((dir / "missing.vol").string()), DataError);
  std::ofstream((dir / "junk.vol").string(), std::ios::binary) << "not a volume";
  CHECK_THROWS_AS(load_volume((dir / "junk.vol").string()), DataError);

  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();
  std::ofstream trunc((dir / "trunc.vol").string(), std::ios::binary);
  trunc.write(bytes.data(), std::streamsize(bytes.size() - 10));
  trunc.close();
  CHECK_THROWS_AS(load_volume((dir / "trunc.vol").string()), DataError);
}
