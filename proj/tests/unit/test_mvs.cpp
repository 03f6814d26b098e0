#include <cmath>

#include "doctest.h"
#include "sweepfuse/mvs.h"
#include "sweepfuse/synthetic.h"

using namespace sweepfuse;

namespace {

Pose camera_at(const Eigen::Vector3d& c) {
  return {Eigen::Matrix3d::Identity(), c, PoseConvention::kWorldFromCamera};
}

CostVolume random_depth_volume(int d, int h, int w, uint64_t seed, double lo = -3,
                               double hi = 3) {
  CostVolume vz(VolumeKind::kAggregatedDepth, 1, d, h, w);
  Rng rng(seed);
  for (float& f : vz.v) f = float(rng.uniform(lo, hi));
  return vz;
}

// Depth regression oracle at double precision for finite-difference checks.
double depth_loss_oracle(const CostVolume& vz, const SweepConfig& cfg,
                         const DepthMap& gt, const OverlapMask& mask) {
  double acc = 0;
  for (int y = 0; y < vz.h; ++y)
    for (int x = 0; x < vz.w; ++x) {
      if (!gt.valid.at(y, x) || !mask.known.at(y, x)) continue;
      double e = regress_depth_value(vz, cfg, y, x) - gt.z.at(y, x);
      double sl1 = std::abs(e) < 1 ? 0.5 * e * e : std::abs(e) - 0.5;
      acc += mask.p.at(y, x) * sl1;
    }
  return acc;
}

// Max-pooled two-class softmax loss at double precision.
double overlap_loss_oracle(const CostVolume& vm, const OverlapMask& gt) {
  double acc = 0;
  for (int y = 0; y < vm.h; ++y)
    for (int x = 0; x < vm.w; ++x) {
      if (!gt.known.at(y, x)) continue;
      double best = 0;
      for (int dd = 0; dd < vm.d; ++dd)
        best = std::max(best, 1.0 / (1.0 + std::exp(double(vm.at(1, dd, y, x)) -
                                                    vm.at(0, dd, y, x))));
      acc += std::abs(best - gt.p.at(y, x));
    }
  return acc;
}

}  // namespace

TEST_CASE("plane_depths: defaults, tiny case, monotone") {
  SweepConfig cfg;
  std::vector<double> z = plane_depths(cfg);
  REQUIRE(z.size() == 48);
  CHECK(z[0] == doctest::Approx(24.0));
  CHECK(z[47] == doctest::Approx(0.5));

  SweepConfig tiny{2, 1.0};
  std::vector<double> z2 = plane_depths(tiny);
  CHECK(z2 == std::vector<double>{2.0, 1.0});

  Rng rng(7);
  for (int i = 0; i < 10; ++i) {
    SweepConfig r{2 + rng.uniform_int(62), rng.uniform(0.1, 3.0)};
    std::vector<double> zs = plane_depths(r);
    CHECK(zs.back() == doctest::Approx(r.z_min));
    for (size_t j = 1; j < zs.size(); ++j) CHECK(zs[j] < zs[j - 1]);
  }

  CHECK_THROWS_AS(plane_depths(SweepConfig{1, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(plane_depths(SweepConfig{48, 0.0}), std::invalid_argument);
}

TEST_CASE("extract_pool_sobel: pooling, gradients, channel tiling") {
  Image<float> ramp(16, 32);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 32; ++x) ramp.at(y, x) = float(x);
  FeatureMap f = extract_pool_sobel(ramp, 32);
  REQUIRE(f.c == 32);
  REQUIRE(f.h == 4);
  REQUIRE(f.w == 8);
  // 4x4 mean of a unit ramp in x: 4*x + 1.5; interior Sobel x slope 4, y 0.
  CHECK(f.at(0, 2, 3) == doctest::Approx(4 * 3 + 1.5));
  CHECK(f.at(1, 2, 3) == doctest::Approx(4.0));
  CHECK(f.at(2, 2, 3) == doctest::Approx(0.0));
  // Channels tile with period 3.
  CHECK(f.at(3, 1, 5) == f.at(0, 1, 5));
  CHECK(f.at(4, 1, 5) == f.at(1, 1, 5));

  Image<float> flat(8, 8, 0.25f);
  FeatureMap g = extract_pool_sobel(flat, 3);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      CHECK(g.at(0, y, x) == doctest::Approx(0.25));
      CHECK(g.at(1, y, x) == doctest::Approx(0.0));
      CHECK(g.at(2, y, x) == doctest::Approx(0.0));
    }

  CHECK_THROWS_AS(extract_pool_sobel(Image<float>(10, 8), 3), std::invalid_argument);
  CHECK_THROWS_AS(find_extractor("mystery", 3), UsageError);
  FeatureMap h = find_extractor("pool-sobel", 3)(flat);
  CHECK(h.v == g.v);
}

TEST_CASE("build_initial_volume: identity poses stack the three feature maps") {
  int c = 2, h = 6, w = 8;
  Rng rng(13);
  FeatureMap ref(c, h, w), nb1(c, h, w), nb2(c, h, w);
  for (FeatureMap* f : {&ref, &nb1, &nb2})
    for (float& v : f->v) v = float(rng.uniform(-1, 1));
  Camera cam{{10, 10, 3.5, 2.5, w, h}, Pose{}};
  SweepConfig cfg{5, 0.8};
  InitialVolume iv = build_initial_volume(ref, nb1, nb2, {cam, cam, cam}, cfg);
  REQUIRE(iv.cost.k == 3 * c);
  REQUIRE(iv.cost.d == 5);
  CHECK(iv.channels == c);
  for (int dd = 0; dd < 5; ++dd)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        for (int ch = 0; ch < c; ++ch) {
          CHECK(iv.cost.at(ch, dd, y, x) == ref.at(ch, y, x));
          CHECK(iv.cost.at(c + ch, dd, y, x) == doctest::Approx(nb1.at(ch, y, x)));
          CHECK(iv.cost.at(2 * c + ch, dd, y, x) == doctest::Approx(nb2.at(ch, y, x)));
        }
        CHECK(iv.neighbor_weight.at(0, dd, y, x) == 1.f);
        CHECK(iv.neighbor_weight.at(1, dd, y, x) == 1.f);
      }
}

TEST_CASE("build_initial_volume: impulse centroid shifts by fx*tx/z per plane") {
  int h = 24, w = 32;
  FeatureMap ref(1, h, w), nb1(1, h, w), nb2(1, h, w);
  int y0 = 10, x0 = 20;
  nb1.at(0, y0, x0) = 1.f;
  Intrinsics k{10, 10, 15.5, 11.5, w, h};
  double tx = 0.5;
  std::array<Camera, 3> cams{Camera{k, camera_at({0, 0, 0})},
                             Camera{k, camera_at({tx, 0, 0})},
                             Camera{k, camera_at({0, 0, 0})}};
  SweepConfig cfg{4, 1.0};
  std::vector<double> depths = plane_depths(cfg);
  InitialVolume iv = build_initial_volume(ref, nb1, nb2, cams, cfg);
  for (int dd = 0; dd < cfg.d; ++dd) {
    double wsum = 0, xc = 0, yc = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = iv.cost.at(1, dd, y, x);
        wsum += v;
        xc += v * x;
        yc += v * y;
      }
    REQUIRE(wsum == doctest::Approx(1.0));  // bilinear taps of a unit impulse
    CHECK(xc / wsum == doctest::Approx(x0 + k.fx * tx / depths[dd]).epsilon(1e-6));
    CHECK(yc / wsum == doctest::Approx(double(y0)).epsilon(1e-6));
  }
  // In-bounds flag: the warp leaves the neighbor image for small x.
  double shift0 = k.fx * tx / depths[0];  // 1.25 px at the farthest plane
  CHECK(iv.neighbor_weight.at(0, 0, 5, 1) == 0.f);
  CHECK(iv.neighbor_weight.at(0, 0, 5, int(std::ceil(shift0)) + 1) == 1.f);
}

TEST_CASE("build_initial_volume: C=32 gives 96 channels") {
  FeatureMap f(32, 4, 4);
  Camera cam{{4, 4, 1.5, 1.5, 4, 4}, Pose{}};
  InitialVolume iv = build_initial_volume(f, f, f, {cam, cam, cam}, SweepConfig{2, 1});
  CHECK(iv.cost.k == 96);
}

TEST_CASE("build_initial_volume: shape errors") {
  FeatureMap a(2, 4, 4), b(2, 4, 6), c(3, 4, 4);
  Camera cam{{4, 4, 1.5, 1.5, 4, 4}, Pose{}};
  std::array<Camera, 3> cams{cam, cam, cam};
  SweepConfig cfg{2, 1};
  CHECK_THROWS_AS(build_initial_volume(a, b, a, cams, cfg), std::invalid_argument);
  CHECK_THROWS_AS(build_initial_volume(a, c, a, cams, cfg), std::invalid_argument);
  Camera wrong{{8, 8, 3.5, 3.5, 8, 8}, Pose{}};
  CHECK_THROWS_AS(build_initial_volume(a, a, a, {wrong, cam, cam}, cfg),
                  std::invalid_argument);
}

TEST_CASE("variance aggregator: constant identical views give flat logits") {
  FeatureMap f(2, 6, 8, 0.7f);
  Camera cam{{10, 10, 3.5, 2.5, 8, 6}, Pose{}};
  SweepConfig cfg{4, 1.0};
  InitialVolume iv = build_initial_volume(f, f, f, {cam, cam, cam}, cfg);
  AggregateResult r = variance_aggregate(iv);
  REQUIRE(r.depth.k == 1);
  REQUIRE(r.overlap.k == 2);
  for (float v : r.depth.v) CHECK(v == 0.f);
  // Coverage is total, so the overlap head favors channel 0 everywhere.
  for (int dd = 0; dd < 4; ++dd) {
    CHECK(r.overlap.at(0, dd, 3, 4) == 1.f);
    CHECK(r.overlap.at(1, dd, 3, 4) == 0.f);
  }
  // Flat logits regress to the uniform-softmax depth, finite everywhere.
  DepthMap z = regress_depth(r.depth, cfg);
  double mean_z = 0;
  for (double zd : plane_depths(cfg)) mean_z += zd / cfg.d;
  for (float v : z.z.v) CHECK(v == doctest::Approx(mean_z));
}

TEST_CASE("variance aggregator: textured plane peaks at the true plane") {
  Scene scene;
  scene.primitives.push_back(PlanePrim{{0, 0, 2}, {0, 0, -1}, {1, 0, 0}, 3, 3, 7});
  Intrinsics k_full{100, 100, 63.5, 47.5, 128, 96};
  std::array<Camera, 3> full{Camera{k_full, camera_at({0, 0, 0})},
                             Camera{k_full, camera_at({0.12, 0, 0})},
                             Camera{k_full, camera_at({-0.12, 0, 0})}};
  FeatureMap f[3];
  std::array<Camera, 3> quarter = full;
  for (int i = 0; i < 3; ++i) {
    f[i] = extract_pool_sobel(render(scene, full[i]).intensity, 6);
    quarter[i].K = scale_intrinsics(k_full, 4);
  }
  SweepConfig cfg{16, 0.5};  // plane index 3 sits exactly at z = 2
  InitialVolume iv = build_initial_volume(f[0], f[1], f[2], quarter, cfg);
  AggregateResult r = variance_aggregate(iv);
  for (auto [y, x] : {std::pair{12, 16}, {9, 13}, {15, 19}, {9, 19}, {15, 13}}) {
    int best = 0;
    for (int dd = 1; dd < cfg.d; ++dd)
      if (r.depth.at(0, dd, y, x) > r.depth.at(0, best, y, x)) best = dd;
    CHECK(best == 3);
  }
}

TEST_CASE("variance aggregator: off-frustum neighbors favor the non-overlap channel") {
  FeatureMap f(2, 6, 8, 0.3f);
  Intrinsics k{10, 10, 3.5, 2.5, 8, 6};
  // Both neighbors far off to the side: every warp lands out of bounds.
  std::array<Camera, 3> cams{Camera{k, camera_at({0, 0, 0})},
                             Camera{k, camera_at({100, 0, 0})},
                             Camera{k, camera_at({-100, 0, 0})}};
  SweepConfig cfg{4, 1.0};
  InitialVolume iv = build_initial_volume(f, f, f, cams, cfg);
  AggregateResult r = variance_aggregate(iv);
  for (int dd = 0; dd < cfg.d; ++dd) {
    CHECK(r.overlap.at(1, dd, 3, 4) > r.overlap.at(0, dd, 3, 4));
    CHECK(iv.neighbor_weight.at(0, dd, 3, 4) == 0.f);
  }
  OverlapMask m = overlap_mask(r.overlap);
  CHECK(m.p.at(3, 4) < 0.5f);
  // No coverage anywhere, yet depth logits and regression stay finite.
  DepthMap z = regress_depth(r.depth, cfg);
  for (float v : z.z.v) CHECK(std::isfinite(v));
}

TEST_CASE("aggregate wrapper validates shapes and fixes kind tags") {
  FeatureMap f(1, 4, 4, 0.5f);
  Camera cam{{4, 4, 1.5, 1.5, 4, 4}, Pose{}};
  SweepConfig cfg{3, 1};
  InitialVolume iv = build_initial_volume(f, f, f, {cam, cam, cam}, cfg);
  AggregateResult ok = aggregate(iv, find_aggregator("variance"));
  CHECK(ok.depth.kind == VolumeKind::kAggregatedDepth);
  CHECK(ok.overlap.kind == VolumeKind::kOverlap);
  Aggregator bad = [](const InitialVolume& v) {
    AggregateResult r;
    r.depth = CostVolume(VolumeKind::kAux, 1, v.cost.d - 1, v.cost.h, v.cost.w);
    r.overlap = CostVolume(VolumeKind::kAux, 2, v.cost.d, v.cost.h, v.cost.w);
    return r;
  };
  CHECK_THROWS_AS(aggregate(iv, bad), std::invalid_argument);
  CHECK_THROWS_AS(find_aggregator("hourglass"), UsageError);
  CHECK_THROWS_AS(variance_aggregate(InitialVolume{}), std::invalid_argument);
}

TEST_CASE("regress_depth: saturated one-hot at plane 24 gives 1 m") {
  SweepConfig cfg;
  CostVolume vz(VolumeKind::kAggregatedDepth, 1, 48, 2, 2);
  vz.at(0, 23, 1, 1) = 40.f;  // plane d=24, z = 0.5*48/24 = 1
  CHECK(regress_depth_value(vz, cfg, 1, 1) == doctest::Approx(1.0).epsilon(1e-6));
  DepthMap z = regress_depth(vz, cfg);
  CHECK(z.z.at(1, 1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(z.valid.at(1, 1) == 1);
}

TEST_CASE("regress_depth: uniform logits give the harmonic mean depth") {
  SweepConfig cfg;
  CostVolume vz(VolumeKind::kAggregatedDepth, 1, 48, 1, 1, 2.5f);
  double harmonic = 0;
  for (int d = 1; d <= 48; ++d) harmonic += 1.0 / d;
  CHECK(std::abs(regress_depth_value(vz, cfg, 0, 0) - 0.5 * harmonic / 48 * 48) < 1e-9);
  CHECK(std::abs(regress_depth_value(vz, cfg, 0, 0) - 0.5 * harmonic) < 1e-9);
}

TEST_CASE("regress_depth: convex bounds and shift invariance") {
  SweepConfig cfg;
  CostVolume vz = random_depth_volume(48, 3, 3, 99, -50, 50);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      double z = regress_depth_value(vz, cfg, y, x);
      CHECK(z >= 0.5);
      CHECK(z <= 24.0);
    }
  CostVolume shifted = vz;
  for (float& v : shifted.v) v += 7.25f;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x)
      CHECK(std::abs(regress_depth_value(shifted, cfg, y, x) -
                     regress_depth_value(vz, cfg, y, x)) < 1e-9);
}

TEST_CASE("regress_depth: errors") {
  SweepConfig cfg{4, 1.0};
  CostVolume vz(VolumeKind::kAggregatedDepth, 1, 4, 2, 2);
  vz.at(0, 2, 0, 1) = std::nanf("");
  CHECK_THROWS_AS(regress_depth(vz, cfg), std::invalid_argument);
  CHECK_THROWS_AS(regress_depth_value(vz, cfg, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(regress_depth_value(vz, cfg, 0, 5), std::invalid_argument);
  CostVolume two(VolumeKind::kOverlap, 2, 4, 2, 2);
  CHECK_THROWS_AS(regress_depth(two, cfg), std::invalid_argument);
  CostVolume mismatched(VolumeKind::kAggregatedDepth, 1, 6, 2, 2);
  CHECK_THROWS_AS(regress_depth(mismatched, cfg), std::invalid_argument);
}

TEST_CASE("overlap_mask: flat, saturated, and two-plane hand example") {
  CostVolume vm(VolumeKind::kOverlap, 2, 3, 2, 2);
  OverlapMask m = overlap_mask(vm);
  for (float p : m.p.v) CHECK(p == doctest::Approx(0.5));

  vm.at(0, 1, 0, 0) = 40.f;
  m = overlap_mask(vm);
  CHECK(m.p.at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));

  CostVolume hand(VolumeKind::kOverlap, 2, 2, 1, 1);
  hand.at(0, 0, 0, 0) = float(std::log(0.3));
  hand.at(1, 0, 0, 0) = float(std::log(0.7));
  hand.at(0, 1, 0, 0) = float(std::log(0.7));
  hand.at(1, 1, 0, 0) = float(std::log(0.3));
  CHECK(overlap_mask(hand).p.at(0, 0) == doctest::Approx(0.7).epsilon(1e-6));

  // Adding a constant to both channels of a voxel changes nothing.
  hand.at(0, 1, 0, 0) += 11.f;
  hand.at(1, 1, 0, 0) += 11.f;
  CHECK(overlap_mask(hand).p.at(0, 0) == doctest::Approx(0.7).epsilon(1e-6));

  CHECK_THROWS_AS(overlap_mask(CostVolume(VolumeKind::kAux, 1, 2, 1, 1)),
                  std::invalid_argument);
}

TEST_CASE("mask_depth: identity, all-invalid, and mixed thresholding") {
  DepthMap z(2, 2);
  z.z.v = {1.f, 2.f, 3.f, 4.f};
  z.valid.v = {1, 1, 1, 0};

  OverlapMask ones(2, 2, 1.f);
  DepthMap kept = mask_depth(z, ones);
  CHECK(kept.valid.v == z.valid.v);
  CHECK(kept.z.v == z.z.v);

  OverlapMask zeros(2, 2, 0.f);
  DepthMap dropped = mask_depth(z, zeros);
  CHECK(dropped.valid.v == std::vector<uint8_t>{0, 0, 0, 0});

  OverlapMask mixed(2, 2);
  mixed.p.v = {0.6f, 0.4f, 0.5f, 0.9f};
  DepthMap mk = mask_depth(z, mixed, 0.5);
  // At-threshold passes; already-invalid pixels stay invalid.
  CHECK(mk.valid.v == std::vector<uint8_t>{1, 0, 1, 0});

  CHECK_THROWS_AS(mask_depth(z, OverlapMask(3, 2, 1.f)), std::invalid_argument);
}

TEST_CASE("geometric_overlap_gt: co-located cameras overlap everywhere") {
  Intrinsics k{50, 50, 31.5, 23.5, 64, 48};
  Camera cam{k, camera_at({0, 0, 0})};
  DepthMap wall(48, 64);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      wall.z.at(y, x) = 4.f;
      wall.valid.at(y, x) = 1;
    }
  wall.valid.at(5, 5) = 0;
  OverlapMask m = geometric_overlap_gt(wall, wall, wall, {cam, cam, cam});
  CHECK(m.p.at(20, 30) == 1.f);
  CHECK(m.known.at(20, 30) == 1);
  // Invalid reference depth leaves the label unknown.
  CHECK(m.known.at(5, 5) == 0);
  CHECK(m.p.at(5, 5) == 0.5f);
}

TEST_CASE("geometric_overlap_gt: neighbor facing away sees nothing") {
  Intrinsics k{50, 50, 31.5, 23.5, 64, 48};
  DepthMap wall(48, 64);
  for (size_t i = 0; i < wall.z.v.size(); ++i) {
    wall.z.v[i] = 4.f;
    wall.valid.v[i] = 1;
  }
  Pose away{axis_angle_rotation({0, 1, 0}, 180.0), {0, 0, 0},
            PoseConvention::kWorldFromCamera};
  Camera ref{k, camera_at({0, 0, 0})};
  OverlapMask m = geometric_overlap_gt(wall, wall, wall, {ref, Camera{k, away}, ref});
  for (int y = 0; y < 48; y += 7)
    for (int x = 0; x < 64; x += 9) {
      CHECK(m.p.at(y, x) == 0.f);
      CHECK(m.known.at(y, x) == 1);
    }
}

TEST_CASE("geometric_overlap_gt: frustum boundary matches the analytic edge") {
  Intrinsics k{50, 50, 31.5, 23.5, 64, 48};
  DepthMap wall(48, 64);
  for (size_t i = 0; i < wall.z.v.size(); ++i) {
    wall.z.v[i] = 4.f;
    wall.valid.v[i] = 1;
  }
  Camera ref{k, camera_at({0, 0, 0})};
  Camera nb{k, camera_at({1.0, 0, 0})};  // shifts projections left by fx/4 = 12.5 px
  OverlapMask m = geometric_overlap_gt(wall, wall, wall, {ref, nb, ref});
  for (int y = 0; y < 48; y += 5) {
    for (int x = 0; x <= 11; ++x) {
      CHECK(m.p.at(y, x) == 0.f);
      CHECK(m.known.at(y, x) == 1);
    }
    for (int x = 13; x < 64; ++x) CHECK(m.p.at(y, x) == 1.f);
  }
}

TEST_CASE("geometric_overlap_gt: depth agreement tolerance and missing GT") {
  Intrinsics k{50, 50, 31.5, 23.5, 64, 48};
  Camera cam{k, camera_at({0, 0, 0})};
  DepthMap ref(48, 64), nb(48, 64);
  for (size_t i = 0; i < ref.z.v.size(); ++i) {
    ref.z.v[i] = 4.f;
    ref.valid.v[i] = 1;
    nb.z.v[i] = 3.9f;  // about 2.6% relative difference: inside the 5% tolerance
    nb.valid.v[i] = 1;
  }
  nb.valid.at(10, 10) = 0;
  OverlapMask m = geometric_overlap_gt(ref, nb, ref, {cam, cam, cam});
  CHECK(m.p.at(20, 30) == 1.f);
  CHECK(m.known.at(10, 10) == 0);  // neighbor GT missing -> unknown

  for (size_t i = 0; i < nb.z.v.size(); ++i) nb.z.v[i] = 3.5f;  // 14% off
  m = geometric_overlap_gt(ref, nb, ref, {cam, cam, cam});
  CHECK(m.p.at(20, 30) == 0.f);
  CHECK(m.known.at(20, 30) == 1);
}

TEST_CASE("overlap_loss: zero at match, half per half-confident pixel") {
  OverlapMask gt(2, 3, 0.f);
  gt.p.v = {1.f, 1.f, 0.f, 0.f, 0.5f, 0.5f};
  gt.known.v = {1, 1, 1, 1, 0, 0};
  CHECK(overlap_loss(gt, gt) == doctest::Approx(0.0));

  OverlapMask pred(2, 3, 0.5f);
  // n=2 overlap + m=2 non-overlap known pixels, each off by 0.5.
  CHECK(overlap_loss(pred, gt) == doctest::Approx(0.5 * (2 + 2)));

  // Unknown pixels do not contribute.
  OverlapMask pred2 = pred;
  pred2.p.at(1, 1) = 0.123f;
  pred2.p.at(1, 2) = 0.987f;
  CHECK(overlap_loss(pred2, gt) == doctest::Approx(overlap_loss(pred, gt)));

  CHECK_THROWS_AS(overlap_loss(OverlapMask(1, 1), gt), std::invalid_argument);
}

TEST_CASE("depth_loss: smooth-L1 hand values") {
  DepthMap gt(1, 1), pred(1, 1);
  gt.z.at(0, 0) = 2.f;
  gt.valid.at(0, 0) = 1;
  pred.valid.at(0, 0) = 1;
  OverlapMask mask(1, 1, 1.f);

  pred.z.at(0, 0) = 2.f;
  CHECK(depth_loss(pred, gt, mask) == doctest::Approx(0.0));
  pred.z.at(0, 0) = 2.5f;
  CHECK(depth_loss(pred, gt, mask) == doctest::Approx(0.125));
  pred.z.at(0, 0) = 5.f;
  CHECK(depth_loss(pred, gt, mask) == doctest::Approx(2.5));
  // Mask weight scales the loss; unknown or invalid pixels are skipped.
  mask.p.at(0, 0) = 0.5f;
  CHECK(depth_loss(pred, gt, mask) == doctest::Approx(1.25));
  mask.known.at(0, 0) = 0;
  CHECK(depth_loss(pred, gt, mask) == doctest::Approx(0.0));
  mask.known.at(0, 0) = 1;
  gt.valid.at(0, 0) = 0;
  CHECK(depth_loss(pred, gt, mask) == doctest::Approx(0.0));
}

TEST_CASE("depth_loss_grad matches central finite differences") {
  SweepConfig cfg{6, 0.5};
  CostVolume vz = random_depth_volume(6, 4, 4, 21, -1, 1);
  Rng rng(22);
  DepthMap gt(4, 4);
  OverlapMask mask(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      gt.z.at(y, x) = float(rng.uniform(0.5, 3.0));
      gt.valid.at(y, x) = uint8_t(rng.uniform() < 0.9);
      mask.p.at(y, x) = float(rng.uniform());
      mask.known.at(y, x) = uint8_t(rng.uniform() < 0.8);
    }
  CostVolume g = depth_loss_grad(vz, cfg, gt, mask);
  // The analytic gradient is taken against a double-precision loss oracle.
  double eps = 1e-5;
  for (int dd = 0; dd < 6; ++dd)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        CostVolume vp = vz, vm = vz;
        vp.at(0, dd, y, x) += float(eps);
        vm.at(0, dd, y, x) -= float(eps);
        // Measure the step actually applied after float rounding.
        double step = double(vp.at(0, dd, y, x)) - vm.at(0, dd, y, x);
        double fd = (depth_loss_oracle(vp, cfg, gt, mask) -
                     depth_loss_oracle(vm, cfg, gt, mask)) /
                    step;
        CHECK(std::abs(fd - g.at(0, dd, y, x)) <
              1e-4 * std::max(1.0, std::abs(fd)));
      }
  // And the production loss agrees with the oracle up to float storage.
  DepthMap pred = regress_depth(vz, cfg);
  CHECK(depth_loss(pred, gt, mask) ==
        doctest::Approx(depth_loss_oracle(vz, cfg, gt, mask)).epsilon(1e-5));
}

TEST_CASE("overlap_loss_grad matches central finite differences") {
  CostVolume vm(VolumeKind::kOverlap, 2, 3, 4, 4);
  Rng rng(33);
  for (float& v : vm.v) v = float(rng.uniform(-2, 2));
  OverlapMask gt(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      gt.p.at(y, x) = rng.uniform() < 0.5 ? 0.f : 1.f;
      gt.known.at(y, x) = uint8_t(rng.uniform() < 0.8);
    }
  CostVolume g = overlap_loss_grad(vm, gt);
  double eps = 1e-5;
  for (int c = 0; c < 2; ++c)
    for (int dd = 0; dd < 3; ++dd)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          CostVolume vp = vm, vn = vm;
          vp.at(c, dd, y, x) += float(eps);
          vn.at(c, dd, y, x) -= float(eps);
          double step = double(vp.at(c, dd, y, x)) - vn.at(c, dd, y, x);
          double fd =
              (overlap_loss_oracle(vp, gt) - overlap_loss_oracle(vn, gt)) / step;
          CHECK(std::abs(fd - g.at(c, dd, y, x)) <
                1e-4 * std::max(1.0, std::abs(fd)));
        }

  OverlapMask small(1, 1);
  CHECK_THROWS_AS(overlap_loss_grad(vm, small), std::invalid_argument);
}
