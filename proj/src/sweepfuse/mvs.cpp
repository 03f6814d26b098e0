#include "sweepfuse/mvs.h"

#include <atomic>
#include <cmath>

namespace sweepfuse {

namespace {

// Logit scale after per-pixel standardization of the smoothed variance scores.
constexpr double kLogitGain = 96.0;

// Smoothing window half-widths. The spatial radius trades depth-edge sharpness
// for matching robustness: averaging per-pixel view variance over a window is
// the same statistic as the variance of patch descriptors.
constexpr int kSmoothDepth = 0;
constexpr int kSmoothSpatial = 4;

double smooth_l1(double x) {
  double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

// Bilinear sample of one feature channel; caller guarantees coords in
// [0, w-1] x [0, h-1].
float sample_channel(const FeatureMap& f, int c, double sx, double sy) {
  int x0 = int(sx), y0 = int(sy);
  int x1 = std::min(x0 + 1, f.w - 1), y1 = std::min(y0 + 1, f.h - 1);
  double fx = sx - x0, fy = sy - y0;
  return float((1 - fy) * ((1 - fx) * f.at(c, y0, x0) + fx * f.at(c, y0, x1)) +
               fy * ((1 - fx) * f.at(c, y1, x0) + fx * f.at(c, y1, x1)));
}

void check_aggregated(const CostVolume& vz) {
  if (vz.k != 1) throw std::invalid_argument("expected a 1-channel aggregated volume");
  if (vz.d < 2 || vz.h < 1 || vz.w < 1)
    throw std::invalid_argument("degenerate cost volume");
}

struct PixelSoftmax {
  std::vector<double> p;
  double z = 0;  // expectation of plane depths
};

PixelSoftmax pixel_softmax(const CostVolume& vz, const std::vector<double>& depths,
                           int y, int x) {
  PixelSoftmax out;
  out.p.resize(vz.d);
  double hi = -1e300;
  for (int dd = 0; dd < vz.d; ++dd) {
    double a = vz.at(0, dd, y, x);
    if (std::isnan(a)) throw std::invalid_argument("NaN logits in cost volume");
    hi = std::max(hi, a);
  }
  double denom = 0;
  for (int dd = 0; dd < vz.d; ++dd) {
    out.p[dd] = std::exp(double(vz.at(0, dd, y, x)) - hi);
    denom += out.p[dd];
  }
  for (int dd = 0; dd < vz.d; ++dd) {
    out.p[dd] /= denom;
    out.z += depths[dd] * out.p[dd];
  }
  return out;
}

}  // namespace

void validate(const SweepConfig& cfg) {
  if (cfg.d < 2) throw std::invalid_argument("plane count must be >= 2");
  if (!(cfg.z_min > 0)) throw std::invalid_argument("z_min must be positive");
}

std::vector<double> plane_depths(const SweepConfig& cfg) {
  validate(cfg);
  std::vector<double> z(cfg.d);
  for (int d = 1; d <= cfg.d; ++d) z[d - 1] = cfg.z_min * cfg.d / d;
  return z;
}

FeatureMap extract_pool_sobel(const Image<float>& intensity, int channels) {
  if (channels < 1) throw std::invalid_argument("need at least one channel");
  if (intensity.h % 4 != 0 || intensity.w % 4 != 0)
    throw std::invalid_argument("image dims must be divisible by 4");
  int h = intensity.h / 4, w = intensity.w / 4;
  if (h < 1 || w < 1) throw std::invalid_argument("image too small");
  Image<float> pooled(h, w, 0.f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int dy = 0; dy < 4; ++dy)
        for (int dx = 0; dx < 4; ++dx) acc += intensity.at(4 * y + dy, 4 * x + dx);
      pooled.at(y, x) = float(acc / 16.0);
    }
  auto px = [&](int y, int x) {
    return pooled.at(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1));
  };
  FeatureMap f(channels, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sx = (px(y - 1, x + 1) + 2.0 * px(y, x + 1) + px(y + 1, x + 1)) -
                  (px(y - 1, x - 1) + 2.0 * px(y, x - 1) + px(y + 1, x - 1));
      double sy = (px(y + 1, x - 1) + 2.0 * px(y + 1, x) + px(y + 1, x + 1)) -
                  (px(y - 1, x - 1) + 2.0 * px(y - 1, x) + px(y - 1, x + 1));
      float base[3] = {pooled.at(y, x), float(sx / 8.0), float(sy / 8.0)};
      for (int c = 0; c < channels; ++c) f.at(c, y, x) = base[c % 3];
    }
  return f;
}

Extractor find_extractor(const std::string& name, int channels) {
  if (name == "pool-sobel")
    return [channels](const Image<float>& img) {
      return extract_pool_sobel(img, channels);
    };
  throw UsageError("unknown extractor: " + name);
}

Aggregator find_aggregator(const std::string& name, int threads) {
  if (name == "variance")
    return [threads](const InitialVolume& iv) { return variance_aggregate(iv, threads); };
  throw UsageError("unknown aggregator: " + name);
}

InitialVolume build_initial_volume(const FeatureMap& ref, const FeatureMap& nb1,
                                   const FeatureMap& nb2,
                                   const std::array<Camera, 3>& cams,
                                   const SweepConfig& cfg, int threads) {
  validate(cfg);
  const FeatureMap* nbs[2] = {&nb1, &nb2};
  for (const FeatureMap* f : {&ref, &nb1, &nb2})
    if (f->c != ref.c || f->h != ref.h || f->w != ref.w)
      throw std::invalid_argument("feature map shapes differ");
  for (const Camera& cam : cams) {
    validate(cam.K);
    validate(cam.pose);
    if (cam.K.width != ref.w || cam.K.height != ref.h)
      throw std::invalid_argument("intrinsics do not match feature resolution");
  }
  int c = ref.c, h = ref.h, w = ref.w;
  std::vector<double> depths = plane_depths(cfg);
  InitialVolume iv;
  iv.channels = c;
  iv.cost = CostVolume(VolumeKind::kInitial, 3 * c, cfg.d, h, w);
  iv.neighbor_weight = CostVolume(VolumeKind::kAux, 2, cfg.d, h, w);

  std::vector<Eigen::Matrix3d> homs(2 * cfg.d);
  for (int m = 0; m < 2; ++m) {
    RigidTransform src_from_ref = relative_transform(cams[0].pose, cams[m + 1].pose);
    for (int dd = 0; dd < cfg.d; ++dd)
      homs[m * cfg.d + dd] =
          plane_homography(cams[0].K, cams[m + 1].K, src_from_ref, depths[dd]);
  }

  parallel_for(cfg.d, threads, [&](int64_t dd) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        for (int ch = 0; ch < c; ++ch)
          iv.cost.at(ch, int(dd), y, x) = ref.at(ch, y, x);
        for (int m = 0; m < 2; ++m) {
          Eigen::Vector3d p = homs[m * cfg.d + dd] * Eigen::Vector3d(x, y, 1);
          bool ok = p.z() > 1e-12;
          double sx = 0, sy = 0;
          if (ok) {
            // A hair of tolerance so border samples survive homography round-off.
            constexpr double kEdge = 1e-9;
            sx = p.x() / p.z();
            sy = p.y() / p.z();
            ok = sx >= -kEdge && sx <= w - 1 + kEdge && sy >= -kEdge && sy <= h - 1 + kEdge;
            sx = std::clamp(sx, 0.0, double(w - 1));
            sy = std::clamp(sy, 0.0, double(h - 1));
          }
          iv.neighbor_weight.at(m, int(dd), y, x) = ok ? 1.f : 0.f;
          if (ok)
            for (int ch = 0; ch < c; ++ch)
              iv.cost.at((m + 1) * c + ch, int(dd), y, x) =
                  sample_channel(*nbs[m], ch, sx, sy);
        }
      }
  });
  return iv;
}

AggregateResult variance_aggregate(const InitialVolume& iv, int threads) {
  int c = iv.channels, d = iv.cost.d, h = iv.cost.h, w = iv.cost.w;
  if (iv.cost.k != 3 * c || c < 1)
    throw std::invalid_argument("initial volume channel mismatch");
  AggregateResult out;
  out.depth = CostVolume(VolumeKind::kAggregatedDepth, 1, d, h, w);
  out.overlap = CostVolume(VolumeKind::kOverlap, 2, d, h, w);
  CostVolume raw(VolumeKind::kAux, 1, d, h, w);
  CostVolume covered(VolumeKind::kAux, 1, d, h, w);

  parallel_for(d, threads, [&](int64_t dd) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float w1 = iv.neighbor_weight.at(0, int(dd), y, x);
        float w2 = iv.neighbor_weight.at(1, int(dd), y, x);
        int views = 1 + (w1 > 0) + (w2 > 0);
        double score = 0;
        if (views > 1) {
          for (int ch = 0; ch < c; ++ch) {
            double f[3] = {iv.cost.at(ch, int(dd), y, x),
                           iv.cost.at(c + ch, int(dd), y, x),
                           iv.cost.at(2 * c + ch, int(dd), y, x)};
            double mean = f[0];
            if (w1 > 0) mean += f[1];
            if (w2 > 0) mean += f[2];
            mean /= views;
            double var = (f[0] - mean) * (f[0] - mean);
            if (w1 > 0) var += (f[1] - mean) * (f[1] - mean);
            if (w2 > 0) var += (f[2] - mean) * (f[2] - mean);
            score += var / views;
          }
          score /= c;
        }
        raw.at(0, int(dd), y, x) = float(-score);
        covered.at(0, int(dd), y, x) = views > 1 ? 1.f : 0.f;
        float l0 = (w1 > 0 && w2 > 0) ? 1.f : 0.f;
        out.overlap.at(0, int(dd), y, x) = l0;
        out.overlap.at(1, int(dd), y, x) = 1.f - l0;
      }
  });

  // Smooth only over planes that saw at least one neighbor; mixing in the
  // zero placeholder of uncovered entries would fabricate perfect scores.
  parallel_for(d, threads, [&](int64_t dd) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (covered.at(0, int(dd), y, x) == 0.f) {
          out.depth.at(0, int(dd), y, x) = 0.f;
          continue;
        }
        double acc = 0;
        int cnt = 0;
        for (int od = -kSmoothDepth; od <= kSmoothDepth; ++od)
          for (int oy = -kSmoothSpatial; oy <= kSmoothSpatial; ++oy)
            for (int ox = -kSmoothSpatial; ox <= kSmoothSpatial; ++ox) {
              int nd = int(dd) + od, ny = y + oy, nx = x + ox;
              if (nd < 0 || nd >= d || ny < 0 || ny >= h || nx < 0 || nx >= w ||
                  covered.at(0, nd, ny, nx) == 0.f)
                continue;
              acc += raw.at(0, nd, ny, nx);
              ++cnt;
            }
        out.depth.at(0, int(dd), y, x) = float(acc / cnt);
      }
  });

  // Standardize each pixel's depth profile so the soft-argmin operates at a
  // fixed logit scale regardless of texture contrast; flat profiles stay
  // flat, and uncovered planes land decisively below every covered one.
  parallel_for(h, threads, [&](int64_t y) {
    for (int x = 0; x < w; ++x) {
      double mean = 0, lo = 0;
      int n = 0;
      for (int dd = 0; dd < d; ++dd)
        if (covered.at(0, dd, int(y), x) != 0.f) {
          mean += out.depth.at(0, dd, int(y), x);
          ++n;
        }
      if (n == 0) {
        for (int dd = 0; dd < d; ++dd) out.depth.at(0, dd, int(y), x) = 0.f;
        continue;
      }
      mean /= n;
      double var = 0;
      for (int dd = 0; dd < d; ++dd)
        if (covered.at(0, dd, int(y), x) != 0.f) {
          double e = out.depth.at(0, dd, int(y), x) - mean;
          var += e * e;
        }
      double sd = std::sqrt(var / n);
      for (int dd = 0; dd < d; ++dd) {
        if (covered.at(0, dd, int(y), x) == 0.f) continue;
        float& a = out.depth.at(0, dd, int(y), x);
        a = sd > 1e-20 ? float(kLogitGain * (a - mean) / sd) : 0.f;
        lo = std::min(lo, double(a));
      }
      for (int dd = 0; dd < d; ++dd)
        if (covered.at(0, dd, int(y), x) == 0.f)
          out.depth.at(0, dd, int(y), x) = float(lo - kLogitGain);
    }
  });
  return out;
}

AggregateResult aggregate(const InitialVolume& iv, const Aggregator& agg) {
  if (!agg) throw std::invalid_argument("null aggregator");
  AggregateResult r = agg(iv);
  if (r.depth.k != 1 || r.overlap.k != 2 || r.depth.d != iv.cost.d ||
      r.overlap.d != iv.cost.d || r.depth.h != iv.cost.h || r.depth.w != iv.cost.w ||
      r.overlap.h != iv.cost.h || r.overlap.w != iv.cost.w)
    throw std::invalid_argument("aggregator produced wrong shapes");
  r.depth.kind = VolumeKind::kAggregatedDepth;
  r.overlap.kind = VolumeKind::kOverlap;
  return r;
}

DepthMap regress_depth(const CostVolume& vz, const SweepConfig& cfg, int threads) {
  validate(cfg);
  check_aggregated(vz);
  if (vz.d != cfg.d) throw std::invalid_argument("plane count mismatch");
  std::vector<double> depths = plane_depths(cfg);
  DepthMap out(vz.h, vz.w);
  std::atomic<bool> saw_nan{false};
  parallel_for(vz.h, threads, [&](int64_t y) {
    for (int x = 0; x < vz.w; ++x) {
      try {
        out.z.at(int(y), x) = float(pixel_softmax(vz, depths, int(y), x).z);
      } catch (const std::invalid_argument&) {
        saw_nan = true;
        return;
      }
      out.valid.at(int(y), x) = 1;
    }
  });
  if (saw_nan) throw std::invalid_argument("NaN logits in cost volume");
  return out;
}

double regress_depth_value(const CostVolume& vz, const SweepConfig& cfg, int y, int x) {
  validate(cfg);
  check_aggregated(vz);
  if (vz.d != cfg.d) throw std::invalid_argument("plane count mismatch");
  if (y < 0 || y >= vz.h || x < 0 || x >= vz.w)
    throw std::invalid_argument("pixel out of range");
  return pixel_softmax(vz, plane_depths(cfg), y, x).z;
}

OverlapMask overlap_mask(const CostVolume& vm, int threads) {
  if (vm.k != 2) throw std::invalid_argument("expected a 2-channel overlap volume");
  OverlapMask out(vm.h, vm.w);
  parallel_for(vm.h, threads, [&](int64_t y) {
    for (int x = 0; x < vm.w; ++x) {
      double best = 0;
      for (int dd = 0; dd < vm.d; ++dd) {
        double l0 = vm.at(0, dd, int(y), x), l1 = vm.at(1, dd, int(y), x);
        best = std::max(best, 1.0 / (1.0 + std::exp(l1 - l0)));
      }
      out.p.at(int(y), x) = float(best);
    }
  });
  return out;
}

DepthMap mask_depth(const DepthMap& z, const OverlapMask& m, double tau) {
  if (z.h() != m.p.h || z.w() != m.p.w)
    throw std::invalid_argument("depth/mask resolution mismatch");
  DepthMap out = z;
  for (int y = 0; y < z.h(); ++y)
    for (int x = 0; x < z.w(); ++x)
      if (m.p.at(y, x) < tau) out.valid.at(y, x) = 0;
  return out;
}

OverlapMask geometric_overlap_gt(const DepthMap& ref_gt, const DepthMap& nb1_gt,
                                 const DepthMap& nb2_gt,
                                 const std::array<Camera, 3>& cams,
                                 double rel_tol) {
  const DepthMap* nbs[2] = {&nb1_gt, &nb2_gt};
  if (!ref_gt.z.same_size(nb1_gt.z) || !ref_gt.z.same_size(nb2_gt.z))
    throw std::invalid_argument("depth resolutions differ");
  for (const Camera& cam : cams) {
    validate(cam.K);
    validate(cam.pose);
  }
  int h = ref_gt.h(), w = ref_gt.w();
  OverlapMask out(h, w, 0.5f, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!ref_gt.valid.at(y, x)) continue;
      Eigen::Vector3d pw = cams[0].pose.world_from_camera().apply(
          backproject(x, y, ref_gt.z.at(y, x), cams[0].K));
      bool outside = false, missing = false, agree = true;
      for (int m = 0; m < 2 && !outside; ++m) {
        Eigen::Vector3d pc = cams[m + 1].pose.camera_from_world().apply(pw);
        if (pc.z() <= 0) {
          outside = true;
          break;
        }
        Eigen::Vector3d px = project(pc, cams[m + 1].K);
        long ix = std::lround(px.x()), iy = std::lround(px.y());
        if (ix < 0 || ix >= cams[m + 1].K.width || iy < 0 || iy >= cams[m + 1].K.height) {
          outside = true;
          break;
        }
        if (!nbs[m]->valid.at(int(iy), int(ix))) {
          missing = true;
          continue;
        }
        double z_nb = nbs[m]->z.at(int(iy), int(ix));
        if (std::abs(pc.z() - z_nb) / z_nb > rel_tol) agree = false;
      }
      if (outside) {
        out.p.at(y, x) = 0.f;
        out.known.at(y, x) = 1;
      } else if (missing) {
        // stays unknown
      } else {
        out.p.at(y, x) = agree ? 1.f : 0.f;
        out.known.at(y, x) = 1;
      }
    }
  return out;
}

double overlap_loss(const OverlapMask& pred, const OverlapMask& gt) {
  if (!pred.p.same_size(gt.p)) throw std::invalid_argument("mask resolution mismatch");
  double acc = 0;
  for (int y = 0; y < gt.p.h; ++y)
    for (int x = 0; x < gt.p.w; ++x)
      if (gt.known.at(y, x)) acc += std::abs(double(pred.p.at(y, x)) - gt.p.at(y, x));
  return acc;
}

double depth_loss(const DepthMap& pred, const DepthMap& gt, const OverlapMask& gt_mask) {
  if (!pred.z.same_size(gt.z) || !pred.z.same_size(gt_mask.p))
    throw std::invalid_argument("depth/mask resolution mismatch");
  double acc = 0;
  for (int y = 0; y < gt.h(); ++y)
    for (int x = 0; x < gt.w(); ++x) {
      if (!pred.valid.at(y, x) || !gt.valid.at(y, x) || !gt_mask.known.at(y, x)) continue;
      acc += double(gt_mask.p.at(y, x)) *
             smooth_l1(double(pred.z.at(y, x)) - gt.z.at(y, x));
    }
  return acc;
}

CostVolume overlap_loss_grad(const CostVolume& vm, const OverlapMask& gt) {
  if (vm.k != 2) throw std::invalid_argument("expected a 2-channel overlap volume");
  if (vm.h != gt.p.h || vm.w != gt.p.w)
    throw std::invalid_argument("mask resolution mismatch");
  CostVolume g(VolumeKind::kAux, 2, vm.d, vm.h, vm.w);
  for (int y = 0; y < vm.h; ++y)
    for (int x = 0; x < vm.w; ++x) {
      if (!gt.known.at(y, x)) continue;
      int best_d = 0;
      double best = -1;
      for (int dd = 0; dd < vm.d; ++dd) {
        double p0 = 1.0 / (1.0 + std::exp(double(vm.at(1, dd, y, x)) - vm.at(0, dd, y, x)));
        if (p0 > best) {
          best = p0;
          best_d = dd;
        }
      }
      double diff = best - gt.p.at(y, x);
      double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      double dp = best * (1.0 - best);
      g.at(0, best_d, y, x) = float(s * dp);
      g.at(1, best_d, y, x) = float(-s * dp);
    }
  return g;
}

CostVolume depth_loss_grad(const CostVolume& vz, const SweepConfig& cfg,
                           const DepthMap& gt, const OverlapMask& gt_mask) {
  validate(cfg);
  check_aggregated(vz);
  if (vz.d != cfg.d) throw std::invalid_argument("plane count mismatch");
  if (vz.h != gt.h() || vz.w != gt.w() || vz.h != gt_mask.p.h || vz.w != gt_mask.p.w)
    throw std::invalid_argument("depth/mask resolution mismatch");
  std::vector<double> depths = plane_depths(cfg);
  CostVolume g(VolumeKind::kAux, 1, vz.d, vz.h, vz.w);
  for (int y = 0; y < vz.h; ++y)
    for (int x = 0; x < vz.w; ++x) {
      if (!gt.valid.at(y, x) || !gt_mask.known.at(y, x)) continue;
      PixelSoftmax s = pixel_softmax(vz, depths, y, x);
      double e = s.z - gt.z.at(y, x);
      double w = double(gt_mask.p.at(y, x)) * std::clamp(e, -1.0, 1.0);
      for (int dd = 0; dd < vz.d; ++dd)
        g.at(0, dd, y, x) = float(w * s.p[dd] * (depths[dd] - s.z));
    }
  return g;
}

}  // namespace sweepfuse
