#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "sweepfuse/geometry.h"
#include "sweepfuse/maps.h"

namespace sweepfuse {

struct SweepConfig {
  int d = 48;
  double z_min = 0.5;
};

void validate(const SweepConfig& cfg);

enum class VolumeKind { kInitial, kAggregatedDepth, kOverlap, kAux };

// K x D x H x W scores, channel-major.
struct CostVolume {
  VolumeKind kind = VolumeKind::kAux;
  int k = 0, d = 0, h = 0, w = 0;
  std::vector<float> v;

  CostVolume() = default;
  CostVolume(VolumeKind kind_, int k_, int d_, int h_, int w_, float init = 0.f)
      : kind(kind_), k(k_), d(d_), h(h_), w(w_),
        v(size_t(k_) * d_ * h_ * w_, init) {}
  float& at(int c, int dd, int y, int x) {
    return v[((size_t(c) * d + dd) * h + y) * w + x];
  }
  float at(int c, int dd, int y, int x) const {
    return v[((size_t(c) * d + dd) * h + y) * w + x];
  }
};

// Initial volume: ref|n1|n2 feature blocks plus per-neighbor in-bounds flags.
struct InitialVolume {
  CostVolume cost;             // kInitial, K = 3C
  CostVolume neighbor_weight;  // kAux, K = 2, values in {0,1}
  int channels = 0;            // C
};

struct AggregateResult {
  CostVolume depth;    // kAggregatedDepth, K = 1
  CostVolume overlap;  // kOverlap, K = 2
};

using Extractor = std::function<FeatureMap(const Image<float>&)>;
using Aggregator = std::function<AggregateResult(const InitialVolume&)>;

std::vector<double> plane_depths(const SweepConfig& cfg);

FeatureMap extract_pool_sobel(const Image<float>& intensity, int channels = 32);
Extractor find_extractor(const std::string& name, int channels);
Aggregator find_aggregator(const std::string& name, int threads = 0);

InitialVolume build_initial_volume(const FeatureMap& ref, const FeatureMap& nb1,
                                   const FeatureMap& nb2,
                                   const std::array<Camera, 3>& cams,
                                   const SweepConfig& cfg, int threads = 0);

AggregateResult variance_aggregate(const InitialVolume& iv, int threads = 0);
AggregateResult aggregate(const InitialVolume& iv, const Aggregator& agg);

DepthMap regress_depth(const CostVolume& vz, const SweepConfig& cfg, int threads = 0);
double regress_depth_value(const CostVolume& vz, const SweepConfig& cfg, int y, int x);

OverlapMask overlap_mask(const CostVolume& vm, int threads = 0);

DepthMap mask_depth(const DepthMap& z, const OverlapMask& m, double tau = 0.5);

OverlapMask geometric_overlap_gt(const DepthMap& ref_gt, const DepthMap& nb1_gt,
                                 const DepthMap& nb2_gt,
                                 const std::array<Camera, 3>& cams,
                                 double rel_tol = 0.05);

double overlap_loss(const OverlapMask& pred, const OverlapMask& gt);
double depth_loss(const DepthMap& pred, const DepthMap& gt, const OverlapMask& gt_mask);

CostVolume overlap_loss_grad(const CostVolume& vm, const OverlapMask& gt);
CostVolume depth_loss_grad(const CostVolume& vz, const SweepConfig& cfg,
                           const DepthMap& gt, const OverlapMask& gt_mask);

}  // namespace sweepfuse
