#pragma once

#include <cstdint>
#include <vector>

#include "sweepfuse/core.h"

namespace sweepfuse {

struct FeatureMap {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;  // channel-major

  FeatureMap() = default;
  FeatureMap(int c_, int h_, int w_, float fill = 0.f)
      : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, fill) {}

  float& at(int ch, int y, int x) { return v[(size_t(ch) * h + y) * w + x]; }
  const float& at(int ch, int y, int x) const { return v[(size_t(ch) * h + y) * w + x]; }
};

struct DepthMap {
  Image<float> z;
  Image<uint8_t> valid;  // 1 valid, 0 invalid

  DepthMap() = default;
  DepthMap(int h, int w) : z(h, w, 0.f), valid(h, w, 0) {}

  int h() const { return z.h; }
  int w() const { return z.w; }
};

// Per-pixel overlap probability. Ground-truth masks use known=0 for pixels
// whose label cannot be established (p is then 0.5 by convention); known
// pixels carry p in {0, 1}. Predicted masks have known=1 everywhere.
struct OverlapMask {
  Image<float> p;
  Image<uint8_t> known;

  OverlapMask() = default;
  OverlapMask(int h, int w, float prob = 0.f, uint8_t kn = 1)
      : p(h, w, prob), known(h, w, kn) {}

  int h() const { return p.h; }
  int w() const { return p.w; }
};

}  // namespace sweepfuse
