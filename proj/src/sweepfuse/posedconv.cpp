#include "sweepfuse/posedconv.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace sweepfuse {

namespace {

constexpr uint32_t kKernelMagic = 0x4e4b4653;  // "SFKN"
constexpr uint32_t kKernelVersion = 1;

void check_rotation(const Eigen::Matrix3d& r) {
  double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9 || std::abs(r.determinant() - 1.0) > 1e-9)
    throw std::invalid_argument("rotation matrix is not orthonormal");
}

void check_voxel(const Eigen::Vector3i& v, int w) {
  if (w < 1 || w % 2 == 0) throw std::invalid_argument("kernel size must be odd");
  for (int a = 0; a < 3; ++a)
    if (v[a] < 0 || v[a] >= w) throw std::invalid_argument("voxel outside kernel");
}

// Snap coordinates that are within round-off of the lattice so that
// axis-aligned rotations resample exactly.
double snap(double x) {
  double r = std::round(x);
  return std::abs(x - r) < 1e-10 ? r : x;
}

struct TapPlan {
  // 8 corner taps per output voxel; out-of-cube corners carry weight with
  // a null index (zero extension).
  struct Tap {
    int32_t src[8];
    double wgt[8];
  };
  std::vector<Tap> taps;
};

TapPlan plan_trilinear(int w, const Eigen::Matrix3d& r_inv) {
  TapPlan plan;
  plan.taps.resize(size_t(w) * w * w);
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j)
      for (int k = 0; k < w; ++k) {
        Eigen::Vector3d src = discrete_source_coord({i, j, k}, w, r_inv);
        int x0 = int(std::floor(src.x())), y0 = int(std::floor(src.y())),
            z0 = int(std::floor(src.z()));
        double fx = src.x() - x0, fy = src.y() - y0, fz = src.z() - z0;
        TapPlan::Tap& tap = plan.taps[(size_t(i) * w + j) * w + k];
        int t = 0;
        for (int dx = 0; dx < 2; ++dx)
          for (int dy = 0; dy < 2; ++dy)
            for (int dz = 0; dz < 2; ++dz, ++t) {
              int sx = x0 + dx, sy = y0 + dy, sz = z0 + dz;
              bool in = sx >= 0 && sx < w && sy >= 0 && sy < w && sz >= 0 && sz < w;
              tap.src[t] = in ? int32_t((size_t(sx) * w + sy) * w + sz) : -1;
              tap.wgt[t] = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
            }
      }
  return plan;
}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_u32(FILE* f, uint32_t x) {
  uint8_t b[4] = {uint8_t(x), uint8_t(x >> 8), uint8_t(x >> 16), uint8_t(x >> 24)};
  if (fwrite(b, 1, 4, f) != 4) throw DataError("short write");
}

uint32_t read_u32(FILE* f) {
  uint8_t b[4];
  if (fread(b, 1, 4, f) != 4) throw DataError("short read");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace

void validate(const ReservoirKernel& k) {
  if (k.c_out < 1 || k.c_in < 1) throw std::invalid_argument("kernel needs channels");
  if (k.w < 1 || k.w % 2 == 0) throw std::invalid_argument("kernel size must be odd");
  if (k.v.size() != size_t(k.c_out) * k.c_in * k.w * k.w * k.w)
    throw std::invalid_argument("kernel storage size mismatch");
  for (float x : k.v)
    if (!std::isfinite(x)) throw std::invalid_argument("kernel weights must be finite");
}

Eigen::Vector3d norm(const Eigen::Vector3i& v, int w) {
  check_voxel(v, w);
  double r = (w - 1) / 2.0;
  Eigen::Vector3d o = v.cast<double>() - Eigen::Vector3d::Constant(r);
  double len = o.norm();
  if (len == 0) return Eigen::Vector3d::Zero();
  return o / len;
}

Eigen::Vector3d denorm(const Eigen::Vector3i& v, int w, const Eigen::Vector3d& s) {
  check_voxel(v, w);
  double r = (w - 1) / 2.0;
  double len = (v.cast<double>() - Eigen::Vector3d::Constant(r)).norm();
  return len * s + Eigen::Vector3d::Constant(r);
}

Eigen::Vector3d discrete_source_coord(const Eigen::Vector3i& v, int w,
                                      const Eigen::Matrix3d& r_inv) {
  Eigen::Vector3d src = denorm(v, w, r_inv * norm(v, w));
  return {snap(src.x()), snap(src.y()), snap(src.z())};
}

RotatedKernel rotate_kernel_discrete(const ReservoirKernel& k, const Eigen::Matrix3d& r_inv) {
  validate(k);
  check_rotation(r_inv);
  TapPlan plan = plan_trilinear(k.w, r_inv);
  RotatedKernel out{ReservoirKernel(k.c_out, k.c_in, k.w), r_inv};
  size_t slice = size_t(k.w) * k.w * k.w;
  for (int co = 0; co < k.c_out; ++co)
    for (int ci = 0; ci < k.c_in; ++ci) {
      const float* src = &k.v[(size_t(co) * k.c_in + ci) * slice];
      float* dst = &out.k.v[(size_t(co) * k.c_in + ci) * slice];
      for (size_t p = 0; p < slice; ++p) {
        const TapPlan::Tap& tap = plan.taps[p];
        double acc = 0;
        for (int t = 0; t < 8; ++t)
          if (tap.src[t] >= 0) acc += tap.wgt[t] * src[tap.src[t]];
        dst[p] = float(acc);
      }
    }
  return out;
}

RotatedKernel rotate_kernel_interp(const ReservoirKernel& k, const Eigen::Matrix3d& r_inv,
                                   RotateStats* stats) {
  validate(k);
  check_rotation(r_inv);
  int w = k.w;
  double r = (w - 1) / 2.0;
  RotatedKernel out{ReservoirKernel(k.c_out, k.c_in, w), r_inv};
  if (stats) stats->clamped = 0;
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j)
      for (int kk = 0; kk < w; ++kk) {
        Eigen::Vector3d off(i - r, j - r, kk - r);
        Eigen::Vector3d src = r_inv * off + Eigen::Vector3d::Constant(r);
        src = {snap(src.x()), snap(src.y()), snap(src.z())};
        bool outside = false;
        for (int a = 0; a < 3; ++a)
          if (src[a] < 0 || src[a] > w - 1) outside = true;
        if (outside) {
          if (stats) ++stats->clamped;
          Eigen::Vector3i n;
          for (int a = 0; a < 3; ++a)
            n[a] = int(std::clamp<long>(std::lround(src[a]), 0, w - 1));
          for (int co = 0; co < k.c_out; ++co)
            for (int ci = 0; ci < k.c_in; ++ci)
              out.k.at(co, ci, i, j, kk) = k.at(co, ci, n.x(), n.y(), n.z());
          continue;
        }
        int lo = std::max(w - 2, 0);
        int x0 = std::min(int(src.x()), lo);
        int y0 = std::min(int(src.y()), lo);
        int z0 = std::min(int(src.z()), lo);
        double fx = src.x() - x0, fy = src.y() - y0, fz = src.z() - z0;
        for (int co = 0; co < k.c_out; ++co)
          for (int ci = 0; ci < k.c_in; ++ci) {
            double acc = 0;
            for (int dx = 0; dx < 2; ++dx)
              for (int dy = 0; dy < 2; ++dy)
                for (int dz = 0; dz < 2; ++dz) {
                  int sx = std::min(x0 + dx, w - 1), sy = std::min(y0 + dy, w - 1),
                      sz = std::min(z0 + dz, w - 1);
                  acc += (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz) *
                         k.at(co, ci, sx, sy, sz);
                }
            out.k.at(co, ci, i, j, kk) = float(acc);
          }
      }
  return out;
}

SceneVolume posed_conv3d(const SceneVolume& vol, const RotatedKernel& rk, int threads) {
  const ReservoirKernel& k = rk.k;
  validate(k);
  if (vol.c != k.c_in) throw std::invalid_argument("volume channels do not match kernel");
  const VoxelGridSpec& spec = vol.spec;
  SceneVolume out(spec, k.c_out);
  int r = (k.w - 1) / 2;
  parallel_for(spec.vx, threads, [&](int64_t x) {
    for (int co = 0; co < k.c_out; ++co)
      for (int y = 0; y < spec.vy; ++y)
        for (int z = 0; z < spec.vz; ++z) {
          double acc = 0;
          for (int ci = 0; ci < k.c_in; ++ci)
            for (int i = 0; i < k.w; ++i) {
              int sx = int(x) + i - r;
              if (sx < 0 || sx >= spec.vx) continue;
              for (int j = 0; j < k.w; ++j) {
                int sy = y + j - r;
                if (sy < 0 || sy >= spec.vy) continue;
                for (int kk = 0; kk < k.w; ++kk) {
                  int sz = z + kk - r;
                  if (sz < 0 || sz >= spec.vz) continue;
                  acc += double(vol.at(ci, sx, sy, sz)) * k.at(co, ci, i, j, kk);
                }
              }
            }
          out.at(co, int(x), y, z) = float(acc);
        }
  });
  return out;
}

SceneVolume posed_conv3d(const SceneVolume& vol, const ReservoirKernel& k,
                         const Eigen::Matrix3d& r_1_to_n, int threads) {
  check_rotation(r_1_to_n);
  return posed_conv3d(vol, rotate_kernel_discrete(k, r_1_to_n.transpose()), threads);
}

SceneVolume average_posed_volumes(const std::vector<SceneVolume>& volumes) {
  if (volumes.empty()) throw std::invalid_argument("no volumes to average");
  const SceneVolume& first = volumes.front();
  for (const SceneVolume& v : volumes)
    if (!(v.spec == first.spec) || v.c != first.c)
      throw std::invalid_argument("volume specs differ");
  SceneVolume out(first.spec, first.c);
  for (size_t i = 0; i < out.v.size(); ++i) {
    double acc = 0;
    for (const SceneVolume& v : volumes) acc += v.v[i];
    out.v[i] = float(acc / volumes.size());
  }
  return out;
}

ReservoirKernel random_kernel(int c_out, int c_in, int w, uint64_t seed) {
  ReservoirKernel k(c_out, c_in, w);
  validate(k);
  Rng rng(seed);
  const double s = std::sqrt(3.0);
  for (float& x : k.v) x = float(rng.uniform(-s, s));
  return k;
}

void save_kernel(const std::string& path, const ReservoirKernel& k) {
  validate(k);
  FilePtr f(fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot write kernel: " + path);
  write_u32(f.get(), kKernelMagic);
  write_u32(f.get(), kKernelVersion);
  write_u32(f.get(), uint32_t(k.c_out));
  write_u32(f.get(), uint32_t(k.c_in));
  write_u32(f.get(), uint32_t(k.w));
  for (int i = 0; i < 3; ++i) write_u32(f.get(), 0);
  for (float x : k.v) {
    uint32_t bits;
    std::memcpy(&bits, &x, 4);
    write_u32(f.get(), bits);
  }
}

ReservoirKernel load_kernel(const std::string& path) {
  FilePtr f(fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open kernel: " + path);
  try {
    if (read_u32(f.get()) != kKernelMagic) throw DataError("bad magic");
    if (read_u32(f.get()) != kKernelVersion) throw DataError("bad version");
    uint32_t c_out = read_u32(f.get()), c_in = read_u32(f.get()), w = read_u32(f.get());
    for (int i = 0; i < 3; ++i) read_u32(f.get());
    if (c_out < 1 || c_in < 1 || w < 1 || w % 2 == 0 || c_out > 4096 || c_in > 4096 ||
        w > 63)
      throw DataError("bad kernel header");
    ReservoirKernel k(static_cast<int>(c_out), static_cast<int>(c_in),
                      static_cast<int>(w));
    for (float& x : k.v) {
      uint32_t bits = read_u32(f.get());
      std::memcpy(&x, &bits, 4);
    }
    validate(k);
    return k;
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " in kernel file: " + path);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string(e.what()) + " in kernel file: " + path);
  }
}

}  // namespace sweepfuse
