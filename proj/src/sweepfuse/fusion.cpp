#include "sweepfuse/fusion.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace sweepfuse {

namespace {

constexpr uint32_t kVolumeMagic = 0x4c564653;  // "SFVL"
constexpr uint32_t kVolumeVersion = 1;

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

void write_f64(FILE* f, double x) {
  uint64_t bits;
  std::memcpy(&bits, &x, 8);
  write_u32(f, uint32_t(bits));
  write_u32(f, uint32_t(bits >> 32));
}

double read_f64(FILE* f) {
  uint64_t lo = read_u32(f), hi = read_u32(f);
  uint64_t bits = lo | hi << 32;
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

}  // namespace

SceneVolume backproject_features(const FeatureMap& f, const Camera& cam,
                                 const VoxelGridSpec& spec, SceneVolume* count,
                                 int threads) {
  validate(cam.K);
  validate(cam.pose);
  validate(spec);
  if (f.c < 1 || f.h != cam.K.height || f.w != cam.K.width)
    throw std::invalid_argument("feature map does not match intrinsics");
  SceneVolume out(spec, f.c);
  if (count) *count = SceneVolume(spec, 1);
  RigidTransform cfw = cam.pose.camera_from_world();
  parallel_for(spec.vx, threads, [&](int64_t x) {
    for (int y = 0; y < spec.vy; ++y)
      for (int z = 0; z < spec.vz; ++z) {
        Eigen::Vector3d pc =
            cfw.apply(voxel_to_world(Eigen::Vector3d(double(x), y, z), spec));
        if (pc.z() <= 0) continue;
        Eigen::Vector3d px = project(pc, cam.K);
        if (px.x() < 0 || px.x() > f.w - 1 || px.y() < 0 || px.y() > f.h - 1) continue;
        int x0 = int(px.x()), y0 = int(px.y());
        int x1 = std::min(x0 + 1, f.w - 1), y1 = std::min(y0 + 1, f.h - 1);
        double fx = px.x() - x0, fy = px.y() - y0;
        for (int ch = 0; ch < f.c; ++ch)
          out.at(ch, int(x), y, z) =
              float((1 - fy) * ((1 - fx) * f.at(ch, y0, x0) + fx * f.at(ch, y0, x1)) +
                    fy * ((1 - fx) * f.at(ch, y1, x0) + fx * f.at(ch, y1, x1)));
        if (count) count->at(0, int(x), y, z) = 1.f;
      }
  });
  return out;
}

SceneVolume embed_depth_occupancy(const std::vector<DepthMap>& depths,
                                  const std::vector<Camera>& cams,
                                  const VoxelGridSpec& spec) {
  validate(spec);
  if (depths.empty() || depths.size() != cams.size())
    throw std::invalid_argument("need one camera per depth map");
  size_t n_vox = size_t(spec.voxel_count());
  std::vector<uint32_t> hits(n_vox, 0);
  std::vector<uint8_t> indicator(n_vox);
  for (size_t n = 0; n < depths.size(); ++n) {
    validate(cams[n].K);
    validate(cams[n].pose);
    const DepthMap& dm = depths[n];
    if (dm.h() != cams[n].K.height || dm.w() != cams[n].K.width)
      throw std::invalid_argument("depth map does not match intrinsics");
    std::fill(indicator.begin(), indicator.end(), 0);
    RigidTransform wfc = cams[n].pose.world_from_camera();
    for (int y = 0; y < dm.h(); ++y)
      for (int x = 0; x < dm.w(); ++x) {
        if (!dm.valid.at(y, x)) continue;
        Eigen::Vector3d pw = wfc.apply(backproject(x, y, dm.z.at(y, x), cams[n].K));
        Eigen::Vector3d ijk = world_to_voxel(pw, spec);
        long ix = std::lround(ijk.x()), iy = std::lround(ijk.y()), iz = std::lround(ijk.z());
        if (ix < 0 || ix >= spec.vx || iy < 0 || iy >= spec.vy || iz < 0 || iz >= spec.vz)
          continue;
        indicator[(size_t(ix) * spec.vy + iy) * spec.vz + iz] = 1;
      }
    for (size_t i = 0; i < n_vox; ++i) hits[i] += indicator[i];
  }
  SceneVolume out(spec, 1);
  for (size_t i = 0; i < n_vox; ++i)
    out.v[i] = float(double(hits[i]) / double(depths.size()));
  return out;
}

SceneVolume build_unified_volume(const SceneVolume& posed_feature_avg,
                                 const SceneVolume& occupancy) {
  if (!(posed_feature_avg.spec == occupancy.spec))
    throw std::invalid_argument("volume specs differ");
  if (occupancy.c != 1) throw std::invalid_argument("occupancy must have one channel");
  SceneVolume out(posed_feature_avg.spec, posed_feature_avg.c + 1);
  size_t n = size_t(out.spec.voxel_count());
  std::copy(occupancy.v.begin(), occupancy.v.end(), out.v.begin());
  std::copy(posed_feature_avg.v.begin(), posed_feature_avg.v.end(), out.v.begin() + n);
  return out;
}

void save_volume(const std::string& path, const SceneVolume& vol) {
  validate(vol.spec);
  if (vol.c < 1) throw std::invalid_argument("volume needs channels");
  FilePtr f(fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot write volume: " + path);
  write_u32(f.get(), kVolumeMagic);
  write_u32(f.get(), kVolumeVersion);
  write_u32(f.get(), uint32_t(vol.c));
  write_u32(f.get(), uint32_t(vol.spec.vx));
  write_u32(f.get(), uint32_t(vol.spec.vy));
  write_u32(f.get(), uint32_t(vol.spec.vz));
  for (int a = 0; a < 3; ++a) write_f64(f.get(), vol.spec.origin[a]);
  write_f64(f.get(), vol.spec.pitch);
  for (float x : vol.v) {
    uint32_t bits;
    std::memcpy(&bits, &x, 4);
    write_u32(f.get(), bits);
  }
}

SceneVolume load_volume(const std::string& path) {
  FilePtr f(fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open volume: " + path);
  try {
    if (read_u32(f.get()) != kVolumeMagic) throw DataError("bad magic");
    if (read_u32(f.get()) != kVolumeVersion) throw DataError("bad version");
    uint32_t c = read_u32(f.get()), vx = read_u32(f.get()), vy = read_u32(f.get()),
             vz = read_u32(f.get());
    VoxelGridSpec spec;
    for (int a = 0; a < 3; ++a) spec.origin[a] = read_f64(f.get());
    spec.pitch = read_f64(f.get());
    if (c < 1 || c > 4096 || vx < 1 || vy < 1 || vz < 1 || vx > 4096 || vy > 4096 ||
        vz > 4096)
      throw DataError("bad volume header");
    spec.vx = int(vx);
    spec.vy = int(vy);
    spec.vz = int(vz);
    validate(spec);
    SceneVolume vol(spec, int(c));
    for (float& x : vol.v) {
      uint32_t bits = read_u32(f.get());
      std::memcpy(&x, &bits, 4);
    }
    return vol;
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " in volume file: " + path);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string(e.what()) + " in volume file: " + path);
  }
}

}  // namespace sweepfuse
