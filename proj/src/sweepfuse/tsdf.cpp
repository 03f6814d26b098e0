#include "sweepfuse/tsdf.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <memory>

#include "sweepfuse/mc_tables.h"

namespace sweepfuse {

namespace {

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

void write_f32(FILE* f, float x) {
  uint32_t bits;
  std::memcpy(&bits, &x, 4);
  write_u32(f, bits);
}

float read_f32(FILE* f) {
  uint32_t bits = read_u32(f);
  float x;
  std::memcpy(&x, &bits, 4);
  return x;
}

constexpr uint32_t kTsdfMagic = 0x44544653;  // "SFTD"
constexpr uint32_t kTsdfVersion = 1;

// Corner offsets in Lorensen order: 0-3 counterclockwise on the z slab,
// 4-7 above.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

// The two corners each of the 12 edges connects.
constexpr int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {3, 2}, {0, 3}, {4, 5}, {5, 6},
                                    {7, 6}, {4, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

// Canonical lattice key of an edge: axis (0=x, 1=y, 2=z) and the lattice
// coordinate of its lower corner, for global vertex welding.
struct EdgeKey {
  uint8_t axis;
  int x, y, z;
  bool operator<(const EdgeKey& o) const {
    if (z != o.z) return z < o.z;
    if (y != o.y) return y < o.y;
    if (x != o.x) return x < o.x;
    return axis < o.axis;
  }
};

EdgeKey edge_key(int x, int y, int z, int e) {
  const int* a = kCorner[kEdgeCorner[e][0]];
  const int* b = kCorner[kEdgeCorner[e][1]];
  int lx = x + std::min(a[0], b[0]);
  int ly = y + std::min(a[1], b[1]);
  int lz = z + std::min(a[2], b[2]);
  uint8_t axis = a[0] != b[0] ? 0 : (a[1] != b[1] ? 1 : 2);
  return {axis, lx, ly, lz};
}

struct RowResult {
  std::vector<std::pair<EdgeKey, std::array<float, 3>>> verts;
  std::vector<std::array<EdgeKey, 3>> tris;
};

}  // namespace

void integrate_depth(TsdfVolume& vol, const DepthMap& z, const Camera& cam, int threads) {
  validate(vol.spec);
  validate(cam.K);
  validate(cam.pose);
  if (z.h() != cam.K.height || z.w() != cam.K.width)
    throw std::invalid_argument("depth map does not match intrinsics");
  if (!(vol.mu > 0)) throw std::invalid_argument("truncation must be positive");
  const VoxelGridSpec& spec = vol.spec;
  RigidTransform cfw = cam.pose.camera_from_world();
  parallel_for(spec.vx, threads, [&](int64_t x) {
    for (int y = 0; y < spec.vy; ++y)
      for (int zz = 0; zz < spec.vz; ++zz) {
        Eigen::Vector3d pc =
            cfw.apply(voxel_to_world(Eigen::Vector3d(double(x), y, zz), spec));
        if (pc.z() <= 0) continue;
        Eigen::Vector3d px = project(pc, cam.K);
        long ix = std::lround(px.x()), iy = std::lround(px.y());
        if (ix < 0 || ix >= cam.K.width || iy < 0 || iy >= cam.K.height) continue;
        if (!z.valid.at(int(iy), int(ix))) continue;
        double sdf = double(z.z.at(int(iy), int(ix))) - pc.z();
        if (sdf < -vol.mu) continue;
        float t = float(std::clamp(sdf / vol.mu, -1.0, 1.0));
        size_t i = vol.idx(int(x), y, zz);
        float w = vol.weights[i];
        vol.values[i] = (vol.values[i] * w + t) / (w + 1.f);
        vol.weights[i] = std::min(w + 1.f, 255.f);
      }
  });
}

double tsdf_loss(const TsdfVolume& pred, const TsdfVolume& gt) {
  if (!(pred.spec == gt.spec)) throw std::invalid_argument("volume specs differ");
  double acc = 0;
  for (size_t i = 0; i < gt.values.size(); ++i)
    if (gt.weights[i] > 0) acc += std::abs(double(pred.values[i]) - gt.values[i]);
  return acc;
}

std::vector<double> tsdf_loss_grad(const TsdfVolume& pred, const TsdfVolume& gt) {
  if (!(pred.spec == gt.spec)) throw std::invalid_argument("volume specs differ");
  std::vector<double> g(pred.values.size(), 0.0);
  for (size_t i = 0; i < gt.values.size(); ++i) {
    if (gt.weights[i] <= 0) continue;
    double d = double(pred.values[i]) - gt.values[i];
    g[i] = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
  }
  return g;
}

double total_loss(double lz, double lm, double ltsdf, double alpha, double beta,
                  double gamma) {
  if (!std::isfinite(lz) || !std::isfinite(lm) || !std::isfinite(ltsdf))
    throw std::invalid_argument("loss terms must be finite");
  return alpha * lz + beta * lm + gamma * ltsdf;
}

TriangleMesh extract_mesh(const TsdfVolume& vol, int threads) {
  validate(vol.spec);
  const VoxelGridSpec& spec = vol.spec;
  int nx = spec.vx - 1, ny = spec.vy - 1, nz = spec.vz - 1;
  TriangleMesh mesh;
  if (nx < 1 || ny < 1 || nz < 1) return mesh;

  int64_t rows = int64_t(ny) * nz;
  std::vector<RowResult> row_results(rows);
  parallel_for(rows, threads, [&](int64_t row) {
    int y = int(row / nz), z = int(row % nz);
    RowResult& rr = row_results[row];
    for (int x = 0; x < nx; ++x) {
      float val[8];
      bool observed = true;
      int cube = 0;
      for (int c = 0; c < 8; ++c) {
        int cx = x + kCorner[c][0], cy = y + kCorner[c][1], cz = z + kCorner[c][2];
        if (vol.weight_at(cx, cy, cz) <= 0) {
          observed = false;
          break;
        }
        val[c] = vol.value_at(cx, cy, cz);
        if (val[c] < 0) cube |= 1 << c;
      }
      if (!observed || kMcEdgeTable[cube] == 0) continue;
      for (int e = 0; e < 12; ++e) {
        if (!(kMcEdgeTable[cube] & (1 << e))) continue;
        int c0 = kEdgeCorner[e][0], c1 = kEdgeCorner[e][1];
        double v0 = val[c0], v1 = val[c1];
        double t = v0 == v1 ? 0.5 : v0 / (v0 - v1);
        t = std::clamp(t, 0.0, 1.0);
        Eigen::Vector3d p0(x + kCorner[c0][0], y + kCorner[c0][1], z + kCorner[c0][2]);
        Eigen::Vector3d p1(x + kCorner[c1][0], y + kCorner[c1][1], z + kCorner[c1][2]);
        Eigen::Vector3d pw = voxel_to_world(p0 + t * (p1 - p0), spec);
        rr.verts.push_back(
            {edge_key(x, y, z, e), {float(pw.x()), float(pw.y()), float(pw.z())}});
      }
      for (int t = 0; kMcTriTable[cube][t] != -1; t += 3) {
        std::array<EdgeKey, 3> tri;
        for (int k = 0; k < 3; ++k) tri[k] = edge_key(x, y, z, kMcTriTable[cube][t + k]);
        rr.tris.push_back(tri);
      }
    }
  });

  std::map<EdgeKey, uint32_t> index;
  for (const RowResult& rr : row_results)
    for (const auto& [key, pos] : rr.verts) {
      auto [it, fresh] = index.emplace(key, uint32_t(mesh.vertices.size()));
      if (fresh) mesh.vertices.push_back(pos);
    }
  for (const RowResult& rr : row_results)
    for (const auto& tri : rr.tris)
      mesh.faces.push_back(
          {index.at(tri[0]), index.at(tri[1]), index.at(tri[2])});
  return mesh;
}

float sample_tsdf_trilinear(const TsdfVolume& vol, const Eigen::Vector3d& ijk) {
  const VoxelGridSpec& spec = vol.spec;
  double x = ijk.x(), y = ijk.y(), z = ijk.z();
  if (x < 0 || y < 0 || z < 0 || x > spec.vx - 1 || y > spec.vy - 1 || z > spec.vz - 1)
    return 1.f;
  int x0 = std::min(int(x), std::max(spec.vx - 2, 0));
  int y0 = std::min(int(y), std::max(spec.vy - 2, 0));
  int z0 = std::min(int(z), std::max(spec.vz - 2, 0));
  double fx = x - x0, fy = y - y0, fz = z - z0;
  double acc = 0;
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        int sx = std::min(x0 + dx, spec.vx - 1), sy = std::min(y0 + dy, spec.vy - 1),
            sz = std::min(z0 + dz, spec.vz - 1);
        acc += (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz) *
               vol.value_at(sx, sy, sz);
      }
  return float(acc);
}

DepthMap render_depth(const TsdfVolume& vol, const Camera& cam, int threads) {
  validate(vol.spec);
  validate(cam.K);
  validate(cam.pose);
  if (!(vol.mu > 0)) throw std::invalid_argument("truncation must be positive");
  const VoxelGridSpec& spec = vol.spec;
  DepthMap out(cam.K.height, cam.K.width);
  RigidTransform wfc = cam.pose.world_from_camera();
  Eigen::Vector3d origin = wfc.t;
  Eigen::Vector3d gmin = spec.origin;
  Eigen::Vector3d gmax = spec.origin + spec.pitch * Eigen::Vector3d(spec.vx - 1, spec.vy - 1,
                                                                    spec.vz - 1);
  double step = vol.mu / 2.0;
  parallel_for(cam.K.height, threads, [&](int64_t y) {
    for (int x = 0; x < cam.K.width; ++x) {
      Eigen::Vector3d dir_cam((x - cam.K.cx) / cam.K.fx, (y - cam.K.cy) / cam.K.fy, 1.0);
      Eigen::Vector3d d = wfc.R * dir_cam;
      // Clip the ray against the grid AABB in ray-parameter units.
      double t0 = 0, t1 = 1e300;
      bool hit_box = true;
      for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-15) {
          if (origin[a] < gmin[a] || origin[a] > gmax[a]) hit_box = false;
          continue;
        }
        double u0 = (gmin[a] - origin[a]) / d[a];
        double u1 = (gmax[a] - origin[a]) / d[a];
        if (u0 > u1) std::swap(u0, u1);
        t0 = std::max(t0, u0);
        t1 = std::min(t1, u1);
      }
      if (!hit_box || t1 <= t0) continue;
      double prev_t = t0;
      float prev_v = sample_tsdf_trilinear(
          vol, world_to_voxel(origin + t0 * d, spec));
      bool found = false;
      for (double t = t0 + step; t <= t1 + step * 0.5 && !found; t += step) {
        double tc = std::min(t, t1);
        float v = sample_tsdf_trilinear(vol, world_to_voxel(origin + tc * d, spec));
        if (prev_v > 0 && v <= 0) {
          double f = double(prev_v) / (double(prev_v) - v);
          double t_hit = prev_t + f * (tc - prev_t);
          out.z.at(int(y), x) = float(t_hit);  // dir_cam.z == 1, so t is camera depth
          out.valid.at(int(y), x) = 1;
          found = true;
        }
        prev_t = tc;
        prev_v = v;
        if (tc >= t1) break;
      }
    }
  });
  return out;
}

void save_tsdf(const std::string& path, const TsdfVolume& vol) {
  validate(vol.spec);
  FilePtr f(fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot write tsdf: " + path);
  write_u32(f.get(), kTsdfMagic);
  write_u32(f.get(), kTsdfVersion);
  write_u32(f.get(), 2);
  write_u32(f.get(), uint32_t(vol.spec.vx));
  write_u32(f.get(), uint32_t(vol.spec.vy));
  write_u32(f.get(), uint32_t(vol.spec.vz));
  for (int a = 0; a < 3; ++a) write_f64(f.get(), vol.spec.origin[a]);
  write_f64(f.get(), vol.spec.pitch);
  write_f64(f.get(), vol.mu);
  for (float x : vol.values) write_f32(f.get(), x);
  for (float x : vol.weights) write_f32(f.get(), x);
}

TsdfVolume load_tsdf(const std::string& path) {
  FilePtr f(fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open tsdf: " + path);
  try {
    if (read_u32(f.get()) != kTsdfMagic) throw DataError("bad magic");
    if (read_u32(f.get()) != kTsdfVersion) throw DataError("bad version");
    if (read_u32(f.get()) != 2) throw DataError("expected a 2-channel tsdf file");
    uint32_t vx = read_u32(f.get()), vy = read_u32(f.get()), vz = read_u32(f.get());
    VoxelGridSpec spec;
    for (int a = 0; a < 3; ++a) spec.origin[a] = read_f64(f.get());
    spec.pitch = read_f64(f.get());
    double mu = read_f64(f.get());
    if (vx < 1 || vy < 1 || vz < 1 || vx > 4096 || vy > 4096 || vz > 4096 || !(mu > 0))
      throw DataError("bad tsdf header");
    spec.vx = int(vx);
    spec.vy = int(vy);
    spec.vz = int(vz);
    validate(spec);
    TsdfVolume vol(spec, mu);
    for (float& x : vol.values) x = read_f32(f.get());
    for (float& x : vol.weights) x = read_f32(f.get());
    return vol;
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " in tsdf file: " + path);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string(e.what()) + " in tsdf file: " + path);
  }
}

void save_ply(const std::string& path, const TriangleMesh& mesh) {
  FilePtr f(fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot write ply: " + path);
  char header[512];
  int n = snprintf(header, sizeof(header),
                   "ply\nformat binary_little_endian 1.0\n"
                   "element vertex %zu\n"
                   "property float x\nproperty float y\nproperty float z\n"
                   "element face %zu\n"
                   "property list uchar uint vertex_indices\n"
                   "end_header\n",
                   mesh.vertices.size(), mesh.faces.size());
  if (fwrite(header, 1, size_t(n), f.get()) != size_t(n)) throw DataError("short write");
  for (const auto& v : mesh.vertices)
    for (float x : v) write_f32(f.get(), x);
  for (const auto& face : mesh.faces) {
    uint8_t three = 3;
    if (fwrite(&three, 1, 1, f.get()) != 1) throw DataError("short write");
    for (uint32_t i : face) write_u32(f.get(), i);
  }
}

TriangleMesh load_ply(const std::string& path) {
  FilePtr f(fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open ply: " + path);
  char line[512];
  size_t n_verts = 0, n_faces = 0;
  bool binary_le = false, in_header = true, saw_ply = false;
  while (in_header) {
    if (!fgets(line, sizeof(line), f.get()))
      throw DataError("truncated ply header: " + path);
    std::string s(line);
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    if (!saw_ply) {
      if (s != "ply") throw DataError("not a ply file: " + path);
      saw_ply = true;
    } else if (s.rfind("format ", 0) == 0) {
      binary_le = s.rfind("format binary_little_endian", 0) == 0;
    } else if (s.rfind("element vertex ", 0) == 0) {
      n_verts = size_t(strtoull(s.c_str() + 15, nullptr, 10));
    } else if (s.rfind("element face ", 0) == 0) {
      n_faces = size_t(strtoull(s.c_str() + 13, nullptr, 10));
    } else if (s == "end_header") {
      in_header = false;
    }
  }
  if (!binary_le) throw DataError("unsupported ply format: " + path);
  try {
    TriangleMesh mesh;
    mesh.vertices.resize(n_verts);
    for (auto& v : mesh.vertices)
      for (float& x : v) x = read_f32(f.get());
    mesh.faces.resize(n_faces);
    for (auto& face : mesh.faces) {
      uint8_t cnt;
      if (fread(&cnt, 1, 1, f.get()) != 1) throw DataError("short read");
      if (cnt != 3) throw DataError("non-triangle face");
      for (uint32_t& i : face) {
        i = read_u32(f.get());
        if (i >= n_verts) throw DataError("face index out of range");
      }
    }
    return mesh;
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " in ply file: " + path);
  }
}

std::vector<Eigen::Vector3d> mesh_points(const TriangleMesh& mesh) {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) pts.emplace_back(v[0], v[1], v[2]);
  return pts;
}

}  // namespace sweepfuse
