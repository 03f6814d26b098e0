#include "sweepfuse/synthetic.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sweepfuse/image_io.h"

namespace sweepfuse {

namespace {

using json = nlohmann::json;

uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double hash01(int64_t x, int64_t y, int64_t z, uint64_t seed) {
  uint64_t h = seed + 0x9e3779b97f4a7c15ull;
  h = mix64(h ^ (uint64_t(x) * 0xff51afd7ed558ccdull));
  h = mix64(h ^ (uint64_t(y) * 0xc4ceb9fe1a85ec53ull));
  h = mix64(h ^ (uint64_t(z) * 0x9e3779b97f4a7c15ull));
  return double(h >> 11) * 0x1.0p-53;
}

double value_noise(const Eigen::Vector3d& p, double freq, uint64_t seed) {
  Eigen::Vector3d q = p * freq;
  int64_t x0 = int64_t(std::floor(q.x())), y0 = int64_t(std::floor(q.y())),
          z0 = int64_t(std::floor(q.z()));
  double fx = q.x() - double(x0), fy = q.y() - double(y0), fz = q.z() - double(z0);
  double acc = 0;
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        double wgt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
        acc += wgt * hash01(x0 + dx, y0 + dy, z0 + dz, seed);
      }
  return acc;
}

// Octave scales are coarse enough that the texture stays correlated under
// the sub-plane warp offsets the sweep produces at desk-scale depths.
double albedo(const Eigen::Vector3d& p, uint64_t seed) {
  double n = 0.5 * value_noise(p, 2.0, seed ^ 0x1111) +
             0.5 * value_noise(p, 6.0, seed ^ 0x2222);
  return 0.2 + 0.8 * n;
}

struct Hit {
  double t = -1;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  uint64_t tex_seed = 0;
  bool ok() const { return t > 0; }
};

constexpr double kRayEps = 1e-9;

Hit intersect(const PlanePrim& pl, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  double denom = d.dot(pl.n);
  if (std::abs(denom) < 1e-12) return {};
  double t = (pl.p0 - o).dot(pl.n) / denom;
  if (t <= kRayEps) return {};
  Eigen::Vector3d x = o + t * d - pl.p0;
  Eigen::Vector3d v = pl.n.cross(pl.u);
  if (std::abs(x.dot(pl.u)) > pl.hu || std::abs(x.dot(v)) > pl.hv) return {};
  return {t, denom > 0 ? Eigen::Vector3d(-pl.n) : pl.n, pl.tex_seed};
}

Hit intersect(const BoxPrim& b, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  double tmin = -1e300, tmax = 1e300;
  int axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < b.bmin[a] || o[a] > b.bmax[a]) return {};
      continue;
    }
    double t0 = (b.bmin[a] - o[a]) / d[a];
    double t1 = (b.bmax[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      axis = a;
    }
    tmax = std::min(tmax, t1);
  }
  if (tmax < tmin || tmin <= kRayEps || axis < 0) return {};
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  n[axis] = d[axis] < 0 ? 1.0 : -1.0;
  return {tmin, n, b.tex_seed};
}

Hit intersect(const SpherePrim& s, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  Eigen::Vector3d oc = o - s.center;
  double a = d.dot(d), b = 2.0 * oc.dot(d), c = oc.dot(oc) - s.radius * s.radius;
  double disc = b * b - 4 * a * c;
  if (disc < 0) return {};
  double sq = std::sqrt(disc);
  double t = (-b - sq) / (2 * a);
  if (t <= kRayEps) t = (-b + sq) / (2 * a);
  if (t <= kRayEps) return {};
  Eigen::Vector3d n = (o + t * d - s.center) / s.radius;
  return {t, n, s.tex_seed};
}

Hit nearest_hit(const Scene& scene, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  Hit best;
  for (const auto& prim : scene.primitives) {
    Hit h = std::visit([&](const auto& p) { return intersect(p, o, d); }, prim);
    if (h.ok() && (!best.ok() || h.t < best.t)) best = h;
  }
  return best;
}

double sdf(const PlanePrim& pl, const Eigen::Vector3d& p) {
  Eigen::Vector3d x = p - pl.p0;
  Eigen::Vector3d v = pl.n.cross(pl.u);
  double s = x.dot(pl.n);
  double du = std::max(0.0, std::abs(x.dot(pl.u)) - pl.hu);
  double dv = std::max(0.0, std::abs(x.dot(v)) - pl.hv);
  if (du == 0 && dv == 0) return s;
  return std::sqrt(s * s + du * du + dv * dv);
}

double sdf(const BoxPrim& b, const Eigen::Vector3d& p) {
  Eigen::Vector3d q = (b.bmin - p).cwiseMax(p - b.bmax);
  double inside = std::min(q.maxCoeff(), 0.0);
  return q.cwiseMax(0.0).norm() + inside;
}

double sdf(const SpherePrim& s, const Eigen::Vector3d& p) {
  return (p - s.center).norm() - s.radius;
}

Eigen::Vector3d json_vec3(const json& j) {
  return Eigen::Vector3d(j.at(0).get<double>(), j.at(1).get<double>(),
                         j.at(2).get<double>());
}
json vec3_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

RenderResult render(const Scene& scene, const Camera& cam, int threads) {
  validate(cam.K);
  validate(cam.pose);
  if (scene.primitives.empty()) throw std::invalid_argument("scene has no primitives");
  int h = cam.K.height, w = cam.K.width;
  RenderResult out{Image<float>(h, w, 0.f), DepthMap(h, w)};
  RigidTransform wfc = cam.pose.world_from_camera();
  Eigen::Vector3d origin = wfc.t;
  Eigen::Vector3d light = scene.light.normalized();
  parallel_for(h, threads, [&](int64_t y) {
    for (int x = 0; x < w; ++x) {
      Eigen::Vector3d dir_cam((x - cam.K.cx) / cam.K.fx, (y - cam.K.cy) / cam.K.fy, 1.0);
      Eigen::Vector3d d = wfc.R * dir_cam;
      Hit hit = nearest_hit(scene, origin, d);
      if (!hit.ok()) continue;
      out.depth.z.at(int(y), x) = float(hit.t);
      out.depth.valid.at(int(y), x) = 1;
      Eigen::Vector3d p = origin + hit.t * d;
      double lambert = 0.35 + 0.65 * std::max(0.0, hit.normal.dot(light));
      out.intensity.at(int(y), x) = float(albedo(p, hit.tex_seed) * lambert);
    }
  });
  return out;
}

double scene_signed_distance(const Scene& scene, const Eigen::Vector3d& p) {
  if (scene.primitives.empty()) throw std::invalid_argument("scene has no primitives");
  double best = 1e300;
  for (const auto& prim : scene.primitives)
    best = std::min(best, std::visit([&](const auto& pr) { return sdf(pr, p); }, prim));
  return best;
}

TsdfVolume analytic_tsdf(const Scene& scene, const VoxelGridSpec& spec, double mu) {
  validate(spec);
  if (!(mu > 0)) throw std::invalid_argument("truncation must be positive");
  TsdfVolume vol(spec, mu);
  for (int x = 0; x < spec.vx; ++x)
    for (int y = 0; y < spec.vy; ++y)
      for (int z = 0; z < spec.vz; ++z) {
        Eigen::Vector3d p = voxel_to_world(Eigen::Vector3d(x, y, z), spec);
        double sd = scene_signed_distance(scene, p);
        vol.values[vol.idx(x, y, z)] = float(std::clamp(sd / mu, -1.0, 1.0));
        vol.weights[vol.idx(x, y, z)] = 1.f;
      }
  return vol;
}

Trajectory orbit_trajectory(const Eigen::Vector3d& center, double radius, int n,
                            double elevation_deg, double start_deg, double step_deg) {
  if (n < 1 || !(radius > 0)) throw std::invalid_argument("need n >= 1 and positive radius");
  if (std::abs(elevation_deg) >= 89.0)
    throw std::invalid_argument("elevation too close to the pole");
  if (step_deg == 0.0) step_deg = 360.0 / n;
  Trajectory traj;
  double e = elevation_deg * M_PI / 180.0;
  Eigen::Vector3d up(0, 1, 0);
  for (int i = 0; i < n; ++i) {
    double a = (start_deg + i * step_deg) * M_PI / 180.0;
    Eigen::Vector3d pos =
        center + radius * Eigen::Vector3d(std::cos(e) * std::cos(a), std::sin(e),
                                          std::cos(e) * std::sin(a));
    Eigen::Vector3d zc = (center - pos).normalized();
    Eigen::Vector3d xc = zc.cross(up).normalized();
    Eigen::Vector3d yc = zc.cross(xc);
    Eigen::Matrix3d r_wc;
    r_wc.col(0) = xc;
    r_wc.col(1) = yc;
    r_wc.col(2) = zc;
    traj.poses.push_back(Pose{r_wc, pos, PoseConvention::kWorldFromCamera});
  }
  return traj;
}

std::vector<Eigen::Vector3d> sample_surface_points(const Scene& scene, int n, uint64_t seed) {
  if (scene.primitives.empty()) throw std::invalid_argument("scene has no primitives");
  std::vector<double> areas;
  for (const auto& prim : scene.primitives) {
    double a = std::visit(
        [](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, PlanePrim>) {
            return 4.0 * p.hu * p.hv;
          } else if constexpr (std::is_same_v<T, BoxPrim>) {
            Eigen::Vector3d e = p.bmax - p.bmin;
            return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z());
          } else {
            return 4.0 * M_PI * p.radius * p.radius;
          }
        },
        prim);
    areas.push_back(a);
  }
  double total = 0;
  for (double a : areas) total += a;
  Rng rng(seed);
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    double pick = (i + 0.5) / n * total;
    size_t k = 0;
    double acc = areas[0];
    while (k + 1 < areas.size() && pick > acc) acc += areas[++k];
    const auto& prim = scene.primitives[k];
    pts.push_back(std::visit(
        [&](const auto& p) -> Eigen::Vector3d {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, PlanePrim>) {
            Eigen::Vector3d v = p.n.cross(p.u);
            return p.p0 + rng.uniform(-p.hu, p.hu) * p.u + rng.uniform(-p.hv, p.hv) * v;
          } else if constexpr (std::is_same_v<T, BoxPrim>) {
            Eigen::Vector3d e = p.bmax - p.bmin;
            double faces[6] = {e.y() * e.z(), e.y() * e.z(), e.x() * e.z(),
                               e.x() * e.z(), e.x() * e.y(), e.x() * e.y()};
            double ft = 0;
            for (double f : faces) ft += f;
            double fp = rng.uniform(0, ft);
            int fi = 0;
            double fa = faces[0];
            while (fi < 5 && fp > fa) fa += faces[++fi];
            Eigen::Vector3d q = p.bmin + Eigen::Vector3d(rng.uniform() * e.x(),
                                                         rng.uniform() * e.y(),
                                                         rng.uniform() * e.z());
            q[fi / 2] = (fi % 2) ? p.bmax[fi / 2] : p.bmin[fi / 2];
            return q;
          } else {
            double z = 1.0 - 2.0 * rng.uniform();
            double phi = 2.0 * M_PI * rng.uniform();
            double s = std::sqrt(std::max(0.0, 1.0 - z * z));
            return p.center +
                   p.radius * Eigen::Vector3d(s * std::cos(phi), s * std::sin(phi), z);
          }
        },
        prim));
  }
  return pts;
}

std::string scene_config_to_json(const SceneConfig& cfg) {
  json j;
  j["light"] = vec3_json(cfg.scene.light);
  j["bounds"] = {{"min", vec3_json(cfg.scene.bounds_min)},
                 {"max", vec3_json(cfg.scene.bounds_max)}};
  j["primitives"] = json::array();
  for (const auto& prim : cfg.scene.primitives) {
    json p;
    std::visit(
        [&](const auto& pr) {
          using T = std::decay_t<decltype(pr)>;
          if constexpr (std::is_same_v<T, PlanePrim>) {
            p = {{"type", "plane"},   {"p0", vec3_json(pr.p0)}, {"n", vec3_json(pr.n)},
                 {"u", vec3_json(pr.u)}, {"hu", pr.hu},         {"hv", pr.hv},
                 {"tex_seed", pr.tex_seed}};
          } else if constexpr (std::is_same_v<T, BoxPrim>) {
            p = {{"type", "box"},
                 {"min", vec3_json(pr.bmin)},
                 {"max", vec3_json(pr.bmax)},
                 {"tex_seed", pr.tex_seed}};
          } else {
            p = {{"type", "sphere"},
                 {"center", vec3_json(pr.center)},
                 {"radius", pr.radius},
                 {"tex_seed", pr.tex_seed}};
          }
        },
        prim);
    j["primitives"].push_back(p);
  }
  const Trajectory& t = cfg.trajectory;
  j["trajectory"] = json::array();
  for (const Pose& pose : t.poses) {
    RigidTransform wc = pose.world_from_camera();
    json row = json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) row.push_back(wc.R(r, c));
    for (int r = 0; r < 3; ++r) row.push_back(wc.t(r));
    j["trajectory"].push_back(row);
  }
  j["intrinsics"] = {{"fx", cfg.intrinsics.fx},       {"fy", cfg.intrinsics.fy},
                     {"cx", cfg.intrinsics.cx},       {"cy", cfg.intrinsics.cy},
                     {"width", cfg.intrinsics.width}, {"height", cfg.intrinsics.height}};
  return j.dump(2);
}

SceneConfig scene_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad scene json: ") + e.what());
  }
  try {
    SceneConfig cfg;
    if (j.contains("light")) cfg.scene.light = json_vec3(j["light"]);
    if (j.contains("bounds")) {
      cfg.scene.bounds_min = json_vec3(j["bounds"]["min"]);
      cfg.scene.bounds_max = json_vec3(j["bounds"]["max"]);
    }
    for (const auto& p : j.at("primitives")) {
      std::string type = p.at("type");
      uint64_t seed = p.value("tex_seed", uint64_t(1));
      if (type == "plane") {
        PlanePrim pl{json_vec3(p.at("p0")), json_vec3(p.at("n")).normalized(),
                     json_vec3(p.at("u")).normalized(), p.at("hu"), p.at("hv"), seed};
        cfg.scene.primitives.push_back(pl);
      } else if (type == "box") {
        cfg.scene.primitives.push_back(BoxPrim{json_vec3(p.at("min")), json_vec3(p.at("max")), seed});
      } else if (type == "sphere") {
        cfg.scene.primitives.push_back(SpherePrim{json_vec3(p.at("center")), p.at("radius"), seed});
      } else {
        throw DataError("unknown primitive type: " + type);
      }
    }
    for (const auto& row : j.at("trajectory")) {
      Eigen::Matrix3d r;
      Eigen::Vector3d tr;
      for (int k = 0; k < 9; ++k) r(k / 3, k % 3) = row.at(k);
      for (int k = 0; k < 3; ++k) tr(k) = row.at(9 + k);
      Pose pose{r, tr, PoseConvention::kWorldFromCamera};
      validate(pose);
      cfg.trajectory.poses.push_back(pose);
    }
    const auto& intr = j.at("intrinsics");
    cfg.intrinsics = {intr.at("fx"), intr.at("fy"),    intr.at("cx"),
                      intr.at("cy"), intr.at("width"), intr.at("height")};
    validate(cfg.intrinsics);
    if (cfg.scene.primitives.empty()) throw DataError("scene has no primitives");
    return cfg;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad scene json: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("bad scene json: ") + e.what());
  }
}

SceneConfig load_scene_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open scene config: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return scene_config_from_json(text);
}

void save_scene_config(const std::string& path, const SceneConfig& cfg) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write scene config: " + path);
  f << scene_config_to_json(cfg) << "\n";
}

SceneConfig scene_preset(const std::string& name) {
  SceneConfig cfg;
  if (name == "sphere-orbit") {
    cfg.scene.primitives.push_back(SpherePrim{{0, 0, 0}, 0.5, 7});
    cfg.scene.bounds_min = {-0.62, -0.62, -0.62};
    cfg.scene.bounds_max = {0.62, 0.62, 0.62};
    cfg.trajectory = orbit_trajectory({0, 0, 0}, 1.6, 36, 0.0);
    cfg.intrinsics = {280, 280, 159.5, 119.5, 320, 240};
  } else if (name == "two-plane-room") {
    PlanePrim wall{{0, 1.25, 4}, {0, 0, -1}, {1, 0, 0}, 2.5, 1.75, 11};
    PlanePrim floor{{0, 0, 2.25}, {0, 1, 0}, {1, 0, 0}, 2.5, 1.75, 12};
    cfg.scene.primitives.push_back(wall);
    cfg.scene.primitives.push_back(floor);
    cfg.scene.bounds_min = {-2.5, -0.5, 0.5};
    cfg.scene.bounds_max = {2.5, 3.0, 4.0};
    cfg.trajectory = orbit_trajectory({0, 1.0, 4.0}, 2.4, 12, 0.0, -145.0, 10.0);
    cfg.intrinsics = {525, 525, 319.5, 239.5, 640, 480};
  } else {
    throw UsageError("unknown scene preset: " + name);
  }
  return cfg;
}

void synthesize_dataset(const SceneConfig& cfg, const std::string& root, int threads) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(root) / "color");
  fs::create_directories(fs::path(root) / "depth");
  fs::create_directories(fs::path(root) / "pose");
  char name[64];
  for (size_t i = 0; i < cfg.trajectory.poses.size(); ++i) {
    Camera cam{cfg.intrinsics, cfg.trajectory.poses[i]};
    RenderResult r = render(cfg.scene, cam, threads);
    snprintf(name, sizeof(name), "%06zu.png", i);
    save_intensity_png((fs::path(root) / "color" / name).string(), r.intensity);
    save_depth_png((fs::path(root) / "depth" / name).string(), r.depth);
    snprintf(name, sizeof(name), "%06zu.txt", i);
    save_pose((fs::path(root) / "pose" / name).string(), cfg.trajectory.poses[i]);
  }
  save_intrinsics((fs::path(root) / "intrinsics.txt").string(), cfg.intrinsics);
  save_scene_config((fs::path(root) / "scene.json").string(), cfg);
  TriangleMesh cloud;
  for (const auto& p : sample_surface_points(cfg.scene, 20000, 4242))
    cloud.vertices.push_back({float(p.x()), float(p.y()), float(p.z())});
  save_ply((fs::path(root) / "gt_points.ply").string(), cloud);
}

}  // namespace sweepfuse
