#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <cstring>
#include <string>
#include <vector>

#include "sweepfuse/fusion.h"
#include "sweepfuse/geometry.h"
#include "sweepfuse/image_io.h"
#include "sweepfuse/metrics.h"
#include "sweepfuse/mvs.h"
#include "sweepfuse/pipeline.h"
#include "sweepfuse/posedconv.h"
#include "sweepfuse/synthetic.h"
#include "sweepfuse/tsdf.h"

namespace py = pybind11;
namespace sf = sweepfuse;

namespace {

using FArr = py::array_t<float, py::array::c_style | py::array::forcecast>;
using U8Arr = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;
using DArr = py::array_t<double, py::array::c_style | py::array::forcecast>;

void need_dims(const py::buffer_info& info, int nd, const char* what) {
  if (info.ndim != nd)
    throw std::invalid_argument(std::string(what) + ": expected a " +
                                std::to_string(nd) + "-d array");
}

sf::Image<float> image_f(const FArr& a, const char* what) {
  auto info = a.request();
  need_dims(info, 2, what);
  sf::Image<float> img(int(info.shape[0]), int(info.shape[1]));
  std::memcpy(img.v.data(), info.ptr, img.v.size() * sizeof(float));
  return img;
}

sf::Image<uint8_t> image_u8(const U8Arr& a, const char* what) {
  auto info = a.request();
  need_dims(info, 2, what);
  sf::Image<uint8_t> img(int(info.shape[0]), int(info.shape[1]));
  std::memcpy(img.v.data(), info.ptr, img.v.size());
  return img;
}

FArr to_array(const sf::Image<float>& img) {
  FArr a({img.h, img.w});
  std::memcpy(a.mutable_data(), img.v.data(), img.v.size() * sizeof(float));
  return a;
}

U8Arr to_array(const sf::Image<uint8_t>& img) {
  U8Arr a({img.h, img.w});
  std::memcpy(a.mutable_data(), img.v.data(), img.v.size());
  return a;
}

sf::DepthMap depth_in(const FArr& z, const U8Arr& valid) {
  sf::DepthMap d;
  d.z = image_f(z, "depth");
  d.valid = image_u8(valid, "valid");
  if (!d.z.same_size(d.valid)) throw std::invalid_argument("depth/valid size mismatch");
  return d;
}

py::tuple depth_out(const sf::DepthMap& d) {
  return py::make_tuple(to_array(d.z), to_array(d.valid));
}

sf::OverlapMask mask_in(const FArr& p, const U8Arr& known) {
  sf::OverlapMask m;
  m.p = image_f(p, "mask");
  m.known = image_u8(known, "known");
  if (!m.p.same_size(m.known)) throw std::invalid_argument("mask/known size mismatch");
  return m;
}

py::tuple mask_out(const sf::OverlapMask& m) {
  return py::make_tuple(to_array(m.p), to_array(m.known));
}

sf::FeatureMap fmap_in(const FArr& a) {
  auto info = a.request();
  need_dims(info, 3, "features");
  sf::FeatureMap f(int(info.shape[0]), int(info.shape[1]), int(info.shape[2]));
  std::memcpy(f.v.data(), info.ptr, f.v.size() * sizeof(float));
  return f;
}

FArr fmap_out(const sf::FeatureMap& f) {
  FArr a({f.c, f.h, f.w});
  std::memcpy(a.mutable_data(), f.v.data(), f.v.size() * sizeof(float));
  return a;
}

sf::CostVolume cost_in(const FArr& a, sf::VolumeKind kind, const char* what) {
  auto info = a.request();
  need_dims(info, 4, what);
  sf::CostVolume c(kind, int(info.shape[0]), int(info.shape[1]), int(info.shape[2]),
                   int(info.shape[3]));
  std::memcpy(c.v.data(), info.ptr, c.v.size() * sizeof(float));
  return c;
}

FArr cost_out(const sf::CostVolume& c) {
  FArr a({c.k, c.d, c.h, c.w});
  std::memcpy(a.mutable_data(), c.v.data(), c.v.size() * sizeof(float));
  return a;
}

sf::ReservoirKernel kernel_in(const FArr& a) {
  auto info = a.request();
  need_dims(info, 5, "kernel");
  if (info.shape[2] != info.shape[3] || info.shape[2] != info.shape[4])
    throw std::invalid_argument("kernel: spatial dims must be equal");
  sf::ReservoirKernel k(int(info.shape[0]), int(info.shape[1]), int(info.shape[2]));
  std::memcpy(k.v.data(), info.ptr, k.v.size() * sizeof(float));
  sf::validate(k);
  return k;
}

FArr kernel_out(const sf::ReservoirKernel& k) {
  FArr a({k.c_out, k.c_in, k.w, k.w, k.w});
  std::memcpy(a.mutable_data(), k.v.data(), k.v.size() * sizeof(float));
  return a;
}

sf::SceneVolume svol_in(const FArr& a, const sf::VoxelGridSpec* spec) {
  auto info = a.request();
  need_dims(info, 4, "volume");
  sf::VoxelGridSpec s;
  if (spec) {
    s = *spec;
    if (s.vx != info.shape[1] || s.vy != info.shape[2] || s.vz != info.shape[3])
      throw std::invalid_argument("volume: array shape does not match the grid spec");
  } else {
    s.origin = Eigen::Vector3d::Zero();
    s.pitch = 1.0;
    s.vx = int(info.shape[1]);
    s.vy = int(info.shape[2]);
    s.vz = int(info.shape[3]);
  }
  sf::SceneVolume v(s, int(info.shape[0]));
  std::memcpy(v.v.data(), info.ptr, v.v.size() * sizeof(float));
  return v;
}

FArr svol_out(const sf::SceneVolume& v) {
  FArr a({v.c, v.spec.vx, v.spec.vy, v.spec.vz});
  std::memcpy(a.mutable_data(), v.v.data(), v.v.size() * sizeof(float));
  return a;
}

sf::TsdfVolume tsdf_in(const FArr& values, const FArr& weights,
                       const sf::VoxelGridSpec& spec, double mu) {
  auto vi = values.request(), wi = weights.request();
  need_dims(vi, 3, "values");
  need_dims(wi, 3, "weights");
  if (vi.shape != wi.shape) throw std::invalid_argument("values/weights shape mismatch");
  if (vi.shape[0] != spec.vx || vi.shape[1] != spec.vy || vi.shape[2] != spec.vz)
    throw std::invalid_argument("tsdf: array shape does not match the grid spec");
  sf::TsdfVolume t(spec, mu);
  std::memcpy(t.values.data(), vi.ptr, t.values.size() * sizeof(float));
  std::memcpy(t.weights.data(), wi.ptr, t.weights.size() * sizeof(float));
  return t;
}

py::tuple tsdf_out(const sf::TsdfVolume& t) {
  FArr values({t.spec.vx, t.spec.vy, t.spec.vz});
  FArr weights({t.spec.vx, t.spec.vy, t.spec.vz});
  std::memcpy(values.mutable_data(), t.values.data(), t.values.size() * sizeof(float));
  std::memcpy(weights.mutable_data(), t.weights.data(), t.weights.size() * sizeof(float));
  return py::make_tuple(values, weights);
}

std::vector<Eigen::Vector3d> points_in(const DArr& a, const char* what) {
  auto info = a.request();
  need_dims(info, 2, what);
  if (info.shape[1] != 3)
    throw std::invalid_argument(std::string(what) + ": expected an (n, 3) array");
  const double* p = static_cast<const double*>(info.ptr);
  std::vector<Eigen::Vector3d> pts(size_t(info.shape[0]));
  for (size_t i = 0; i < pts.size(); ++i)
    pts[i] = Eigen::Vector3d(p[3 * i], p[3 * i + 1], p[3 * i + 2]);
  return pts;
}

py::tuple mesh_out(const sf::TriangleMesh& mesh) {
  FArr verts({py::ssize_t(mesh.vertices.size()), py::ssize_t(3)});
  std::memcpy(verts.mutable_data(), mesh.vertices.data(),
              mesh.vertices.size() * 3 * sizeof(float));
  py::array_t<uint32_t> faces({py::ssize_t(mesh.faces.size()), py::ssize_t(3)});
  std::memcpy(faces.mutable_data(), mesh.faces.data(),
              mesh.faces.size() * 3 * sizeof(uint32_t));
  return py::make_tuple(verts, faces);
}

sf::TriangleMesh mesh_in(const FArr& verts, const py::array_t<uint32_t>& faces) {
  auto vi = verts.request();
  py::array_t<uint32_t, py::array::c_style | py::array::forcecast> fc(faces);
  auto fi = fc.request();
  need_dims(vi, 2, "vertices");
  need_dims(fi, 2, "faces");
  if (vi.shape[1] != 3 || fi.shape[1] != 3)
    throw std::invalid_argument("mesh: expected (n, 3) arrays");
  sf::TriangleMesh mesh;
  mesh.vertices.resize(size_t(vi.shape[0]));
  std::memcpy(mesh.vertices.data(), vi.ptr, mesh.vertices.size() * 3 * sizeof(float));
  mesh.faces.resize(size_t(fi.shape[0]));
  std::memcpy(mesh.faces.data(), fi.ptr, mesh.faces.size() * 3 * sizeof(uint32_t));
  return mesh;
}

sf::PoseConvention convention_in(const std::string& name) {
  if (name == "camera_from_world") return sf::PoseConvention::kCameraFromWorld;
  if (name == "world_from_camera") return sf::PoseConvention::kWorldFromCamera;
  throw std::invalid_argument("unknown pose convention: " + name);
}

Eigen::Matrix4d to_mat4(const sf::RigidTransform& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = t.R;
  m.topRightCorner<3, 1>() = t.t;
  return m;
}

py::dict depth_report_dict(const sf::DepthEvalReport& r) {
  py::dict d;
  d["abs_rel"] = r.abs_rel;
  d["abs_diff"] = r.abs_diff;
  d["sq_rel"] = r.sq_rel;
  d["rmse"] = r.rmse;
  d["n"] = r.n;
  return d;
}

py::dict geom_report_dict(const sf::GeomEvalReport& r) {
  py::dict d;
  if (r.has_l1) d["l1"] = r.l1;
  d["acc"] = r.acc;
  d["comp"] = r.comp;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f_score"] = r.f_score;
  return d;
}

sf::PipelineConfig config_in(const std::string& config_json) {
  sf::PipelineConfig cfg;
  if (!config_json.empty()) sf::apply_config_json(cfg, config_json);
  sf::validate(cfg);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "sweepfuse core bindings";

  py::register_exception<sf::UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<sf::DataError>(m, "DataError", PyExc_RuntimeError);

  py::class_<sf::Intrinsics>(m, "Intrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int width,
                       int height) {
             sf::Intrinsics k{fx, fy, cx, cy, width, height};
             sf::validate(k);
             return k;
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"),
           py::arg("width"), py::arg("height"))
      .def_readwrite("fx", &sf::Intrinsics::fx)
      .def_readwrite("fy", &sf::Intrinsics::fy)
      .def_readwrite("cx", &sf::Intrinsics::cx)
      .def_readwrite("cy", &sf::Intrinsics::cy)
      .def_readwrite("width", &sf::Intrinsics::width)
      .def_readwrite("height", &sf::Intrinsics::height)
      .def("matrix", [](const sf::Intrinsics& k) { return sf::intrinsic_matrix(k); })
      .def("__repr__", [](const sf::Intrinsics& k) {
        char buf[128];
        snprintf(buf, sizeof buf, "Intrinsics(fx=%g, fy=%g, cx=%g, cy=%g, %dx%d)",
                 k.fx, k.fy, k.cx, k.cy, k.width, k.height);
        return std::string(buf);
      });

  py::class_<sf::Pose>(m, "Pose")
      .def(py::init([](const Eigen::Matrix3d& R, const Eigen::Vector3d& t,
                       const std::string& convention) {
             sf::Pose p{R, t, convention_in(convention)};
             sf::validate(p);
             return p;
           }),
           py::arg("R"), py::arg("t"), py::arg("convention") = "camera_from_world")
      .def_readwrite("R", &sf::Pose::R)
      .def_readwrite("t", &sf::Pose::t)
      .def_property_readonly("convention",
                             [](const sf::Pose& p) {
                               return p.convention == sf::PoseConvention::kCameraFromWorld
                                          ? "camera_from_world"
                                          : "world_from_camera";
                             })
      .def("camera_from_world",
           [](const sf::Pose& p) { return to_mat4(p.camera_from_world()); })
      .def("world_from_camera",
           [](const sf::Pose& p) { return to_mat4(p.world_from_camera()); });

  py::class_<sf::Camera>(m, "Camera")
      .def(py::init([](const sf::Intrinsics& k, const sf::Pose& pose) {
             return sf::Camera{k, pose};
           }),
           py::arg("K"), py::arg("pose"))
      .def_readwrite("K", &sf::Camera::K)
      .def_readwrite("pose", &sf::Camera::pose);

  py::class_<sf::VoxelGridSpec>(m, "VoxelGridSpec")
      .def(py::init([](const Eigen::Vector3d& origin, double pitch, int vx, int vy,
                       int vz) {
             sf::VoxelGridSpec s{origin, pitch, vx, vy, vz};
             sf::validate(s);
             return s;
           }),
           py::arg("origin"), py::arg("pitch"), py::arg("vx"), py::arg("vy"),
           py::arg("vz"))
      .def_readwrite("origin", &sf::VoxelGridSpec::origin)
      .def_readwrite("pitch", &sf::VoxelGridSpec::pitch)
      .def_readwrite("vx", &sf::VoxelGridSpec::vx)
      .def_readwrite("vy", &sf::VoxelGridSpec::vy)
      .def_readwrite("vz", &sf::VoxelGridSpec::vz)
      .def("voxel_count", &sf::VoxelGridSpec::voxel_count);

  // geometry
  m.def("project", &sf::project, py::arg("p_cam"), py::arg("K"));
  m.def("backproject", &sf::backproject, py::arg("u"), py::arg("v"), py::arg("z"),
        py::arg("K"));
  m.def("scale_intrinsics", &sf::scale_intrinsics, py::arg("K"), py::arg("factor"));
  m.def(
      "plane_homography",
      [](const sf::Intrinsics& k_ref, const sf::Intrinsics& k_src,
         const Eigen::Matrix3d& R, const Eigen::Vector3d& t, double z) {
        return sf::plane_homography(k_ref, k_src, sf::RigidTransform{R, t}, z);
      },
      py::arg("k_ref"), py::arg("k_src"), py::arg("R"), py::arg("t"), py::arg("z"));
  m.def(
      "relative_transform",
      [](const sf::Pose& src, const sf::Pose& dst) {
        sf::RigidTransform t = sf::relative_transform(src, dst);
        return py::make_tuple(t.R, t.t);
      },
      py::arg("src"), py::arg("dst"));
  m.def("world_to_voxel", &sf::world_to_voxel, py::arg("p"), py::arg("spec"));
  m.def("voxel_to_world", &sf::voxel_to_world, py::arg("ijk"), py::arg("spec"));
  m.def("axis_aligned_rotations", &sf::axis_aligned_rotations);
  m.def("axis_angle_rotation", &sf::axis_angle_rotation, py::arg("axis"),
        py::arg("degrees"));
  m.def("load_pose", &sf::load_pose, py::arg("path"));
  m.def("save_pose", &sf::save_pose, py::arg("path"), py::arg("pose"));
  m.def("load_intrinsics", &sf::load_intrinsics, py::arg("path"));
  m.def("save_intrinsics", &sf::save_intrinsics, py::arg("path"), py::arg("K"));

  // mvs
  m.def(
      "plane_depths",
      [](int d, double z_min) {
        sf::SweepConfig cfg{d, z_min};
        sf::validate(cfg);
        return sf::plane_depths(cfg);
      },
      py::arg("d") = 48, py::arg("z_min") = 0.5);
  m.def(
      "extract_features",
      [](const FArr& intensity, int channels, const std::string& extractor) {
        return fmap_out(
            sf::find_extractor(extractor, channels)(image_f(intensity, "intensity")));
      },
      py::arg("intensity"), py::arg("channels") = 32,
      py::arg("extractor") = "pool-sobel");
  m.def(
      "build_initial_volume",
      [](const FArr& ref, const FArr& nb1, const FArr& nb2, const sf::Camera& cam_ref,
         const sf::Camera& cam_nb1, const sf::Camera& cam_nb2, int d, double z_min,
         int threads) {
        sf::SweepConfig cfg{d, z_min};
        sf::validate(cfg);
        sf::InitialVolume iv =
            sf::build_initial_volume(fmap_in(ref), fmap_in(nb1), fmap_in(nb2),
                                     {cam_ref, cam_nb1, cam_nb2}, cfg, threads);
        return py::make_tuple(cost_out(iv.cost), cost_out(iv.neighbor_weight));
      },
      py::arg("ref"), py::arg("nb1"), py::arg("nb2"), py::arg("cam_ref"),
      py::arg("cam_nb1"), py::arg("cam_nb2"), py::arg("d") = 48,
      py::arg("z_min") = 0.5, py::arg("threads") = 0);
  m.def(
      "variance_aggregate",
      [](const FArr& cost, const FArr& weights, int channels, int threads) {
        sf::InitialVolume iv;
        iv.cost = cost_in(cost, sf::VolumeKind::kInitial, "cost");
        iv.neighbor_weight = cost_in(weights, sf::VolumeKind::kAux, "weights");
        iv.channels = channels;
        sf::AggregateResult r = sf::variance_aggregate(iv, threads);
        return py::make_tuple(cost_out(r.depth), cost_out(r.overlap));
      },
      py::arg("cost"), py::arg("weights"), py::arg("channels"), py::arg("threads") = 0);
  m.def(
      "regress_depth",
      [](const FArr& vz, double z_min, int threads) {
        sf::CostVolume c = cost_in(vz, sf::VolumeKind::kAggregatedDepth, "vz");
        sf::SweepConfig cfg{c.d, z_min};
        sf::validate(cfg);
        return depth_out(sf::regress_depth(c, cfg, threads));
      },
      py::arg("vz"), py::arg("z_min") = 0.5, py::arg("threads") = 0);
  m.def(
      "overlap_mask",
      [](const FArr& vm, int threads) {
        return mask_out(sf::overlap_mask(cost_in(vm, sf::VolumeKind::kOverlap, "vm"),
                                         threads));
      },
      py::arg("vm"), py::arg("threads") = 0);
  m.def(
      "mask_depth",
      [](const FArr& z, const U8Arr& valid, const FArr& p, const U8Arr& known,
         double tau) {
        return depth_out(sf::mask_depth(depth_in(z, valid), mask_in(p, known), tau));
      },
      py::arg("z"), py::arg("valid"), py::arg("p"), py::arg("known"),
      py::arg("tau") = 0.5);
  m.def(
      "geometric_overlap_gt",
      [](const FArr& ref_z, const U8Arr& ref_valid, const FArr& nb1_z,
         const U8Arr& nb1_valid, const FArr& nb2_z, const U8Arr& nb2_valid,
         const sf::Camera& cam_ref, const sf::Camera& cam_nb1, const sf::Camera& cam_nb2,
         double rel_tol) {
        return mask_out(sf::geometric_overlap_gt(
            depth_in(ref_z, ref_valid), depth_in(nb1_z, nb1_valid),
            depth_in(nb2_z, nb2_valid), {cam_ref, cam_nb1, cam_nb2}, rel_tol));
      },
      py::arg("ref_z"), py::arg("ref_valid"), py::arg("nb1_z"), py::arg("nb1_valid"),
      py::arg("nb2_z"), py::arg("nb2_valid"), py::arg("cam_ref"), py::arg("cam_nb1"),
      py::arg("cam_nb2"), py::arg("rel_tol") = 0.05);
  m.def(
      "overlap_loss",
      [](const FArr& pred_p, const U8Arr& pred_known, const FArr& gt_p,
         const U8Arr& gt_known) {
        return sf::overlap_loss(mask_in(pred_p, pred_known), mask_in(gt_p, gt_known));
      },
      py::arg("pred_p"), py::arg("pred_known"), py::arg("gt_p"), py::arg("gt_known"));
  m.def(
      "depth_loss",
      [](const FArr& pred_z, const U8Arr& pred_valid, const FArr& gt_z,
         const U8Arr& gt_valid, const FArr& mask_p, const U8Arr& mask_known) {
        return sf::depth_loss(depth_in(pred_z, pred_valid), depth_in(gt_z, gt_valid),
                              mask_in(mask_p, mask_known));
      },
      py::arg("pred_z"), py::arg("pred_valid"), py::arg("gt_z"), py::arg("gt_valid"),
      py::arg("mask_p"), py::arg("mask_known"));
  m.def(
      "overlap_loss_grad",
      [](const FArr& vm, const FArr& gt_p, const U8Arr& gt_known) {
        return cost_out(sf::overlap_loss_grad(cost_in(vm, sf::VolumeKind::kOverlap, "vm"),
                                              mask_in(gt_p, gt_known)));
      },
      py::arg("vm"), py::arg("gt_p"), py::arg("gt_known"));
  m.def(
      "depth_loss_grad",
      [](const FArr& vz, const FArr& gt_z, const U8Arr& gt_valid, const FArr& mask_p,
         const U8Arr& mask_known, double z_min) {
        sf::CostVolume c = cost_in(vz, sf::VolumeKind::kAggregatedDepth, "vz");
        sf::SweepConfig cfg{c.d, z_min};
        sf::validate(cfg);
        return cost_out(sf::depth_loss_grad(c, cfg, depth_in(gt_z, gt_valid),
                                            mask_in(mask_p, mask_known)));
      },
      py::arg("vz"), py::arg("gt_z"), py::arg("gt_valid"), py::arg("mask_p"),
      py::arg("mask_known"), py::arg("z_min") = 0.5);

  // posedconv
  m.def("norm", &sf::norm, py::arg("v"), py::arg("w"));
  m.def("denorm", &sf::denorm, py::arg("v"), py::arg("w"), py::arg("s"));
  m.def("discrete_source_coord", &sf::discrete_source_coord, py::arg("v"), py::arg("w"),
        py::arg("r_inv"));
  m.def(
      "rotate_kernel_discrete",
      [](const FArr& k, const Eigen::Matrix3d& r_inv) {
        return kernel_out(sf::rotate_kernel_discrete(kernel_in(k), r_inv).k);
      },
      py::arg("kernel"), py::arg("r_inv"));
  m.def(
      "rotate_kernel_interp",
      [](const FArr& k, const Eigen::Matrix3d& r_inv) {
        sf::RotateStats stats;
        sf::RotatedKernel rk = sf::rotate_kernel_interp(kernel_in(k), r_inv, &stats);
        return py::make_tuple(kernel_out(rk.k), stats.clamped);
      },
      py::arg("kernel"), py::arg("r_inv"));
  m.def(
      "posed_conv3d",
      [](const FArr& vol, const FArr& kernel, const Eigen::Matrix3d& r_1_to_n,
         int threads) {
        return svol_out(
            sf::posed_conv3d(svol_in(vol, nullptr), kernel_in(kernel), r_1_to_n, threads));
      },
      py::arg("vol"), py::arg("kernel"), py::arg("r_1_to_n"), py::arg("threads") = 0);
  m.def(
      "average_posed_volumes",
      [](const std::vector<FArr>& vols) {
        std::vector<sf::SceneVolume> vs;
        vs.reserve(vols.size());
        for (const FArr& a : vols) vs.push_back(svol_in(a, nullptr));
        return svol_out(sf::average_posed_volumes(vs));
      },
      py::arg("volumes"));
  m.def(
      "random_kernel",
      [](int c_out, int c_in, int w, uint64_t seed) {
        return kernel_out(sf::random_kernel(c_out, c_in, w, seed));
      },
      py::arg("c_out"), py::arg("c_in"), py::arg("w"), py::arg("seed"));
  m.def(
      "save_kernel",
      [](const std::string& path, const FArr& k) { sf::save_kernel(path, kernel_in(k)); },
      py::arg("path"), py::arg("kernel"));
  m.def(
      "load_kernel",
      [](const std::string& path) { return kernel_out(sf::load_kernel(path)); },
      py::arg("path"));

  // fusion
  m.def(
      "backproject_features",
      [](const FArr& f, const sf::Camera& cam, const sf::VoxelGridSpec& spec,
         int threads) {
        sf::SceneVolume count;
        sf::SceneVolume vol =
            sf::backproject_features(fmap_in(f), cam, spec, &count, threads);
        return py::make_tuple(svol_out(vol), svol_out(count));
      },
      py::arg("features"), py::arg("cam"), py::arg("spec"), py::arg("threads") = 1);
  m.def(
      "embed_depth_occupancy",
      [](const std::vector<std::pair<FArr, U8Arr>>& depths,
         const std::vector<sf::Camera>& cams, const sf::VoxelGridSpec& spec) {
        std::vector<sf::DepthMap> ds;
        ds.reserve(depths.size());
        for (const auto& [z, valid] : depths) ds.push_back(depth_in(z, valid));
        return svol_out(sf::embed_depth_occupancy(ds, cams, spec));
      },
      py::arg("depths"), py::arg("cams"), py::arg("spec"));
  m.def(
      "build_unified_volume",
      [](const FArr& features, const FArr& occupancy, const sf::VoxelGridSpec& spec) {
        return svol_out(
            sf::build_unified_volume(svol_in(features, &spec), svol_in(occupancy, &spec)));
      },
      py::arg("features"), py::arg("occupancy"), py::arg("spec"));
  m.def(
      "save_volume",
      [](const std::string& path, const FArr& vol, const sf::VoxelGridSpec& spec) {
        sf::save_volume(path, svol_in(vol, &spec));
      },
      py::arg("path"), py::arg("vol"), py::arg("spec"));
  m.def(
      "load_volume",
      [](const std::string& path) {
        sf::SceneVolume v = sf::load_volume(path);
        return py::make_tuple(svol_out(v), v.spec);
      },
      py::arg("path"));

  // tsdf
  m.def(
      "integrate_depth",
      [](const FArr& values, const FArr& weights, const sf::VoxelGridSpec& spec,
         double mu, const FArr& z, const U8Arr& valid, const sf::Camera& cam,
         int threads) {
        sf::TsdfVolume t = tsdf_in(values, weights, spec, mu);
        sf::integrate_depth(t, depth_in(z, valid), cam, threads);
        return tsdf_out(t);
      },
      py::arg("values"), py::arg("weights"), py::arg("spec"), py::arg("mu"),
      py::arg("z"), py::arg("valid"), py::arg("cam"), py::arg("threads") = 1);
  m.def(
      "extract_mesh",
      [](const FArr& values, const FArr& weights, const sf::VoxelGridSpec& spec,
         double mu, int threads) {
        return mesh_out(sf::extract_mesh(tsdf_in(values, weights, spec, mu), threads));
      },
      py::arg("values"), py::arg("weights"), py::arg("spec"), py::arg("mu") = 0.12,
      py::arg("threads") = 1);
  m.def(
      "render_depth",
      [](const FArr& values, const FArr& weights, const sf::VoxelGridSpec& spec,
         double mu, const sf::Camera& cam, int threads) {
        return depth_out(sf::render_depth(tsdf_in(values, weights, spec, mu), cam, threads));
      },
      py::arg("values"), py::arg("weights"), py::arg("spec"), py::arg("mu"),
      py::arg("cam"), py::arg("threads") = 1);
  m.def(
      "sample_tsdf_trilinear",
      [](const FArr& values, const FArr& weights, const sf::VoxelGridSpec& spec,
         double mu, const Eigen::Vector3d& ijk) {
        return sf::sample_tsdf_trilinear(tsdf_in(values, weights, spec, mu), ijk);
      },
      py::arg("values"), py::arg("weights"), py::arg("spec"), py::arg("mu"),
      py::arg("ijk"));
  m.def(
      "tsdf_loss",
      [](const FArr& pred_values, const FArr& pred_weights, const FArr& gt_values,
         const FArr& gt_weights, const sf::VoxelGridSpec& spec, double mu) {
        return sf::tsdf_loss(tsdf_in(pred_values, pred_weights, spec, mu),
                             tsdf_in(gt_values, gt_weights, spec, mu));
      },
      py::arg("pred_values"), py::arg("pred_weights"), py::arg("gt_values"),
      py::arg("gt_weights"), py::arg("spec"), py::arg("mu") = 0.12);
  m.def("total_loss", &sf::total_loss, py::arg("lz"), py::arg("lm"), py::arg("ltsdf"),
        py::arg("alpha") = 1.0, py::arg("beta") = 0.5, py::arg("gamma") = 2.0);
  m.def(
      "save_ply",
      [](const std::string& path, const FArr& verts, const py::array_t<uint32_t>& faces) {
        sf::save_ply(path, mesh_in(verts, faces));
      },
      py::arg("path"), py::arg("vertices"), py::arg("faces"));
  m.def(
      "load_ply",
      [](const std::string& path) { return mesh_out(sf::load_ply(path)); },
      py::arg("path"));

  // metrics
  m.def(
      "eval_depth",
      [](const FArr& pred_z, const U8Arr& pred_valid, const FArr& gt_z,
         const U8Arr& gt_valid, bool denom_pred) {
        return depth_report_dict(sf::eval_depth(depth_in(pred_z, pred_valid),
                                                depth_in(gt_z, gt_valid), denom_pred));
      },
      py::arg("pred_z"), py::arg("pred_valid"), py::arg("gt_z"), py::arg("gt_valid"),
      py::arg("denom_pred") = true);
  m.def(
      "eval_tsdf_l1",
      [](const FArr& pred_values, const FArr& pred_weights, const FArr& gt_values,
         const FArr& gt_weights, const sf::VoxelGridSpec& spec, double mu) {
        return sf::eval_tsdf_l1(tsdf_in(pred_values, pred_weights, spec, mu),
                                tsdf_in(gt_values, gt_weights, spec, mu));
      },
      py::arg("pred_values"), py::arg("pred_weights"), py::arg("gt_values"),
      py::arg("gt_weights"), py::arg("spec"), py::arg("mu") = 0.12);
  m.def(
      "eval_pointcloud",
      [](const DArr& pred, const DArr& gt, double tau, bool l2, int threads) {
        return geom_report_dict(sf::eval_pointcloud(
            points_in(pred, "pred"), points_in(gt, "gt"), tau,
            l2 ? sf::PointMetric::kL2 : sf::PointMetric::kL1, threads));
      },
      py::arg("pred"), py::arg("gt"), py::arg("tau") = 0.05, py::arg("l2") = false,
      py::arg("threads") = 0);

  // image io
  m.def(
      "save_depth_png",
      [](const std::string& path, const FArr& z, const U8Arr& valid) {
        sf::save_depth_png(path, depth_in(z, valid));
      },
      py::arg("path"), py::arg("z"), py::arg("valid"));
  m.def(
      "load_depth_png",
      [](const std::string& path) { return depth_out(sf::load_depth_png(path)); },
      py::arg("path"));
  m.def(
      "save_depth_raster",
      [](const std::string& path, const FArr& z, const U8Arr& valid) {
        sf::save_depth_raster(path, depth_in(z, valid));
      },
      py::arg("path"), py::arg("z"), py::arg("valid"));
  m.def(
      "load_depth_raster",
      [](const std::string& path) { return depth_out(sf::load_depth_raster(path)); },
      py::arg("path"));
  m.def(
      "load_intensity_png",
      [](const std::string& path) { return to_array(sf::load_intensity_png(path)); },
      py::arg("path"));
  m.def(
      "save_intensity_png",
      [](const std::string& path, const FArr& img) {
        sf::save_intensity_png(path, image_f(img, "intensity"));
      },
      py::arg("path"), py::arg("img"));

  // synthetic + pipeline
  m.def(
      "synthesize_dataset",
      [](const std::string& preset, const std::string& out, int threads) {
        sf::synthesize_dataset(sf::scene_preset(preset), out, threads);
      },
      py::arg("preset"), py::arg("out"), py::arg("threads") = 1);
  m.def(
      "run_stage1",
      [](const std::string& data, const std::string& out, const std::string& config_json) {
        sf::run_stage1(sf::load_dataset(data), config_in(config_json), out);
      },
      py::arg("data"), py::arg("out"), py::arg("config_json") = "");
  m.def(
      "run_stage2",
      [](const std::string& data, const std::string& stage1, const std::string& out,
         const std::string& config_json) {
        sf::run_stage2(sf::load_dataset(data), stage1, config_in(config_json), out);
      },
      py::arg("data"), py::arg("stage1"), py::arg("out"), py::arg("config_json") = "");
  m.def(
      "run_eval",
      [](const std::string& data, const std::string& out, const std::string& config_json) {
        sf::EvalResult r =
            sf::run_eval(sf::load_dataset(data), out, config_in(config_json));
        py::dict d;
        if (r.depth) d["depth"] = depth_report_dict(*r.depth);
        if (r.geom) d["geom"] = geom_report_dict(*r.geom);
        return d;
      },
      py::arg("data"), py::arg("out"), py::arg("config_json") = "");
}
