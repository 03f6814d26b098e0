#pragma once

#include <string>
#include <vector>

#include "sweepfuse/maps.h"
#include "sweepfuse/tsdf.h"

namespace sweepfuse {

struct DepthEvalReport {
  double abs_rel = 0, abs_diff = 0, sq_rel = 0, rmse = 0;
  int64_t n = 0;
};

struct GeomEvalReport {
  double l1 = 0;
  bool has_l1 = false;
  double acc = 0, comp = 0, precision = 0, recall = 0, f_score = 0;
};

enum class PointMetric { kL1, kL2 };

// Jointly valid pixels only. Relative denominators use the predicted depth by
// default; denom_pred=false switches them to the ground truth.
DepthEvalReport eval_depth(const DepthMap& pred, const DepthMap& gt,
                           bool denom_pred = true);

// Mean |pred - gt| over GT-observed voxels with gt value strictly below 1.
double eval_tsdf_l1(const TsdfVolume& pred, const TsdfVolume& gt);

// Exact nearest-neighbor distances on a uniform grid-bucket index.
class PointIndex {
 public:
  PointIndex(const std::vector<Eigen::Vector3d>& points, PointMetric metric);
  double nearest(const Eigen::Vector3d& q) const;

 private:
  std::vector<Eigen::Vector3d> pts_;
  std::vector<std::vector<int32_t>> cells_;
  Eigen::Vector3d lo_;
  double h_ = 1;
  int nx_ = 1, ny_ = 1, nz_ = 1;
  PointMetric metric_;
};

GeomEvalReport eval_pointcloud(const std::vector<Eigen::Vector3d>& pred,
                               const std::vector<Eigen::Vector3d>& gt, double tau = 0.05,
                               PointMetric metric = PointMetric::kL1, int threads = 0);

// Table-1 style formatting; null sections are omitted.
std::string report_table(const DepthEvalReport* depth, const GeomEvalReport* geom);
std::string report_kv(const DepthEvalReport* depth, const GeomEvalReport* geom);

}  // namespace sweepfuse
