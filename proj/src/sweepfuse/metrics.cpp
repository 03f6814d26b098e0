#include "sweepfuse/metrics.h"

#include <cmath>
#include <cstdio>

namespace sweepfuse {

namespace {

double point_dist(const Eigen::Vector3d& a, const Eigen::Vector3d& b, PointMetric m) {
  Eigen::Vector3d d = a - b;
  return m == PointMetric::kL1 ? d.cwiseAbs().sum() : d.norm();
}

void append_kv(std::string& out, const char* key, double value) {
  char line[128];
  snprintf(line, sizeof(line), "%s=%.9f\n", key, value);
  out += line;
}

void append_row(std::string& out, const char* key, double value) {
  char line[128];
  snprintf(line, sizeof(line), "  %-10s %14.9f\n", key, value);
  out += line;
}

}  // namespace

DepthEvalReport eval_depth(const DepthMap& pred, const DepthMap& gt, bool denom_pred) {
  if (!pred.z.same_size(gt.z)) throw std::invalid_argument("depth resolutions differ");
  DepthEvalReport r;
  double abs_rel = 0, abs_diff = 0, sq_rel = 0, sq = 0;
  for (int y = 0; y < gt.h(); ++y)
    for (int x = 0; x < gt.w(); ++x) {
      if (!pred.valid.at(y, x) || !gt.valid.at(y, x)) continue;
      double zp = pred.z.at(y, x), zg = gt.z.at(y, x);
      double denom = denom_pred ? zp : zg;
      if (denom <= 0) throw std::invalid_argument("non-positive depth in denominator");
      double e = std::abs(zg - zp);
      abs_rel += e / denom;
      abs_diff += e;
      sq_rel += e * e / denom;
      sq += e * e;
      ++r.n;
    }
  if (r.n == 0) throw std::invalid_argument("no jointly valid pixels");
  r.abs_rel = abs_rel / r.n;
  r.abs_diff = abs_diff / r.n;
  r.sq_rel = sq_rel / r.n;
  r.rmse = std::sqrt(sq / r.n);
  return r;
}

double eval_tsdf_l1(const TsdfVolume& pred, const TsdfVolume& gt) {
  if (!(pred.spec == gt.spec)) throw std::invalid_argument("volume specs differ");
  double acc = 0;
  int64_t n = 0;
  for (size_t i = 0; i < gt.values.size(); ++i) {
    if (gt.weights[i] <= 0 || !(gt.values[i] < 1.f)) continue;
    acc += std::abs(double(pred.values[i]) - gt.values[i]);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("no observed gt voxels below 1");
  return acc / n;
}

PointIndex::PointIndex(const std::vector<Eigen::Vector3d>& points, PointMetric metric)
    : pts_(points), metric_(metric) {
  if (pts_.empty()) throw std::invalid_argument("empty point set");
  Eigen::Vector3d hi = pts_[0];
  lo_ = pts_[0];
  for (const Eigen::Vector3d& p : pts_) {
    lo_ = lo_.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  double extent = (hi - lo_).maxCoeff();
  h_ = std::max(extent / 50.0, 1e-9);
  nx_ = std::min(51, int((hi.x() - lo_.x()) / h_) + 1);
  ny_ = std::min(51, int((hi.y() - lo_.y()) / h_) + 1);
  nz_ = std::min(51, int((hi.z() - lo_.z()) / h_) + 1);
  cells_.resize(size_t(nx_) * ny_ * nz_);
  for (size_t i = 0; i < pts_.size(); ++i) {
    Eigen::Vector3d g = (pts_[i] - lo_) / h_;
    int cx = std::clamp(int(g.x()), 0, nx_ - 1);
    int cy = std::clamp(int(g.y()), 0, ny_ - 1);
    int cz = std::clamp(int(g.z()), 0, nz_ - 1);
    cells_[(size_t(cx) * ny_ + cy) * nz_ + cz].push_back(int32_t(i));
  }
}

double PointIndex::nearest(const Eigen::Vector3d& q) const {
  Eigen::Vector3d g = (q - lo_) / h_;
  int cx = std::clamp(int(std::floor(g.x())), 0, nx_ - 1);
  int cy = std::clamp(int(std::floor(g.y())), 0, ny_ - 1);
  int cz = std::clamp(int(std::floor(g.z())), 0, nz_ - 1);
  double best = 1e300;
  int max_ring = std::max({nx_, ny_, nz_});
  for (int ring = 0; ring <= max_ring; ++ring) {
    // Any point in a cell at Chebyshev ring r is at least (r-1)*h away (the
    // query may sit outside the grid, so the bound uses its clamped cell).
    if (best < 1e300 && double(ring - 1) * h_ > best) break;
    for (int dx = -ring; dx <= ring; ++dx)
      for (int dy = -ring; dy <= ring; ++dy)
        for (int dz = -ring; dz <= ring; ++dz) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
          int x = cx + dx, y = cy + dy, z = cz + dz;
          if (x < 0 || x >= nx_ || y < 0 || y >= ny_ || z < 0 || z >= nz_) continue;
          for (int32_t i : cells_[(size_t(x) * ny_ + y) * nz_ + z])
            best = std::min(best, point_dist(q, pts_[i], metric_));
        }
  }
  return best;
}

GeomEvalReport eval_pointcloud(const std::vector<Eigen::Vector3d>& pred,
                               const std::vector<Eigen::Vector3d>& gt, double tau,
                               PointMetric metric, int threads) {
  if (pred.empty() || gt.empty()) throw std::invalid_argument("empty point set");
  PointIndex gt_index(gt, metric);
  PointIndex pred_index(pred, metric);
  std::vector<double> d_pred(pred.size()), d_gt(gt.size());
  parallel_for(int64_t(pred.size()), threads,
               [&](int64_t i) { d_pred[i] = gt_index.nearest(pred[i]); });
  parallel_for(int64_t(gt.size()), threads,
               [&](int64_t i) { d_gt[i] = pred_index.nearest(gt[i]); });
  GeomEvalReport r;
  int64_t hit_pred = 0, hit_gt = 0;
  double acc = 0, comp = 0;
  for (double d : d_pred) {
    acc += d;
    if (d < tau) ++hit_pred;
  }
  for (double d : d_gt) {
    comp += d;
    if (d < tau) ++hit_gt;
  }
  r.acc = acc / double(pred.size());
  r.comp = comp / double(gt.size());
  r.precision = double(hit_pred) / double(pred.size());
  r.recall = double(hit_gt) / double(gt.size());
  r.f_score = (r.precision + r.recall) > 0
                  ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                  : 0.0;
  return r;
}

std::string report_table(const DepthEvalReport* depth, const GeomEvalReport* geom) {
  std::string out;
  if (depth) {
    out += "2D Depth Evaluation\n";
    append_row(out, "AbsRel", depth->abs_rel);
    append_row(out, "AbsDiff", depth->abs_diff);
    append_row(out, "SqRel", depth->sq_rel);
    append_row(out, "RMSE", depth->rmse);
    char line[64];
    snprintf(line, sizeof(line), "  %-10s %14lld\n", "Pixels", (long long)depth->n);
    out += line;
  }
  if (geom) {
    out += "3D Geometry Evaluation\n";
    if (geom->has_l1) append_row(out, "L1", geom->l1);
    append_row(out, "Acc", geom->acc);
    append_row(out, "Comp", geom->comp);
    append_row(out, "Prec", geom->precision);
    append_row(out, "Recall", geom->recall);
    append_row(out, "F-score", geom->f_score);
  }
  return out;
}

std::string report_kv(const DepthEvalReport* depth, const GeomEvalReport* geom) {
  std::string out;
  if (depth) {
    append_kv(out, "AbsRel", depth->abs_rel);
    append_kv(out, "AbsDiff", depth->abs_diff);
    append_kv(out, "SqRel", depth->sq_rel);
    append_kv(out, "RMSE", depth->rmse);
  }
  if (geom) {
    if (geom->has_l1) append_kv(out, "L1", geom->l1);
    append_kv(out, "Acc", geom->acc);
    append_kv(out, "Comp", geom->comp);
    append_kv(out, "Prec", geom->precision);
    append_kv(out, "Recall", geom->recall);
    append_kv(out, "F-score", geom->f_score);
  }
  return out;
}

}  // namespace sweepfuse
