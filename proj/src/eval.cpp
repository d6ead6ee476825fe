#include "endofuse/eval.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace endofuse {

namespace {
constexpr double kEps = 1e-6;
}

DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt, bool normalize) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) throw Error("depth_metrics: size mismatch");
  double scale = 1.0;
  if (normalize) {
    float gmax = 0.0f;
    for (size_t i = 0; i < gt.size(); ++i) gmax = std::max(gmax, gt[i]);
    if (!(gmax > 0.0f)) throw Error("depth_metrics: no valid ground-truth pixels");
    scale = 1.0 / gmax;
  }
  DepthMetrics m;
  double sum_rel = 0.0, sum_log = 0.0, sum_sq = 0.0;
  long n_rel = 0, n_log = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (!(pred[i] > 0.0f) || !(gt[i] > 0.0f)) continue;
    const double p = pred[i] * scale, g = gt[i] * scale;
    ++m.compared;
    sum_sq += (p - g) * (p - g);
    if (g > kEps) {
      sum_rel += std::abs(p - g) / g;
      ++n_rel;
    } else {
      ++m.guarded_rel;
    }
    if (p > kEps && g > kEps) {
      sum_log += std::abs(std::log10(p) - std::log10(g));
      ++n_log;
    } else {
      ++m.guarded_log;
    }
  }
  if (m.compared == 0) throw Error("depth_metrics: no pixel is valid in both maps");
  m.rms = std::sqrt(sum_sq / static_cast<double>(m.compared));
  m.rel = n_rel > 0 ? sum_rel / static_cast<double>(n_rel) : 0.0;
  m.log10 = n_log > 0 ? sum_log / static_cast<double>(n_log) : 0.0;
  return m;
}

DepthMetrics mean_depth_metrics(const std::vector<DepthMap>& pred, const std::vector<DepthMap>& gt, bool normalize) {
  if (pred.size() != gt.size()) throw Error("mean_depth_metrics: sequence length mismatch");
  if (pred.empty()) throw Error("mean_depth_metrics: empty sequence");
  DepthMetrics out;
  for (size_t i = 0; i < pred.size(); ++i) {
    const DepthMetrics m = depth_metrics(pred[i], gt[i], normalize);
    out.rel += m.rel;
    out.log10 += m.log10;
    out.rms += m.rms;
    out.compared += m.compared;
    out.guarded_rel += m.guarded_rel;
    out.guarded_log += m.guarded_log;
  }
  const double n = static_cast<double>(pred.size());
  out.rel /= n;
  out.log10 /= n;
  out.rms /= n;
  return out;
}

TrajectoryError ate(const std::vector<Pose>& est, const std::vector<Pose>& gt) {
  if (est.size() != gt.size()) throw Error("ate: trajectories have different lengths");
  if (est.size() < 2) throw Error("ate: need at least two poses");
  const auto n = static_cast<Eigen::Index>(est.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = est[static_cast<size_t>(i)].center();
    dst.col(i) = gt[static_cast<size_t>(i)].center();
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
  TrajectoryError out;
  out.alignment.rotation = t.topLeftCorner<3, 3>();
  out.alignment.translation = t.topRightCorner<3, 1>();
  double sum_sq = 0.0;
  out.per_frame_errors.reserve(est.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = (out.alignment * Vec3(src.col(i)) - dst.col(i)).norm();
    out.per_frame_errors.push_back(e);
    sum_sq += e * e;
  }
  out.ate_rmse = std::sqrt(sum_sq / static_cast<double>(n));
  return out;
}

SurfaceError surface_error(const SurfelMap& map, const ColonScene& scene) {
  std::vector<double> errors;
  errors.reserve(map.size());
  for (const Surfel& s : map.surfels) {
    if (!map.is_stable(s)) continue;
    errors.push_back(std::abs(scene_sdf(scene, s.position.cast<double>())));
  }
  if (errors.empty()) throw Error("surface_error: map has no stable surfels");
  SurfaceError out;
  out.count = static_cast<long>(errors.size());
  double sum = 0.0;
  for (const double e : errors) sum += e;
  out.mean = sum / static_cast<double>(errors.size());
  const size_t k = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(errors.size()))) - 1;
  std::nth_element(errors.begin(), errors.begin() + static_cast<std::ptrdiff_t>(k), errors.end());
  out.p95 = errors[k];
  return out;
}

}  // namespace endofuse
