#pragma once

#include <vector>

#include "endofuse/scene.hpp"
#include "endofuse/surfel.hpp"
#include "endofuse/types.hpp"

namespace endofuse {

struct DepthMetrics {
  double rel = 0.0;
  double log10 = 0.0;
  double rms = 0.0;
  long compared = 0;       // pixels valid in both maps
  long guarded_rel = 0;    // excluded from rel by the epsilon guard
  long guarded_log = 0;    // excluded from log10 by the epsilon guard
};

/// rel = mean |p-g|/g, log10 = mean |log10 p - log10 g|, rms = sqrt(mean (p-g)^2)
/// over pixels valid in both maps. With `normalize` both maps are first
/// divided by the ground-truth maximum over valid pixels.
DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt, bool normalize);

/// Per-frame metrics averaged over a sequence.
DepthMetrics mean_depth_metrics(const std::vector<DepthMap>& pred, const std::vector<DepthMap>& gt, bool normalize);

struct TrajectoryError {
  double ate_rmse = 0.0;
  std::vector<double> per_frame_errors;
  Pose alignment;  // maps estimated positions onto ground truth
};

/// Rigid (no scale) least-squares alignment of camera centers, then RMS of
/// the residual position errors.
TrajectoryError ate(const std::vector<Pose>& est, const std::vector<Pose>& gt);

struct SurfaceError {
  double mean = 0.0;
  double p95 = 0.0;
  long count = 0;
};

/// |scene_sdf| statistics over stable surfels.
SurfaceError surface_error(const SurfelMap& map, const ColonScene& scene);

}  // namespace endofuse
