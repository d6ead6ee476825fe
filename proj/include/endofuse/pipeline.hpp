#pragma once

#include <vector>

#include "endofuse/surfel.hpp"
#include "endofuse/tracker.hpp"
#include "endofuse/types.hpp"

namespace endofuse {

struct PipelineConfig {
  TrackingConfig tracking;
  FusionConfig fusion;
  double specular_threshold = 0.9;
  int specular_dilation = 2;
  int max_consecutive_failures = 3;
  /// Tracking sees stable surfels plus unstable ones observed this recently.
  int recent_window = 20;
  bool constant_velocity = true;
};

struct FrameTelemetry {
  int frame = 0;
  bool converged = false;
  bool skipped = false;
  double final_cost = 0.0;
  int iterations = 0;
  double inlier_fraction = 0.0;
  long geometric_terms = 0;
  long photometric_terms = 0;
  long photometric_masked = 0;
  FusionStats fusion;
  std::size_t surfels = 0;
  double seconds = 0.0;
};

/// Raised after too many consecutive tracking failures.
class TrackingAbort : public Error {
 public:
  TrackingAbort(const std::string& what, int last_good_frame) : Error(what), last_good_frame_(last_good_frame) {}
  int last_good_frame() const { return last_good_frame_; }

 private:
  int last_good_frame_;
};

/// Frame-by-frame tracking and fusion. The first frame is placed at
/// `first_pose`, which fixes the gauge of the map.
class Pipeline {
 public:
  Pipeline(const CameraIntrinsics& intr, PipelineConfig config, const Pose& first_pose = Pose::identity());

  FrameTelemetry process(const Frame& frame);

  const SurfelMap& map() const { return map_; }
  /// One pose per processed frame; skipped frames carry their prediction.
  const std::vector<Pose>& trajectory() const { return poses_; }
  const std::vector<FrameTelemetry>& telemetry() const { return telemetry_; }
  int last_good_frame() const { return last_good_; }

 private:
  CameraIntrinsics intr_;
  PipelineConfig config_;
  Pose first_pose_;
  SurfelMap map_;
  std::vector<Pose> poses_;
  std::vector<FrameTelemetry> telemetry_;
  Pose last_tracked_;
  Pose velocity_;  // last_tracked * previous_tracked^-1
  bool have_velocity_ = false;
  int consecutive_failures_ = 0;
  int last_good_ = -1;
};

}  // namespace endofuse
