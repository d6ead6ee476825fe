#include "endofuse/pipeline.hpp"

#include <chrono>

namespace endofuse {

Pipeline::Pipeline(const CameraIntrinsics& intr, PipelineConfig config, const Pose& first_pose)
    : intr_(intr), config_(config), first_pose_(first_pose) {
  intr_.validate();
  if (!first_pose_.is_valid(1e-6)) throw Error("Pipeline: first pose is not a rigid transform");
  if (config_.max_consecutive_failures < 1) throw Error("Pipeline: max_consecutive_failures must be >= 1");
}

FrameTelemetry Pipeline::process(const Frame& frame) {
  const auto start = std::chrono::steady_clock::now();
  FrameTelemetry t;
  t.frame = frame.frame_index;
  const Mask mask = specular_mask(frame.rgb, config_.specular_threshold, config_.specular_dilation);

  Pose pose;
  if (poses_.empty()) {
    pose = first_pose_;
    t.converged = true;
  } else {
    const Pose predicted = (config_.constant_velocity && have_velocity_) ? velocity_ * last_tracked_ : last_tracked_;
    PredictOptions po;
    po.include_recent_unstable = true;
    po.current_frame = frame.frame_index;
    po.recent_window = config_.recent_window;
    const ModelView view = predict_view(map_, last_tracked_, intr_, po);
    const TrackingResult r = track(view, frame, predicted, config_.tracking, mask);
    t.converged = r.converged;
    t.final_cost = r.final_cost;
    t.iterations = r.iterations;
    t.inlier_fraction = r.inlier_fraction;
    t.geometric_terms = r.geometric_terms;
    t.photometric_terms = r.photometric_terms;
    t.photometric_masked = r.photometric_masked;
    pose = r.converged ? r.pose : predicted;
  }

  if (t.converged) {
    if (!poses_.empty()) {
      velocity_ = pose * last_tracked_.inverse();
      have_velocity_ = true;
    }
    t.fusion = fuse(map_, frame, pose, intr_, mask, config_.fusion);
    last_tracked_ = pose;
    last_good_ = frame.frame_index;
    consecutive_failures_ = 0;
  } else {
    t.skipped = true;
    ++consecutive_failures_;
  }
  poses_.push_back(pose);
  t.surfels = map_.size();
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  telemetry_.push_back(t);

  if (consecutive_failures_ >= config_.max_consecutive_failures) {
    throw TrackingAbort("tracking failed on " + std::to_string(consecutive_failures_) +
                            " consecutive frames; last good frame " + std::to_string(last_good_),
                        last_good_);
  }
  return t;
}

}  // namespace endofuse
