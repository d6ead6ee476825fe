#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "endofuse/types.hpp"

namespace endofuse {

struct Surfel {
  Eigen::Vector3f position = Eigen::Vector3f::Zero();  // world, meters
  Eigen::Vector3f normal = Eigen::Vector3f::UnitZ();   // world, unit
  float radius = 0.0f;
  /// Shading-normalized color (an albedo estimate), in [0,1].
  Eigen::Vector3f color = Eigen::Vector3f::Zero();
  float confidence = 0.0f;
  int last_seen = 0;
  int created = 0;

  bool is_finite() const {
    return position.allFinite() && normal.allFinite() && color.allFinite() && std::isfinite(radius) &&
           std::isfinite(confidence);
  }
};

struct SurfelMap {
  std::vector<Surfel> surfels;
  float stability_threshold = 10.0f;
  std::size_t max_surfels = 4'000'000;

  bool empty() const { return surfels.empty(); }
  std::size_t size() const { return surfels.size(); }
  bool is_stable(const Surfel& s) const { return s.confidence >= stability_threshold; }
  std::size_t stable_count() const;

  /// Finite fields, unit normals, positive radii, count within bound.
  void validate() const;
};

/// Per-pixel normals from central differences of back-projected
/// neighbors, in camera coordinates, facing the camera. Pixels on the
/// border or next to invalid depth get the zero vector.
NormalMap compute_normals(const DepthMap& depth, const CameraIntrinsics& intr);

/// Pixels whose luminance exceeds `threshold`, dilated by `dilation` pixels.
Mask specular_mask(const RgbImage& rgb, double luminance_threshold, int dilation = 2);

/// Color with the co-located point-light falloff divided out:
/// rgb * |p|^2 / (light_intensity * cos), cos clamped below at `min_cos`.
Rgb shading_normalized(const Rgb& rgb, const Vec3& point_cam, const Vec3& normal_cam, double light_intensity,
                       double min_cos);

/// Rendered model view. Normals and vertices are in the camera frame.
struct ModelView {
  CameraIntrinsics intrinsics;
  Pose pose;  // camera-from-world of the view
  DepthMap depth;
  RgbImage color;
  NormalMap normals;
  Image<int> index;  // -1 where no surfel

  bool valid(int u, int v) const { return depth(u, v) > 0.0f; }
};

struct PredictOptions {
  /// Also splat unstable surfels seen within `recent_window` frames of
  /// `current_frame`.
  bool include_recent_unstable = false;
  bool include_all = false;
  int current_frame = 0;
  int recent_window = 20;
  /// Depth differences below this fraction of depth count as ties, broken
  /// by distance from the pixel to the projected surfel center.
  double tie_fraction = 1e-3;
};

/// Splats surfels as disks: each covered pixel gets the depth of the
/// ray/disk intersection; the nearest surfel wins the z-buffer.
ModelView predict_view(const SurfelMap& map, const Pose& pose, const CameraIntrinsics& intr,
                       const PredictOptions& options = {});

struct FusionConfig {
  double depth_sigma_fraction = 0.01;  // sigma_depth = fraction * depth
  double gate_sigmas = 3.0;
  double max_normal_angle_deg = 30.0;
  int removal_age = 20;
  double light_intensity = 3e-4;
  double min_cos = 0.2;
  double min_radius_cos = 0.3;
};

struct FusionStats {
  long updated = 0;
  long inserted = 0;
  long removed = 0;
  long color_updates = 0;
  long color_skipped_masked = 0;
};

/// Fuses one frame at `pose` (camera-from-world). `mask` marks specular
/// pixels whose color must not be used; it may be empty.
FusionStats fuse(SurfelMap& map, const Frame& frame, const Pose& pose, const CameraIntrinsics& intr, const Mask& mask,
                 const FusionConfig& config = {});

/// ASCII PLY with x y z nx ny nz red green blue radius confidence.
void export_ply(const SurfelMap& map, const std::filesystem::path& path, bool include_unstable = false);
SurfelMap read_ply(const std::filesystem::path& path);

}  // namespace endofuse
