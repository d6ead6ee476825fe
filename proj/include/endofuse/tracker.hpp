#pragma once

#include <vector>

#include "endofuse/surfel.hpp"
#include "endofuse/types.hpp"

namespace endofuse {

struct TrackingConfig {
  int pyramid_levels = 3;
  int max_iterations = 10;  // per level
  double w_rgb = 0.1;
  double huber_geo = 0.003;   // meters
  double huber_photo = 0.1;   // normalized intensity
  double min_inlier_fraction = 0.4;
  double update_tolerance = 1e-6;
  double max_association_distance = 0.01;
  double max_normal_angle_deg = 30.0;
  bool use_photometric = true;
  /// Illumination model used to normalize intensities (see shading_normalized);
  /// must match the fusion settings so model and frame intensities agree.
  double light_intensity = 3e-4;
  double min_cos = 0.2;
  double min_luminance = 0.01;
  double max_luminance = 0.98;
};

struct TrackingResult {
  Pose pose;
  double final_cost = 0.0;
  int iterations = 0;
  double inlier_fraction = 0.0;
  bool converged = false;
  long geometric_terms = 0;
  long photometric_terms = 0;
  long photometric_masked = 0;  // candidates dropped by the specular mask
};

/// One pyramid level of the joint geometric + photometric problem. The
/// unknown is the transform taking current-camera points into the
/// predicted view's camera frame.
class TrackingLevel {
 public:
  struct Association {
    int current_pixel;
    int model_pixel;  // nearest pixel used by the geometric term, -1 if none
    bool photometric;
  };
  struct Linearization {
    Mat6 hessian = Mat6::Zero();
    Vec6 gradient = Vec6::Zero();
    double cost = 0.0;
    long geometric = 0;
    long photometric = 0;
    long inliers = 0;
    long masked = 0;
  };

  TrackingLevel(const ModelView& model, const Frame& current, const Mask& specular, const TrackingConfig& config);

  /// Coarser level built by 2x subsampling.
  TrackingLevel downsampled() const;

  /// Projective data association at a given transform.
  std::vector<Association> associate(const Pose& model_from_current) const;

  /// Huber-weighted normal equations at a transform, re-associating.
  Linearization linearize(const Pose& model_from_current) const;

  /// Unweighted residuals and their 6-column Jacobians for fixed
  /// associations; left-multiplicative perturbation exp(xi) * T.
  void geometric_terms(const Pose& model_from_current, const std::vector<Association>& assoc, Eigen::VectorXd& r,
                       Eigen::MatrixXd& J) const;
  void photometric_terms(const Pose& model_from_current, const std::vector<Association>& assoc, Eigen::VectorXd& r,
                         Eigen::MatrixXd& J) const;

  long valid_pixels() const { return valid_pixels_; }
  const CameraIntrinsics& intrinsics() const { return intr_; }

 private:
  TrackingLevel() = default;
  bool model_intensity(double u, double v, double& value, Eigen::Vector2d& grad) const;

  TrackingConfig config_;
  CameraIntrinsics intr_;
  // Current frame.
  std::vector<Vec3> cur_points_;
  std::vector<Vec3> cur_normals_;
  std::vector<float> cur_intensity_;
  std::vector<unsigned char> cur_valid_;
  std::vector<unsigned char> cur_photo_;   // usable for the photometric term
  std::vector<unsigned char> cur_masked_;  // specular
  // Model view.
  std::vector<Vec3> model_points_;
  std::vector<Vec3> model_normals_;
  std::vector<float> model_intensity_;  // NaN where invalid
  long valid_pixels_ = 0;
};

/// Frame-to-model alignment by coarse-to-fine Gauss-Newton. `init` and the
/// returned pose are camera-from-world poses of the current frame.
TrackingResult track(const ModelView& predicted, const Frame& current, const Pose& init,
                     const TrackingConfig& config = {}, const Mask& specular = {});

}  // namespace endofuse
