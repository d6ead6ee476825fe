#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "endofuse/types.hpp"

namespace endofuse {

/// Surface appearance of a procedural colon. Albedo is modulated by
/// seeded gradient noise so renders are reproducible from the parameters.
struct AppearanceParams {
  Vec3 base_albedo{0.75, 0.35, 0.30};
  int texture_octaves = 4;
  double texture_scale = 3.0;  // lattice cells per centimeter
  double specular_strength = 0.2;
  double specular_exponent = 24.0;
  double vignette_strength = 0.0;
  /// Point-light power; diffuse radiance is light_intensity * albedo * cos / d^2.
  double light_intensity = 3e-4;
  std::uint64_t noise_seed = 0;

  void validate() const;
  bool operator==(const AppearanceParams&) const = default;
};

enum class Difficulty { kStraight, kCurved, kRandomized };

Difficulty parse_difficulty(const std::string& name);
std::string to_string(Difficulty d);

/// Foot of the perpendicular from a point onto the centerline.
struct CenterlineFoot {
  double t = 0.0;         // spline parameter
  double arclength = 0.0;
  Vec3 point = Vec3::Zero();
  Vec3 tangent = Vec3::UnitZ();  // unit
  Vec3 normal = Vec3::UnitX();   // parallel-transported, unit
  Vec3 binormal = Vec3::UnitY();
  int table_index = 0;
};

/// Uniform cubic B-spline through a control polygon, with a dense lookup
/// table of arclength and a rotation-minimizing frame.
class Centerline {
 public:
  Centerline() = default;
  explicit Centerline(std::vector<Vec3> control_points, double table_spacing = 5e-4);

  const std::vector<Vec3>& control_points() const { return control_; }
  double max_parameter() const { return static_cast<double>(control_.size()) - 3.0; }
  double length() const { return table_s_.empty() ? 0.0 : table_s_.back(); }

  Vec3 point(double t) const;
  Vec3 derivative(double t) const;
  Vec3 second_derivative(double t) const;
  double curvature(double t) const;

  /// Parameter at a given arclength (clamped to the curve).
  double parameter_at(double arclength) const;
  CenterlineFoot frame_at(double t) const;

  /// Nearest point on the curve. `hint` is a table index from a previous
  /// nearby query; without one the whole table is searched coarsely.
  CenterlineFoot project(const Vec3& p, std::optional<int> hint = std::nullopt) const;

  bool operator==(const Centerline& o) const { return control_ == o.control_; }

 private:
  void basis(double t, int& seg, double& u) const;
  int nearest_index_global(const Vec3& p) const;
  int nearest_index_local(const Vec3& p, int start) const;

  std::vector<Vec3> control_;
  std::vector<double> table_t_;
  std::vector<double> table_s_;
  std::vector<Vec3> table_p_;
  std::vector<Vec3> table_n_;
};

struct RadiusProfile {
  double base_radius = 0.0125;        // meters
  double modulation_amplitude = 0.0;  // fraction of base radius
  double modulation_wavelength = 0.1; // meters
  double modulation_phase = 0.0;
  bool operator==(const RadiusProfile&) const = default;
};

/// Haustral-fold corrugation: folds protrude inward by up to `amplitude`.
struct RidgeParams {
  double amplitude = 0.0;          // meters
  double angular_frequency = 3.0;  // ridges per revolution
  double axial_frequency = 12.0;   // ridges per meter
  double axial_phase = 0.0;
  double angular_phase = 0.0;
  bool operator==(const RidgeParams&) const = default;
};

/// Procedural tube around a spline centerline. Its signed distance
/// function is the ground-truth geometry for rendering and evaluation.
struct ColonScene {
  Centerline centerline;
  RadiusProfile radius;
  RidgeParams ridges;
  AppearanceParams appearance;
  std::uint64_t rng_seed = 0;
  Difficulty difficulty = Difficulty::kStraight;

  double base_radius_at(double arclength) const;
  double wall_radius(double arclength, double angle) const;
  /// Upper bound of the wall radius over the whole scene.
  double max_radius() const;
  double min_radius() const;
  /// Bound on |grad sdf| used to make sphere-tracing steps conservative.
  double lipschitz_bound() const;

  /// Checks radius positivity and the centerline curvature bound.
  void validate() const;

  bool same_geometry(const ColonScene& o) const {
    return centerline == o.centerline && radius == o.radius && ridges == o.ridges;
  }
};

ColonScene build_scene(std::uint64_t seed, Difficulty difficulty);

/// Positive inside the lumen, negative in the wall material.
double scene_sdf(const ColonScene& scene, const Vec3& p);

/// Same as scene_sdf but reuses/updates a centerline table hint.
double scene_sdf_hinted(const ColonScene& scene, const Vec3& p, int& hint);

/// Central-difference gradient of the SDF.
Vec3 scene_sdf_gradient(const ColonScene& scene, const Vec3& p, double h = 1e-6);

/// Same geometry, resampled appearance.
ColonScene randomize_appearance(const ColonScene& scene, std::uint64_t seed);

/// Smooth bounded perturbation applied on top of centerline-following motion.
struct TrajectoryJitter {
  std::uint64_t seed = 0;
  double max_translation_fraction = 0.1;  // of base radius
  double max_rotation_deg = 0.75;         // absolute tilt from the tangent
  double period_frames = 40.0;
};

struct TrajectoryParams {
  int n_frames = 50;
  double advance_per_frame = 5e-4;
  double start_arclength = 0.03;
  std::optional<TrajectoryJitter> jitter;
};

/// Camera-from-world poses following the centerline with the optical axis
/// along the local tangent.
std::vector<Pose> generate_trajectory(const ColonScene& scene, const TrajectoryParams& params);

inline std::vector<Pose> generate_trajectory(const ColonScene& scene, int n_frames, double advance_per_frame,
                                             std::optional<std::uint64_t> jitter_seed) {
  TrajectoryParams p;
  p.n_frames = n_frames;
  p.advance_per_frame = advance_per_frame;
  if (jitter_seed) p.jitter = TrajectoryJitter{*jitter_seed};
  return generate_trajectory(scene, p);
}

}  // namespace endofuse
