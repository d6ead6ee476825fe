#pragma once

#include <cstdint>

#include "endofuse/scene.hpp"
#include "endofuse/types.hpp"

namespace endofuse {

/// Seeded 3-D gradient noise on the integer lattice, roughly in [-1, 1].
double gradient_noise(const Vec3& p, std::uint64_t seed);

/// Fractal sum of `octaves` noise layers normalized to roughly [-1, 1].
double fractal_noise(const Vec3& p, int octaves, std::uint64_t seed);

/// Textured albedo at a world point.
Vec3 surface_albedo(const Vec3& world_point, const AppearanceParams& app);

struct ShadeTerms {
  Vec3 diffuse = Vec3::Zero();
  double specular = 0.0;
  Vec3 total() const { return diffuse + Vec3::Constant(specular); }
};

/// Point light at `light_pos`; view and half vectors coincide when the
/// light is co-located with the camera. Not clamped.
ShadeTerms shade_terms(const Vec3& hit_point, const Vec3& normal, const Vec3& view_dir, const Vec3& light_pos,
                       const AppearanceParams& app);

/// light_intensity * albedo * max(0, n.l) / d^2 + specular_strength * max(0, n.h)^exponent.
inline Vec3 shade(const Vec3& hit_point, const Vec3& normal, const Vec3& view_dir, const Vec3& light_pos,
                  const AppearanceParams& app) {
  return shade_terms(hit_point, normal, view_dir, light_pos, app).total();
}

struct RenderOptions {
  double max_range = 0.3;      // meters, along the optical axis
  double tolerance = 1e-5;     // sphere-tracing stop distance
  int max_steps = 256;
  double over_relaxation = 1.5;
};

/// Optional per-pixel split of the shading into diffuse and specular
/// luminance, before vignetting and clamping.
struct RenderTerms {
  Image<float> diffuse;
  Image<float> specular;
};

struct RayHit {
  bool hit = false;
  double distance = 0.0;  // along the unit ray
  int steps = 0;
};

/// Sphere-traces the scene SDF from `origin` along unit `dir`. `lipschitz`
/// is scene.lipschitz_bound(), passed in because it is costly to evaluate.
RayHit trace_ray(const ColonScene& scene, const Vec3& origin, const Vec3& dir, double max_distance,
                 const RenderOptions& options, double lipschitz, int& hint);

Frame render_frame(const ColonScene& scene, const Pose& pose, const CameraIntrinsics& intr,
                   const RenderOptions& options = {}, RenderTerms* terms = nullptr);

}  // namespace endofuse
