#include "endofuse/render.hpp"

#include <algorithm>
#include <cmath>

#include "endofuse/rng.hpp"

namespace endofuse {

namespace {

constexpr double kTextureContrast = 1.6;

inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

inline double lattice_gradient_dot(std::int64_t ix, std::int64_t iy, std::int64_t iz, std::uint64_t seed, double x,
                                   double y, double z) {
  std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(ix));
  h = hash_combine(h, static_cast<std::uint64_t>(iy));
  h = hash_combine(h, static_cast<std::uint64_t>(iz));
  // The twelve cube-edge directions.
  switch (h % 12) {
    case 0: return x + y;
    case 1: return -x + y;
    case 2: return x - y;
    case 3: return -x - y;
    case 4: return x + z;
    case 5: return -x + z;
    case 6: return x - z;
    case 7: return -x - z;
    case 8: return y + z;
    case 9: return -y + z;
    case 10: return y - z;
    default: return -y - z;
  }
}

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace

double gradient_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy), iz = static_cast<std::int64_t>(fz);
  const double x = p.x() - fx, y = p.y() - fy, z = p.z() - fz;
  const double u = fade(x), v = fade(y), w = fade(z);

  const double n000 = lattice_gradient_dot(ix, iy, iz, seed, x, y, z);
  const double n100 = lattice_gradient_dot(ix + 1, iy, iz, seed, x - 1, y, z);
  const double n010 = lattice_gradient_dot(ix, iy + 1, iz, seed, x, y - 1, z);
  const double n110 = lattice_gradient_dot(ix + 1, iy + 1, iz, seed, x - 1, y - 1, z);
  const double n001 = lattice_gradient_dot(ix, iy, iz + 1, seed, x, y, z - 1);
  const double n101 = lattice_gradient_dot(ix + 1, iy, iz + 1, seed, x - 1, y, z - 1);
  const double n011 = lattice_gradient_dot(ix, iy + 1, iz + 1, seed, x, y - 1, z - 1);
  const double n111 = lattice_gradient_dot(ix + 1, iy + 1, iz + 1, seed, x - 1, y - 1, z - 1);

  return lerp(lerp(lerp(n000, n100, u), lerp(n010, n110, u), v), lerp(lerp(n001, n101, u), lerp(n011, n111, u), v), w);
}

double fractal_noise(const Vec3& p, int octaves, std::uint64_t seed) {
  double sum = 0.0, norm = 0.0, amp = 1.0, freq = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * gradient_noise(p * freq, hash_combine(seed, static_cast<std::uint64_t>(o)));
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return norm > 0.0 ? sum / norm : 0.0;
}

Vec3 surface_albedo(const Vec3& world_point, const AppearanceParams& app) {
  if (app.texture_octaves == 0 || app.texture_scale == 0.0) return app.base_albedo;
  const double n = fractal_noise(world_point * (app.texture_scale * 100.0), app.texture_octaves, app.noise_seed);
  const double m = std::clamp(1.0 + kTextureContrast * n, 0.15, 1.85);
  return (app.base_albedo * m).cwiseMin(1.0);
}

ShadeTerms shade_terms(const Vec3& hit_point, const Vec3& normal, const Vec3& view_dir, const Vec3& light_pos,
                       const AppearanceParams& app) {
  const Vec3 to_light = light_pos - hit_point;
  const double d2 = to_light.squaredNorm();
  const Vec3 l = to_light / std::sqrt(d2);
  const Vec3 h = (l + view_dir).normalized();
  ShadeTerms out;
  const double n_dot_l = std::max(0.0, normal.dot(l));
  out.diffuse = surface_albedo(hit_point, app) * (app.light_intensity * n_dot_l / d2);
  const double n_dot_h = std::max(0.0, normal.dot(h));
  out.specular = app.specular_strength * std::pow(n_dot_h, app.specular_exponent);
  return out;
}

namespace {

// Illinois false position on a bracket f(a) > 0 > f(b).
double refine_root(const ColonScene& scene, const Vec3& o, const Vec3& d, double a, double fa, double b, double fb,
                   int& hint) {
  int side = 0;
  double c = b;
  for (int it = 0; it < 100; ++it) {
    c = (a * fb - b * fa) / (fb - fa);
    if (!(c > a && c < b)) c = 0.5 * (a + b);
    const double fc = scene_sdf_hinted(scene, o + c * d, hint);
    if (std::abs(fc) < 1e-13 || b - a < 1e-11) break;
    if (fc > 0.0) {
      a = c;
      fa = fc;
      if (side == 1) fb *= 0.5;
      side = 1;
    } else {
      b = c;
      fb = fc;
      if (side == -1) fa *= 0.5;
      side = -1;
    }
  }
  return c;
}

}  // namespace

RayHit trace_ray(const ColonScene& scene, const Vec3& origin, const Vec3& dir, double max_distance,
                 const RenderOptions& options, double lipschitz, int& hint) {
  RayHit out;
  const double inv_lipschitz = 1.0 / lipschitz;
  double t = 0.0;
  double f = scene_sdf_hinted(scene, origin, hint);
  if (f <= 0.0) return out;
  double prev_t = 0.0, prev_f = f;

  for (int step = 0; step < options.max_steps; ++step) {
    out.steps = step + 1;
    if (f < options.tolerance) {
      // Converged from the lumen side: probe forward for a sign change
      // so the hit is located to far better than the stop tolerance.
      double slope = step > 0 ? (prev_f - f) / (t - prev_t) : 1.0;
      slope = std::max(slope, 1e-3);
      double delta = 2.0 * f / slope + 1e-12;
      for (int probe = 0; probe < 30; ++probe) {
        const double tb = t + delta;
        const double fb = scene_sdf_hinted(scene, origin + tb * dir, hint);
        if (fb < 0.0) {
          out.hit = true;
          out.distance = refine_root(scene, origin, dir, t, f, tb, fb, hint);
          return out;
        }
        t = tb;
        f = fb;
        delta *= 2.0;
      }
      out.hit = t <= max_distance;
      out.distance = t;
      return out;
    }

    prev_t = t;
    prev_f = f;
    t += options.over_relaxation * f * inv_lipschitz;
    if (t > max_distance * 1.05 + options.tolerance) {
      // The last sample may sit just beyond the range; confirm there is no
      // crossing before the range limit.
      const double fm = scene_sdf_hinted(scene, origin + max_distance * dir, hint);
      if (fm < 0.0) {
        out.hit = true;
        out.distance = refine_root(scene, origin, dir, prev_t, prev_f, max_distance, fm, hint);
      }
      return out;
    }
    f = scene_sdf_hinted(scene, origin + t * dir, hint);
    if (f < 0.0) {
      out.hit = true;
      out.distance = refine_root(scene, origin, dir, prev_t, prev_f, t, f, hint);
      return out;
    }
  }
  return out;
}

Frame render_frame(const ColonScene& scene, const Pose& pose, const CameraIntrinsics& intr,
                   const RenderOptions& options, RenderTerms* terms) {
  intr.validate();
  Frame frame;
  frame.rgb = RgbImage(intr.width, intr.height, Rgb::Zero());
  frame.depth = DepthMap(intr.width, intr.height, 0.0f);
  if (terms) {
    terms->diffuse = Image<float>(intr.width, intr.height, 0.0f);
    terms->specular = Image<float>(intr.width, intr.height, 0.0f);
  }

  const Vec3 origin = pose.center();
  const Mat3 world_from_cam = pose.rotation.transpose();
  const double half_diag2 = 0.25 * (static_cast<double>(intr.width) * intr.width + static_cast<double>(intr.height) * intr.height);
  const AppearanceParams& app = scene.appearance;

  const int origin_hint = scene.centerline.project(origin).table_index;
  const double lipschitz = scene.lipschitz_bound();

#pragma omp parallel for schedule(dynamic, 4)
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Vec3 ray = intr.ray(u, v);
      const Vec3 dir_cam = ray.normalized();
      const Vec3 dir = world_from_cam * dir_cam;
      const double max_distance = options.max_range / dir_cam.z();
      int ray_hint = origin_hint;
      const RayHit hit = trace_ray(scene, origin, dir, max_distance, options, lipschitz, ray_hint);
      if (!hit.hit) continue;
      const double depth = hit.distance * dir_cam.z();
      if (depth > options.max_range) continue;

      const Vec3 p = origin + hit.distance * dir;
      Vec3 grad;
      constexpr double h = 1e-6;
      for (int i = 0; i < 3; ++i) {
        Vec3 a = p, b = p;
        a[i] += h;
        b[i] -= h;
        grad[i] = scene_sdf_hinted(scene, a, ray_hint) - scene_sdf_hinted(scene, b, ray_hint);
      }
      Vec3 normal = grad.normalized();
      if (normal.dot(dir) > 0.0) normal = -normal;

      const ShadeTerms st = shade_terms(p, normal, -dir, origin, app);
      const double r2 = (u - intr.cx) * (u - intr.cx) + (v - intr.cy) * (v - intr.cy);
      const double vignette = 1.0 - app.vignette_strength * std::min(1.0, r2 / half_diag2);
      const Vec3 c = (st.total() * vignette).cwiseMax(0.0).cwiseMin(1.0);

      frame.depth(u, v) = static_cast<float>(depth);
      frame.rgb(u, v) = c.cast<float>();
      if (terms) {
        terms->diffuse(u, v) = luminance(st.diffuse.cast<float>());
        terms->specular(u, v) = static_cast<float>(st.specular);
      }
    }
  }
  return frame;
}

}  // namespace endofuse
