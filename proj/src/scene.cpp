#include "endofuse/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "endofuse/rng.hpp"

namespace endofuse {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec3 any_perpendicular(const Vec3& t) {
  const Vec3 axis = std::abs(t.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return (axis - axis.dot(t) * t).normalized();
}

// Gradient norm of (wall_radius - rho) at the wall point in direction
// `radial`: sqrt(1 + (dR/dtheta / R)^2 + (dR/ds * ds/dp)^2), with the
// arclength gradient stretched by the centerline curvature.
double wall_slope_norm(const ColonScene& scene, const CenterlineFoot& foot, double angle, const Vec3& radial) {
  const RidgeParams& r = scene.ridges;
  const RadiusProfile& m = scene.radius;
  const double s = foot.arclength;
  const double km = kTwoPi / m.modulation_wavelength;
  double r_s = m.base_radius * m.modulation_amplitude * km * std::cos(km * s + m.modulation_phase);
  double r_a = 0.0;
  if (r.amplitude != 0.0) {
    const double xs = kTwoPi * r.axial_frequency * s + r.axial_phase;
    const double xa = r.angular_frequency * angle + r.angular_phase;
    const double c = 0.5 + 0.5 * std::cos(xs), a = 0.5 + 0.5 * std::cos(xa);
    r_s += r.amplitude * 2.0 * c * 0.5 * std::sin(xs) * kTwoPi * r.axial_frequency * a;
    r_a = r.amplitude * c * c * 0.5 * std::sin(xa) * r.angular_frequency;
  }
  const double wall = scene.wall_radius(s, angle);
  const Vec3 d1 = scene.centerline.derivative(foot.t), d2 = scene.centerline.second_derivative(foot.t);
  const Vec3 tangent = d1.normalized();
  const Vec3 kappa = (d2 - d2.dot(tangent) * tangent) / d1.squaredNorm();
  const double stretch = 1.0 / std::max(1.0 - wall * radial.dot(kappa), 0.1);
  const double u = r_a / wall, v = r_s * stretch;
  return std::sqrt(1.0 + u * u + v * v);
}

}  // namespace

void AppearanceParams::validate() const {
  for (int c = 0; c < 3; ++c) {
    if (!(base_albedo[c] >= 0.0 && base_albedo[c] <= 1.0)) throw Error("appearance: base_albedo outside [0,1]");
  }
  if (texture_octaves < 0) throw Error("appearance: texture_octaves must be >= 0");
  if (!(texture_scale >= 0.0)) throw Error("appearance: texture_scale must be >= 0");
  if (!(specular_strength >= 0.0 && specular_strength <= 1.0)) throw Error("appearance: specular_strength outside [0,1]");
  if (!(specular_exponent > 1.0)) throw Error("appearance: specular_exponent must be > 1");
  if (!(vignette_strength >= 0.0 && vignette_strength <= 1.0)) throw Error("appearance: vignette_strength outside [0,1]");
  if (!(light_intensity > 0.0)) throw Error("appearance: light_intensity must be > 0");
}

Difficulty parse_difficulty(const std::string& name) {
  if (name == "straight") return Difficulty::kStraight;
  if (name == "curved") return Difficulty::kCurved;
  if (name == "randomized") return Difficulty::kRandomized;
  throw Error("unknown difficulty '" + name + "' (expected straight|curved|randomized)");
}

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kStraight: return "straight";
    case Difficulty::kCurved: return "curved";
    case Difficulty::kRandomized: return "randomized";
  }
  return "straight";
}

// ---------------------------------------------------------------------------
// Centerline

Centerline::Centerline(std::vector<Vec3> control_points, double table_spacing)
    : control_(std::move(control_points)) {
  if (control_.size() < 4) throw Error("centerline: need at least 4 control points");
  const int segments = static_cast<int>(control_.size()) - 3;

  table_t_.push_back(0.0);
  table_p_.push_back(point(0.0));
  table_s_.push_back(0.0);
  for (int seg = 0; seg < segments; ++seg) {
    const double chord = (control_[seg + 2] - control_[seg + 1]).norm();
    const int m = std::max(4, static_cast<int>(std::ceil(chord / table_spacing)));
    for (int k = 1; k <= m; ++k) {
      const double t0 = seg + static_cast<double>(k - 1) / m;
      const double t1 = seg + static_cast<double>(k) / m;
      // Simpson on |c'|.
      const double ds = (t1 - t0) / 6.0 *
                        (derivative(t0).norm() + 4.0 * derivative(0.5 * (t0 + t1)).norm() + derivative(t1).norm());
      table_t_.push_back(t1);
      table_p_.push_back(point(t1));
      table_s_.push_back(table_s_.back() + ds);
    }
  }

  // Rotation-minimizing frame by successive projection.
  table_n_.resize(table_t_.size());
  Vec3 tangent = derivative(0.0).normalized();
  table_n_[0] = any_perpendicular(tangent);
  for (size_t k = 1; k < table_t_.size(); ++k) {
    tangent = derivative(table_t_[k]).normalized();
    const Vec3& prev = table_n_[k - 1];
    table_n_[k] = (prev - prev.dot(tangent) * tangent).normalized();
  }
}

void Centerline::basis(double t, int& seg, double& u) const {
  const int segments = static_cast<int>(control_.size()) - 3;
  t = std::clamp(t, 0.0, static_cast<double>(segments));
  seg = std::min(static_cast<int>(std::floor(t)), segments - 1);
  u = t - seg;
}

Vec3 Centerline::point(double t) const {
  int i;
  double u;
  basis(t, i, u);
  const double u2 = u * u, u3 = u2 * u;
  const double b0 = (1.0 - u) * (1.0 - u) * (1.0 - u) / 6.0;
  const double b1 = (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0;
  const double b2 = (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0;
  const double b3 = u3 / 6.0;
  return b0 * control_[i] + b1 * control_[i + 1] + b2 * control_[i + 2] + b3 * control_[i + 3];
}

Vec3 Centerline::derivative(double t) const {
  int i;
  double u;
  basis(t, i, u);
  const double u2 = u * u;
  const double d0 = -0.5 * (1.0 - u) * (1.0 - u);
  const double d1 = 1.5 * u2 - 2.0 * u;
  const double d2 = -1.5 * u2 + u + 0.5;
  const double d3 = 0.5 * u2;
  return d0 * control_[i] + d1 * control_[i + 1] + d2 * control_[i + 2] + d3 * control_[i + 3];
}

Vec3 Centerline::second_derivative(double t) const {
  int i;
  double u;
  basis(t, i, u);
  return (1.0 - u) * control_[i] + (3.0 * u - 2.0) * control_[i + 1] + (1.0 - 3.0 * u) * control_[i + 2] +
         u * control_[i + 3];
}

double Centerline::curvature(double t) const {
  const Vec3 d1 = derivative(t);
  const Vec3 d2 = second_derivative(t);
  const double speed = d1.norm();
  return d1.cross(d2).norm() / (speed * speed * speed);
}

double Centerline::parameter_at(double arclength) const {
  if (arclength <= 0.0) return 0.0;
  if (arclength >= table_s_.back()) return table_t_.back();
  const auto it = std::upper_bound(table_s_.begin(), table_s_.end(), arclength);
  const size_t k = static_cast<size_t>(it - table_s_.begin()) - 1;
  const double w = (arclength - table_s_[k]) / (table_s_[k + 1] - table_s_[k]);
  return table_t_[k] + w * (table_t_[k + 1] - table_t_[k]);
}

CenterlineFoot Centerline::frame_at(double t) const {
  t = std::clamp(t, 0.0, max_parameter());
  const auto it = std::upper_bound(table_t_.begin(), table_t_.end(), t);
  size_t k = static_cast<size_t>(std::max<std::ptrdiff_t>(it - table_t_.begin() - 1, 0));
  k = std::min(k, table_t_.size() - 2);
  const double w = (t - table_t_[k]) / (table_t_[k + 1] - table_t_[k]);

  CenterlineFoot f;
  f.t = t;
  f.table_index = static_cast<int>(w < 0.5 ? k : k + 1);
  f.arclength = table_s_[k] + w * (table_s_[k + 1] - table_s_[k]);
  f.point = point(t);
  f.tangent = derivative(t).normalized();
  const Vec3 n = (1.0 - w) * table_n_[k] + w * table_n_[k + 1];
  f.normal = (n - n.dot(f.tangent) * f.tangent).normalized();
  f.binormal = f.tangent.cross(f.normal);
  return f;
}

int Centerline::nearest_index_local(const Vec3& p, int start) const {
  const int n = static_cast<int>(table_p_.size());
  int k = std::clamp(start, 0, n - 1);
  double best = (table_p_[k] - p).squaredNorm();
  for (;;) {
    if (k + 1 < n) {
      const double d = (table_p_[k + 1] - p).squaredNorm();
      if (d < best) {
        best = d;
        ++k;
        continue;
      }
    }
    if (k > 0) {
      const double d = (table_p_[k - 1] - p).squaredNorm();
      if (d < best) {
        best = d;
        --k;
        continue;
      }
    }
    return k;
  }
}

int Centerline::nearest_index_global(const Vec3& p) const {
  constexpr int kStride = 16;
  const int n = static_cast<int>(table_p_.size());
  int best_k = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; k += kStride) {
    const double d = (table_p_[k] - p).squaredNorm();
    if (d < best) {
      best = d;
      best_k = k;
    }
  }
  return nearest_index_local(p, best_k);
}

CenterlineFoot Centerline::project(const Vec3& p, std::optional<int> hint) const {
  const int k = hint ? nearest_index_local(p, *hint) : nearest_index_global(p);
  double t = table_t_[k];
  const double t_max = max_parameter();
  for (int it = 0; it < 12; ++it) {
    const Vec3 d = point(t) - p;
    const Vec3 d1 = derivative(t);
    const double f = d.dot(d1);
    double fp = d1.squaredNorm() + d.dot(second_derivative(t));
    if (fp <= 1e-12 * d1.squaredNorm()) fp = d1.squaredNorm();
    const double step = -f / fp;
    const double t_new = std::clamp(t + step, 0.0, t_max);
    const double moved = std::abs(t_new - t);
    t = t_new;
    if (moved < 1e-14) break;
  }
  CenterlineFoot foot = frame_at(t);
  foot.table_index = k;
  return foot;
}

// ---------------------------------------------------------------------------
// Scene

double ColonScene::base_radius_at(double s) const {
  return radius.base_radius *
         (1.0 + radius.modulation_amplitude * std::sin(kTwoPi * s / radius.modulation_wavelength + radius.modulation_phase));
}

double ColonScene::wall_radius(double s, double angle) const {
  const double base = base_radius_at(s);
  if (ridges.amplitude == 0.0) return base;
  const double c = 0.5 + 0.5 * std::cos(kTwoPi * ridges.axial_frequency * s + ridges.axial_phase);
  const double a = 0.5 + 0.5 * std::cos(ridges.angular_frequency * angle + ridges.angular_phase);
  return base - ridges.amplitude * c * c * a;
}

double ColonScene::max_radius() const { return radius.base_radius * (1.0 + std::abs(radius.modulation_amplitude)); }

double ColonScene::min_radius() const {
  return radius.base_radius * (1.0 - std::abs(radius.modulation_amplitude)) - ridges.amplitude;
}

double ColonScene::lipschitz_bound() const {
  const double rm = std::max(min_radius(), 1e-6);
  const double ds = radius.base_radius * std::abs(radius.modulation_amplitude) * kTwoPi / radius.modulation_wavelength +
                    ridges.amplitude * kTwoPi * ridges.axial_frequency * 0.65;
  const double dtheta = ridges.amplitude * ridges.angular_frequency * 0.5 / rm;
  // Arclength gradient grows by at most 2x off the centerline given the
  // curvature bound; the axis blend adds a radial slope and at most 1.125x on
  // the angular one.
  const double numerator = 1.0 + 2.0 * ds + 1.125 * dtheta + 0.75 * ridges.amplitude / rm;
  // The slope normalization varies slowly; bound it and its derivatives on a grid.
  const int ns = std::max(2, static_cast<int>(centerline.length() / 5e-4)), na = 96;
  double g_max = 1.0, gs_max = 0.0, ga_max = 0.0;
  std::vector<double> prev(na + 1);
  for (int i = 0; i <= ns; ++i) {
    const CenterlineFoot f = centerline.frame_at(centerline.parameter_at(centerline.length() * i / ns));
    std::vector<double> row(na + 1);
    for (int j = 0; j <= na; ++j) {
      const double a = kTwoPi * j / na;
      row[j] = wall_slope_norm(*this, f, a, std::cos(a) * f.normal + std::sin(a) * f.binormal);
      g_max = std::max(g_max, row[j]);
      if (j > 0) ga_max = std::max(ga_max, std::abs(row[j] - row[j - 1]) / (kTwoPi / na));
      if (i > 0) gs_max = std::max(gs_max, std::abs(row[j] - prev[j]) / (centerline.length() / ns));
    }
    prev = std::move(row);
  }
  // Sampled quantities carry a safety margin; the analytic ones do not need one.
  const double dg = 1.25 * ((g_max - 1.0) * 1.5 / rm + 2.0 * gs_max + 1.125 * ga_max / rm);
  return numerator + max_radius() * dg;
}

void ColonScene::validate() const {
  if (!(radius.base_radius > 0.0)) throw Error("scene: base radius must be positive");
  if (!(radius.modulation_wavelength > 0.0)) throw Error("scene: modulation wavelength must be positive");
  const double min_base = radius.base_radius * (1.0 - std::abs(radius.modulation_amplitude));
  if (!(min_base > 0.0) || !(min_base > ridges.amplitude)) {
    throw Error("scene: radius must exceed ridge amplitude everywhere");
  }
  if (ridges.angular_frequency != std::round(ridges.angular_frequency)) {
    throw Error("scene: angular ridge frequency must be an integer");
  }
  const double limit = 2.0 * max_radius();
  const double t_max = centerline.max_parameter();
  for (double t = 0.0; t <= t_max; t += 0.01) {
    const double k = centerline.curvature(t);
    if (k > 0.0 && 1.0 / k <= limit) throw Error("scene: centerline curvature too high for tube radius");
  }
  appearance.validate();
}

namespace {

AppearanceParams sample_appearance(SplitMix64& rng) {
  AppearanceParams a;
  a.base_albedo = Vec3(rng.uniform(0.5, 0.9), rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5));
  a.texture_octaves = static_cast<int>(rng.uniform_int(2, 5));
  a.texture_scale = rng.uniform(1.5, 5.0);
  a.specular_strength = rng.uniform(0.0, 0.5);
  a.specular_exponent = rng.uniform(8.0, 64.0);
  a.vignette_strength = rng.uniform(0.0, 0.4);
  a.noise_seed = rng.next();
  return a;
}

std::vector<Vec3> tube_controls(double length, double spacing, double ax, double ay, double lx, double ly, double px,
                                double py) {
  const int n = static_cast<int>(std::ceil(length / spacing)) + 3;
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double z = (k - 1) * spacing;
    pts.emplace_back(ax * std::sin(kTwoPi * z / lx + px), ay * std::sin(kTwoPi * z / ly + py), z);
  }
  return pts;
}

}  // namespace

ColonScene build_scene(std::uint64_t seed, Difficulty difficulty) {
  constexpr double kLength = 0.8;
  constexpr double kSpacing = 0.05;
  SplitMix64 rng(hash_combine(seed, static_cast<std::uint64_t>(difficulty) + 0x5eed));

  ColonScene scene;
  scene.rng_seed = seed;
  scene.difficulty = difficulty;
  scene.appearance.noise_seed = hash_combine(seed, 0xa11ce);

  switch (difficulty) {
    case Difficulty::kStraight:
      scene.centerline = Centerline(tube_controls(kLength, kSpacing, 0, 0, 1, 1, 0, 0));
      break;
    case Difficulty::kCurved: {
      const double ax = rng.uniform(0.01, 0.02), ay = rng.uniform(0.01, 0.02);
      const double lx = rng.uniform(0.3, 0.5), ly = rng.uniform(0.3, 0.5);
      const double px = rng.uniform(0, kTwoPi), py = rng.uniform(0, kTwoPi);
      scene.centerline = Centerline(tube_controls(kLength, kSpacing, ax, ay, lx, ly, px, py));
      scene.radius.modulation_amplitude = 0.08;
      scene.radius.modulation_wavelength = 0.12;
      scene.radius.modulation_phase = rng.uniform(0, kTwoPi);
      scene.ridges.amplitude = 0.2 * scene.radius.base_radius;
      scene.ridges.angular_frequency = 3.0;
      scene.ridges.axial_frequency = 12.0;
      scene.ridges.axial_phase = rng.uniform(0, kTwoPi);
      scene.ridges.angular_phase = rng.uniform(0, kTwoPi);
      break;
    }
    case Difficulty::kRandomized: {
      scene.radius.base_radius = rng.uniform(0.011, 0.016);
      const double ax = rng.uniform(0.0, 0.02), ay = rng.uniform(0.0, 0.02);
      const double lx = rng.uniform(0.3, 0.6), ly = rng.uniform(0.3, 0.6);
      const double px = rng.uniform(0, kTwoPi), py = rng.uniform(0, kTwoPi);
      scene.centerline = Centerline(tube_controls(kLength, kSpacing, ax, ay, lx, ly, px, py));
      scene.radius.modulation_amplitude = rng.uniform(0.0, 0.12);
      scene.radius.modulation_wavelength = rng.uniform(0.08, 0.2);
      scene.radius.modulation_phase = rng.uniform(0, kTwoPi);
      scene.ridges.amplitude = rng.uniform(0.1, 0.3) * scene.radius.base_radius;
      scene.ridges.angular_frequency = static_cast<double>(rng.uniform_int(2, 4));
      scene.ridges.axial_frequency = rng.uniform(8.0, 20.0);
      scene.ridges.axial_phase = rng.uniform(0, kTwoPi);
      scene.ridges.angular_phase = rng.uniform(0, kTwoPi);
      const double light = scene.appearance.light_intensity;
      scene.appearance = sample_appearance(rng);
      scene.appearance.light_intensity = light;
      break;
    }
  }
  scene.validate();
  return scene;
}

namespace {

// Signed distance from a centerline foot. The radial residual is divided by
// the wall's slope factor so the gradient has unit length on the surface; both
// the angular folds and that correction fade out towards the axis, where the
// angle is undefined.
double sdf_from_foot(const ColonScene& scene, const CenterlineFoot& foot, const Vec3& p) {
  const Vec3 d = p - foot.point;
  const double rho = d.norm();
  const double base = scene.base_radius_at(foot.arclength);
  if (scene.ridges.amplitude == 0.0 && scene.radius.modulation_amplitude == 0.0) return base - rho;
  const double angle = std::atan2(d.dot(foot.binormal), d.dot(foot.normal));
  const double x = std::clamp(rho / std::max(scene.min_radius(), 1e-6), 0.0, 1.0);
  const double w = x * x * (3.0 - 2.0 * x);
  const RidgeParams& r = scene.ridges;
  const double c = 0.5 + 0.5 * std::cos(kTwoPi * r.axial_frequency * foot.arclength + r.axial_phase);
  const double a = 0.5 + 0.5 * std::cos(r.angular_frequency * angle + r.angular_phase);
  const double blended = base - r.amplitude * c * c * (0.5 + w * (a - 0.5));
  const double g = w > 0.0 ? wall_slope_norm(scene, foot, angle, d / rho) : 1.0;
  return (blended - rho) / (1.0 + (g - 1.0) * w);
}

}  // namespace

double scene_sdf_hinted(const ColonScene& scene, const Vec3& p, int& hint) {
  const CenterlineFoot foot = scene.centerline.project(p, hint);
  hint = foot.table_index;
  return sdf_from_foot(scene, foot, p);
}

double scene_sdf(const ColonScene& scene, const Vec3& p) { return sdf_from_foot(scene, scene.centerline.project(p), p); }

Vec3 scene_sdf_gradient(const ColonScene& scene, const Vec3& p, double h) {
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    Vec3 a = p, b = p;
    a[i] += h;
    b[i] -= h;
    g[i] = (scene_sdf(scene, a) - scene_sdf(scene, b)) / (2.0 * h);
  }
  return g;
}

ColonScene randomize_appearance(const ColonScene& scene, std::uint64_t seed) {
  ColonScene out = scene;
  SplitMix64 rng(hash_combine(seed, 0xc0105));
  out.appearance = sample_appearance(rng);
  out.appearance.light_intensity = scene.appearance.light_intensity;
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory

std::vector<Pose> generate_trajectory(const ColonScene& scene, const TrajectoryParams& params) {
  if (params.n_frames < 1) throw Error("generate_trajectory: n_frames must be >= 1");
  if (!(params.advance_per_frame >= 0.0)) throw Error("generate_trajectory: advance_per_frame must be >= 0");

  // Jitter: sums of two sinusoids per axis, each bounded so the vector norm
  // never exceeds the configured maximum.
  struct Channel {
    double amp[2], freq[2], phase[2];
    double at(double i) const {
      return amp[0] * std::sin(freq[0] * i + phase[0]) + amp[1] * std::sin(freq[1] * i + phase[1]);
    }
  };
  Channel channels[5] = {};
  const double r0 = scene.radius.base_radius;
  if (params.jitter) {
    const TrajectoryJitter& j = *params.jitter;
    SplitMix64 rng(hash_combine(j.seed, 0x7a7));
    const double max_t = j.max_translation_fraction * r0 / std::sqrt(2.0);
    const double max_r = j.max_rotation_deg * std::numbers::pi / 180.0 / std::sqrt(3.0);
    for (int c = 0; c < 5; ++c) {
      const double bound = c < 2 ? max_t : max_r;
      const double w = rng.uniform(0.3, 0.7);
      channels[c].amp[0] = bound * w;
      channels[c].amp[1] = bound * (1.0 - w);
      channels[c].freq[0] = kTwoPi / (j.period_frames * rng.uniform(0.8, 1.25));
      channels[c].freq[1] = kTwoPi / (j.period_frames * rng.uniform(0.4, 0.6));
      channels[c].phase[0] = rng.uniform(0, kTwoPi);
      channels[c].phase[1] = rng.uniform(0, kTwoPi);
    }
  }

  std::vector<Pose> poses;
  poses.reserve(params.n_frames);
  for (int i = 0; i < params.n_frames; ++i) {
    const double s = params.start_arclength + i * params.advance_per_frame;
    if (s < 0.0 || s > scene.centerline.length()) {
      throw Error("generate_trajectory: frame " + std::to_string(i) + " leaves the lumen (arclength " +
                  std::to_string(s) + ")");
    }
    const CenterlineFoot f = scene.centerline.frame_at(scene.centerline.parameter_at(s));
    Mat3 frame;  // world-from-camera axes: x = normal, y = binormal, z = tangent
    frame.col(0) = f.normal;
    frame.col(1) = f.binormal;
    frame.col(2) = f.tangent;
    Vec3 center = f.point;
    if (params.jitter) {
      center += channels[0].at(i) * f.normal + channels[1].at(i) * f.binormal;
      const Vec3 tilt(channels[2].at(i), channels[3].at(i), channels[4].at(i));
      frame = frame * Eigen::AngleAxisd(tilt.norm(), tilt.norm() > 0 ? tilt.normalized() : Vec3::UnitZ())
                          .toRotationMatrix();
    }
    if (scene_sdf(scene, center) <= 0.1 * r0) {
      throw Error("generate_trajectory: frame " + std::to_string(i) + " would exit the lumen");
    }
    Pose pose;
    pose.rotation = frame.transpose();
    pose.orthonormalize();
    pose.translation = -(pose.rotation * center);
    if (!poses.empty()) {
      const double angle = rotation_angle(pose.rotation * poses.back().rotation.transpose());
      if (angle > 2.0 * std::numbers::pi / 180.0) {
        throw Error("generate_trajectory: relative rotation above 2 degrees at frame " + std::to_string(i));
      }
    }
    poses.push_back(pose);
  }
  return poses;
}

}  // namespace endofuse
