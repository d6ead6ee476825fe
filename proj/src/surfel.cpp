#include "endofuse/surfel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

namespace endofuse {

std::size_t SurfelMap::stable_count() const {
  return static_cast<std::size_t>(
      std::count_if(surfels.begin(), surfels.end(), [this](const Surfel& s) { return is_stable(s); }));
}

void SurfelMap::validate() const {
  if (surfels.size() > max_surfels) throw Error("surfel map exceeds its configured maximum size");
  for (const Surfel& s : surfels) {
    if (!s.is_finite()) throw Error("surfel map contains a non-finite surfel");
    if (std::abs(s.normal.norm() - 1.0f) > 1e-5f) throw Error("surfel map contains a non-unit normal");
    if (!(s.radius > 0.0f) || !(s.confidence >= 0.0f)) throw Error("surfel map contains an invalid radius/confidence");
  }
}

NormalMap compute_normals(const DepthMap& depth, const CameraIntrinsics& intr) {
  const int w = depth.width(), h = depth.height();
  NormalMap out(w, h, Eigen::Vector3f::Zero());
  for (int v = 1; v + 1 < h; ++v) {
    for (int u = 1; u + 1 < w; ++u) {
      const float dc = depth(u, v), dl = depth(u - 1, v), dr = depth(u + 1, v), du = depth(u, v - 1),
                  dd = depth(u, v + 1);
      if (dc <= 0.0f || dl <= 0.0f || dr <= 0.0f || du <= 0.0f || dd <= 0.0f) continue;
      const Vec3 pl = back_project(u - 1, v, dl, intr), pr = back_project(u + 1, v, dr, intr);
      const Vec3 pu = back_project(u, v - 1, du, intr), pd = back_project(u, v + 1, dd, intr);
      Vec3 n = (pr - pl).cross(pd - pu);
      const double len = n.norm();
      if (!(len > 0.0)) continue;
      n /= len;
      const Vec3 p = back_project(u, v, dc, intr);
      if (n.dot(p) > 0.0) n = -n;
      out(u, v) = n.cast<float>();
    }
  }
  return out;
}

Mask specular_mask(const RgbImage& rgb, double luminance_threshold, int dilation) {
  const int w = rgb.width(), h = rgb.height();
  Mask bright(w, h, 0);
  for (size_t i = 0; i < rgb.size(); ++i) bright[i] = luminance(rgb[i]) > luminance_threshold ? 1 : 0;
  if (dilation <= 0) return bright;
  // Separable square dilation.
  Mask rows(w, h, 0), out(w, h, 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      std::uint8_t any = 0;
      for (int k = std::max(0, u - dilation); k <= std::min(w - 1, u + dilation) && !any; ++k) any = bright(k, v);
      rows(u, v) = any;
    }
  }
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      std::uint8_t any = 0;
      for (int k = std::max(0, v - dilation); k <= std::min(h - 1, v + dilation) && !any; ++k) any = rows(u, k);
      out(u, v) = any;
    }
  }
  return out;
}

Rgb shading_normalized(const Rgb& rgb, const Vec3& point_cam, const Vec3& normal_cam, double light_intensity,
                       double min_cos) {
  const double r2 = point_cam.squaredNorm();
  const double cos = std::max(min_cos, -normal_cam.dot(point_cam) / std::sqrt(r2));
  return (rgb.cast<double>() * (r2 / (light_intensity * cos))).cast<float>();
}

ModelView predict_view(const SurfelMap& map, const Pose& pose, const CameraIntrinsics& intr,
                       const PredictOptions& options) {
  ModelView view;
  view.intrinsics = intr;
  view.pose = pose;
  view.depth = DepthMap(intr.width, intr.height, 0.0f);
  view.color = RgbImage(intr.width, intr.height, Rgb::Zero());
  view.normals = NormalMap(intr.width, intr.height, Eigen::Vector3f::Zero());
  view.index = Image<int>(intr.width, intr.height, -1);
  Image<float> center_dist(intr.width, intr.height, std::numeric_limits<float>::infinity());

  const Eigen::Matrix3f rot = pose.rotation.cast<float>();
  const Eigen::Vector3f trans = pose.translation.cast<float>();
  const double f_max = std::max(intr.fx, intr.fy);
  constexpr double kNear = 1e-3;

  for (std::size_t i = 0; i < map.surfels.size(); ++i) {
    const Surfel& s = map.surfels[i];
    if (!options.include_all && !map.is_stable(s)) {
      if (!options.include_recent_unstable || options.current_frame - s.last_seen > options.recent_window) continue;
    }
    const Vec3 pc = (rot * s.position + trans).cast<double>();
    if (pc.z() <= kNear) continue;
    const Vec3 nc = (rot * s.normal).cast<double>();
    if (nc.dot(pc) > 0.0) continue;  // back-facing

    const double r = s.radius;
    const double u0 = intr.fx * pc.x() / pc.z() + intr.cx;
    const double v0 = intr.fy * pc.y() / pc.z() + intr.cy;
    const double r_px = f_max * r / std::max(pc.z() - r, kNear) + 1.0;
    const int u_lo = std::max(0, static_cast<int>(std::floor(u0 - r_px)));
    const int u_hi = std::min(intr.width - 1, static_cast<int>(std::ceil(u0 + r_px)));
    const int v_lo = std::max(0, static_cast<int>(std::floor(v0 - r_px)));
    const int v_hi = std::min(intr.height - 1, static_cast<int>(std::ceil(v0 + r_px)));
    if (u_lo > u_hi || v_lo > v_hi) continue;

    const double plane = nc.dot(pc);
    const double r2 = r * r;
    for (int v = v_lo; v <= v_hi; ++v) {
      for (int u = u_lo; u <= u_hi; ++u) {
        const Vec3 ray = intr.ray(u, v);
        const double denom = nc.dot(ray);
        if (std::abs(denom) < 1e-9) continue;
        const double z = plane / denom;
        if (z <= kNear) continue;
        if ((z * ray - pc).squaredNorm() > r2) continue;

        const float cur = view.depth(u, v);
        const float cd = static_cast<float>((u - u0) * (u - u0) + (v - v0) * (v - v0));
        if (cur > 0.0f) {
          const double tie = options.tie_fraction * cur;
          if (z > cur + tie) continue;
          if (z >= cur - tie && cd >= center_dist(u, v)) continue;
        }
        view.depth(u, v) = static_cast<float>(z);
        view.color(u, v) = s.color;
        view.normals(u, v) = nc.cast<float>();
        view.index(u, v) = static_cast<int>(i);
        center_dist(u, v) = cd;
      }
    }
  }
  return view;
}

namespace {

Surfel make_observation(const Vec3& p_cam, const Vec3& n_cam, const Rgb& rgb, const Pose& world_from_cam,
                        const CameraIntrinsics& intr, const FusionConfig& config, int frame_index) {
  Surfel s;
  s.position = (world_from_cam * p_cam).cast<float>();
  s.normal = (world_from_cam.rotation * n_cam).normalized().cast<float>();
  const double focal = 0.5 * (intr.fx + intr.fy);
  const double view_cos = std::abs(n_cam.dot(p_cam.normalized()));
  s.radius = static_cast<float>(p_cam.z() / focal * std::numbers::sqrt2 / std::max(config.min_radius_cos, view_cos));
  s.color = shading_normalized(rgb, p_cam, n_cam, config.light_intensity, config.min_cos).cwiseMax(0.0f).cwiseMin(1.0f);
  s.confidence = 1.0f;
  s.last_seen = frame_index;
  s.created = frame_index;
  return s;
}

}  // namespace

FusionStats fuse(SurfelMap& map, const Frame& frame, const Pose& pose, const CameraIntrinsics& intr, const Mask& mask,
                 const FusionConfig& config) {
  FusionStats stats;
  const int w = intr.width, h = intr.height;
  if (frame.depth.width() != w || frame.depth.height() != h) throw Error("fuse: frame size does not match intrinsics");
  const bool have_mask = !mask.empty();
  if (have_mask && (mask.width() != w || mask.height() != h)) throw Error("fuse: mask size does not match frame");

  const NormalMap normals = compute_normals(frame.depth, intr);
  const Pose world_from_cam = pose.inverse();
  const int frame_index = frame.frame_index;

  ModelView view;
  const bool have_view = !map.empty();
  if (have_view) {
    PredictOptions po;
    po.include_all = true;
    view = predict_view(map, pose, intr, po);
  }

  const double cos_gate = std::cos(config.max_normal_angle_deg * std::numbers::pi / 180.0);
  std::vector<int> best_pixel(map.size(), -1);
  std::vector<float> best_dist(map.size(), std::numeric_limits<float>::infinity());
  std::vector<int> fresh;
  fresh.reserve(static_cast<size_t>(w) * h / 8);

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const float d = frame.depth(u, v);
      if (d <= 0.0f) continue;
      const Eigen::Vector3f& n = normals(u, v);
      if (n.squaredNorm() == 0.0f) continue;
      const int pixel = v * w + u;
      if (have_view) {
        const int idx = view.index(u, v);
        if (idx >= 0) {
          const double sigma = config.depth_sigma_fraction * d;
          const bool close = std::abs(d - view.depth(u, v)) < config.gate_sigmas * sigma;
          const bool aligned = n.dot(view.normals(u, v)) > cos_gate;
          if (close && aligned) {
            const Surfel& s = map.surfels[static_cast<size_t>(idx)];
            const Vec3 pc = pose * s.position.cast<double>();
            const Eigen::Vector2d c = intr.project(pc);
            const float dist = static_cast<float>((c - Eigen::Vector2d(u, v)).squaredNorm());
            if (dist < best_dist[static_cast<size_t>(idx)]) {
              best_dist[static_cast<size_t>(idx)] = dist;
              best_pixel[static_cast<size_t>(idx)] = pixel;
            }
            continue;
          }
        }
      }
      fresh.push_back(pixel);
    }
  }

  for (size_t i = 0; i < best_pixel.size(); ++i) {
    if (best_pixel[i] < 0) continue;
    const int u = best_pixel[i] % w, v = best_pixel[i] / w;
    const Vec3 p = back_project(u, v, frame.depth(u, v), intr);
    const Surfel obs = make_observation(p, normals(u, v).cast<double>(), frame.rgb(u, v), world_from_cam, intr,
                                        config, frame_index);
    Surfel& s = map.surfels[i];
    const float c = s.confidence;
    const float total = c + 1.0f;
    s.position = (c * s.position + obs.position) / total;
    const Eigen::Vector3f n = c * s.normal + obs.normal;
    if (n.squaredNorm() > 0.0f) s.normal = n.normalized();
    s.radius = (c * s.radius + obs.radius) / total;
    if (have_mask && mask(u, v)) {
      ++stats.color_skipped_masked;
    } else {
      s.color = (c * s.color + obs.color) / total;
      ++stats.color_updates;
    }
    s.confidence = total;
    s.last_seen = frame_index;
    ++stats.updated;
  }

  for (const int pixel : fresh) {
    if (map.surfels.size() >= map.max_surfels) break;
    const int u = pixel % w, v = pixel / w;
    const Vec3 p = back_project(u, v, frame.depth(u, v), intr);
    map.surfels.push_back(
        make_observation(p, normals(u, v).cast<double>(), frame.rgb(u, v), world_from_cam, intr, config, frame_index));
    ++stats.inserted;
  }

  const auto before = map.surfels.size();
  std::erase_if(map.surfels, [&](const Surfel& s) {
    return !map.is_stable(s) && frame_index - s.last_seen > config.removal_age;
  });
  stats.removed = static_cast<long>(before - map.surfels.size());
  return stats;
}

void export_ply(const SurfelMap& map, const std::filesystem::path& path, bool include_unstable) {
  std::ofstream out(path);
  if (!out) throw Error("export_ply: cannot open " + path.string() + " for writing");
  std::size_t count = 0;
  for (const Surfel& s : map.surfels) count += (include_unstable || map.is_stable(s)) ? 1 : 0;

  out << "ply\nformat ascii 1.0\ncomment surfel map\n";
  out << "element vertex " << count << "\n";
  for (const char* name : {"x", "y", "z", "nx", "ny", "nz", "red", "green", "blue", "radius", "confidence"}) {
    out << "property float " << name << "\n";
  }
  out << "end_header\n";
  char line[512];
  for (const Surfel& s : map.surfels) {
    if (!include_unstable && !map.is_stable(s)) continue;
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", s.position.x(),
                  s.position.y(), s.position.z(), s.normal.x(), s.normal.y(), s.normal.z(), s.color.x(), s.color.y(),
                  s.color.z(), s.radius, s.confidence);
    out << line;
  }
  if (!out) throw Error("export_ply: write failed for " + path.string());
}

SurfelMap read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("read_ply: cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw Error("read_ply: missing magic in " + path.string());
  long count = -1;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw Error("read_ply: only ascii PLY is supported");
    } else if (key == "element") {
      std::string name;
      ls >> name >> count;
    } else if (key == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (key == "end_header") {
      break;
    }
  }
  if (count < 0) throw Error("read_ply: missing vertex element in " + path.string());
  auto col = [&](const std::string& name) {
    const auto it = std::find(props.begin(), props.end(), name);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  const int ix = col("x"), inx = col("nx"), ir = col("red"), irad = col("radius"), iconf = col("confidence");
  if (ix < 0 || inx < 0 || ir < 0 || irad < 0 || iconf < 0) throw Error("read_ply: missing surfel properties");

  SurfelMap map;
  map.stability_threshold = 0.0f;
  map.surfels.reserve(static_cast<size_t>(count));
  std::vector<float> vals(props.size());
  for (long i = 0; i < count; ++i) {
    for (float& v : vals) {
      if (!(in >> v)) throw Error("read_ply: truncated body in " + path.string());
    }
    Surfel s;
    s.position = {vals[ix], vals[ix + 1], vals[ix + 2]};
    s.normal = {vals[inx], vals[inx + 1], vals[inx + 2]};
    s.color = {vals[ir], vals[ir + 1], vals[ir + 2]};
    s.radius = vals[irad];
    s.confidence = vals[iconf];
    map.surfels.push_back(s);
  }
  return map;
}

}  // namespace endofuse
