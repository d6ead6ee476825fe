#include "endofuse/depth_provider.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "endofuse/dataset.hpp"
#include "endofuse/eval.hpp"
#include "endofuse/rng.hpp"

namespace endofuse {

void NoiseModel::validate() const {
  if (!(multiplicative_sigma >= 0.0) || !(additive_sigma >= 0.0)) throw Error("NoiseModel: sigmas must be >= 0");
  if (smoothing_radius < 0) throw Error("NoiseModel: smoothing_radius must be >= 0");
  if (!(scale_bias > 0.0)) throw Error("NoiseModel: scale_bias must be > 0");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_number(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error("depth source: invalid value '" + value + "' for " + key);
  }
}

}  // namespace

DepthSourceSpec parse_depth_source(const std::string& spec) {
  DepthSourceSpec out;
  if (spec == "gt" || spec == "ground_truth") {
    out.source = GroundTruthDepth{};
    return out;
  }
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? std::string() : spec.substr(colon + 1);
  if (kind == "external") {
    if (rest.empty()) throw Error("depth source: external requires a directory");
    out.source = ExternalDepth{rest};
    return out;
  }
  if (kind != "corrupted") throw Error("depth source: unknown kind '" + kind + "'");

  NoiseModel noise;
  std::istringstream items(rest);
  std::string item;
  while (std::getline(items, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("depth source: expected key=value, got '" + item + "'");
    const std::string key = trim(item.substr(0, eq));
    const double v = parse_number(key, trim(item.substr(eq + 1)));
    if (key == "sigma" || key == "multiplicative") noise.multiplicative_sigma = v;
    else if (key == "additive") noise.additive_sigma = v;
    else if (key == "radius") noise.smoothing_radius = static_cast<int>(v);
    else if (key == "scale") noise.scale_bias = v;
    else if (key == "seed") noise.seed = static_cast<std::uint64_t>(v);
    else if (key == "rms") {
      if (!(v > 0.0)) throw Error("depth source: rms target must be > 0");
      out.calibration_target = v;
    } else {
      throw Error("depth source: unknown parameter '" + key + "'");
    }
  }
  noise.validate();
  out.source = CorruptedDepth{noise};
  return out;
}

std::string describe(const DepthSource& source) {
  if (std::holds_alternative<GroundTruthDepth>(source)) return "gt";
  if (const auto* ext = std::get_if<ExternalDepth>(&source)) return "external:" + ext->directory.string();
  const NoiseModel& n = std::get<CorruptedDepth>(source).noise;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "corrupted:sigma=%.9g,additive=%.9g,radius=%d,scale=%.9g,seed=%llu",
                n.multiplicative_sigma, n.additive_sigma, n.smoothing_radius, n.scale_bias,
                static_cast<unsigned long long>(n.seed));
  return buf;
}

Image<float> smooth_gaussian_field(int width, int height, int radius, double sigma, std::uint64_t seed) {
  if (width <= 0 || height <= 0) throw Error("smooth_gaussian_field: empty size");
  Image<float> out(width, height, 0.0f);
  if (sigma == 0.0) return out;
  SplitMix64 rng(seed);
  // Integral image of white noise; each output is the window sum divided by
  // sqrt(window size), which has unit variance even where the window is
  // clipped by the border.
  const int w1 = width + 1;
  std::vector<double> integral(static_cast<size_t>(w1) * (height + 1), 0.0);
  for (int v = 0; v < height; ++v) {
    double row = 0.0;
    for (int u = 0; u < width; ++u) {
      row += rng.normal();
      integral[static_cast<size_t>(v + 1) * w1 + u + 1] = integral[static_cast<size_t>(v) * w1 + u + 1] + row;
    }
  }
  for (int v = 0; v < height; ++v) {
    const int v0 = std::max(0, v - radius), v1 = std::min(height, v + radius + 1);
    for (int u = 0; u < width; ++u) {
      const int u0 = std::max(0, u - radius), u1 = std::min(width, u + radius + 1);
      const double sum = integral[static_cast<size_t>(v1) * w1 + u1] - integral[static_cast<size_t>(v0) * w1 + u1] -
                         integral[static_cast<size_t>(v1) * w1 + u0] + integral[static_cast<size_t>(v0) * w1 + u0];
      const double count = static_cast<double>((v1 - v0) * (u1 - u0));
      out(u, v) = static_cast<float>(sigma * sum / std::sqrt(count));
    }
  }
  return out;
}

namespace {

// Mean over the valid pixels of a (2r+1)^2 window; invalid pixels stay 0.
DepthMap box_smooth_valid(const Image<double>& values, const DepthMap& valid, int radius) {
  const int w = values.width(), h = values.height(), w1 = w + 1;
  std::vector<double> sum(static_cast<size_t>(w1) * (h + 1), 0.0), cnt(sum.size(), 0.0);
  for (int v = 0; v < h; ++v) {
    double rs = 0.0, rc = 0.0;
    for (int u = 0; u < w; ++u) {
      if (valid(u, v) > 0.0f) {
        rs += values(u, v);
        rc += 1.0;
      }
      const size_t i = static_cast<size_t>(v + 1) * w1 + u + 1, up = static_cast<size_t>(v) * w1 + u + 1;
      sum[i] = sum[up] + rs;
      cnt[i] = cnt[up] + rc;
    }
  }
  auto box = [&](const std::vector<double>& a, int u0, int v0, int u1, int v1) {
    return a[static_cast<size_t>(v1) * w1 + u1] - a[static_cast<size_t>(v0) * w1 + u1] -
           a[static_cast<size_t>(v1) * w1 + u0] + a[static_cast<size_t>(v0) * w1 + u0];
  };
  DepthMap out(w, h, 0.0f);
  for (int v = 0; v < h; ++v) {
    const int v0 = std::max(0, v - radius), v1 = std::min(h, v + radius + 1);
    for (int u = 0; u < w; ++u) {
      if (!(valid(u, v) > 0.0f)) continue;
      const int u0 = std::max(0, u - radius), u1 = std::min(w, u + radius + 1);
      const double d = box(sum, u0, v0, u1, v1) / box(cnt, u0, v0, u1, v1);
      out(u, v) = d > 0.0 ? static_cast<float>(d) : 0.0f;
    }
  }
  return out;
}

}  // namespace

DepthMap corrupt_depth(const DepthMap& gt, const NoiseModel& noise, int frame_index) {
  noise.validate();
  const std::uint64_t frame_seed = hash_combine(noise.seed, static_cast<std::uint64_t>(frame_index));
  const Image<float> eps_m =
      smooth_gaussian_field(gt.width(), gt.height(), noise.smoothing_radius, noise.multiplicative_sigma,
                            hash_combine(frame_seed, 1));
  const Image<float> eps_a = smooth_gaussian_field(gt.width(), gt.height(), noise.smoothing_radius,
                                                   noise.additive_sigma, hash_combine(frame_seed, 2));
  Image<double> noisy(gt.width(), gt.height(), 0.0);
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] > 0.0f) noisy[i] = noise.scale_bias * gt[i] * (1.0 + eps_m[i]) + eps_a[i];
  }
  return box_smooth_valid(noisy, gt, noise.smoothing_radius);
}

DepthMap provide_depth(const DepthSource& source, int frame_index, const DepthMap& gt_depth) {
  if (std::holds_alternative<GroundTruthDepth>(source)) return gt_depth;
  if (const auto* c = std::get_if<CorruptedDepth>(&source)) return corrupt_depth(gt_depth, c->noise, frame_index);

  const auto& dir = std::get<ExternalDepth>(source).directory;
  std::filesystem::path path = depth_path(dir, frame_index);
  if (!std::filesystem::exists(path)) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.dpt", frame_index);
    path = dir / name;
  }
  if (!std::filesystem::exists(path)) {
    throw IoError("external depth: missing file for frame " + std::to_string(frame_index) + " in " + dir.string());
  }
  DepthMap depth;
  try {
    depth = read_depth(path);
  } catch (const Error& e) {
    throw IoError("external depth: frame " + std::to_string(frame_index) + ": " + e.what());
  }
  if (depth.width() != gt_depth.width() || depth.height() != gt_depth.height()) {
    throw IoError("external depth: frame " + std::to_string(frame_index) + " has size " +
                  std::to_string(depth.width()) + "x" + std::to_string(depth.height()) + ", expected " +
                  std::to_string(gt_depth.width()) + "x" + std::to_string(gt_depth.height()));
  }
  return depth;
}

double measure_noise_rms(const NoiseModel& noise, const std::vector<DepthMap>& sequence) {
  if (sequence.empty()) throw Error("measure_noise_rms: empty sequence");
  std::vector<DepthMap> corrupted;
  corrupted.reserve(sequence.size());
  for (size_t i = 0; i < sequence.size(); ++i) corrupted.push_back(corrupt_depth(sequence[i], noise, static_cast<int>(i)));
  return mean_depth_metrics(corrupted, sequence, true).rms;
}

NoiseModel calibrate_noise(double target_rms, const std::vector<DepthMap>& sequence, NoiseModel base, double rel_tol) {
  if (!(target_rms > 0.0)) throw Error("calibrate_noise: target must be > 0");
  if (sequence.empty()) throw Error("calibrate_noise: empty sequence");
  base.validate();
  auto rms_at = [&](double sigma) {
    NoiseModel m = base;
    m.multiplicative_sigma = sigma;
    return measure_noise_rms(m, sequence);
  };

  const double floor_rms = rms_at(0.0);
  if (floor_rms > target_rms * (1.0 + rel_tol)) {
    throw Error("calibrate_noise: additive noise alone exceeds the target rms");
  }
  if (std::abs(floor_rms - target_rms) <= rel_tol * target_rms) {
    base.multiplicative_sigma = 0.0;
    return base;
  }

  double lo = 0.0, hi = 0.05;
  double rms_hi = rms_at(hi);
  while (rms_hi < target_rms) {
    lo = hi;
    hi *= 2.0;
    if (hi > 64.0) throw Error("calibrate_noise: target rms is not reachable");
    rms_hi = rms_at(hi);
  }
  if (std::abs(rms_hi - target_rms) <= rel_tol * target_rms) {
    base.multiplicative_sigma = hi;
    return base;
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double rms = rms_at(mid);
    if (std::abs(rms - target_rms) <= rel_tol * target_rms) {
      base.multiplicative_sigma = mid;
      return base;
    }
    (rms < target_rms ? lo : hi) = mid;
  }
  throw Error("calibrate_noise: bisection did not converge");
}

}  // namespace endofuse
