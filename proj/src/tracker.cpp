#include "endofuse/tracker.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace endofuse {

namespace {

constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();

// Huber IRLS weight for a residual already divided by its threshold.
double huber_weight(double r) {
  const double a = std::abs(r);
  return a <= 1.0 ? 1.0 : 1.0 / a;
}

double huber_cost(double r) {
  const double a = std::abs(r);
  return a <= 1.0 ? 0.5 * r * r : a - 0.5;
}

// [1 2 1]/4 blur that ignores NaN samples, then keeps every second pixel.
std::vector<float> blur_subsample(const std::vector<float>& img, int w, int h, int w2, int h2) {
  std::vector<float> out(static_cast<size_t>(w2) * h2, kNaN);
  static constexpr float k[3] = {0.25f, 0.5f, 0.25f};
  for (int v2 = 0; v2 < h2; ++v2) {
    for (int u2 = 0; u2 < w2; ++u2) {
      const int u = 2 * u2, v = 2 * v2;
      if (std::isnan(img[static_cast<size_t>(v) * w + u])) continue;
      float sum = 0.0f, wsum = 0.0f;
      for (int dv = -1; dv <= 1; ++dv) {
        for (int du = -1; du <= 1; ++du) {
          const int x = u + du, y = v + dv;
          if (x < 0 || y < 0 || x >= w || y >= h) continue;
          const float s = img[static_cast<size_t>(y) * w + x];
          if (std::isnan(s)) continue;
          const float wt = k[du + 1] * k[dv + 1];
          sum += wt * s;
          wsum += wt;
        }
      }
      out[static_cast<size_t>(v2) * w2 + u2] = sum / wsum;
    }
  }
  return out;
}

template <typename T>
std::vector<T> subsample(const std::vector<T>& img, int w, int w2, int h2) {
  std::vector<T> out(static_cast<size_t>(w2) * h2);
  for (int v2 = 0; v2 < h2; ++v2) {
    for (int u2 = 0; u2 < w2; ++u2) out[static_cast<size_t>(v2) * w2 + u2] = img[static_cast<size_t>(2 * v2) * w + 2 * u2];
  }
  return out;
}

}  // namespace

TrackingLevel::TrackingLevel(const ModelView& model, const Frame& current, const Mask& specular,
                             const TrackingConfig& config)
    : config_(config), intr_(model.intrinsics) {
  const int w = intr_.width, h = intr_.height;
  if (current.depth.width() != w || current.depth.height() != h || current.rgb.width() != w ||
      current.rgb.height() != h) {
    throw Error("track: current frame does not match the predicted view size");
  }
  if (model.depth.width() != w || model.depth.height() != h) throw Error("track: predicted view has the wrong size");
  if (!specular.empty() && (specular.width() != w || specular.height() != h)) {
    throw Error("track: specular mask has the wrong size");
  }
  const size_t n = static_cast<size_t>(w) * h;
  cur_points_.assign(n, Vec3::Zero());
  cur_normals_.assign(n, Vec3::Zero());
  cur_intensity_.assign(n, kNaN);
  cur_valid_.assign(n, 0);
  cur_photo_.assign(n, 0);
  cur_masked_.assign(n, 0);
  model_points_.assign(n, Vec3::Zero());
  model_normals_.assign(n, Vec3::Zero());
  model_intensity_.assign(n, kNaN);

  const NormalMap normals = compute_normals(current.depth, intr_);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const size_t i = static_cast<size_t>(v) * w + u;
      const float d = current.depth(u, v);
      if (d > 0.0f && normals(u, v).squaredNorm() > 0.0f) {
        cur_points_[i] = back_project(u, v, d, intr_);
        cur_normals_[i] = normals(u, v).cast<double>();
        cur_valid_[i] = 1;
        ++valid_pixels_;
        const float lum = luminance(current.rgb(u, v));
        cur_masked_[i] = !specular.empty() && specular(u, v);
        if (lum >= config_.min_luminance && lum <= config_.max_luminance && !cur_masked_[i]) {
          const Rgb norm = shading_normalized(Rgb::Constant(lum), cur_points_[i], cur_normals_[i],
                                              config_.light_intensity, config_.min_cos);
          cur_intensity_[i] = std::clamp(norm.x(), 0.0f, 1.0f);  // as stored in surfel colors
          cur_photo_[i] = 1;
        }
      }
      if (model.valid(u, v)) {
        model_points_[i] = back_project(u, v, model.depth(u, v), intr_);
        model_normals_[i] = model.normals(u, v).cast<double>();
        model_intensity_[i] = luminance(model.color(u, v));
      }
    }
  }
}

TrackingLevel TrackingLevel::downsampled() const {
  TrackingLevel out;
  out.config_ = config_;
  out.intr_ = intr_.halved();
  const int w = intr_.width, h = intr_.height, w2 = out.intr_.width, h2 = out.intr_.height;
  out.cur_points_ = subsample(cur_points_, w, w2, h2);
  out.cur_normals_ = subsample(cur_normals_, w, w2, h2);
  out.cur_valid_ = subsample(cur_valid_, w, w2, h2);
  out.cur_photo_ = subsample(cur_photo_, w, w2, h2);
  out.cur_masked_ = subsample(cur_masked_, w, w2, h2);
  out.cur_intensity_ = blur_subsample(cur_intensity_, w, h, w2, h2);
  out.model_points_ = subsample(model_points_, w, w2, h2);
  out.model_normals_ = subsample(model_normals_, w, w2, h2);
  out.model_intensity_ = blur_subsample(model_intensity_, w, h, w2, h2);
  out.valid_pixels_ = std::count(out.cur_valid_.begin(), out.cur_valid_.end(), 1);
  return out;
}

bool TrackingLevel::model_intensity(double u, double v, double& value, Eigen::Vector2d& grad) const {
  const int w = intr_.width, h = intr_.height;
  const int u0 = static_cast<int>(std::floor(u)), v0 = static_cast<int>(std::floor(v));
  if (u0 < 0 || v0 < 0 || u0 + 1 >= w || v0 + 1 >= h) return false;
  const size_t i = static_cast<size_t>(v0) * w + u0;
  const double i00 = model_intensity_[i], i10 = model_intensity_[i + 1];
  const double i01 = model_intensity_[i + static_cast<size_t>(w)], i11 = model_intensity_[i + static_cast<size_t>(w) + 1];
  if (std::isnan(i00) || std::isnan(i10) || std::isnan(i01) || std::isnan(i11)) return false;
  const double a = u - u0, b = v - v0;
  value = (1 - a) * (1 - b) * i00 + a * (1 - b) * i10 + (1 - a) * b * i01 + a * b * i11;
  grad.x() = (1 - b) * (i10 - i00) + b * (i11 - i01);
  grad.y() = (1 - a) * (i01 - i00) + a * (i11 - i10);
  return true;
}

std::vector<TrackingLevel::Association> TrackingLevel::associate(const Pose& model_from_current) const {
  const int w = intr_.width, h = intr_.height;
  const double cos_gate = std::cos(config_.max_normal_angle_deg * std::numbers::pi / 180.0);
  const double max_d2 = config_.max_association_distance * config_.max_association_distance;
  std::vector<Association> out;
  out.reserve(static_cast<size_t>(valid_pixels_));
  for (size_t i = 0; i < cur_valid_.size(); ++i) {
    if (!cur_valid_[i]) continue;
    const Vec3 q = model_from_current * cur_points_[i];
    if (q.z() <= 0.0) continue;
    const Eigen::Vector2d px = intr_.project(q);
    const int u = static_cast<int>(std::lround(px.x())), v = static_cast<int>(std::lround(px.y()));
    if (u < 0 || v < 0 || u >= w || v >= h) continue;
    const size_t m = static_cast<size_t>(v) * w + u;
    if (std::isnan(model_intensity_[m])) continue;
    if ((q - model_points_[m]).squaredNorm() > max_d2) continue;
    if ((model_from_current.rotation * cur_normals_[i]).dot(model_normals_[m]) < cos_gate) continue;
    Association a;
    a.current_pixel = static_cast<int>(i);
    a.model_pixel = static_cast<int>(m);
    a.photometric = config_.use_photometric && cur_photo_[i];
    out.push_back(a);
  }
  return out;
}

void TrackingLevel::geometric_terms(const Pose& model_from_current, const std::vector<Association>& assoc,
                                    Eigen::VectorXd& r, Eigen::MatrixXd& J) const {
  r.resize(static_cast<Eigen::Index>(assoc.size()));
  J.resize(static_cast<Eigen::Index>(assoc.size()), 6);
  for (size_t k = 0; k < assoc.size(); ++k) {
    const auto e = static_cast<Eigen::Index>(k);
    const Vec3 q = model_from_current * cur_points_[static_cast<size_t>(assoc[k].current_pixel)];
    const Vec3& vm = model_points_[static_cast<size_t>(assoc[k].model_pixel)];
    const Vec3& nm = model_normals_[static_cast<size_t>(assoc[k].model_pixel)];
    r(e) = (q - vm).dot(nm);
    J.block<1, 3>(e, 0) = nm.transpose();
    J.block<1, 3>(e, 3) = q.cross(nm).transpose();
  }
}

void TrackingLevel::photometric_terms(const Pose& model_from_current, const std::vector<Association>& assoc,
                                      Eigen::VectorXd& r, Eigen::MatrixXd& J) const {
  std::vector<double> rs;
  std::vector<Eigen::Matrix<double, 1, 6>> js;
  for (const Association& a : assoc) {
    if (!a.photometric) continue;
    const Vec3 q = model_from_current * cur_points_[static_cast<size_t>(a.current_pixel)];
    const Eigen::Vector2d px = intr_.project(q);
    double value;
    Eigen::Vector2d grad;
    if (!model_intensity(px.x(), px.y(), value, grad)) continue;
    const double iz = 1.0 / q.z();
    Eigen::Matrix<double, 2, 3> dpi;
    dpi << intr_.fx * iz, 0.0, -intr_.fx * q.x() * iz * iz, 0.0, intr_.fy * iz, -intr_.fy * q.y() * iz * iz;
    Eigen::Matrix<double, 3, 6> dq;
    dq.leftCols<3>().setIdentity();
    dq.rightCols<3>() = -skew(q);
    rs.push_back(cur_intensity_[static_cast<size_t>(a.current_pixel)] - value);
    js.push_back(-grad.transpose() * dpi * dq);
  }
  r.resize(static_cast<Eigen::Index>(rs.size()));
  J.resize(static_cast<Eigen::Index>(rs.size()), 6);
  for (size_t k = 0; k < rs.size(); ++k) {
    r(static_cast<Eigen::Index>(k)) = rs[k];
    J.row(static_cast<Eigen::Index>(k)) = js[k];
  }
}

TrackingLevel::Linearization TrackingLevel::linearize(const Pose& model_from_current) const {
  Linearization lin;
  const auto assoc = associate(model_from_current);
  Eigen::VectorXd r;
  Eigen::MatrixXd J;

  geometric_terms(model_from_current, assoc, r, J);
  const double sg = 1.0 / config_.huber_geo;
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    const double rn = r(k) * sg;
    const double wt = huber_weight(rn);
    const Vec6 j = J.row(k).transpose() * sg;
    lin.hessian.noalias() += wt * j * j.transpose();
    lin.gradient.noalias() += wt * rn * j;
    lin.cost += huber_cost(rn);
    if (std::abs(rn) < 3.0) ++lin.inliers;
  }
  lin.geometric = r.size();

  for (const Association& a : assoc) {
    if (cur_masked_[static_cast<size_t>(a.current_pixel)]) ++lin.masked;
  }
  if (config_.use_photometric && config_.w_rgb > 0.0) {
    photometric_terms(model_from_current, assoc, r, J);
    const double sp = 1.0 / config_.huber_photo;
    for (Eigen::Index k = 0; k < r.size(); ++k) {
      const double rn = r(k) * sp;
      const double wt = config_.w_rgb * huber_weight(rn);
      const Vec6 j = J.row(k).transpose() * sp;
      lin.hessian.noalias() += wt * j * j.transpose();
      lin.gradient.noalias() += wt * rn * j;
      lin.cost += config_.w_rgb * huber_cost(rn);
    }
    lin.photometric = r.size();
  }
  return lin;
}

TrackingResult track(const ModelView& predicted, const Frame& current, const Pose& init, const TrackingConfig& config,
                     const Mask& specular) {
  if (config.pyramid_levels < 1) throw Error("track: pyramid_levels must be >= 1");
  std::vector<TrackingLevel> levels;
  levels.emplace_back(predicted, current, specular, config);
  for (int l = 1; l < config.pyramid_levels; ++l) levels.push_back(levels.back().downsampled());

  // Unknown: transform from the current camera to the predicted view's camera.
  Pose t = predicted.pose * init.inverse();
  TrackingResult result;
  bool degenerate = false;
  for (int l = config.pyramid_levels - 1; l >= 0; --l) {
    const TrackingLevel& level = levels[static_cast<size_t>(l)];
    for (int it = 0; it < config.max_iterations; ++it) {
      const auto lin = level.linearize(t);
      ++result.iterations;
      if (lin.geometric < 6) {
        degenerate = true;
        break;
      }
      Mat6 hess = lin.hessian;
      hess.diagonal() += 1e-9 * hess.diagonal().cwiseAbs() + Vec6::Constant(1e-12);
      const Vec6 step = hess.ldlt().solve(-lin.gradient);
      if (!step.allFinite()) {
        degenerate = true;
        break;
      }
      t = Pose::exp(step) * t;
      t.orthonormalize();
      if (step.norm() < config.update_tolerance) break;
    }
    if (degenerate) break;
  }

  const auto final_lin = levels.front().linearize(t);
  result.final_cost = final_lin.cost;
  result.geometric_terms = final_lin.geometric;
  result.photometric_terms = final_lin.photometric;
  result.photometric_masked = final_lin.masked;
  const long valid = levels.front().valid_pixels();
  result.inlier_fraction = valid > 0 ? static_cast<double>(final_lin.inliers) / static_cast<double>(valid) : 0.0;
  result.pose = t.inverse() * predicted.pose;
  result.pose.orthonormalize();

  const Eigen::SelfAdjointEigenSolver<Mat6> eig(final_lin.hessian);
  const double min_eig = eig.eigenvalues().minCoeff();
  result.converged = !degenerate && result.pose.translation.allFinite() && min_eig > 0.0 &&
                     result.inlier_fraction >= config.min_inlier_fraction;
  if (!result.converged) result.pose = init;
  return result;
}

}  // namespace endofuse
