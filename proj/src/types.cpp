#include "endofuse/types.hpp"

#include <cmath>
#include <string>

namespace endofuse {

Pose Pose::exp(const Vec6& twist) {
  const Vec3 v = twist.head<3>();
  const Vec3 w = twist.tail<3>();
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 W = skew(w);
  const Mat3 W2 = W * W;

  double a, b, c;
  if (theta < 1e-6) {
    // Taylor expansions of sin(t)/t, (1-cos t)/t^2, (t - sin t)/t^3.
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
    c = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }
  Pose out;
  out.rotation = Mat3::Identity() + a * W + b * W2;
  out.translation = (Mat3::Identity() + b * W + c * W2) * v;
  return out;
}

Vec6 Pose::log() const {
  const Eigen::AngleAxisd aa(rotation);
  const double theta = aa.angle();
  const Vec3 w = aa.axis() * theta;
  const Mat3 W = skew(w);
  Mat3 v_inv;
  if (theta < 1e-6) {
    v_inv = Mat3::Identity() - 0.5 * W + W * W / 12.0;
  } else {
    const double half = 0.5 * theta;
    const double k = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
    v_inv = Mat3::Identity() - 0.5 * W + k * W * W;
  }
  Vec6 out;
  out.head<3>() = v_inv * translation;
  out.tail<3>() = w;
  return out;
}

void Pose::orthonormalize() {
  rotation = Eigen::Quaterniond(rotation).normalized().toRotationMatrix();
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Pose Pose::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  Pose out;
  out.rotation = q.normalized().toRotationMatrix();
  out.translation = t;
  return out;
}

double rotation_angle(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  // acos loses precision near zero; use the skew part there.
  const Vec3 s(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * s.norm(), c);
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw Error("intrinsics: principal point outside the image");
  }
}

CameraIntrinsics CameraIntrinsics::halved() const {
  CameraIntrinsics out = *this;
  out.fx = fx * 0.5;
  out.fy = fy * 0.5;
  out.cx = cx * 0.5;
  out.cy = cy * 0.5;
  out.width = (width + 1) / 2;
  out.height = (height + 1) / 2;
  return out;
}

Vec3 back_project(double u, double v, double depth, const CameraIntrinsics& intr) {
  if (!(depth > 0.0)) throw Error("back_project: depth must be positive, got " + std::to_string(depth));
  return {(u - intr.cx) / intr.fx * depth, (v - intr.cy) / intr.fy * depth, depth};
}

void Frame::validate() const {
  if (rgb.width() != depth.width() || rgb.height() != depth.height()) {
    throw Error("frame " + std::to_string(frame_index) + ": rgb and depth sizes differ");
  }
  for (size_t i = 0; i < depth.size(); ++i) {
    const float d = depth[i];
    if (!std::isfinite(d) || d < 0.0f) {
      throw Error("frame " + std::to_string(frame_index) + ": invalid depth value");
    }
    const Rgb& c = rgb[i];
    if (!c.allFinite() || c.minCoeff() < 0.0f || c.maxCoeff() > 1.0f) {
      throw Error("frame " + std::to_string(frame_index) + ": rgb outside [0,1]");
    }
  }
}

}  // namespace endofuse
