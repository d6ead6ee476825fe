#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace endofuse {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Rgb = Eigen::Vector3f;

inline Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return s;
}

/// Rigid transform in SE(3). Frame poses use the camera-from-world
/// convention: x_cam = rotation * x_world + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  /// Exponential map of a twist (v, w): translation part first.
  static Pose exp(const Vec6& twist);

  /// Inverse of exp; returns (v, w).
  Vec6 log() const;

  Pose inverse() const {
    Pose out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  Pose operator*(const Pose& other) const {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  /// Camera center in world coordinates (for camera-from-world poses).
  Vec3 center() const { return -(rotation.transpose() * translation); }

  /// Projects the rotation back onto SO(3).
  void orthonormalize();

  /// rotation^T rotation = I and det = 1, both within `tol`.
  bool is_valid(double tol = 1e-9) const;

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation); }
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);
};

/// Rotation angle (radians) of the relative rotation between two poses.
double rotation_angle(const Mat3& r);

struct CameraIntrinsics {
  double fx = 160.0;
  double fy = 160.0;
  double cx = 159.5;
  double cy = 119.5;
  int width = 320;
  int height = 240;

  /// fx, fy > 0 and principal point inside the image.
  void validate() const;

  /// Intrinsics of the image subsampled by taking every second pixel.
  CameraIntrinsics halved() const;

  Eigen::Vector2d project(const Vec3& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
  /// Direction through pixel (u, v) with unit z component.
  Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
};

/// Returns ((u - cx) / fx * d, (v - cy) / fy * d, d). Throws for d <= 0.
Vec3 back_project(double u, double v, double depth, const CameraIntrinsics& intr);

/// Dense row-major image.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, const T& fill = T{})
      : width_(width), height_(height), data_(static_cast<size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x]; }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Image& o) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Depth in meters; 0 marks an invalid pixel.
using DepthMap = Image<float>;
using RgbImage = Image<Rgb>;
using Mask = Image<std::uint8_t>;
/// Zero vector marks an invalid normal.
using NormalMap = Image<Eigen::Vector3f>;

struct Frame {
  RgbImage rgb;
  DepthMap depth;
  int frame_index = 0;

  /// Finite values, rgb in [0,1], depth >= 0, matching dimensions.
  void validate() const;
};

inline float luminance(const Rgb& c) { return 0.299f * c.x() + 0.587f * c.y() + 0.114f * c.z(); }

}  // namespace endofuse
