#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "endofuse/types.hpp"

namespace endofuse {

/// Spatially correlated corruption of ground-truth depth, standing in for
/// the error of a learned depth estimator.
struct NoiseModel {
  double multiplicative_sigma = 0.0;
  double additive_sigma = 0.0;  // meters
  int smoothing_radius = 8;     // pixels
  double scale_bias = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruthDepth {};
struct CorruptedDepth {
  NoiseModel noise;
};
struct ExternalDepth {
  std::filesystem::path directory;
};

using DepthSource = std::variant<GroundTruthDepth, CorruptedDepth, ExternalDepth>;

/// Parses "gt", "corrupted:sigma=0.1,additive=0.001,radius=8,scale=1,seed=3",
/// or "external:<dir>". A "corrupted:rms=<target>" spec is returned with
/// `calibration_target` set; the caller calibrates against its sequence.
struct DepthSourceSpec {
  DepthSource source;
  double calibration_target = 0.0;
};
DepthSourceSpec parse_depth_source(const std::string& spec);
std::string describe(const DepthSource& source);

/// Zero-mean Gaussian field box-filtered over (2r+1)^2 pixels and rescaled
/// so every pixel has standard deviation `sigma`.
Image<float> smooth_gaussian_field(int width, int height, int radius, double sigma, std::uint64_t seed);

/// Applies the noise model to a depth map. Invalid (0) pixels stay invalid;
/// deterministic per (noise.seed, frame_index).
DepthMap corrupt_depth(const DepthMap& gt, const NoiseModel& noise, int frame_index);

DepthMap provide_depth(const DepthSource& source, int frame_index, const DepthMap& gt_depth);

/// Mean per-frame normalized-depth rms of the corrupted sequence.
double measure_noise_rms(const NoiseModel& noise, const std::vector<DepthMap>& sequence);

/// Bisection over multiplicative_sigma so the corrupted sequence reaches
/// `target_rms` (normalized depth) within `rel_tol`. Other fields of
/// `base` are kept.
NoiseModel calibrate_noise(double target_rms, const std::vector<DepthMap>& sequence, NoiseModel base = {},
                           double rel_tol = 0.01);

}  // namespace endofuse
