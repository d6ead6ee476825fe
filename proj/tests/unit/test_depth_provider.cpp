#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "endofuse/dataset.hpp"
#include "endofuse/depth_provider.hpp"

namespace endofuse {
namespace {

namespace fs = std::filesystem;

// Tilted plane with a hole, so every test sees invalid pixels.
DepthMap plane_with_hole(int w, int h, double base = 0.05) {
  DepthMap d(w, h, 0.0f);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double du = u - w / 2.0, dv = v - h / 2.0;
      if (du * du + dv * dv < 36.0) continue;
      d(u, v) = static_cast<float>(base + 2e-4 * u + 1e-4 * v);
    }
  }
  return d;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("endofuse_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(ParseDepthSource, Kinds) {
  EXPECT_TRUE(std::holds_alternative<GroundTruthDepth>(parse_depth_source("gt").source));
  const auto ext = parse_depth_source("external:/tmp/x");
  ASSERT_TRUE(std::holds_alternative<ExternalDepth>(ext.source));
  EXPECT_EQ(std::get<ExternalDepth>(ext.source).directory, fs::path("/tmp/x"));

  const auto c = parse_depth_source("corrupted:sigma=0.1,additive=0.001,radius=4,scale=1.1,seed=3");
  ASSERT_TRUE(std::holds_alternative<CorruptedDepth>(c.source));
  const NoiseModel& n = std::get<CorruptedDepth>(c.source).noise;
  EXPECT_DOUBLE_EQ(n.multiplicative_sigma, 0.1);
  EXPECT_DOUBLE_EQ(n.additive_sigma, 0.001);
  EXPECT_EQ(n.smoothing_radius, 4);
  EXPECT_DOUBLE_EQ(n.scale_bias, 1.1);
  EXPECT_EQ(n.seed, 3u);
  EXPECT_EQ(c.calibration_target, 0.0);
  EXPECT_EQ(parse_depth_source(describe(c.source)).source.index(), c.source.index());
  EXPECT_EQ(describe(parse_depth_source(describe(c.source)).source), describe(c.source));

  EXPECT_DOUBLE_EQ(parse_depth_source("corrupted:rms=0.054").calibration_target, 0.054);
}

TEST(ParseDepthSource, Errors) {
  EXPECT_THROW(parse_depth_source("learned"), Error);
  EXPECT_THROW(parse_depth_source("external:"), Error);
  EXPECT_THROW(parse_depth_source("corrupted:sigma=abc"), Error);
  EXPECT_THROW(parse_depth_source("corrupted:bogus=1"), Error);
  EXPECT_THROW(parse_depth_source("corrupted:sigma=-1"), Error);
  EXPECT_THROW(parse_depth_source("corrupted:rms=0"), Error);
}

TEST(GaussianField, UnitStdAndBoxCorrelation) {
  const int w = 400, h = 400, r = 4;
  const double sigma = 0.3;
  double sq = 0.0, lag = 0.0;
  long n = 0, nl = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Image<float> f = smooth_gaussian_field(w, h, r, sigma, seed);
    for (int v = r; v < h - r; ++v) {
      for (int u = r; u < w - r - 1; ++u) {
        sq += f(u, v) * f(u, v);
        lag += f(u, v) * f(u + 1, v);
        ++n;
      }
    }
    nl = n;
  }
  const double var = sq / n;
  EXPECT_NEAR(std::sqrt(var), sigma, 0.05 * sigma);
  // Neighboring (2r+1)-wide boxes share 2r of their columns.
  EXPECT_NEAR(lag / nl / var, 2.0 * r / (2.0 * r + 1.0), 0.03);
}

TEST(GaussianField, ZeroSigmaIsZero) {
  const Image<float> f = smooth_gaussian_field(10, 10, 2, 0.0, 1);
  for (float x : f.data()) EXPECT_EQ(x, 0.0f);
}

TEST(CorruptDepth, NoiselessIsIdentityOnPlanesAndKeepsHoles) {
  const DepthMap gt = plane_with_hole(64, 48);
  NoiseModel m;
  m.smoothing_radius = 3;
  const DepthMap out = corrupt_depth(gt, m, 0);
  for (int v = 0; v < gt.height(); ++v) {
    for (int u = 0; u < gt.width(); ++u) {
      if (gt(u, v) == 0.0f) {
        EXPECT_EQ(out(u, v), 0.0f);
        continue;
      }
      // Averaging a linear function over a window that is symmetric about
      // the pixel reproduces it exactly; near holes and borders the window
      // is lopsided, so only check fully interior pixels tightly.
      bool interior = u >= 3 && v >= 3 && u < gt.width() - 3 && v < gt.height() - 3;
      for (int dv = -3; dv <= 3 && interior; ++dv) {
        for (int du = -3; du <= 3; ++du) interior = interior && gt(u + du, v + dv) > 0.0f;
      }
      if (interior) EXPECT_NEAR(out(u, v), gt(u, v), 1e-6);
      else EXPECT_NEAR(out(u, v), gt(u, v), 3 * 3e-4 * 1.5);
    }
  }
}

TEST(CorruptDepth, ScaleBias) {
  DepthMap gt(20, 20, 0.04f);
  NoiseModel m;
  m.scale_bias = 1.25;
  const DepthMap out = corrupt_depth(gt, m, 0);
  for (float d : out.data()) EXPECT_NEAR(d, 0.05f, 1e-7);
}

TEST(CorruptDepth, DeterministicPerFrame) {
  const DepthMap gt = plane_with_hole(64, 48);
  NoiseModel m;
  m.multiplicative_sigma = 0.2;
  m.additive_sigma = 0.002;
  m.seed = 9;
  EXPECT_EQ(corrupt_depth(gt, m, 3), corrupt_depth(gt, m, 3));
  EXPECT_FALSE(corrupt_depth(gt, m, 3) == corrupt_depth(gt, m, 4));
  const DepthMap out = corrupt_depth(gt, m, 3);
  long changed = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 0.0f) EXPECT_EQ(out[i], 0.0f);
    else changed += out[i] != gt[i];
    EXPECT_GE(out[i], 0.0f);
  }
  EXPECT_GT(changed, 2000);
}

// Independent scalar oracle for the normalized rms of a corrupted sequence.
double oracle_rms(const NoiseModel& m, const std::vector<DepthMap>& seq) {
  double total = 0.0;
  for (size_t f = 0; f < seq.size(); ++f) {
    const DepthMap c = corrupt_depth(seq[f], m, static_cast<int>(f));
    double gmax = 0.0;
    for (float g : seq[f].data()) gmax = std::max<double>(gmax, g);
    double sq = 0.0;
    long n = 0;
    for (size_t i = 0; i < c.size(); ++i) {
      if (seq[f][i] > 0.0f && c[i] > 0.0f) {
        const double e = (static_cast<double>(c[i]) - seq[f][i]) / gmax;
        sq += e * e;
        ++n;
      }
    }
    total += std::sqrt(sq / n);
  }
  return total / seq.size();
}

TEST(CalibrateNoise, HitsTargetWithinOnePercent) {
  std::vector<DepthMap> seq;
  for (int i = 0; i < 4; ++i) seq.push_back(plane_with_hole(80, 60, 0.05 + 0.002 * i));
  NoiseModel base;
  base.seed = 5;
  base.smoothing_radius = 4;
  const NoiseModel m = calibrate_noise(0.054, seq, base);
  EXPECT_GT(m.multiplicative_sigma, 0.0);
  EXPECT_EQ(m.seed, 5u);
  EXPECT_EQ(m.smoothing_radius, 4);
  const double rms = oracle_rms(m, seq);
  EXPECT_NEAR(rms, 0.054, 0.01 * 0.054);
  EXPECT_NEAR(measure_noise_rms(m, seq), rms, 1e-12);
}

TEST(CalibrateNoise, UnreachableFloorThrows) {
  std::vector<DepthMap> seq{plane_with_hole(40, 30)};
  NoiseModel base;
  base.additive_sigma = 0.05;  // already far above the target on its own
  EXPECT_THROW(calibrate_noise(0.01, seq, base), Error);
  EXPECT_THROW(calibrate_noise(0.0, seq), Error);
  EXPECT_THROW(calibrate_noise(0.05, {}), Error);
}

TEST(ProvideDepth, GroundTruthPassesThrough) {
  const DepthMap gt = plane_with_hole(16, 12);
  EXPECT_EQ(provide_depth(GroundTruthDepth{}, 0, gt), gt);
}

TEST(ProvideDepth, ExternalLoadsAndReportsMissingFrames) {
  const fs::path dir = temp_dir("external");
  fs::create_directories(dir / "depth");
  const DepthMap a = plane_with_hole(16, 12, 0.07);
  write_depth(dir / "depth" / "000000.dpt", a);
  write_depth(dir / "000001.dpt", plane_with_hole(16, 12, 0.08));  // flat layout also accepted
  write_depth(dir / "depth" / "000002.dpt", DepthMap(8, 8, 0.1f));
  const ExternalDepth src{dir};
  EXPECT_EQ(provide_depth(src, 0, DepthMap(16, 12)), a);
  EXPECT_EQ(provide_depth(src, 1, DepthMap(16, 12)), plane_with_hole(16, 12, 0.08));
  try {
    provide_depth(src, 7, DepthMap(16, 12));
    FAIL() << "expected an error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 7"), std::string::npos) << e.what();
  }
  try {
    provide_depth(src, 2, DepthMap(16, 12));
    FAIL() << "expected an error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 2"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

}  // namespace
}  // namespace endofuse
