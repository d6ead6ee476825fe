#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "endofuse/cli.hpp"
#include "endofuse/dataset.hpp"

namespace endofuse {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("endofuse_cli_" + name);
  fs::remove_all(p);
  return p;
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> small_camera() {
  return {"--camera.width", "160", "--camera.height", "120", "--camera.fx", "80", "--camera.fy", "80"};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Cli, GenerateIsReproducible) {
  const fs::path a = temp_dir("gen_a"), b = temp_dir("gen_b");
  for (const auto& dir : {a, b}) {
    const Result r = run(concat({"generate", "--seed", "3", "--difficulty", "curved", "--frames", "3", "--out",
                                 dir.string(), "--trajectory.jitter"},
                                small_camera()));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
  }
  const DatasetManifest m = read_manifest(a);
  EXPECT_EQ(m.n_frames, 3);
  EXPECT_EQ(m.intrinsics.width, 160);
  EXPECT_DOUBLE_EQ(m.intrinsics.cx, 79.5);
  EXPECT_EQ(m.difficulty, "curved");
  EXPECT_TRUE(fs::exists(rgb_path(a, 2)));
  EXPECT_TRUE(fs::exists(depth_path(a, 2)));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, RefusesNonEmptyOutputWithoutForce) {
  const fs::path dir = temp_dir("force");
  const auto args = concat({"generate", "--frames", "2", "--out", dir.string()}, small_camera());
  ASSERT_EQ(run(args).code, 0);
  const Result again = run(args);
  EXPECT_EQ(again.code, 1);
  EXPECT_NE(again.err.find("--force"), std::string::npos) << again.err;
  EXPECT_EQ(run(concat(args, {"--force"})).code, 0);
  fs::remove_all(dir);
}

TEST(Cli, VariantsShareGeometry) {
  const fs::path dir = temp_dir("variants");
  ASSERT_EQ(run(concat({"generate", "--frames", "2", "--variants", "3", "--out", dir.string()}, small_camera())).code,
            0);
  const Sequence s = read_sequence(dir);
  ASSERT_EQ(s.frames.size(), 6u);
  for (int v = 1; v < 3; ++v) {
    for (int t = 0; t < 2; ++t) {
      EXPECT_EQ(s.frames[v * 2 + t].depth, s.frames[t].depth);
      EXPECT_FALSE(s.frames[v * 2 + t].rgb == s.frames[t].rgb);
      EXPECT_EQ(s.poses[v * 2 + t].translation, s.poses[t].translation);
    }
  }
  EXPECT_EQ(s.manifest.sequence_length, 2);
  fs::remove_all(dir);
}

TEST(Cli, MultiSceneSplitIsSceneDisjoint) {
  const fs::path dir = temp_dir("split");
  ASSERT_EQ(run(concat({"generate", "--frames", "1", "--scenes", "5", "--out", dir.string()}, small_camera())).code, 0);
  const DatasetManifest m = read_manifest(dir);
  ASSERT_EQ(m.n_frames, 5);
  EXPECT_EQ(m.split.back(), SplitTag::kVal);
  EXPECT_EQ(m.split.front(), SplitTag::kTrain);
  EXPECT_DOUBLE_EQ(m.val_fraction, 0.2);
  fs::remove_all(dir);
}

TEST(Cli, ConfigFileErrors) {
  const fs::path dir = temp_dir("config");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "bad_key.json") << R"({"scene.seeed": 1})";
    std::ofstream(dir / "bad_type.json") << R"({"trajectory.frames": "ten"})";
    std::ofstream(dir / "good.json") << R"({"trajectory.frames": 2, "camera.width": 160, "camera.height": 120,
                                           "camera.fx": 80, "camera.fy": 80, "output.dir": ")"
                                     << (dir / "out").string() << R"("})";
  }
  Result r = run({"generate", "--config", (dir / "bad_key.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("scene.seeed"), std::string::npos) << r.err;
  r = run({"generate", "--config", (dir / "bad_type.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("trajectory.frames"), std::string::npos) << r.err;
  r = run({"generate", "--config", (dir / "good.json").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_manifest(dir / "out").n_frames, 2);
  // Flags override the file.
  r = run({"generate", "--config", (dir / "good.json").string(), "--frames", "3", "--force"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_manifest(dir / "out").n_frames, 3);
  EXPECT_NE(run({"generate", "--no-such-flag"}).code, 0);
  EXPECT_NE(run({"generate", "--frames", "-2", "--out", (dir / "neg").string()}).code, 0);
  fs::remove_all(dir);
}

TEST(Cli, ApplyConfigRoundTrip) {
  RunConfig c;
  apply_config(c, json{{"scene.seed", 7}, {"tracking.w_rgb", 0.2}, {"depth.source", "corrupted:sigma=0.1"}});
  EXPECT_EQ(c.seed, 7u);
  EXPECT_DOUBLE_EQ(c.pipeline.tracking.w_rgb, 0.2);
  RunConfig d;
  apply_config(d, to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));
  EXPECT_THROW(apply_config(c, json{{"tracking.w_rgb", "x"}}), Error);
  EXPECT_THROW(apply_config(c, json::array()), Error);
}

TEST(Cli, FuseAndEvalEndToEnd) {
  const fs::path data = temp_dir("e2e_data"), out = temp_dir("e2e_run");
  // Enough frames for surfels to pass the stability threshold.
  ASSERT_EQ(run({"generate", "--frames", "14", "--out", data.string()}).code, 0);
  Result r = run({"fuse", "--data", data.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"map.ply", "trajectory.txt", "run.json", "telemetry.jsonl"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  r = run({"eval", "--run", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = json::parse(slurp(out / "metrics.json"));
  EXPECT_EQ(m["frames"], 14);
  EXPECT_LT(m["ate_rmse"].get<double>(), 1e-4);
  EXPECT_LT(m["surface_error"]["mean"].get<double>(), 1e-4);
  EXPECT_EQ(m["depth"]["rms"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(out / "ate.csv"));

  // Corrupted depth is written next to the run and scored against truth.
  const fs::path noisy = temp_dir("e2e_noisy");
  r = run({"fuse", "--data", data.string(), "--out", noisy.string(), "--depth",
           "corrupted:sigma=0.001,radius=2,seed=1", "--fuse.max_frames", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"eval", "--run", noisy.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json mn = json::parse(slurp(noisy / "metrics.json"));
  EXPECT_EQ(mn["frames"], 3);
  EXPECT_GT(mn["depth"]["rms"].get<double>(), 0.0);
  fs::remove_all(data);
  fs::remove_all(out);
  fs::remove_all(noisy);
}

TEST(Cli, EvalListsMissingInputs) {
  const fs::path dir = temp_dir("missing");
  fs::create_directories(dir);
  const Result r = run({"eval", "--run", dir.string()});
  EXPECT_EQ(r.code, 1);
  for (const char* f : {"run.json", "trajectory.txt", "map.ply", "--data"}) {
    EXPECT_NE(r.err.find(f), std::string::npos) << f << " in " << r.err;
  }
  fs::remove_all(dir);
}

TEST(Cli, FuseMissingDatasetFails) {
  const Result r = run({"fuse", "--data", temp_dir("nodata").string(), "--out", temp_dir("nodata_out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, BinaryRuns) {
  const std::string cmd = std::string(ENDOFUSE_CLI_PATH) + " --help > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  const std::string bad = std::string(ENDOFUSE_CLI_PATH) + " frobnicate > /dev/null 2>&1";
  EXPECT_NE(std::system(bad.c_str()), 0);
}

}  // namespace
}  // namespace endofuse
