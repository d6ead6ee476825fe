#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "endofuse/dataset.hpp"
#include "endofuse/pipeline.hpp"

namespace endofuse {

/// Every field has a flat dotted key usable both in a JSON config file and,
/// where listed in the README, as a command-line flag.
struct RunConfig {
  // generate
  std::uint64_t seed = 0;                 // scene.seed
  std::string difficulty = "straight";    // scene.difficulty
  int scenes = 1;                         // scene.count
  int variants = 1;                       // scene.variants
  double holdout_fraction = 0.2;          // split.holdout_fraction
  int frames = 50;                        // trajectory.frames
  double advance = 5e-4;                  // trajectory.advance
  double start_arclength = 0.03;          // trajectory.start_arclength
  bool jitter = false;                    // trajectory.jitter
  CameraIntrinsics intrinsics;            // camera.width, camera.height, camera.fx, camera.fy
  double max_range = 0.3;                 // render.max_range

  // fuse
  std::filesystem::path data;             // fuse.data
  std::string depth = "gt";               // depth.source
  int first_frame = 0;                    // fuse.first_frame
  int max_frames = 0;                     // fuse.max_frames, 0 = all
  bool include_unstable = false;          // fuse.include_unstable
  PipelineConfig pipeline;                // tracking.*, fusion.*

  // eval
  std::filesystem::path run;              // eval.run
  bool normalize = true;                  // eval.normalize

  std::filesystem::path out;              // output.dir
  bool force = false;                     // output.force

  void validate() const;
};

/// Applies flat dotted keys; unknown keys and ill-typed values throw.
void apply_config(RunConfig& config, const nlohmann::json& flat);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// Manifest and per-frame scene layout of a dataset, without rendering.
/// Frames are ordered scene-major, then variant, then time.
DatasetManifest plan_dataset(const RunConfig& config);

void cmd_generate(const RunConfig& config, std::ostream& log);
/// Returns the number of processed frames. Throws TrackingAbort after
/// writing partial outputs.
int cmd_fuse(const RunConfig& config, std::ostream& log);
nlohmann::json cmd_eval(const RunConfig& config, std::ostream& log);

/// Entry point of the command-line tool; returns the process exit code
/// (0 success, 1 usage or input error, 2 tracking abort).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace endofuse
