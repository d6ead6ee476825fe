#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "endofuse/types.hpp"

namespace endofuse {

class IoError : public Error {
 public:
  using Error::Error;
};

enum class SplitTag { kTrain, kVal };

struct DatasetManifest {
  std::string name = "sequence";
  int n_frames = 0;
  CameraIntrinsics intrinsics;
  std::string depth_unit = "meters";
  std::vector<SplitTag> split;  // indexed by frame
  std::uint64_t scene_seed = 0;
  std::string difficulty = "straight";
  std::vector<std::uint64_t> appearance_seeds;
  /// Scene seed of every frame; multi-scene datasets need it for splits.
  std::vector<std::uint64_t> frame_scene_seeds;
  double val_fraction = 0.0;
  /// Frames per contiguous camera path (one scene variant); 0 means the
  /// whole dataset is one path.
  int sequence_length = 0;

  /// Split covers all frames; stored val_fraction matches the split within 2%.
  void validate() const;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

struct Sequence {
  std::vector<Frame> frames;
  std::vector<Pose> poses;
  DatasetManifest manifest;
};

/// Binary depth: "DPTH", u32 width, u32 height, u32 reserved, then
/// little-endian float32 rows.
void write_depth(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_depth(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const RgbImage& rgb);
RgbImage read_png(const std::filesystem::path& path);

/// One line per frame: index tx ty tz qw qx qy qz.
void write_poses(const std::filesystem::path& path, const std::vector<Pose>& poses);
std::vector<Pose> read_poses(const std::filesystem::path& path);

std::filesystem::path rgb_path(const std::filesystem::path& dir, int index);
std::filesystem::path depth_path(const std::filesystem::path& dir, int index);

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& dir);

void write_sequence(const std::vector<Frame>& frames, const std::vector<Pose>& poses, const DatasetManifest& manifest,
                    const std::filesystem::path& dir);
Sequence read_sequence(const std::filesystem::path& dir);

struct Split {
  std::vector<SplitTag> tags;
  double val_fraction = 0.0;
};

/// Every frame of a held-out scene goes to val, the rest to train.
Split make_split(const std::vector<std::uint64_t>& frame_scene_seeds, const std::vector<std::uint64_t>& holdout_scene_seeds);

}  // namespace endofuse
