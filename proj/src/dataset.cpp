#include "endofuse/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace endofuse {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "depth files are written in native little-endian order");

namespace {

constexpr char kDepthMagic[4] = {'D', 'P', 'T', 'H'};
constexpr std::uint32_t kMaxDim = 1u << 15;

void ensure_parent(const fs::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
}

}  // namespace

void DatasetManifest::validate() const {
  if (n_frames < 0) throw IoError("manifest: n_frames must be >= 0");
  intrinsics.validate();
  if (depth_unit != "meters") throw IoError("manifest: unsupported depth_unit '" + depth_unit + "'");
  if (static_cast<int>(split.size()) != n_frames) {
    throw IoError("manifest: split covers " + std::to_string(split.size()) + " frames, expected " +
                  std::to_string(n_frames));
  }
  if (!frame_scene_seeds.empty() && static_cast<int>(frame_scene_seeds.size()) != n_frames) {
    throw IoError("manifest: frame_scene_seeds has the wrong length");
  }
  if (sequence_length < 0 || (sequence_length > 0 && n_frames % sequence_length != 0)) {
    throw IoError("manifest: sequence_length must divide n_frames");
  }
  if (val_fraction > 0.0 && n_frames > 0) {
    const double actual =
        static_cast<double>(std::count(split.begin(), split.end(), SplitTag::kVal)) / static_cast<double>(n_frames);
    if (std::abs(actual - val_fraction) > 0.02) {
      throw IoError("manifest: split val fraction " + std::to_string(actual) + " differs from configured " +
                    std::to_string(val_fraction) + " by more than 2%");
    }
  }
}

json to_json(const DatasetManifest& m) {
  json split = json::object();
  for (size_t i = 0; i < m.split.size(); ++i) split[std::to_string(i)] = m.split[i] == SplitTag::kVal ? "val" : "train";
  return json{
      {"name", m.name},
      {"n_frames", m.n_frames},
      {"intrinsics",
       {{"fx", m.intrinsics.fx},
        {"fy", m.intrinsics.fy},
        {"cx", m.intrinsics.cx},
        {"cy", m.intrinsics.cy},
        {"width", m.intrinsics.width},
        {"height", m.intrinsics.height}}},
      {"depth_unit", m.depth_unit},
      {"pose_convention", "camera_from_world"},
      {"quaternion_order", "wxyz"},
      {"split", split},
      {"scene_seed", m.scene_seed},
      {"difficulty", m.difficulty},
      {"appearance_seeds", m.appearance_seeds},
      {"frame_scene_seeds", m.frame_scene_seeds},
      {"val_fraction", m.val_fraction},
      {"sequence_length", m.sequence_length},
  };
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    m.name = j.value("name", m.name);
    m.n_frames = j.at("n_frames").get<int>();
    const json& in = j.at("intrinsics");
    m.intrinsics.fx = in.at("fx").get<double>();
    m.intrinsics.fy = in.at("fy").get<double>();
    m.intrinsics.cx = in.at("cx").get<double>();
    m.intrinsics.cy = in.at("cy").get<double>();
    m.intrinsics.width = in.at("width").get<int>();
    m.intrinsics.height = in.at("height").get<int>();
    m.depth_unit = j.value("depth_unit", m.depth_unit);
    m.split.assign(static_cast<size_t>(std::max(0, m.n_frames)), SplitTag::kTrain);
    if (j.contains("split")) {
      std::vector<bool> seen(m.split.size(), false);
      for (const auto& [key, value] : j.at("split").items()) {
        const int idx = std::stoi(key);
        if (idx < 0 || idx >= m.n_frames) throw IoError("manifest: split index " + key + " out of range");
        const std::string tag = value.get<std::string>();
        if (tag != "train" && tag != "val") throw IoError("manifest: unknown split tag '" + tag + "'");
        m.split[static_cast<size_t>(idx)] = tag == "val" ? SplitTag::kVal : SplitTag::kTrain;
        seen[static_cast<size_t>(idx)] = true;
      }
      if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw IoError("manifest: split does not cover all frames");
    }
    m.scene_seed = j.value("scene_seed", std::uint64_t{0});
    m.difficulty = j.value("difficulty", m.difficulty);
    m.appearance_seeds = j.value("appearance_seeds", std::vector<std::uint64_t>{});
    m.frame_scene_seeds = j.value("frame_scene_seeds", std::vector<std::uint64_t>{});
    m.val_fraction = j.value("val_fraction", 0.0);
    m.sequence_length = j.value("sequence_length", 0);
  } catch (const json::exception& e) {
    throw IoError(std::string("manifest: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw IoError("manifest: split keys must be frame indices");
  }
  m.validate();
  return m;
}

void write_depth(const fs::path& path, const DepthMap& depth) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::uint32_t header[3] = {static_cast<std::uint32_t>(depth.width()), static_cast<std::uint32_t>(depth.height()),
                                   0u};
  out.write(kDepthMagic, 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(depth.data().data()),
            static_cast<std::streamsize>(depth.size() * sizeof(float)));
  if (!out) throw IoError("write failed for " + path.string());
}

DepthMap read_depth(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  std::uint32_t header[3];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw IoError(path.string() + ": truncated header");
  if (std::memcmp(magic, kDepthMagic, 4) != 0) throw IoError(path.string() + ": bad magic");
  if (header[0] == 0 || header[1] == 0 || header[0] > kMaxDim || header[1] > kMaxDim) {
    throw IoError(path.string() + ": implausible dimensions");
  }
  DepthMap depth(static_cast<int>(header[0]), static_cast<int>(header[1]));
  const auto bytes = static_cast<std::streamsize>(depth.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(depth.data().data()), bytes);
  if (in.gcount() != bytes) throw IoError(path.string() + ": truncated data");
  return depth;
}

void write_png(const fs::path& path, const RgbImage& rgb) {
  ensure_parent(path);
  std::vector<png_byte> buffer(rgb.size() * 3);
  for (size_t i = 0; i < rgb.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(rgb[i][c], 0.0f, 1.0f);
      buffer[3 * i + c] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(rgb.width());
  image.height = static_cast<png_uint_32>(rgb.height());
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

RgbImage read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  RgbImage rgb(static_cast<int>(image.width), static_cast<int>(image.height));
  for (size_t i = 0; i < rgb.size(); ++i) {
    rgb[i] = Rgb(buffer[3 * i], buffer[3 * i + 1], buffer[3 * i + 2]) / 255.0f;
  }
  return rgb;
}

void write_poses(const fs::path& path, const std::vector<Pose>& poses) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  char line[512];
  for (size_t i = 0; i < poses.size(); ++i) {
    const Eigen::Quaterniond q = poses[i].quaternion().normalized();
    const Vec3& t = poses[i].translation;
    std::snprintf(line, sizeof(line), "%zu %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", i, t.x(), t.y(), t.z(), q.w(),
                  q.x(), q.y(), q.z());
    out << line;
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Pose> read_poses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Pose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    long idx;
    double v[7];
    ls >> idx;
    for (double& x : v) ls >> x;
    if (!ls) throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed pose line");
    if (idx != static_cast<long>(poses.size())) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected frame index " +
                    std::to_string(poses.size()));
    }
    Eigen::Quaterniond q(v[3], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > 1e-6) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": quaternion is not unit length");
    }
    poses.push_back(Pose::from_quaternion(q.normalized(), Vec3(v[0], v[1], v[2])));
  }
  return poses;
}

fs::path rgb_path(const fs::path& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06d.png", index);
  return dir / "rgb" / name;
}

fs::path depth_path(const fs::path& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06d.dpt", index);
  return dir / "depth" / name;
}

void write_manifest(const fs::path& dir, const DatasetManifest& manifest) {
  manifest.validate();
  const fs::path path = dir / "manifest.json";
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_json(manifest).dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

DatasetManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  try {
    return manifest_from_json(j);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_sequence(const std::vector<Frame>& frames, const std::vector<Pose>& poses, const DatasetManifest& manifest,
                    const fs::path& dir) {
  if (static_cast<int>(frames.size()) != manifest.n_frames || static_cast<int>(poses.size()) != manifest.n_frames) {
    throw IoError("write_sequence: " + std::to_string(frames.size()) + " frames and " + std::to_string(poses.size()) +
                  " poses for a manifest of " + std::to_string(manifest.n_frames));
  }
  for (size_t i = 0; i < frames.size(); ++i) {
    write_png(rgb_path(dir, static_cast<int>(i)), frames[i].rgb);
    write_depth(depth_path(dir, static_cast<int>(i)), frames[i].depth);
  }
  write_poses(dir / "poses.txt", poses);
  write_manifest(dir, manifest);
}

Sequence read_sequence(const fs::path& dir) {
  Sequence seq;
  seq.manifest = read_manifest(dir);
  const DatasetManifest& m = seq.manifest;
  seq.poses = read_poses(dir / "poses.txt");
  if (static_cast<int>(seq.poses.size()) != m.n_frames) {
    throw IoError((dir / "poses.txt").string() + ": " + std::to_string(seq.poses.size()) + " poses, manifest lists " +
                  std::to_string(m.n_frames) + " frames");
  }
  seq.frames.resize(static_cast<size_t>(m.n_frames));
  for (int i = 0; i < m.n_frames; ++i) {
    Frame& f = seq.frames[static_cast<size_t>(i)];
    f.frame_index = i;
    try {
      f.rgb = read_png(rgb_path(dir, i));
      f.depth = read_depth(depth_path(dir, i));
    } catch (const IoError& e) {
      throw IoError("frame " + std::to_string(i) + ": " + e.what());
    }
    if (f.rgb.width() != m.intrinsics.width || f.rgb.height() != m.intrinsics.height ||
        f.depth.width() != m.intrinsics.width || f.depth.height() != m.intrinsics.height) {
      throw IoError("frame " + std::to_string(i) + ": image size does not match manifest intrinsics");
    }
  }
  return seq;
}

Split make_split(const std::vector<std::uint64_t>& frame_scene_seeds,
                 const std::vector<std::uint64_t>& holdout_scene_seeds) {
  if (holdout_scene_seeds.empty()) throw Error("make_split: no held-out scenes, val set would be empty");
  const std::set<std::uint64_t> all(frame_scene_seeds.begin(), frame_scene_seeds.end());
  const std::set<std::uint64_t> held(holdout_scene_seeds.begin(), holdout_scene_seeds.end());
  for (const auto s : held) {
    if (!all.count(s)) throw Error("make_split: held-out scene seed " + std::to_string(s) + " has no frames");
  }
  Split split;
  split.tags.reserve(frame_scene_seeds.size());
  long val = 0;
  for (const auto s : frame_scene_seeds) {
    const bool is_val = held.count(s) > 0;
    split.tags.push_back(is_val ? SplitTag::kVal : SplitTag::kTrain);
    val += is_val ? 1 : 0;
  }
  if (val == 0) throw Error("make_split: val set is empty");
  split.val_fraction = static_cast<double>(val) / static_cast<double>(frame_scene_seeds.size());
  return split;
}

}  // namespace endofuse
