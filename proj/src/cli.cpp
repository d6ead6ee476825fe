#include "endofuse/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>

#include "endofuse/depth_provider.hpp"
#include "endofuse/eval.hpp"
#include "endofuse/render.hpp"
#include "endofuse/rng.hpp"
#include "endofuse/scene.hpp"

namespace endofuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class KeyType { kInt, kUint, kDouble, kBool, kString };

struct Key {
  const char* name;
  KeyType type;
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

template <typename T>
Key make_key(const char* name, KeyType type, T RunConfig::*field) {
  return {name, type, [field](RunConfig& c, const json& v) { c.*field = v.get<T>(); },
          [field](const RunConfig& c) { return json(c.*field); }};
}

Key path_key(const char* name, fs::path RunConfig::*field) {
  return {name, KeyType::kString, [field](RunConfig& c, const json& v) { c.*field = v.get<std::string>(); },
          [field](const RunConfig& c) { return json((c.*field).string()); }};
}

#define NESTED_KEY(NAME, TYPE, CTYPE, EXPR)                                            \
  Key {                                                                                \
    NAME, TYPE, [](RunConfig& c, const json& v) { EXPR = v.get<CTYPE>(); },           \
        [](const RunConfig& c) { return json(EXPR); }                                 \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      make_key("scene.seed", KeyType::kUint, &RunConfig::seed),
      make_key("scene.difficulty", KeyType::kString, &RunConfig::difficulty),
      make_key("scene.count", KeyType::kInt, &RunConfig::scenes),
      make_key("scene.variants", KeyType::kInt, &RunConfig::variants),
      make_key("split.holdout_fraction", KeyType::kDouble, &RunConfig::holdout_fraction),
      make_key("trajectory.frames", KeyType::kInt, &RunConfig::frames),
      make_key("trajectory.advance", KeyType::kDouble, &RunConfig::advance),
      make_key("trajectory.start_arclength", KeyType::kDouble, &RunConfig::start_arclength),
      make_key("trajectory.jitter", KeyType::kBool, &RunConfig::jitter),
      Key{"camera.width", KeyType::kInt,
          [](RunConfig& c, const json& v) {
            c.intrinsics.width = v.get<int>();
            c.intrinsics.cx = 0.5 * (c.intrinsics.width - 1);
          },
          [](const RunConfig& c) { return json(c.intrinsics.width); }},
      Key{"camera.height", KeyType::kInt,
          [](RunConfig& c, const json& v) {
            c.intrinsics.height = v.get<int>();
            c.intrinsics.cy = 0.5 * (c.intrinsics.height - 1);
          },
          [](const RunConfig& c) { return json(c.intrinsics.height); }},
      NESTED_KEY("camera.fx", KeyType::kDouble, double, c.intrinsics.fx),
      NESTED_KEY("camera.fy", KeyType::kDouble, double, c.intrinsics.fy),
      make_key("render.max_range", KeyType::kDouble, &RunConfig::max_range),
      path_key("fuse.data", &RunConfig::data),
      make_key("depth.source", KeyType::kString, &RunConfig::depth),
      make_key("fuse.first_frame", KeyType::kInt, &RunConfig::first_frame),
      make_key("fuse.max_frames", KeyType::kInt, &RunConfig::max_frames),
      make_key("fuse.include_unstable", KeyType::kBool, &RunConfig::include_unstable),
      NESTED_KEY("tracking.pyramid_levels", KeyType::kInt, int, c.pipeline.tracking.pyramid_levels),
      NESTED_KEY("tracking.max_iterations", KeyType::kInt, int, c.pipeline.tracking.max_iterations),
      NESTED_KEY("tracking.w_rgb", KeyType::kDouble, double, c.pipeline.tracking.w_rgb),
      NESTED_KEY("tracking.huber_geo", KeyType::kDouble, double, c.pipeline.tracking.huber_geo),
      NESTED_KEY("tracking.huber_photo", KeyType::kDouble, double, c.pipeline.tracking.huber_photo),
      NESTED_KEY("tracking.min_inlier_fraction", KeyType::kDouble, double, c.pipeline.tracking.min_inlier_fraction),
      NESTED_KEY("tracking.max_association_distance", KeyType::kDouble, double,
                 c.pipeline.tracking.max_association_distance),
      NESTED_KEY("tracking.max_normal_angle_deg", KeyType::kDouble, double, c.pipeline.tracking.max_normal_angle_deg),
      NESTED_KEY("tracking.use_photometric", KeyType::kBool, bool, c.pipeline.tracking.use_photometric),
      NESTED_KEY("tracking.light_intensity", KeyType::kDouble, double, c.pipeline.tracking.light_intensity),
      NESTED_KEY("fusion.depth_sigma_fraction", KeyType::kDouble, double, c.pipeline.fusion.depth_sigma_fraction),
      NESTED_KEY("fusion.max_normal_angle_deg", KeyType::kDouble, double, c.pipeline.fusion.max_normal_angle_deg),
      NESTED_KEY("fusion.removal_age", KeyType::kInt, int, c.pipeline.fusion.removal_age),
      NESTED_KEY("fusion.light_intensity", KeyType::kDouble, double, c.pipeline.fusion.light_intensity),
      NESTED_KEY("pipeline.specular_threshold", KeyType::kDouble, double, c.pipeline.specular_threshold),
      NESTED_KEY("pipeline.max_consecutive_failures", KeyType::kInt, int, c.pipeline.max_consecutive_failures),
      NESTED_KEY("pipeline.constant_velocity", KeyType::kBool, bool, c.pipeline.constant_velocity),
      path_key("eval.run", &RunConfig::run),
      make_key("eval.normalize", KeyType::kBool, &RunConfig::normalize),
      path_key("output.dir", &RunConfig::out),
      make_key("output.force", KeyType::kBool, &RunConfig::force),
  };
  return table;
}

#undef NESTED_KEY

const Key& find_key(const std::string& name) {
  for (const Key& k : keys()) {
    if (name == k.name) return k;
  }
  throw Error("config: unknown key '" + name + "'");
}

json parse_flag_value(const Key& key, const std::string& text) {
  try {
    switch (key.type) {
      case KeyType::kInt: {
        size_t used = 0;
        const long v = std::stol(text, &used);
        if (used != text.size()) break;
        return json(v);
      }
      case KeyType::kUint: {
        size_t used = 0;
        if (!text.empty() && text[0] == '-') break;
        const unsigned long long v = std::stoull(text, &used);
        if (used != text.size()) break;
        return json(v);
      }
      case KeyType::kDouble: {
        size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) break;
        return json(v);
      }
      case KeyType::kBool:
        if (text == "true" || text == "1") return json(true);
        if (text == "false" || text == "0") return json(false);
        break;
      case KeyType::kString:
        return json(text);
    }
  } catch (const std::exception&) {
  }
  throw Error(std::string("invalid value '") + text + "' for --" + key.name);
}

bool type_matches(KeyType type, const json& v) {
  switch (type) {
    case KeyType::kInt: return v.is_number_integer();
    case KeyType::kUint: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case KeyType::kDouble: return v.is_number();
    case KeyType::kBool: return v.is_boolean();
    case KeyType::kString: return v.is_string();
  }
  return false;
}

void ensure_output_dir(const fs::path& dir, bool force) {
  if (dir.empty()) throw Error("output.dir (--out) is required");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error("output path " + dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw Error("output directory " + dir.string() + " is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(dir);
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

json telemetry_json(const FrameTelemetry& t) {
  return json{{"frame", t.frame},
              {"converged", t.converged},
              {"skipped", t.skipped},
              {"final_cost", t.final_cost},
              {"iterations", t.iterations},
              {"inlier_fraction", t.inlier_fraction},
              {"geometric_terms", t.geometric_terms},
              {"photometric_terms", t.photometric_terms},
              {"photometric_masked", t.photometric_masked},
              {"fusion",
               {{"updated", t.fusion.updated},
                {"inserted", t.fusion.inserted},
                {"removed", t.fusion.removed},
                {"color_updates", t.fusion.color_updates},
                {"color_skipped_masked", t.fusion.color_skipped_masked}}},
              {"surfels", t.surfels},
              {"seconds", t.seconds}};
}

json metrics_json(const DepthMetrics& m) {
  return json{{"rel", m.rel},
              {"log10", m.log10},
              {"rms", m.rms},
              {"compared", m.compared},
              {"guarded_rel", m.guarded_rel},
              {"guarded_log", m.guarded_log}};
}

}  // namespace

void RunConfig::validate() const {
  parse_difficulty(difficulty);
  if (scenes < 1) throw Error("scene.count must be >= 1");
  if (variants < 1) throw Error("scene.variants must be >= 1");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw Error("split.holdout_fraction must be in (0, 1)");
  if (frames < 1) throw Error("trajectory.frames must be >= 1");
  if (!(advance >= 0.0) || advance > 0.01) throw Error("trajectory.advance must be in [0, 0.01] m");
  if (!(start_arclength >= 0.0)) throw Error("trajectory.start_arclength must be >= 0");
  intrinsics.validate();
  if (!(max_range > 0.0)) throw Error("render.max_range must be > 0");
  if (first_frame < 0) throw Error("fuse.first_frame must be >= 0");
  if (max_frames < 0) throw Error("fuse.max_frames must be >= 0");
  const TrackingConfig& t = pipeline.tracking;
  if (t.pyramid_levels < 1 || t.pyramid_levels > 6) throw Error("tracking.pyramid_levels must be in [1, 6]");
  if (t.max_iterations < 1) throw Error("tracking.max_iterations must be >= 1");
  if (!(t.w_rgb >= 0.0)) throw Error("tracking.w_rgb must be >= 0");
  if (!(t.huber_geo > 0.0) || !(t.huber_photo > 0.0)) throw Error("tracking Huber deltas must be > 0");
  if (!(t.min_inlier_fraction >= 0.0 && t.min_inlier_fraction <= 1.0)) {
    throw Error("tracking.min_inlier_fraction must be in [0, 1]");
  }
  if (!(t.max_association_distance > 0.0)) throw Error("tracking.max_association_distance must be > 0");
  if (!(t.light_intensity > 0.0) || !(pipeline.fusion.light_intensity > 0.0)) {
    throw Error("light_intensity must be > 0");
  }
  if (!(pipeline.fusion.depth_sigma_fraction > 0.0)) throw Error("fusion.depth_sigma_fraction must be > 0");
  if (pipeline.fusion.removal_age < 0) throw Error("fusion.removal_age must be >= 0");
  if (pipeline.max_consecutive_failures < 1) throw Error("pipeline.max_consecutive_failures must be >= 1");
  parse_depth_source(depth);
}

void apply_config(RunConfig& config, const json& flat) {
  if (!flat.is_object()) throw Error("config: expected a JSON object of dotted keys");
  for (const auto& [name, value] : flat.items()) {
    const Key& key = find_key(name);
    if (!type_matches(key.type, value)) throw Error("config: key '" + name + "' has the wrong type");
    key.set(config, value);
  }
}

RunConfig load_config(const fs::path& path) {
  RunConfig config;
  apply_config(config, load_json_file(path));
  return config;
}

json to_json(const RunConfig& config) {
  json j = json::object();
  for (const Key& k : keys()) j[k.name] = k.get(config);
  return j;
}

DatasetManifest plan_dataset(const RunConfig& config) {
  config.validate();
  const long total = static_cast<long>(config.scenes) * config.variants * config.frames;
  if (total > 10'000'000) throw Error("dataset too large: " + std::to_string(total) + " frames");
  DatasetManifest m;
  m.name = "endofuse-" + config.difficulty;
  m.n_frames = static_cast<int>(total);
  m.intrinsics = config.intrinsics;
  m.scene_seed = config.seed;
  m.difficulty = config.difficulty;
  m.sequence_length = config.frames;
  for (int v = 0; v < config.variants; ++v) m.appearance_seeds.push_back(static_cast<std::uint64_t>(v));
  m.frame_scene_seeds.reserve(static_cast<size_t>(total));
  std::vector<std::uint64_t> scene_seeds;
  for (int s = 0; s < config.scenes; ++s) {
    scene_seeds.push_back(config.seed + static_cast<std::uint64_t>(s));
    for (long k = 0; k < static_cast<long>(config.variants) * config.frames; ++k) {
      m.frame_scene_seeds.push_back(scene_seeds.back());
    }
  }
  if (config.scenes >= 2) {
    const int held = std::clamp(static_cast<int>(std::lround(config.scenes * config.holdout_fraction)), 1,
                                config.scenes - 1);
    const std::vector<std::uint64_t> holdout(scene_seeds.end() - held, scene_seeds.end());
    const Split split = make_split(m.frame_scene_seeds, holdout);
    m.split = split.tags;
    m.val_fraction = split.val_fraction;
  } else {
    m.split.assign(static_cast<size_t>(total), SplitTag::kTrain);
  }
  m.validate();
  return m;
}

void cmd_generate(const RunConfig& config, std::ostream& log) {
  const DatasetManifest manifest = plan_dataset(config);
  ensure_output_dir(config.out, config.force);
  for (const char* stale : {"rgb", "depth"}) fs::remove_all(config.out / stale);

  const Difficulty difficulty = parse_difficulty(config.difficulty);
  RenderOptions options;
  options.max_range = config.max_range;
  std::vector<Pose> all_poses;
  all_poses.reserve(static_cast<size_t>(manifest.n_frames));
  int index = 0;
  for (int s = 0; s < config.scenes; ++s) {
    const std::uint64_t scene_seed = config.seed + static_cast<std::uint64_t>(s);
    const ColonScene base = build_scene(scene_seed, difficulty);
    TrajectoryParams tp;
    tp.n_frames = config.frames;
    tp.advance_per_frame = config.advance;
    tp.start_arclength = config.start_arclength;
    if (config.jitter) tp.jitter = TrajectoryJitter{hash_combine(scene_seed, 0x717)};
    const std::vector<Pose> poses = generate_trajectory(base, tp);
    for (int v = 0; v < config.variants; ++v) {
      const ColonScene scene =
          v == 0 ? base : randomize_appearance(base, hash_combine(scene_seed, manifest.appearance_seeds[static_cast<size_t>(v)]));
      for (int f = 0; f < config.frames; ++f, ++index) {
        const Frame frame = render_frame(scene, poses[static_cast<size_t>(f)], config.intrinsics, options);
        write_png(rgb_path(config.out, index), frame.rgb);
        write_depth(depth_path(config.out, index), frame.depth);
        all_poses.push_back(poses[static_cast<size_t>(f)]);
      }
    }
  }
  write_poses(config.out / "poses.txt", all_poses);
  write_manifest(config.out, manifest);
  log << "generated " << manifest.n_frames << " frames (" << config.scenes << " scene(s) x " << config.variants
      << " variant(s) x " << config.frames << " frames, " << config.difficulty << ") in " << config.out.string()
      << "\n";
  if (config.scenes >= 2) log << "val fraction " << manifest.val_fraction << "\n";
}

int cmd_fuse(const RunConfig& config, std::ostream& log) {
  config.validate();
  if (config.data.empty()) throw Error("fuse.data (--data) is required");
  if (!fs::is_directory(config.data)) throw Error("dataset directory " + config.data.string() + " does not exist");
  const DatasetManifest manifest = read_manifest(config.data);
  const std::vector<Pose> gt_poses = read_poses(config.data / "poses.txt");
  if (static_cast<int>(gt_poses.size()) != manifest.n_frames) {
    throw IoError((config.data / "poses.txt").string() + ": pose count does not match manifest");
  }
  const int seq_len = manifest.sequence_length > 0 ? manifest.sequence_length : manifest.n_frames;
  if (config.first_frame >= manifest.n_frames) throw Error("fuse.first_frame is beyond the dataset");
  const int seq_end = (config.first_frame / seq_len + 1) * seq_len;
  int count = seq_end - config.first_frame;
  if (config.max_frames > 0) count = std::min(count, config.max_frames);

  DepthSourceSpec spec = parse_depth_source(config.depth);
  ensure_output_dir(config.out, config.force);
  fs::remove_all(config.out / "depth");

  std::vector<Frame> frames(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int idx = config.first_frame + i;
    Frame& f = frames[static_cast<size_t>(i)];
    try {
      f.rgb = read_png(rgb_path(config.data, idx));
      f.depth = read_depth(depth_path(config.data, idx));
    } catch (const IoError& e) {
      throw IoError("frame " + std::to_string(idx) + ": " + e.what());
    }
    f.frame_index = i;
    if (f.rgb.width() != manifest.intrinsics.width || f.depth.width() != manifest.intrinsics.width ||
        f.rgb.height() != manifest.intrinsics.height || f.depth.height() != manifest.intrinsics.height) {
      throw IoError("frame " + std::to_string(idx) + ": size does not match manifest intrinsics");
    }
  }

  if (spec.calibration_target > 0.0) {
    std::vector<DepthMap> gt;
    gt.reserve(frames.size());
    for (const Frame& f : frames) gt.push_back(f.depth);
    const NoiseModel noise = calibrate_noise(spec.calibration_target, gt, std::get<CorruptedDepth>(spec.source).noise);
    spec.source = CorruptedDepth{noise};
    log << "calibrated noise to rms " << spec.calibration_target << ": " << describe(spec.source) << "\n";
  }

  json run = {{"data", fs::absolute(config.data).string()},
              {"first_frame", config.first_frame},
              {"frames", count},
              {"depth_source", describe(spec.source)},
              {"calibration_target", spec.calibration_target},
              {"config", to_json(config)}};

  Pipeline pipeline(manifest.intrinsics, config.pipeline, gt_poses[static_cast<size_t>(config.first_frame)]);
  std::ofstream telemetry(config.out / "telemetry.jsonl");
  if (!telemetry) throw IoError("cannot open " + (config.out / "telemetry.jsonl").string());

  auto write_outputs = [&](int processed, bool aborted) {
    export_ply(pipeline.map(), config.out / "map.ply", config.include_unstable);
    write_poses(config.out / "trajectory.txt", pipeline.trajectory());
    run["processed"] = processed;
    run["aborted"] = aborted;
    run["last_good_frame"] = pipeline.last_good_frame();
    write_json_file(config.out / "run.json", run);
  };

  int converged = 0;
  for (int i = 0; i < count; ++i) {
    Frame& f = frames[static_cast<size_t>(i)];
    f.depth = provide_depth(spec.source, i, f.depth);
    write_depth(depth_path(config.out, i), f.depth);
    try {
      const FrameTelemetry t = pipeline.process(f);
      telemetry << telemetry_json(t).dump() << "\n";
      converged += t.converged ? 1 : 0;
    } catch (const TrackingAbort& e) {
      telemetry << telemetry_json(pipeline.telemetry().back()).dump() << "\n";
      write_outputs(i + 1, true);
      throw;
    }
  }
  write_outputs(count, false);
  log << "fused " << count << " frames, converged on " << converged << ", " << pipeline.map().stable_count()
      << " stable surfels\n";
  return count;
}

json cmd_eval(const RunConfig& config, std::ostream& log) {
  if (config.run.empty()) throw Error("eval.run (--run) is required");
  std::vector<std::string> missing;
  for (const char* name : {"run.json", "trajectory.txt", "map.ply"}) {
    if (!fs::exists(config.run / name)) missing.push_back((config.run / name).string());
  }
  json run;
  if (fs::exists(config.run / "run.json")) run = load_json_file(config.run / "run.json");
  fs::path data = config.data;
  if (data.empty() && run.contains("data")) data = run["data"].get<std::string>();
  if (data.empty()) {
    missing.push_back("dataset directory (--data)");
  } else {
    for (const char* name : {"manifest.json", "poses.txt"}) {
      if (!fs::exists(data / name)) missing.push_back((data / name).string());
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw IoError("eval: missing inputs:" + list);
  }

  const DatasetManifest manifest = read_manifest(data);
  const std::vector<Pose> gt_all = read_poses(data / "poses.txt");
  const std::vector<Pose> est = read_poses(config.run / "trajectory.txt");
  const int first = run.value("first_frame", 0);
  if (first + static_cast<int>(est.size()) > static_cast<int>(gt_all.size())) {
    throw IoError("eval: trajectory is longer than the dataset");
  }
  const std::vector<Pose> gt(gt_all.begin() + first, gt_all.begin() + first + static_cast<long>(est.size()));

  json out = json::object();
  out["frames"] = est.size();
  if (est.size() >= 2) {
    const TrajectoryError te = ate(est, gt);
    out["ate_rmse"] = te.ate_rmse;
    std::ofstream csv(config.run / "ate.csv");
    csv << "frame,error_m\n";
    for (size_t i = 0; i < te.per_frame_errors.size(); ++i) csv << i << "," << te.per_frame_errors[i] << "\n";
  } else {
    out["ate_rmse"] = nullptr;
  }

  const SurfelMap map = read_ply(config.run / "map.ply");
  const std::uint64_t scene_seed = manifest.frame_scene_seeds.empty()
                                       ? manifest.scene_seed
                                       : manifest.frame_scene_seeds[static_cast<size_t>(first)];
  if (map.empty()) {
    out["surface_error"] = nullptr;
  } else {
    const ColonScene scene = build_scene(scene_seed, parse_difficulty(manifest.difficulty));
    const SurfaceError se = surface_error(map, scene);
    out["surface_error"] = {{"mean", se.mean}, {"p95", se.p95}, {"count", se.count}};
  }

  if (fs::is_directory(config.run / "depth")) {
    std::vector<DepthMap> pred, truth;
    for (size_t i = 0; i < est.size(); ++i) {
      const fs::path p = depth_path(config.run, static_cast<int>(i));
      if (!fs::exists(p)) break;
      pred.push_back(read_depth(p));
      truth.push_back(read_depth(depth_path(data, first + static_cast<int>(i))));
    }
    if (!pred.empty()) {
      out["depth"] = metrics_json(mean_depth_metrics(pred, truth, config.normalize));
      out["depth"]["normalized"] = config.normalize;
    }
  }
  write_json_file(config.run / "metrics.json", out);
  log << out.dump(2) << "\n";
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic monocular-endoscopy dense SLAM: generate, fuse, eval"};
  app.require_subcommand(1, 1);

  struct Options {
    std::string config;
    std::map<std::string, std::string> values;
    std::map<std::string, bool> flags;
  };
  std::map<std::string, Options> options;
  const std::map<std::string, std::string> aliases = {
      {"scene.seed", "--seed"},         {"output.dir", "--out"},   {"depth.source", "--depth"},
      {"trajectory.frames", "--frames"}, {"scene.variants", "--variants"}, {"scene.count", "--scenes"},
      {"fuse.data", "--data"},          {"eval.run", "--run"},     {"output.force", "--force"},
      {"scene.difficulty", "--difficulty"}};

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"generate", "Render a synthetic dataset"},
      {"fuse", "Track and fuse a dataset into a surfel map"},
      {"eval", "Evaluate a fuse run against ground truth"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    Options& opt = options[name];
    sub->add_option("--config", opt.config, "JSON file of flat dotted keys")->check(CLI::ExistingFile);
    for (const Key& k : keys()) {
      std::string names = std::string("--") + k.name;
      if (const auto it = aliases.find(k.name); it != aliases.end()) names = it->second + "," + names;
      if (k.type == KeyType::kBool) {
        sub->add_flag(names, opt.flags[k.name]);
      } else {
        static const char* kTypeNames[] = {"INT", "UINT", "FLOAT", "BOOL", "TEXT"};
        sub->add_option(names, opt.values[k.name])->type_name(kTypeNames[static_cast<int>(k.type)]);
      }
    }
  }

  std::vector<const char*> argv = {"endofuse"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  const Options& opt = options[command];
  try {
    RunConfig config;
    if (!opt.config.empty()) config = load_config(opt.config);
    for (const Key& k : keys()) {
      const std::string flag = std::string("--") + k.name;
      if (sub->count(flag) == 0) continue;
      if (k.type == KeyType::kBool) {
        k.set(config, json(opt.flags.at(k.name)));
      } else {
        k.set(config, parse_flag_value(k, opt.values.at(k.name)));
      }
    }
    if (command == "generate") {
      cmd_generate(config, out);
    } else if (command == "fuse") {
      cmd_fuse(config, out);
    } else {
      cmd_eval(config, out);
    }
  } catch (const TrackingAbort& e) {
    err << "error: " << e.what() << " (last good frame " << e.last_good_frame() << ")\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace endofuse
