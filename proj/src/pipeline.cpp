#include "pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

#include "loss.hpp"
#include "splat_renderer.hpp"
#include "synthetic.hpp"
#include "tracker.hpp"

namespace fsp {

namespace {

using Clock = std::chrono::steady_clock;

struct Stopwatch {
  Clock::time_point start = Clock::now();
  double lap() {
    const auto now = Clock::now();
    const double s = std::chrono::duration<double>(now - start).count();
    start = now;
    return s;
  }
};

std::vector<size_t> subsample(size_t count, int step, int max_frames) {
  std::vector<size_t> indices;
  for (size_t i = 0; i < count; i += static_cast<size_t>(step)) {
    indices.push_back(i);
    if (max_frames > 0 && indices.size() == static_cast<size_t>(max_frames)) break;
  }
  return indices;
}

TrackerOptions tracker_options(const PipelineConfig& config) {
  TrackerOptions opts;
  opts.coarse_iterations = config.coarse_iterations;
  opts.rotation_step = config.rotation_step;
  opts.translation_step = config.translation_step;
  opts.fine_max_iterations = config.fine_max_iterations;
  opts.fine_relative_tolerance = config.fine_tolerance;
  opts.fine_convergence_count = config.fine_convergence_count;
  opts.lambda_lo = config.lambda_lo;
  opts.lambda_up = config.lambda_up;
  opts.render.alpha_cutoff = config.alpha_cutoff;
  return opts;
}

MapperOptions mapper_options(const PipelineConfig& config) {
  MapperOptions opts;
  opts.initial_iterations = config.initial_iterations;
  opts.update_iterations = config.update_iterations;
  opts.densify_stride = config.fine_stride;
  opts.lambda_lo = config.lambda_lo;
  opts.lambda_up = config.lambda_up;
  opts.render.alpha_cutoff = config.alpha_cutoff;
  return opts;
}

TrajectoryEntry pose_entry(double timestamp, const CameraPose& pose) {
  TrajectoryEntry entry;
  entry.timestamp = timestamp;
  entry.position = pose.camera_center();
  entry.orientation = Quat(pose.rotation.transpose());
  return entry;
}

// An object only qualifies as Dynamic when its loss level clearly exceeds
// the background's: the background is the static environment itself, so an
// object rendering no worse than it cannot be moving, whatever shape the
// mixture fit takes.
constexpr double kBackgroundLevelMargin = 1.2;

// Classifies this frame's objects from their loss flows and folds the
// result into the registry. Background (id 0) participates in the fit as
// the static anchor but is never classified.
size_t classify_frame(const std::vector<LossFlowRecord>& flows, DynamicObjectRegistry& registry,
                      const PipelineConfig& config, std::map<int32_t, bool>& frame_classes) {
  bool any_object = false;
  for (const auto& record : flows) {
    if (record.values.size() < 2) return registry.dynamic_set().size();  // aborted too early
    if (record.object_id != 0) any_object = true;
  }
  if (any_object) {
    std::vector<Vec2> features;
    features.reserve(flows.size());
    for (const auto& record : flows) features.push_back(extract_features(record));
    double anchor = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < flows.size(); ++i)
      if (flows[i].object_id == 0) anchor = kBackgroundLevelMargin * features[i][0];
    GmmOptions gmm_opts;
    gmm_opts.seed = config.gmm_seed;
    const GmmModel model = fit_gmm(features, gmm_opts);
    for (size_t i = 0; i < flows.size(); ++i) {
      if (flows[i].object_id == 0) continue;
      frame_classes[flows[i].object_id] =
          classify(model, features[i], config.theta).dynamic && features[i][0] > anchor;
    }
    update_registry(registry, frame_classes, config.static_streak);
  }
  return registry.dynamic_set().size();
}

ImageGray static_region_mask(const FrameObservation& frame, const std::set<int32_t>& dynamic_ids,
                             size_t& kept) {
  ImageGray keep(frame.rgb.width, frame.rgb.height, 1.0);
  kept = keep.pixel_count();
  for (size_t p = 0; p < keep.pixel_count(); ++p) {
    if (dynamic_ids.count(frame.mask.at_index(p))) {
      keep.at_index(p) = 0.0;
      --kept;
    }
  }
  return keep;
}

MetricsRow frame_metrics(const RenderedFrame& rendered, const FrameObservation& frame,
                         const std::set<int32_t>& dynamic_ids) {
  MetricsRow row;
  row.frame = frame.index;
  row.psnr = psnr(rendered.color, frame.rgb);
  row.ssim = ssim(rendered.color, frame.rgb);
  size_t kept = 0;
  const ImageGray keep = static_region_mask(frame, dynamic_ids, kept);
  if (kept > 0 && kept < keep.pixel_count()) {
    row.psnr_static_region = psnr(rendered.color, frame.rgb, &keep);
    row.ssim_static_region = ssim(rendered.color, frame.rgb, &keep);
  } else {
    row.psnr_static_region = row.psnr;
    row.ssim_static_region = row.ssim;
  }
  return row;
}

std::string frame_tag(int index) {
  std::ostringstream out;
  out << std::setw(6) << std::setfill('0') << index;
  return out.str();
}

[[noreturn]] void rethrow_with_frame(int frame, const char* stage) {
  const std::string where =
      "frame " + std::to_string(frame) + ", stage " + stage + ": ";
  try {
    throw;
  } catch (const InputError& e) {
    throw InputError(where + e.what());
  } catch (const IoError& e) {
    throw IoError(where + e.what());
  } catch (const ParseError& e) {
    throw ParseError(where + e.what());
  } catch (const NumericError& e) {
    throw NumericError(where + e.what());
  }
}

}  // namespace

FrameObservation SequenceInput::frame(size_t processed_index) const {
  const size_t source = source_indices.at(processed_index);
  FrameObservation obs;
  if (manifest) {
    obs = load_frame(*manifest, source, load_options);
  } else {
    obs = memory_frames.at(source);
  }
  obs.index = static_cast<int>(processed_index);
  return obs;
}

SequenceInput load_input(const PipelineConfig& config) {
  SequenceInput input;
  if (!config.synthetic_spec.empty()) {
    if (config.downscale != 1)
      throw InputError("load_input: downscale applies to dataset input only");
    const SyntheticSceneSpec spec = load_scene_spec(config.synthetic_spec);
    SyntheticSequence seq = generate_synthetic(spec);
    input.intrinsics = spec_intrinsics(spec);
    input.ground_truth = std::move(seq.ground_truth);
    input.memory_frames = std::move(seq.frames);
    input.source_indices =
        subsample(input.memory_frames.size(), config.frame_step, config.max_frames);
    return input;
  }
  if (config.dataset_root.empty())
    throw IoError("dataset not found: neither dataset_root nor synthetic_spec is set");
  if (!std::filesystem::exists(config.dataset_root))
    throw IoError("dataset not found: " + config.dataset_root);
  input.manifest = load_sequence(config.dataset_root, config.association_tolerance);
  input.intrinsics = config_intrinsics(config);
  input.load_options.depth_scale = input.intrinsics.depth_scale;
  input.load_options.downscale = config.downscale;
  input.ground_truth = input.manifest->ground_truth;
  input.source_indices =
      subsample(input.manifest->frames.size(), config.frame_step, config.max_frames);
  return input;
}

RunResult run_pipeline(const SequenceInput& input, const PipelineConfig& config,
                       const std::string& render_dir) {
  config.validate();
  input.intrinsics.validate();
  if (input.frame_count() == 0) throw InputError("run_pipeline: no frames to process");

  const CameraIntrinsics& intrinsics = input.intrinsics;
  const TrackerOptions track_opts = tracker_options(config);
  const MapperOptions map_opts = mapper_options(config);
  const RenderOptions& render_opts = map_opts.render;

  RunResult result;
  result.summary.config_hash = config.hash();
  Stopwatch total_watch;
  Stopwatch watch;

  GaussianMap map;
  DynamicObjectRegistry registry;
  KeyframeWindow window(static_cast<size_t>(config.window_capacity));
  std::mt19937_64 map_rng(config.seed);
  CameraPose pose;  // current frame, world to camera

  auto write_keyframe_render = [&](int index, const RenderedFrame& rendered) {
    if (render_dir.empty()) return;
    const std::string tag = frame_tag(index);
    write_rgb_png(render_dir + "/keyframe_" + tag + "_rgb.png", rendered.color);
    write_depth_png(render_dir + "/keyframe_" + tag + "_depth.png", rendered.depth,
                    intrinsics.depth_scale);
  };

  auto take_keyframe = [&](const FrameObservation& obs, const std::set<uint64_t>& visibility) {
    KeyframeEntry entry;
    entry.frame_index = obs.index;
    entry.timestamp = obs.timestamp;
    entry.pose = pose;
    entry.observation = obs;
    entry.dynamic_snapshot = registry.dynamic_set();
    entry.visibility = visibility;
    window.push(std::move(entry));
    ++result.summary.keyframes;
  };

  for (size_t i = 0; i < input.frame_count(); ++i) {
    const char* stage = "dataset";
    try {
      watch.lap();
      const FrameObservation obs = input.frame(i);
      result.summary.timings.dataset += watch.lap();

      if (i == 0) {
        stage = "initialization";
        const LabeledPointCloud cloud =
            back_project(obs, intrinsics, pose, config.coarse_stride);
        map = init_gaussians(cloud);
        initial_mapping(map, obs, pose, intrinsics, map_opts);
        result.summary.timings.mapping += watch.lap();
        take_keyframe(obs, visibility_set(map, pose, intrinsics, render_opts,
                                          map_opts.min_contribution));
        const auto projected = project(map, pose, intrinsics, render_opts);
        const RenderedFrame rendered = rasterize(projected, map, intrinsics, render_opts);
        write_keyframe_render(obs.index, rendered);
        if (metric_schedule(obs.index))
          result.metrics.push_back(frame_metrics(rendered, obs, registry.dynamic_set()));
        result.summary.timings.metrics += watch.lap();
        result.estimated.push_back(pose_entry(obs.timestamp, pose));
        ++result.summary.frames_processed;
        continue;
      }

      stage = "coarse_tracking";
      const FramePartition partition = split_frame(obs);
      const CameraPose init_pose = pose;  // constant-position model
      watch.lap();
      const CoarseResult coarse =
          coarse_track(map, obs, partition, intrinsics, init_pose, track_opts);
      if (coarse.aborted) ++result.summary.coarse_aborts;
      result.loss_flows[obs.index] = coarse.flows;
      result.summary.timings.coarse_tracking += watch.lap();

      if (config.dynamic_filtering) {
        stage = "classification";
        std::map<int32_t, bool> frame_classes;
        result.summary.dynamic_object_frames +=
            classify_frame(coarse.flows, registry, config, frame_classes);
        if (!frame_classes.empty()) result.classifications[obs.index] = frame_classes;
        result.summary.timings.classification += watch.lap();
      }

      stage = "fine_tracking";
      const std::set<int32_t> dynamic_ids = registry.dynamic_set();
      const TrackingResult fine =
          fine_track(map, obs, partition, intrinsics, coarse.pose, dynamic_ids, track_opts);
      if (fine.aborted) ++result.summary.fine_aborts;
      pose = fine.pose;
      result.summary.timings.fine_tracking += watch.lap();

      stage = "mapping";
      const std::set<uint64_t> visibility =
          visibility_set(map, pose, intrinsics, render_opts, map_opts.min_contribution);
      if (keyframe_decision(visibility, window.newest().visibility, config.iou_max,
                            config.oc_min)) {
        take_keyframe(obs, visibility);
        map_update(map, window, registry, intrinsics, map_opts, map_rng);
        result.summary.timings.mapping += watch.lap();
        stage = "metrics";
        const auto projected = project(map, pose, intrinsics, render_opts);
        const RenderedFrame rendered = rasterize(projected, map, intrinsics, render_opts);
        write_keyframe_render(obs.index, rendered);
        if (metric_schedule(obs.index))
          result.metrics.push_back(frame_metrics(rendered, obs, dynamic_ids));
        result.summary.timings.metrics += watch.lap();
      } else if (metric_schedule(obs.index)) {
        stage = "metrics";
        watch.lap();
        const auto projected = project(map, pose, intrinsics, render_opts);
        const RenderedFrame rendered = rasterize(projected, map, intrinsics, render_opts);
        result.metrics.push_back(frame_metrics(rendered, obs, dynamic_ids));
        result.summary.timings.metrics += watch.lap();
      }

      result.estimated.push_back(pose_entry(obs.timestamp, pose));
      ++result.summary.frames_processed;
    } catch (const Error&) {
      rethrow_with_frame(static_cast<int>(i), stage);
    }
  }

  if (!input.ground_truth.empty()) {
    try {
      result.summary.ate =
          align_and_ate(result.estimated, input.ground_truth, config.association_tolerance);
    } catch (const Error& e) {
      result.summary.ate_error = e.what();
    }
  }
  result.summary.final_primitives = map.size();
  result.final_map = std::move(map);
  result.summary.timings.total = total_watch.lap();
  return result;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open metrics file for writing: " + path);
  out << "frame,psnr,ssim,psnr_static_region,ssim_static_region\n";
  out << std::setprecision(17);
  for (const MetricsRow& row : rows) {
    out << row.frame << ',' << row.psnr << ',' << row.ssim << ',' << row.psnr_static_region
        << ',' << row.ssim_static_region << '\n';
  }
  if (!out) throw IoError("short write on metrics file: " + path);
}

std::string summary_json(const RunSummary& summary, const PipelineConfig& config,
                         const std::map<int, std::map<int32_t, bool>>& classifications) {
  nlohmann::ordered_json j;
  {
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << summary.config_hash;
    j["config_hash"] = hex.str();
  }
  nlohmann::ordered_json cfg;
  std::istringstream lines(config.canonical_text());
  std::string line;
  while (std::getline(lines, line)) {
    const size_t eq = line.find('=');
    if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 1);
  }
  j["config"] = cfg;
  j["frames_processed"] = summary.frames_processed;
  j["keyframes"] = summary.keyframes;
  j["final_primitives"] = summary.final_primitives;
  j["dynamic_object_frames"] = summary.dynamic_object_frames;
  {
    nlohmann::ordered_json cls = nlohmann::ordered_json::object();
    for (const auto& [frame, ids] : classifications) {
      nlohmann::ordered_json row = nlohmann::ordered_json::object();
      for (const auto& [id, dyn] : ids) row[std::to_string(id)] = dyn;
      cls[std::to_string(frame)] = row;
    }
    j["classifications"] = cls;
  }
  j["coarse_aborts"] = summary.coarse_aborts;
  j["fine_aborts"] = summary.fine_aborts;
  if (summary.ate) {
    j["ate"] = {{"rmse_m", summary.ate->rmse},
                {"mean_m", summary.ate->mean},
                {"std_m", summary.ate->std_dev},
                {"matched_pairs", summary.ate->matched_pairs}};
  } else {
    j["ate"] = nullptr;
    if (!summary.ate_error.empty()) j["ate_error"] = summary.ate_error;
  }
  j["timings_s"] = {{"dataset", summary.timings.dataset},
                    {"coarse_tracking", summary.timings.coarse_tracking},
                    {"classification", summary.timings.classification},
                    {"fine_tracking", summary.timings.fine_tracking},
                    {"mapping", summary.timings.mapping},
                    {"metrics", summary.timings.metrics},
                    {"artifacts", summary.timings.artifacts},
                    {"total", summary.timings.total}};
  return j.dump(2) + "\n";
}

RunResult run_and_write(const PipelineConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  const std::string render_dir = config.output_dir + "/renders";
  std::filesystem::create_directories(render_dir);

  SequenceInput input = load_input(config);
  RunResult result = run_pipeline(input, config, render_dir);

  Stopwatch watch;
  write_trajectory(result.estimated, config.output_dir + "/trajectory.txt");
  write_metrics_csv(result.metrics, config.output_dir + "/metrics.csv");
  write_loss_flows_csv(result.loss_flows, config.output_dir + "/loss_flows.csv");
  write_map_checkpoint(result.final_map, config.output_dir + "/map_checkpoint.bin");
  if (result.summary.ate) {
    write_ate_report(*result.summary.ate, config.output_dir + "/ate_report.txt",
                     config.output_dir + "/ate_errors.csv");
  }
  result.summary.timings.artifacts = watch.lap();
  result.summary.timings.total += result.summary.timings.artifacts;

  std::ofstream summary_out(config.output_dir + "/run_summary.json", std::ios::trunc);
  if (!summary_out)
    throw IoError("cannot open run summary for writing: " + config.output_dir +
                  "/run_summary.json");
  summary_out << summary_json(result.summary, config, result.classifications);
  return result;
}

}  // namespace fsp
