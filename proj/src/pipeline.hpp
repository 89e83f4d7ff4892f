#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "config.hpp"
#include "dataset_io.hpp"
#include "dynamic_filter.hpp"
#include "evaluation.hpp"
#include "mapper.hpp"
#include "scene_model.hpp"

namespace fsp {

// Frames to process, from either a dataset directory (loaded lazily) or an
// in-memory synthetic sequence, after frame_step/max_frames subsampling.
struct SequenceInput {
  CameraIntrinsics intrinsics;
  Trajectory ground_truth;  // empty when unavailable
  std::vector<FrameObservation> memory_frames;
  std::optional<SequenceManifest> manifest;
  FrameLoadOptions load_options;
  std::vector<size_t> source_indices;  // processed ordinal -> source frame

  size_t frame_count() const { return source_indices.size(); }
  // Returns the frame with `index` set to the processed ordinal.
  FrameObservation frame(size_t processed_index) const;
};

SequenceInput load_input(const PipelineConfig& config);

struct MetricsRow {
  int frame = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double psnr_static_region = 0.0;
  double ssim_static_region = 0.0;
};

struct StageTimings {  // seconds
  double dataset = 0.0;
  double coarse_tracking = 0.0;
  double classification = 0.0;
  double fine_tracking = 0.0;
  double mapping = 0.0;
  double metrics = 0.0;
  double artifacts = 0.0;
  double total = 0.0;
};

struct RunSummary {
  uint64_t config_hash = 0;
  int frames_processed = 0;
  int keyframes = 0;
  size_t final_primitives = 0;
  size_t dynamic_object_frames = 0;  // sum over frames of |O_d|
  int coarse_aborts = 0;
  int fine_aborts = 0;
  std::optional<AteReport> ate;
  std::string ate_error;  // non-empty when ground truth exists but ATE failed
  StageTimings timings;
};

struct RunResult {
  RunSummary summary;
  Trajectory estimated;  // camera-to-world, one entry per processed frame
  std::vector<MetricsRow> metrics;
  std::map<int, std::vector<LossFlowRecord>> loss_flows;  // by processed frame
  // Per-frame GMM verdict for every classified object id (background absent).
  std::map<int, std::map<int32_t, bool>> classifications;
  GaussianMap final_map;
};

// Tracks, filters, maps and evaluates the whole sequence. When `render_dir`
// is non-empty every keyframe's post-update render is written there as
// 8-bit RGB and 16-bit depth images.
RunResult run_pipeline(const SequenceInput& input, const PipelineConfig& config,
                       const std::string& render_dir = "");

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
std::string summary_json(const RunSummary& summary, const PipelineConfig& config,
                         const std::map<int, std::map<int32_t, bool>>& classifications = {});

// Full run: loads input, processes it and writes all artifacts (trajectory,
// metrics, loss flows, keyframe renders, map checkpoint, ATE report when
// ground truth is present, machine-readable summary) into output_dir.
RunResult run_and_write(const PipelineConfig& config);

}  // namespace fsp
