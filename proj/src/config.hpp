#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "scene_model.hpp"

namespace fsp {

// Every tunable of the pipeline. Values load from a key=value text file,
// then from command-line overrides; unknown keys are rejected so each knob
// in a run is auditable.
struct PipelineConfig {
  std::string dataset_root;     // TUM-layout sequence directory
  std::string synthetic_spec;   // JSON scene description (alternative input)
  std::string preset = "synthetic";  // tum | bonn | synthetic
  std::string output_dir = "out";

  double lambda_lo = 0.88;
  double lambda_up = 0.95;
  double theta = 0.999;
  int coarse_iterations = 40;
  double rotation_step = 0.003;
  double translation_step = 0.01;
  int fine_max_iterations = 100;
  double fine_tolerance = 1e-5;
  int fine_convergence_count = 3;
  double iou_max = 0.8;
  double oc_min = 0.2;
  int static_streak = 3;
  int coarse_stride = 16;  // preset-dependent
  int fine_stride = 4;     // preset-dependent
  int window_capacity = 8;
  int initial_iterations = 300;
  int update_iterations = 60;
  double association_tolerance = 0.02;
  uint64_t seed = 1;       // mapper keyframe sampling
  uint64_t gmm_seed = 7;
  bool dynamic_filtering = true;
  double alpha_cutoff = 1e-8;  // splat support threshold for render passes

  int downscale = 1;    // integer image downsampling
  int frame_step = 1;   // process every n-th associated frame
  int max_frames = 0;   // 0 = no limit

  // Intrinsics overrides; non-positive fields fall back to the preset (or,
  // for synthetic input, to the scene spec).
  double fx = 0.0, fy = 0.0;
  double cx = -1.0, cy = -1.0;
  int width = 0, height = 0;
  double depth_scale = 0.0;

  void validate() const;

  // Canonical key=value listing (sorted keys) used for the run fingerprint.
  std::string canonical_text() const;
  uint64_t hash() const { return fnv1a64(canonical_text()); }
};

// Stride and intrinsics defaults for the named preset.
PipelineConfig preset_config(const std::string& preset);

// Applies one "key=value" assignment; unknown key or unparsable value throw.
void apply_assignment(PipelineConfig& config, const std::string& assignment);

// Line-based key=value file; '#' starts a comment, blank lines ignored.
PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config(const std::string& text, const std::string& origin = "<string>");

// Intrinsics for a dataset run under this config (preset defaults, explicit
// overrides, then the downscale factor applied).
CameraIntrinsics config_intrinsics(const PipelineConfig& config);

// Rescales intrinsics for box-downsampled images (pixel centers on the
// integer lattice).
CameraIntrinsics downscale_intrinsics(const CameraIntrinsics& intrinsics, int factor);

}  // namespace fsp
