#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "common.hpp"
#include "dynamic_filter.hpp"
#include "loss.hpp"
#include "scene_model.hpp"
#include "splat_renderer.hpp"

namespace fsp {

struct KeyframeScores {
  double iou = 0.0;
  double oc = 0.0;         // overlap over the smaller set
  bool degenerate = false;  // one of the sets was empty
};

KeyframeScores keyframe_scores(const std::set<uint64_t>& current,
                               const std::set<uint64_t>& last_keyframe);

// A frame becomes a keyframe when it sees enough new content (IoU below the
// bound) without having lost track of the map (overlap above the bound).
bool keyframe_decision(double iou, double oc, double iou_max = 0.8, double oc_min = 0.2);

// Set form; an empty visibility set on either side forces a keyframe.
bool keyframe_decision(const std::set<uint64_t>& current, const std::set<uint64_t>& last_keyframe,
                       double iou_max = 0.8, double oc_min = 0.2);

// Uids of primitives whose accumulated compositing weight in a render from
// `pose` exceeds `min_contribution`.
std::set<uint64_t> visibility_set(const GaussianMap& map, const CameraPose& pose,
                                  const CameraIntrinsics& intrinsics,
                                  const RenderOptions& render = {},
                                  double min_contribution = 1e-3);

struct KeyframeEntry {
  int frame_index = 0;
  double timestamp = 0.0;
  CameraPose pose;  // world to camera
  FrameObservation observation;
  std::set<int32_t> dynamic_snapshot;  // dynamic ids when the keyframe was taken
  std::set<uint64_t> visibility;       // visible primitive uids at insertion
};

class KeyframeWindow {
 public:
  explicit KeyframeWindow(size_t capacity = 8) : capacity_(capacity) {}

  void push(KeyframeEntry entry);  // evicts the oldest entry beyond capacity

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  size_t capacity() const { return capacity_; }
  const KeyframeEntry& at(size_t i) const { return entries_.at(i); }
  const KeyframeEntry& newest() const;

 private:
  size_t capacity_;
  std::deque<KeyframeEntry> entries_;
};

struct AdamOptions {
  double lr_mean = 2e-3;
  double lr_scale = 1e-3;
  double lr_orientation = 2e-3;
  double lr_opacity = 1e-2;
  double lr_color = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct MapperOptions {
  int initial_iterations = 300;
  int update_iterations = 60;
  int random_keyframes = 2;     // sampled per update iteration on top of the newest
  int densify_stride = 4;       // lattice stride for densification candidates
  double densify_alpha = 0.5;   // insert where rendered alpha falls below this
  double prune_opacity = 0.05;
  double min_contribution = 1e-3;  // visibility-set threshold
  double coverage_floor = 1e-3;    // mapping-loss exclusion for uncovered pixels
  double min_opacity = 1e-4;       // lower clamp during optimization
  double lambda_lo = 0.88;
  double lambda_up = 0.95;
  int divergence_patience = 10;  // consecutive loss increases before aborting
  AdamOptions adam;
  InitOptions init;
  RenderOptions render;
  AdjointOptions adjoint;
};

struct MappingStats {
  int iterations_run = 0;
  bool diverged = false;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double final_psnr = 0.0;  // render vs the optimized frame, full image
  size_t pruned_dynamic = 0;
  size_t pruned_transparent = 0;
  size_t densified = 0;
};

// Optimizes every primitive parameter against one frame under the combined
// color+depth loss over the full image (no dynamic exclusion). Stops early
// after `divergence_patience` consecutive loss increases.
MappingStats initial_mapping(GaussianMap& map, const FrameObservation& frame,
                             const CameraPose& pose, const CameraIntrinsics& intrinsics,
                             const MapperOptions& opts = {});

// One keyframe map refinement pass: removes primitives of currently dynamic
// objects, densifies under-covered static pixels of the newest keyframe,
// optimizes against sampled window keyframes under the dynamic-masked
// mapping loss, then drops near-transparent primitives.
MappingStats map_update(GaussianMap& map, const KeyframeWindow& window,
                        const DynamicObjectRegistry& registry,
                        const CameraIntrinsics& intrinsics, const MapperOptions& opts,
                        std::mt19937_64& rng);

// Versioned binary snapshot of all primitive state; round-trips bit-exactly.
void write_map_checkpoint(const GaussianMap& map, const std::string& path);
GaussianMap read_map_checkpoint(const std::string& path);

}  // namespace fsp
