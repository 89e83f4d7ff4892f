#pragma once

#include <map>
#include <set>
#include <vector>

#include "common.hpp"
#include "dynamic_filter.hpp"
#include "loss.hpp"
#include "scene_model.hpp"
#include "splat_renderer.hpp"

namespace fsp {

struct TrackerOptions {
  int coarse_iterations = 40;
  double rotation_step = 0.003;
  double translation_step = 0.01;
  double step_growth = 1.5;  // recovery after backtracking, capped at the base step
  int backtrack_limit = 10;
  int fine_max_iterations = 100;
  double fine_relative_tolerance = 1e-5;
  int fine_convergence_count = 3;  // consecutive small-decrease iterations
  double lambda_lo = 0.88;
  double lambda_up = 0.95;
  RenderOptions render;
  AdjointOptions adjoint;
};

struct CoarseResult {
  CameraPose pose;
  std::vector<LossFlowRecord> flows;  // background (id 0) + every observed object
  int iterations_run = 0;
  bool aborted = false;  // non-finite loss encountered
};

// Background-only gradient descent on the combined loss; every iteration
// also evaluates each object's combined loss and appends it to that
// object's flow.
CoarseResult coarse_track(const GaussianMap& map, const FrameObservation& frame,
                          const FramePartition& partition, const CameraIntrinsics& intrinsics,
                          const CameraPose& init_pose, const TrackerOptions& opts = {});

struct TrackingResult {
  CameraPose pose;
  std::vector<LossFlowRecord> loss_flows;
  std::map<int32_t, Classification> classifications;
  int coarse_iterations_run = 0;
  int fine_iterations_run = 0;
  double final_loss = 0.0;
  bool converged = false;
  bool aborted = false;
};

// Joint loss over the background and every object not currently dynamic;
// stops when the relative decrease stays below the tolerance for
// `fine_convergence_count` consecutive iterations.
TrackingResult fine_track(const GaussianMap& map, const FrameObservation& frame,
                          const FramePartition& partition, const CameraIntrinsics& intrinsics,
                          const CameraPose& init_pose, const std::set<int32_t>& dynamic_ids,
                          const TrackerOptions& opts = {});

}  // namespace fsp
