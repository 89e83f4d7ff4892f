#include "tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fsp {

namespace {

std::vector<const PixelSet*> included_sets(const FramePartition& partition,
                                           const std::set<int32_t>& dynamic_ids) {
  std::vector<const PixelSet*> sets;
  for (const auto& [id, set] : partition.sets) {
    if (set.empty()) continue;
    if (id != 0 && dynamic_ids.count(id)) continue;
    sets.push_back(&set);
  }
  return sets;
}

double sets_loss(const RenderedFrame& rendered, const FrameObservation& frame,
                 const std::vector<const PixelSet*>& sets, double lambda_a) {
  double total = 0.0;
  for (const PixelSet* set : sets) {
    const double pho = masked_photometric(rendered, frame, *set);
    const GeometricLoss geo = masked_geometric(rendered, frame, *set);
    total += combine(pho, geo.value, lambda_a);
  }
  return total;
}

double forward_sets_loss(const GaussianMap& map, const CameraPose& pose,
                         const CameraIntrinsics& intrinsics, const FrameObservation& frame,
                         const std::vector<const PixelSet*>& sets, double lambda_a,
                         const RenderOptions& render) {
  const RenderedFrame rendered = rasterize(project(map, pose, intrinsics, render), map,
                                           intrinsics, render);
  return sets_loss(rendered, frame, sets, lambda_a);
}

struct StepState {
  double rotation;
  double translation;
};

// Plain gradient step for the coarse stage: the step is kept even when the
// loss rises, the sizes halve after a rise and recover by `step_growth` after
// a fall, with a floor that keeps the pose in motion for all iterations.
// Regions consistent with the map then wiggle gently around their optimum
// while misfit regions swing with every step, which is what makes the
// per-object loss flows informative.
void coarse_step(const GaussianMap& map, const FrameObservation& frame,
                 const CameraIntrinsics& intrinsics, const std::vector<const PixelSet*>& sets,
                 double lambda_a, const TrackerOptions& opts, const PoseTangent& grad,
                 double current_loss, CameraPose& pose, StepState& step) {
  const double rot_norm = grad.head<3>().norm();
  const double trans_norm = grad.tail<3>().norm();
  if (rot_norm < 1e-14 && trans_norm < 1e-14) return;
  PoseTangent delta = PoseTangent::Zero();
  if (rot_norm > 0.0) delta.head<3>() = -step.rotation * grad.head<3>() / rot_norm;
  if (trans_norm > 0.0) delta.tail<3>() = -step.translation * grad.tail<3>() / trans_norm;
  const CameraPose candidate = pose.retract(delta);
  double loss = std::numeric_limits<double>::infinity();
  try {
    loss = forward_sets_loss(map, candidate, intrinsics, frame, sets, lambda_a, opts.render);
  } catch (const NumericError&) {
    loss = std::numeric_limits<double>::infinity();
  }
  if (!std::isfinite(loss)) {
    step.rotation *= 0.5;
    step.translation *= 0.5;
    return;
  }
  pose = candidate;
  if (loss < current_loss) {
    step.rotation = std::min(step.rotation * opts.step_growth, opts.rotation_step);
    step.translation = std::min(step.translation * opts.step_growth, opts.translation_step);
  } else {
    step.rotation = std::max(step.rotation * 0.5, opts.rotation_step / 16.0);
    step.translation = std::max(step.translation * 0.5, opts.translation_step / 16.0);
  }
}

// Halving backtracking line search along the per-block normalized negative
// gradient, so the step sizes are displacement magnitudes rather than
// learning rates; on success the steps recover by `step_growth` up to their
// configured bases. The combined direction keeps a positive inner product
// with the gradient, so it is always a descent direction.
bool line_search(const GaussianMap& map, const FrameObservation& frame,
                 const CameraIntrinsics& intrinsics, const std::vector<const PixelSet*>& sets,
                 double lambda_a, const TrackerOptions& opts, const PoseTangent& grad,
                 double current_loss, CameraPose& pose, StepState& step, double& new_loss) {
  const double rot_norm = grad.head<3>().norm();
  const double trans_norm = grad.tail<3>().norm();
  if (rot_norm == 0.0 && trans_norm == 0.0) {
    new_loss = current_loss;
    return false;
  }
  PoseTangent direction = PoseTangent::Zero();
  if (rot_norm > 0.0) direction.head<3>() = grad.head<3>() / rot_norm;
  if (trans_norm > 0.0) direction.tail<3>() = grad.tail<3>() / trans_norm;
  for (int attempt = 0; attempt <= opts.backtrack_limit; ++attempt) {
    PoseTangent delta;
    delta.head<3>() = -step.rotation * direction.head<3>();
    delta.tail<3>() = -step.translation * direction.tail<3>();
    const CameraPose candidate = pose.retract(delta);
    double loss = std::numeric_limits<double>::infinity();
    try {
      loss = forward_sets_loss(map, candidate, intrinsics, frame, sets, lambda_a, opts.render);
    } catch (const NumericError&) {
      loss = std::numeric_limits<double>::infinity();
    }
    if (std::isfinite(loss) && loss < current_loss) {
      pose = candidate;
      new_loss = loss;
      step.rotation = std::min(step.rotation * opts.step_growth, opts.rotation_step);
      step.translation = std::min(step.translation * opts.step_growth, opts.translation_step);
      return true;
    }
    step.rotation *= 0.5;
    step.translation *= 0.5;
  }
  new_loss = current_loss;
  return false;
}

}  // namespace

CoarseResult coarse_track(const GaussianMap& map, const FrameObservation& frame,
                          const FramePartition& partition, const CameraIntrinsics& intrinsics,
                          const CameraPose& init_pose, const TrackerOptions& opts) {
  if (opts.coarse_iterations < 2)
    throw InputError("coarse_track: need at least 2 iterations for loss flows");

  CoarseResult result;
  result.pose = init_pose;

  std::map<int32_t, size_t> flow_index;
  auto flow_for = [&](int32_t id) -> LossFlowRecord& {
    const auto it = flow_index.find(id);
    if (it != flow_index.end()) return result.flows[it->second];
    flow_index[id] = result.flows.size();
    result.flows.push_back(LossFlowRecord{id, {}});
    return result.flows.back();
  };

  const std::vector<const PixelSet*> bg_only = {&partition.background()};
  StepState step{opts.rotation_step, opts.translation_step};

  for (int it = 0; it < opts.coarse_iterations; ++it) {
    RenderGradients grads;
    ObjectLossBreakdown breakdown;
    try {
      const RenderedFrame probe = rasterize(project(map, result.pose, intrinsics, opts.render),
                                            map, intrinsics, opts.render);
      breakdown = compute_losses(probe, frame, partition, opts.lambda_lo, opts.lambda_up);
      RenderAdjoint adjoint = make_zero_adjoint(intrinsics.width, intrinsics.height);
      accumulate_tracking_adjoint(adjoint, probe, frame, partition.background(),
                                  breakdown.lambda_a, opts.adjoint);
      grads = render_with_gradients(map, result.pose, intrinsics, adjoint, opts.render);
    } catch (const NumericError&) {
      result.aborted = true;
      break;
    }
    if (!std::isfinite(breakdown.background.combined)) {
      result.aborted = true;
      break;
    }

    flow_for(0).values.push_back(breakdown.background.combined);
    for (const auto& [id, terms] : breakdown.per_object)
      flow_for(id).values.push_back(terms.combined);
    ++result.iterations_run;

    coarse_step(map, frame, intrinsics, bg_only, breakdown.lambda_a, opts, grads.pose,
                breakdown.background.combined, result.pose, step);
  }
  return result;
}

TrackingResult fine_track(const GaussianMap& map, const FrameObservation& frame,
                          const FramePartition& partition, const CameraIntrinsics& intrinsics,
                          const CameraPose& init_pose, const std::set<int32_t>& dynamic_ids,
                          const TrackerOptions& opts) {
  TrackingResult result;
  result.pose = init_pose;

  const std::vector<const PixelSet*> sets = included_sets(partition, dynamic_ids);
  if (sets.empty()) throw InputError("fine_track: no pixel sets left to optimize");
  const double lambda_a = adaptive_lambda(frame, opts.lambda_lo, opts.lambda_up);

  StepState step{opts.rotation_step, opts.translation_step};
  int small_decrease_streak = 0;

  double current = std::numeric_limits<double>::quiet_NaN();
  for (int it = 0; it < opts.fine_max_iterations; ++it) {
    RenderGradients grads;
    try {
      const RenderedFrame probe = rasterize(project(map, result.pose, intrinsics, opts.render),
                                            map, intrinsics, opts.render);
      current = sets_loss(probe, frame, sets, lambda_a);
      if (!std::isfinite(current)) {
        result.aborted = true;
        break;
      }
      RenderAdjoint adjoint = make_zero_adjoint(intrinsics.width, intrinsics.height);
      for (const PixelSet* set : sets)
        accumulate_tracking_adjoint(adjoint, probe, frame, *set, lambda_a, opts.adjoint);
      grads = render_with_gradients(map, result.pose, intrinsics, adjoint, opts.render);
    } catch (const NumericError&) {
      result.aborted = true;
      break;
    }

    double accepted = current;
    line_search(map, frame, intrinsics, sets, lambda_a, opts, grads.pose, current,
                result.pose, step, accepted);
    ++result.fine_iterations_run;
    result.final_loss = accepted;

    const double rel = (current - accepted) / std::max(std::abs(current), 1e-12);
    small_decrease_streak = rel < opts.fine_relative_tolerance ? small_decrease_streak + 1 : 0;
    if (small_decrease_streak >= opts.fine_convergence_count) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace fsp
