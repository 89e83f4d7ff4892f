#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "common.hpp"
#include "scene_model.hpp"

namespace fsp {

// Combined-loss values for one entity (object or background) across the
// coarse tracking iterations of a single frame.
struct LossFlowRecord {
  int32_t object_id = 0;
  std::vector<double> values;

  std::vector<double> deltas() const;
};

// (mean of values, population std of deltas): a well-reconstructed entity
// settles onto a low loss level with small step-to-step fluctuation, while a
// moving one keeps both higher throughout the pose iterations.
Vec2 extract_features(const LossFlowRecord& record);

struct GmmComponent {
  Vec2 mean = Vec2::Zero();
  Vec2 variance = Vec2::Ones();  // diagonal covariance
  double weight = 1.0;
};

struct GmmModel {
  int component_count = 1;
  std::vector<GmmComponent> components;
  int static_component = 0;  // lower mean on the loss-level axis
  bool converged = true;
  double log_likelihood = 0.0;  // in standardized feature space
  double aic2 = 0.0;  // AIC of the 2-component fit on raw-scale features

  // Standardization applied to raw features before EM; classification
  // happens in this space.
  Vec2 feature_mean = Vec2::Zero();
  Vec2 feature_scale = Vec2::Ones();

  Vec2 standardize(const Vec2& raw) const;
};

struct GmmOptions {
  uint64_t seed = 7;
  int max_iterations = 100;
  double tolerance = 1e-6;  // absolute log-likelihood change
  // Variance floor in standardized feature units: keeps a component that
  // collapses onto one or two points from blowing up the log-likelihood.
  double variance_floor = 1e-2;
  int kmeans_iterations = 10;
};

// Fits a 2-component diagonal GMM by seeded k-means++ EM on standardized
// features; if its AIC exceeds 0 the model falls back to a single
// component (no dynamic population).
GmmModel fit_gmm(const std::vector<Vec2>& features, const GmmOptions& opts = {});

struct Classification {
  bool dynamic = false;
  double posterior = 0.0;  // responsibility of the non-static component
};

Classification classify(const GmmModel& model, const Vec2& raw_feature, double theta);

struct DynamicObjectRegistry {
  std::map<int32_t, bool> state;  // true = Dynamic
  std::map<int32_t, int> static_streak;

  std::set<int32_t> dynamic_set() const;
  bool is_dynamic(int32_t id) const;
};

// Applies one frame of classifications. A Dynamic result resets the streak;
// a Static result on a Dynamic id increments it and flips the id back to
// Static once `streak_to_static` consecutive frames agree.
void update_registry(DynamicObjectRegistry& registry,
                     const std::map<int32_t, bool>& frame_classifications,
                     int streak_to_static = 3);

std::vector<size_t> prune_set(const DynamicObjectRegistry& registry, const GaussianMap& map);

// CSV dump, columns: frame,object_id,iteration,loss
void write_loss_flows_csv(const std::map<int, std::vector<LossFlowRecord>>& flows_by_frame,
                          const std::string& path);

}  // namespace fsp
