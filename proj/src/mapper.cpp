#include "mapper.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "evaluation.hpp"

namespace fsp {

KeyframeScores keyframe_scores(const std::set<uint64_t>& current,
                               const std::set<uint64_t>& last_keyframe) {
  KeyframeScores scores;
  if (current.empty() || last_keyframe.empty()) {
    scores.degenerate = true;
    return scores;
  }
  size_t inter = 0;
  for (uint64_t uid : current) inter += last_keyframe.count(uid);
  const size_t uni = current.size() + last_keyframe.size() - inter;
  scores.iou = static_cast<double>(inter) / static_cast<double>(uni);
  scores.oc = static_cast<double>(inter) /
              static_cast<double>(std::min(current.size(), last_keyframe.size()));
  return scores;
}

bool keyframe_decision(double iou, double oc, double iou_max, double oc_min) {
  return iou < iou_max && oc > oc_min;
}

bool keyframe_decision(const std::set<uint64_t>& current, const std::set<uint64_t>& last_keyframe,
                       double iou_max, double oc_min) {
  const KeyframeScores scores = keyframe_scores(current, last_keyframe);
  if (scores.degenerate) return true;
  return keyframe_decision(scores.iou, scores.oc, iou_max, oc_min);
}

std::set<uint64_t> visibility_set(const GaussianMap& map, const CameraPose& pose,
                                  const CameraIntrinsics& intrinsics, const RenderOptions& render,
                                  double min_contribution) {
  std::set<uint64_t> visible;
  if (map.empty()) return visible;
  const auto projected = project(map, pose, intrinsics, render);
  const RenderedFrame frame = rasterize(projected, map, intrinsics, render);
  const std::vector<double> contribution = accumulated_contribution(frame, projected, map.size());
  for (size_t i = 0; i < map.size(); ++i) {
    if (contribution[i] > min_contribution) visible.insert(map.primitives()[i].uid);
  }
  return visible;
}

void KeyframeWindow::push(KeyframeEntry entry) {
  entry.observation.validate();
  if (!entries_.empty() && entry.frame_index <= entries_.back().frame_index)
    throw InputError("KeyframeWindow::push: frame index must increase");
  entries_.push_back(std::move(entry));
  while (entries_.size() > capacity_) entries_.pop_front();
}

const KeyframeEntry& KeyframeWindow::newest() const {
  if (entries_.empty()) throw InputError("KeyframeWindow::newest: window is empty");
  return entries_.back();
}

namespace {

struct AdamState {
  MapGradients first;   // running mean of gradients
  MapGradients second;  // running mean of squared gradients
  int step = 0;

  explicit AdamState(size_t n) {
    first.resize(n);
    second.resize(n);
  }
};

inline double adam_delta(double& m, double& v, double g, double lr, const AdamOptions& o,
                         double bias1, double bias2) {
  m = o.beta1 * m + (1.0 - o.beta1) * g;
  v = o.beta2 * v + (1.0 - o.beta2) * g * g;
  return lr * (m / bias1) / (std::sqrt(v / bias2) + o.epsilon);
}

void adam_step(GaussianMap& map, const MapGradients& grads, AdamState& state,
               const MapperOptions& opts) {
  const AdamOptions& a = opts.adam;
  ++state.step;
  const double bias1 = 1.0 - std::pow(a.beta1, state.step);
  const double bias2 = 1.0 - std::pow(a.beta2, state.step);
  auto& prims = map.primitives();
  for (size_t i = 0; i < prims.size(); ++i) {
    GaussianPrimitive& g = prims[i];
    for (int k = 0; k < 3; ++k) {
      g.mean[k] -= adam_delta(state.first.mean[i][k], state.second.mean[i][k], grads.mean[i][k],
                              a.lr_mean, a, bias1, bias2);
      g.scale[k] -= adam_delta(state.first.scale[i][k], state.second.scale[i][k],
                               grads.scale[i][k], a.lr_scale, a, bias1, bias2);
      g.color[k] -= adam_delta(state.first.color[i][k], state.second.color[i][k],
                               grads.color[i][k], a.lr_color, a, bias1, bias2);
      g.scale[k] = std::clamp(g.scale[k], opts.init.min_scale, opts.init.max_scale);
      g.color[k] = std::clamp(g.color[k], 0.0, 1.0);
    }
    g.opacity -= adam_delta(state.first.opacity[i], state.second.opacity[i], grads.opacity[i],
                            a.lr_opacity, a, bias1, bias2);
    g.opacity = std::clamp(g.opacity, opts.min_opacity, 1.0);

    Eigen::Vector4d q(g.orientation.w(), g.orientation.x(), g.orientation.y(), g.orientation.z());
    for (int k = 0; k < 4; ++k) {
      q[k] -= adam_delta(state.first.orientation[i][k], state.second.orientation[i][k],
                         grads.orientation[i][k], a.lr_orientation, a, bias1, bias2);
    }
    const double norm = q.norm();
    if (norm < 1e-12) {
      g.orientation = Quat::Identity();
    } else {
      q /= norm;
      g.orientation = Quat(q[0], q[1], q[2], q[3]);
    }
  }
  map.bump_generation();
}

void add_scaled(MapGradients& acc, const MapGradients& g, double factor) {
  for (size_t i = 0; i < acc.mean.size(); ++i) {
    acc.mean[i] += factor * g.mean[i];
    acc.scale[i] += factor * g.scale[i];
    acc.orientation[i] += factor * g.orientation[i];
    acc.opacity[i] += factor * g.opacity[i];
    acc.color[i] += factor * g.color[i];
  }
}

LossTerms full_frame_terms(const RenderedFrame& rendered, const FrameObservation& frame,
                           const PixelSet& all_pixels, double lambda_a) {
  LossTerms terms;
  terms.photometric = masked_photometric(rendered, frame, all_pixels);
  const GeometricLoss geo = masked_geometric(rendered, frame, all_pixels);
  terms.geometric = geo.value;
  terms.geometric_degenerate = geo.degenerate;
  terms.combined = combine(terms.photometric, geo.degenerate ? 0.0 : geo.value,
                           geo.degenerate ? 1.0 : lambda_a);
  return terms;
}

}  // namespace

MappingStats initial_mapping(GaussianMap& map, const FrameObservation& frame,
                             const CameraPose& pose, const CameraIntrinsics& intrinsics,
                             const MapperOptions& opts) {
  frame.validate();
  intrinsics.validate();
  if (map.empty()) throw InputError("initial_mapping: map has no primitives");
  if (!frame.rgb.same_shape(intrinsics.width, intrinsics.height))
    throw InputError("initial_mapping: frame and intrinsics dimensions disagree");

  PixelSet all_pixels(frame.rgb.pixel_count());
  for (size_t i = 0; i < all_pixels.size(); ++i) all_pixels[i] = i;
  const double lambda_a = adaptive_lambda(frame, opts.lambda_lo, opts.lambda_up);

  MappingStats stats;
  AdamState adam(map.size());
  double previous = std::numeric_limits<double>::infinity();
  int rising = 0;
  for (int iter = 0;; ++iter) {
    const auto projected = project(map, pose, intrinsics, opts.render);
    const RenderedFrame rendered = rasterize(projected, map, intrinsics, opts.render);
    const LossTerms terms = full_frame_terms(rendered, frame, all_pixels, lambda_a);
    if (iter == 0) stats.initial_loss = terms.combined;
    stats.final_loss = terms.combined;

    bool stop = iter == opts.initial_iterations;
    if (!std::isfinite(terms.combined)) {
      stats.diverged = true;
      stop = true;
    } else {
      rising = terms.combined > previous ? rising + 1 : 0;
      previous = terms.combined;
      if (rising >= opts.divergence_patience) {
        stats.diverged = true;
        stop = true;
      }
    }
    if (stop) {
      stats.final_psnr = psnr(rendered.color, frame.rgb);
      break;
    }

    RenderAdjoint adjoint = make_zero_adjoint(intrinsics.width, intrinsics.height);
    accumulate_tracking_adjoint(adjoint, rendered, frame, all_pixels, lambda_a, opts.adjoint);
    const RenderGradients grads =
        render_with_gradients(map, pose, intrinsics, adjoint, opts.render);
    adam_step(map, grads.primitives, adam, opts);
    ++stats.iterations_run;
  }
  return stats;
}

namespace {

size_t densify(GaussianMap& map, const KeyframeEntry& keyframe,
               const CameraIntrinsics& intrinsics, const std::set<int32_t>& dynamic_ids,
               const MapperOptions& opts) {
  const FrameObservation& obs = keyframe.observation;
  ImageGray alpha(intrinsics.width, intrinsics.height, 0.0);
  if (!map.empty()) {
    const auto projected = project(map, keyframe.pose, intrinsics, opts.render);
    alpha = rasterize(projected, map, intrinsics, opts.render).alpha;
  }

  const CameraPose cam_to_world = keyframe.pose.inverse();
  LabeledPointCloud cloud;
  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = v % opts.densify_stride; u < intrinsics.width; u += opts.densify_stride) {
      const size_t idx = static_cast<size_t>(v) * intrinsics.width + u;
      if (alpha.at_index(idx) >= opts.densify_alpha) continue;
      const int32_t id = obs.mask.at_index(idx);
      if (dynamic_ids.count(id)) continue;
      const double z = obs.depth.at_index(idx);
      if (!depth_valid(z)) continue;
      LabeledPointCloud::Point pt;
      pt.position = cam_to_world.to_camera(intrinsics.back_project(u, v, z));
      pt.color = {obs.rgb.at_index(idx, 0), obs.rgb.at_index(idx, 1), obs.rgb.at_index(idx, 2)};
      pt.object_id = id;
      pt.camera_depth = z;
      pt.pixel_index = idx;
      cloud.points.push_back(pt);
    }
  }
  if (cloud.empty()) return 0;
  append_gaussians(map, cloud, opts.init);
  return cloud.points.size();
}

std::vector<size_t> sampled_keyframes(const KeyframeWindow& window, int random_count,
                                      std::mt19937_64& rng) {
  const size_t newest = window.size() - 1;
  std::vector<size_t> picks{newest};
  if (newest == 0 || random_count <= 0) return picks;
  std::vector<size_t> others(newest);
  for (size_t i = 0; i < newest; ++i) others[i] = i;
  for (int k = 0; k < random_count && !others.empty(); ++k) {
    const size_t j = static_cast<size_t>(rng() % others.size());
    picks.push_back(others[j]);
    others.erase(others.begin() + static_cast<std::ptrdiff_t>(j));
  }
  std::sort(picks.begin(), picks.end());
  return picks;
}

std::set<int32_t> union_ids(const std::set<int32_t>& a, const std::set<int32_t>& b) {
  std::set<int32_t> out = a;
  out.insert(b.begin(), b.end());
  return out;
}

}  // namespace

MappingStats map_update(GaussianMap& map, const KeyframeWindow& window,
                        const DynamicObjectRegistry& registry,
                        const CameraIntrinsics& intrinsics, const MapperOptions& opts,
                        std::mt19937_64& rng) {
  if (window.empty()) throw InputError("map_update: keyframe window is empty");
  intrinsics.validate();
  for (size_t i = 0; i < window.size(); ++i) {
    if (!window.at(i).observation.rgb.same_shape(intrinsics.width, intrinsics.height))
      throw InputError("map_update: keyframe and intrinsics dimensions disagree");
  }

  MappingStats stats;
  const std::set<int32_t> dynamic_now = registry.dynamic_set();

  const std::vector<size_t> doomed = prune_set(registry, map);
  stats.pruned_dynamic = doomed.size();
  map.remove(doomed);

  stats.densified = densify(map, window.newest(), intrinsics, dynamic_now, opts);

  if (!map.empty()) {
    AdamState adam(map.size());
    bool first_recorded = false;
    for (int iter = 0; iter < opts.update_iterations; ++iter) {
      const std::vector<size_t> picks = sampled_keyframes(window, opts.random_keyframes, rng);
      MapGradients total;
      total.resize(map.size());
      double loss_sum = 0.0;
      size_t used = 0;
      for (size_t pick : picks) {
        const KeyframeEntry& kf = window.at(pick);
        const auto projected = project(map, kf.pose, intrinsics, opts.render);
        const RenderedFrame rendered = rasterize(projected, map, intrinsics, opts.render);
        const std::set<int32_t> excluded = union_ids(kf.dynamic_snapshot, dynamic_now);
        const double lambda_a = adaptive_lambda(kf.observation, opts.lambda_lo, opts.lambda_up);
        MappingLoss loss;
        try {
          loss = mapping_loss(rendered, kf.observation, excluded, lambda_a, opts.coverage_floor);
        } catch (const InputError&) {
          continue;  // keyframe fully masked out; nothing to optimize there
        }
        const RenderAdjoint adjoint =
            mapping_adjoint(rendered, kf.observation, loss.weights, lambda_a, opts.adjoint);
        const RenderGradients grads =
            render_with_gradients(map, kf.pose, intrinsics, adjoint, opts.render);
        add_scaled(total, grads.primitives, 1.0);
        loss_sum += loss.value;
        ++used;
      }
      if (used == 0) continue;
      const double scale = 1.0 / static_cast<double>(used);
      MapGradients averaged;
      averaged.resize(map.size());
      add_scaled(averaged, total, scale);
      if (!first_recorded) {
        stats.initial_loss = loss_sum * scale;
        first_recorded = true;
      }
      stats.final_loss = loss_sum * scale;
      adam_step(map, averaged, adam, opts);
      ++stats.iterations_run;
    }
  }

  std::vector<size_t> faint;
  const auto& prims = map.primitives();
  for (size_t i = 0; i < prims.size(); ++i) {
    if (prims[i].opacity < opts.prune_opacity) faint.push_back(i);
  }
  stats.pruned_transparent = faint.size();
  map.remove(faint);

  if (!map.empty()) {
    const KeyframeEntry& newest = window.newest();
    const auto projected = project(map, newest.pose, intrinsics, opts.render);
    const RenderedFrame rendered = rasterize(projected, map, intrinsics, opts.render);
    const std::set<int32_t> excluded = union_ids(newest.dynamic_snapshot, dynamic_now);
    ImageGray keep(intrinsics.width, intrinsics.height, 0.0);
    size_t kept = 0;
    for (size_t p = 0; p < keep.pixel_count(); ++p) {
      if (excluded.count(newest.observation.mask.at_index(p))) continue;
      keep.at_index(p) = 1.0;
      ++kept;
    }
    stats.final_psnr =
        kept > 0 ? psnr(rendered.color, newest.observation.rgb, &keep) : 0.0;
  }
  return stats;
}

namespace {

constexpr char kCheckpointMagic[8] = {'F', 'S', 'P', 'M', 'A', 'P', '0', '1'};

void put_f64(std::ostream& out, double value) {
  char buf[sizeof(double)];
  std::memcpy(buf, &value, sizeof(double));
  out.write(buf, sizeof(double));
}

void put_u64(std::ostream& out, uint64_t value) {
  char buf[sizeof(uint64_t)];
  std::memcpy(buf, &value, sizeof(uint64_t));
  out.write(buf, sizeof(uint64_t));
}

void put_i32(std::ostream& out, int32_t value) {
  char buf[sizeof(int32_t)];
  std::memcpy(buf, &value, sizeof(int32_t));
  out.write(buf, sizeof(int32_t));
}

double take_f64(std::istream& in) {
  char buf[sizeof(double)];
  in.read(buf, sizeof(double));
  double value;
  std::memcpy(&value, buf, sizeof(double));
  return value;
}

uint64_t take_u64(std::istream& in) {
  char buf[sizeof(uint64_t)];
  in.read(buf, sizeof(uint64_t));
  uint64_t value;
  std::memcpy(&value, buf, sizeof(uint64_t));
  return value;
}

int32_t take_i32(std::istream& in) {
  char buf[sizeof(int32_t)];
  in.read(buf, sizeof(int32_t));
  int32_t value;
  std::memcpy(&value, buf, sizeof(int32_t));
  return value;
}

}  // namespace

void write_map_checkpoint(const GaussianMap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open map checkpoint for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u64(out, map.size());
  put_u64(out, map.next_uid());
  put_u64(out, map.generation());
  for (const GaussianPrimitive& g : map.primitives()) {
    for (int k = 0; k < 3; ++k) put_f64(out, g.mean[k]);
    for (int k = 0; k < 3; ++k) put_f64(out, g.scale[k]);
    put_f64(out, g.orientation.w());
    put_f64(out, g.orientation.x());
    put_f64(out, g.orientation.y());
    put_f64(out, g.orientation.z());
    put_f64(out, g.opacity);
    for (int k = 0; k < 3; ++k) put_f64(out, g.color[k]);
    put_i32(out, g.object_id);
    put_u64(out, g.uid);
  }
  if (!out) throw IoError("short write on map checkpoint: " + path);
}

GaussianMap read_map_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open map checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw ParseError("map checkpoint: bad magic in " + path);
  const uint64_t count = take_u64(in);
  const uint64_t next_uid = take_u64(in);
  const uint64_t generation = take_u64(in);
  std::vector<GaussianPrimitive> prims;
  prims.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    GaussianPrimitive g;
    for (int k = 0; k < 3; ++k) g.mean[k] = take_f64(in);
    for (int k = 0; k < 3; ++k) g.scale[k] = take_f64(in);
    const double w = take_f64(in);
    const double x = take_f64(in);
    const double y = take_f64(in);
    const double z = take_f64(in);
    g.orientation = Quat(w, x, y, z);
    g.opacity = take_f64(in);
    for (int k = 0; k < 3; ++k) g.color[k] = take_f64(in);
    g.object_id = take_i32(in);
    g.uid = take_u64(in);
    if (!in) throw ParseError("map checkpoint: truncated record in " + path);
    prims.push_back(g);
  }
  return GaussianMap::restore(std::move(prims), next_uid, generation);
}

}  // namespace fsp
