#include "scene_model.hpp"

#include <algorithm>
#include <cmath>

namespace fsp {

void CameraIntrinsics::validate() const {
  if (fx <= 0 || fy <= 0) throw InputError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InputError("intrinsics: image size must be positive");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw InputError("intrinsics: principal point outside image");
  if (depth_scale <= 0) throw InputError("intrinsics: depth_scale must be positive");
}

void CameraPose::validate(double tol) const {
  const Mat3 should_be_identity = rotation.transpose() * rotation;
  if ((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
    throw InputError("pose: rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > tol)
    throw InputError("pose: rotation determinant is not 1");
  if (!translation.allFinite()) throw InputError("pose: non-finite translation");
}

void GaussianMap::insert(GaussianPrimitive g) {
  g.uid = next_uid_++;
  primitives_.push_back(std::move(g));
  ++generation_;
}

void GaussianMap::remove(const std::vector<size_t>& indices) {
  if (indices.empty()) return;
  std::vector<bool> drop(primitives_.size(), false);
  for (size_t i : indices) {
    if (i >= primitives_.size()) throw InputError("GaussianMap::remove: index out of range");
    drop[i] = true;
  }
  size_t out = 0;
  for (size_t i = 0; i < primitives_.size(); ++i) {
    if (!drop[i]) primitives_[out++] = primitives_[i];
  }
  primitives_.resize(out);
  ++generation_;
}

GaussianMap GaussianMap::restore(std::vector<GaussianPrimitive> primitives, uint64_t next_uid,
                                 uint64_t generation) {
  GaussianMap map;
  for (const auto& g : primitives) {
    if (g.uid == 0 || g.uid >= next_uid)
      throw InputError("GaussianMap::restore: primitive uid outside issued range");
  }
  map.primitives_ = std::move(primitives);
  map.next_uid_ = next_uid;
  map.generation_ = generation;
  return map;
}

void FrameObservation::validate() const {
  const int w = rgb.width, h = rgb.height;
  if (w <= 0 || h <= 0) throw InputError("frame: empty rgb image");
  if (!depth.same_shape(w, h) || !mask.same_shape(w, h))
    throw InputError("frame: rgb, depth and mask dimensions differ");
  for (size_t i = 0; i < depth.pixel_count(); ++i) {
    const double d = depth.at_index(i);
    if (!std::isnan(d) && d < 0) throw InputError("frame: negative depth value");
  }
  for (size_t i = 0; i < mask.pixel_count(); ++i) {
    if (mask.at_index(i) < 0) throw InputError("frame: negative mask label");
  }
}

double LabeledPointCloud::mean_camera_depth() const {
  if (points.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : points) sum += p.camera_depth;
  return sum / static_cast<double>(points.size());
}

std::vector<int32_t> FramePartition::object_ids() const {
  std::vector<int32_t> ids;
  for (const auto& [id, pixels] : sets) {
    if (id != 0) ids.push_back(id);
  }
  return ids;
}

LabeledPointCloud back_project(const FrameObservation& frame, const CameraIntrinsics& intrinsics,
                               const CameraPose& pose, int stride) {
  intrinsics.validate();
  if (stride < 1) throw InputError("back_project: stride must be >= 1");
  if (!frame.rgb.same_shape(intrinsics.width, intrinsics.height))
    throw InputError("back_project: frame and intrinsics dimensions disagree");
  frame.validate();

  const CameraPose cam_to_world = pose.inverse();
  LabeledPointCloud cloud;
  const size_t n = frame.depth.pixel_count();
  cloud.points.reserve(n / stride + 1);
  // One pixel in `stride` per row, offset diagonally so rows do not alias
  // onto the same columns when the stride divides the image width.
  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = v % stride; u < intrinsics.width; u += stride) {
      const size_t idx = static_cast<size_t>(v) * intrinsics.width + u;
      const double z = frame.depth.at_index(idx);
      if (!depth_valid(z)) continue;
      const Vec3 p_cam = intrinsics.back_project(u, v, z);
      LabeledPointCloud::Point pt;
      pt.position = cam_to_world.to_camera(p_cam);  // cam_to_world maps camera -> world
      pt.color = {frame.rgb.at_index(idx, 0), frame.rgb.at_index(idx, 1),
                  frame.rgb.at_index(idx, 2)};
      pt.object_id = frame.mask.at_index(idx);
      pt.camera_depth = z;
      pt.pixel_index = idx;
      cloud.points.push_back(pt);
    }
  }
  if (cloud.points.empty())
    throw InputError("back_project: no valid depth pixels in sampled set");
  return cloud;
}

namespace {

GaussianPrimitive make_primitive(const LabeledPointCloud::Point& p, double iso_scale,
                                 const InitOptions& opts) {
  GaussianPrimitive g;
  g.mean = p.position;
  g.scale = Vec3::Constant(iso_scale);
  g.orientation = Quat::Identity();
  g.opacity = opts.initial_opacity;
  g.color = p.color;
  g.object_id = p.object_id;
  return g;
}

double isotropic_scale(const LabeledPointCloud& cloud, const InitOptions& opts) {
  const double s = cloud.mean_camera_depth() * opts.scale_coefficient;
  return std::clamp(s, opts.min_scale, opts.max_scale);
}

}  // namespace

GaussianMap init_gaussians(const LabeledPointCloud& cloud, const InitOptions& opts) {
  if (cloud.empty()) throw InputError("init_gaussians: empty point cloud");
  GaussianMap map;
  const double s = isotropic_scale(cloud, opts);
  for (const auto& p : cloud.points) map.insert(make_primitive(p, s, opts));
  return map;
}

void append_gaussians(GaussianMap& map, const LabeledPointCloud& cloud, const InitOptions& opts) {
  if (cloud.empty()) throw InputError("append_gaussians: empty point cloud");
  const double s = isotropic_scale(cloud, opts);
  for (const auto& p : cloud.points) map.insert(make_primitive(p, s, opts));
}

FramePartition split_frame(const FrameObservation& frame) {
  if (frame.mask.empty()) throw InputError("split_frame: mask missing");
  FramePartition part;
  part.sets[0];  // background set always present
  for (size_t idx = 0; idx < frame.mask.pixel_count(); ++idx) {
    part.sets[frame.mask.at_index(idx)].push_back(idx);
  }
  return part;
}

}  // namespace fsp
