#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "common.hpp"
#include "image.hpp"

namespace fsp {

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
  double depth_scale = 5000.0;  // raw depth units per meter

  void validate() const;

  Vec2 project(const Vec3& p_cam) const {
    return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
  }
  Vec3 back_project(double u, double v, double z) const {
    return {(u - cx) * z / fx, (v - cy) * z / fy, z};
  }
};

// World-to-camera rigid transform.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate(double tol = 1e-6) const;

  Vec3 to_camera(const Vec3& p_world) const { return rotation * p_world + translation; }
  Vec3 to_world(const Vec3& p_cam) const { return rotation.transpose() * (p_cam - translation); }
  Vec3 camera_center() const { return -(rotation.transpose() * translation); }

  CameraPose inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }
  // this ∘ other: first apply `other`, then this.
  CameraPose compose(const CameraPose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  // Applies the tangent increment [rotation | translation] on the left:
  // x_cam' = exp(w^) * (R x + t) + v. This is the convention all pose
  // gradients in the renderer are expressed in.
  CameraPose retract(const Eigen::Matrix<double, 6, 1>& delta) const {
    const Mat3 e = so3_exp(delta.head<3>());
    return {e * rotation, e * translation + delta.tail<3>()};
  }
};

struct GaussianPrimitive {
  Vec3 mean = Vec3::Zero();          // world position
  Vec3 scale = Vec3::Ones();         // per-axis standard deviation, meters
  Quat orientation = Quat::Identity();
  double opacity = 0.5;
  Vec3 color = Vec3::Zero();         // RGB in [0,1]
  int32_t object_id = 0;             // 0 = background
  uint64_t uid = 0;                  // stable identity across map edits

  Mat3 world_covariance() const {
    const Mat3 r = orientation.toRotationMatrix();
    return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
  }
};

class GaussianMap {
 public:
  std::vector<GaussianPrimitive>& primitives() { return primitives_; }
  const std::vector<GaussianPrimitive>& primitives() const { return primitives_; }
  size_t size() const { return primitives_.size(); }
  bool empty() const { return primitives_.empty(); }

  uint64_t generation() const { return generation_; }
  void bump_generation() { ++generation_; }
  uint64_t next_uid() const { return next_uid_; }

  // Assigns a fresh uid and appends; counts as a structural change.
  void insert(GaussianPrimitive g);
  // Removes the given primitive indices; counts as a structural change.
  void remove(const std::vector<size_t>& indices);

  // Rebuilds a map from persisted state, keeping the stored uids valid.
  static GaussianMap restore(std::vector<GaussianPrimitive> primitives, uint64_t next_uid,
                             uint64_t generation);

 private:
  std::vector<GaussianPrimitive> primitives_;
  uint64_t generation_ = 0;
  uint64_t next_uid_ = 1;
};

struct FrameObservation {
  int index = 0;
  double timestamp = 0.0;
  ImageRGB rgb;
  ImageGray depth;   // meters, 0 or NaN = invalid
  ImageLabel mask;   // object ids, 0 = background

  void validate() const;
};

inline bool depth_valid(double d) { return std::isfinite(d) && d > 0.0; }

// Point records carry 3 RGB channels, 3 world coordinates and the object id.
// The source camera-frame depth is kept alongside for size initialization.
struct LabeledPointCloud {
  struct Point {
    Vec3 color;
    Vec3 position;  // world frame
    int32_t object_id;
    double camera_depth;
    size_t pixel_index;  // flattened source pixel
  };
  std::vector<Point> points;

  bool empty() const { return points.empty(); }
  double mean_camera_depth() const;
};

// Pixel-set partition of one frame: object_id -> flattened pixel indices.
// Key 0 holds the background set.
struct FramePartition {
  std::map<int32_t, std::vector<size_t>> sets;

  const std::vector<size_t>& background() const { return sets.at(0); }
  std::vector<int32_t> object_ids() const;
};

// Back-projects one pixel in `stride` per row (diagonally offset so the
// kept columns rotate across rows) with valid depth into a world-frame
// labeled cloud. Stride 1 keeps every pixel.
LabeledPointCloud back_project(const FrameObservation& frame, const CameraIntrinsics& intrinsics,
                               const CameraPose& pose, int stride);

struct InitOptions {
  double scale_coefficient = 0.01;   // isotropic size = mean depth * coefficient
  double min_scale = 1e-4;           // meters
  double max_scale = 0.5;            // meters
  double initial_opacity = 0.5;
};

// One primitive per cloud point; identity orientation and an isotropic size
// derived from the cloud's mean camera depth.
GaussianMap init_gaussians(const LabeledPointCloud& cloud, const InitOptions& opts = {});

// Same initialization rule, appending into an existing map (densification).
void append_gaussians(GaussianMap& map, const LabeledPointCloud& cloud,
                      const InitOptions& opts = {});

// Splits a frame into per-object pixel sets and the background set, a
// partition of the full image.
FramePartition split_frame(const FrameObservation& frame);

}  // namespace fsp
