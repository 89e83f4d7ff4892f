#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "evaluation.hpp"
#include "scene_model.hpp"

namespace fsp {

// Piecewise-linear track over frame numbers; clamped outside the key range.
struct MotionScript {
  struct Key {
    double frame = 0.0;
    Vec3 value = Vec3::Zero();
  };
  std::vector<Key> keys;

  Vec3 at(double frame) const;
};

struct SyntheticPlane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 color = Vec3::Constant(0.5);
  double texture_amp = 0.0;
  Vec3 texture_freq = Vec3::Zero();
};

struct SyntheticObject {
  enum class Shape { Sphere, Box };
  int32_t id = 1;
  Shape shape = Shape::Sphere;
  double radius = 0.25;             // sphere
  Vec3 half_extents = Vec3::Zero(); // box
  Vec3 color = Vec3::Constant(0.5);
  double texture_amp = 0.0;
  Vec3 texture_freq = Vec3::Zero();
  MotionScript track;
};

struct NoiseSpec {
  double photometric_sigma = 0.0;
  double depth_sigma = 0.0;
  double depth_dropout = 0.0;
};

struct SyntheticSceneSpec {
  int width = 64;
  int height = 64;
  double fx = 0.0, fy = 0.0, cx = -1.0, cy = -1.0;  // defaults derived when unset
  int frame_count = 2;
  double timestep = 1.0 / 30.0;
  double depth_scale = 5000.0;
  uint64_t seed = 1;
  NoiseSpec noise;
  MotionScript camera_position;
  MotionScript camera_look_at;
  Vec3 up = Vec3(0.0, -1.0, 0.0);
  std::vector<SyntheticPlane> planes;
  std::vector<SyntheticObject> objects;

  void validate() const;
};

SyntheticSceneSpec parse_scene_spec(const std::string& json_text);
SyntheticSceneSpec load_scene_spec(const std::string& path);

CameraIntrinsics spec_intrinsics(const SyntheticSceneSpec& spec);

// World-to-camera pose of the scripted camera at a (fractional) frame.
CameraPose camera_pose_at(const SyntheticSceneSpec& spec, double frame);

struct SyntheticSequence {
  std::vector<FrameObservation> frames;
  Trajectory ground_truth;  // camera-to-world, one entry per frame
};

// Analytic ray-cast rendering; no splatting code involved.
SyntheticSequence generate_synthetic(const SyntheticSceneSpec& spec);

// Emits the sequence as a TUM-layout dataset (rgb/, depth/, masks/, index
// files, groundtruth.txt) that load_sequence can read back.
void write_tum_dataset(const SyntheticSceneSpec& spec, const std::string& out_dir);

}  // namespace fsp
