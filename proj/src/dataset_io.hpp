#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "evaluation.hpp"
#include "image.hpp"
#include "scene_model.hpp"

namespace fsp {

struct IndexEntry {
  double timestamp = 0.0;
  std::string path;  // relative to the sequence root
};

struct AssociatedFrame {
  double timestamp = 0.0;  // rgb timestamp
  std::string rgb_path;
  std::string depth_path;
  std::string mask_path;  // empty when no mask is available
};

struct SequenceManifest {
  std::string root;
  std::vector<IndexEntry> rgb;
  std::vector<IndexEntry> depth;
  std::vector<IndexEntry> masks;
  Trajectory ground_truth;  // empty when groundtruth.txt is absent
  std::vector<AssociatedFrame> frames;
  size_t unpaired_rgb = 0;
  size_t unpaired_depth = 0;
  bool has_masks = false;
};

// Parses rgb.txt / depth.txt / masks.txt / groundtruth.txt under root and
// associates rgb-depth(-mask) triples by nearest timestamp.
SequenceManifest load_sequence(const std::string& root, double association_tolerance = 0.02);

struct FrameLoadOptions {
  double depth_scale = 5000.0;
  int downscale = 1;  // integer box-downsampling factor for all images
};

// Loads one associated frame from disk. A missing mask entry yields an
// all-zero (background) mask.
FrameObservation load_frame(const SequenceManifest& manifest, size_t index,
                            const FrameLoadOptions& opts = {});

// TUM trajectory files: "timestamp tx ty tz qx qy qz qw", camera-to-world.
Trajectory read_trajectory(const std::string& path);
void write_trajectory(const Trajectory& trajectory, const std::string& path);

}  // namespace fsp
