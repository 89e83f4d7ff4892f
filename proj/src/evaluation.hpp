#pragma once

#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "image.hpp"

namespace fsp {

// Camera-to-world sample of a trajectory, TUM convention.
struct TrajectoryEntry {
  double timestamp = 0.0;
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
};

using Trajectory = std::vector<TrajectoryEntry>;

struct AteReport {
  double rmse = 0.0;
  double std_dev = 0.0;
  double mean = 0.0;
  std::vector<double> errors;  // per matched pair, meters
  Mat3 align_rotation = Mat3::Identity();
  Vec3 align_translation = Vec3::Zero();
  size_t matched_pairs = 0;
};

// Greedy one-to-one nearest-timestamp association within tolerance,
// smallest time difference first. Returns (index_a, index_b) pairs sorted
// by index_a.
std::vector<std::pair<size_t, size_t>> associate_timestamps(const std::vector<double>& a,
                                                            const std::vector<double>& b,
                                                            double tolerance);

// Rigid (no scale) least-squares alignment of estimated onto ground truth,
// then per-frame translational error.
AteReport align_and_ate(const Trajectory& estimated, const Trajectory& ground_truth,
                        double association_tolerance = 0.02);

// 10*log10(1/MSE) over the mask (all pixels when mask is null); zero MSE is
// capped at 100 dB.
double psnr(const ImageRGB& rendered, const ImageRGB& reference,
            const ImageGray* valid_mask = nullptr);

// Windowed SSIM on the channel-mean grayscale image: 11x11 Gaussian window
// (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, averaged over all fully interior
// window positions. With a mask, only windows centered on kept pixels count.
double ssim(const ImageRGB& rendered, const ImageRGB& reference,
            const ImageGray* valid_mask = nullptr);

bool metric_schedule(int frame_index);

void write_ate_report(const AteReport& report, const std::string& text_path,
                      const std::string& errors_csv_path);

}  // namespace fsp
