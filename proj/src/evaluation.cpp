#include "evaluation.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>

namespace fsp {

std::vector<std::pair<size_t, size_t>> associate_timestamps(const std::vector<double>& a,
                                                            const std::vector<double>& b,
                                                            double tolerance) {
  struct Candidate {
    double dt;
    size_t i, j;
  };
  std::vector<Candidate> candidates;
  size_t lo = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    while (lo < b.size() && b[lo] < a[i] - tolerance) ++lo;
    for (size_t j = lo; j < b.size() && b[j] <= a[i] + tolerance; ++j)
      candidates.push_back({std::abs(a[i] - b[j]), i, j});
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    if (x.dt != y.dt) return x.dt < y.dt;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<char> used_a(a.size(), 0), used_b(b.size(), 0);
  std::vector<std::pair<size_t, size_t>> pairs;
  for (const Candidate& c : candidates) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = used_b[c.j] = 1;
    pairs.emplace_back(c.i, c.j);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

AteReport align_and_ate(const Trajectory& estimated, const Trajectory& ground_truth,
                        double association_tolerance) {
  std::vector<double> te(estimated.size()), tg(ground_truth.size());
  for (size_t i = 0; i < estimated.size(); ++i) te[i] = estimated[i].timestamp;
  for (size_t i = 0; i < ground_truth.size(); ++i) tg[i] = ground_truth[i].timestamp;
  const auto pairs = associate_timestamps(te, tg, association_tolerance);
  if (pairs.size() < 2)
    throw InputError("align_and_ate: fewer than 2 timestamp-matched pose pairs");

  Eigen::Matrix3Xd src(3, pairs.size()), dst(3, pairs.size());
  for (size_t k = 0; k < pairs.size(); ++k) {
    src.col(k) = estimated[pairs[k].first].position;
    dst.col(k) = ground_truth[pairs[k].second].position;
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);

  AteReport report;
  report.align_rotation = t.topLeftCorner<3, 3>();
  report.align_translation = t.topRightCorner<3, 1>();
  report.matched_pairs = pairs.size();
  report.errors.resize(pairs.size());
  double sq_sum = 0.0, sum = 0.0;
  for (size_t k = 0; k < pairs.size(); ++k) {
    const Vec3 aligned = report.align_rotation * src.col(k) + report.align_translation;
    const double e = (dst.col(k) - aligned).norm();
    report.errors[k] = e;
    sq_sum += e * e;
    sum += e;
  }
  const double n = static_cast<double>(pairs.size());
  report.rmse = std::sqrt(sq_sum / n);
  report.mean = sum / n;
  report.std_dev = std::sqrt(std::max(0.0, sq_sum / n - report.mean * report.mean));
  return report;
}

namespace {

void check_pair(const ImageRGB& a, const ImageRGB& b, const ImageGray* mask) {
  if (!a.same_shape(b)) throw InputError("image metric: shape mismatch");
  if (mask && (mask->width != a.width || mask->height != a.height))
    throw InputError("image metric: mask shape mismatch");
}

}  // namespace

double psnr(const ImageRGB& rendered, const ImageRGB& reference, const ImageGray* valid_mask) {
  check_pair(rendered, reference, valid_mask);
  double sq = 0.0;
  size_t counted = 0;
  for (size_t p = 0; p < rendered.pixel_count(); ++p) {
    if (valid_mask && valid_mask->at_index(p, 0) <= 0.0) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = rendered.at_index(p, c) - reference.at_index(p, c);
      sq += d * d;
    }
    ++counted;
  }
  if (counted == 0) throw InputError("psnr: empty mask");
  const double mse = sq / (3.0 * static_cast<double>(counted));
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageRGB& rendered, const ImageRGB& reference, const ImageGray* valid_mask) {
  check_pair(rendered, reference, valid_mask);
  constexpr int kWin = 11;
  constexpr int kHalf = kWin / 2;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const int w = rendered.width, h = rendered.height;
  if (w < kWin || h < kWin) throw InputError("ssim: image smaller than 11x11 window");

  double kernel[kWin];
  double ksum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kHalf;
    kernel[i] = std::exp(-0.5 * d * d / (1.5 * 1.5));
    ksum += kernel[i];
  }
  for (int i = 0; i < kWin; ++i) kernel[i] /= ksum;

  ImageGray ga(w, h, 0.0), gb(w, h, 0.0);
  for (size_t p = 0; p < rendered.pixel_count(); ++p) {
    ga.at_index(p, 0) =
        (rendered.at_index(p, 0) + rendered.at_index(p, 1) + rendered.at_index(p, 2)) / 3.0;
    gb.at_index(p, 0) =
        (reference.at_index(p, 0) + reference.at_index(p, 1) + reference.at_index(p, 2)) / 3.0;
  }

  double total = 0.0;
  size_t windows = 0;
  for (int y = kHalf; y < h - kHalf; ++y) {
    for (int x = kHalf; x < w - kHalf; ++x) {
      if (valid_mask && valid_mask->at(x, y, 0) <= 0.0) continue;
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int dy = -kHalf; dy <= kHalf; ++dy) {
        for (int dx = -kHalf; dx <= kHalf; ++dx) {
          const double wgt = kernel[dy + kHalf] * kernel[dx + kHalf];
          const double va = ga.at(x + dx, y + dy, 0);
          const double vb = gb.at(x + dx, y + dy, 0);
          mu_a += wgt * va;
          mu_b += wgt * vb;
          aa += wgt * va * va;
          bb += wgt * vb * vb;
          ab += wgt * va * vb;
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      total += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
               ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
      ++windows;
    }
  }
  if (windows == 0) throw InputError("ssim: no interior windows under mask");
  return total / static_cast<double>(windows);
}

bool metric_schedule(int frame_index) { return frame_index % 5 == 0; }

void write_ate_report(const AteReport& report, const std::string& text_path,
                      const std::string& errors_csv_path) {
  if (!text_path.empty()) {
    std::ofstream out(text_path);
    if (!out) throw IoError("cannot write ATE report: " + text_path);
    out.precision(9);
    out << "matched_pairs " << report.matched_pairs << "\n";
    out << "ate_rmse_m " << report.rmse << "\n";
    out << "ate_mean_m " << report.mean << "\n";
    out << "ate_std_m " << report.std_dev << "\n";
  }
  if (errors_csv_path.empty()) return;
  std::ofstream csv(errors_csv_path);
  if (!csv) throw IoError("cannot write ATE errors CSV: " + errors_csv_path);
  csv << "pair,error_m\n";
  csv.precision(17);
  for (size_t i = 0; i < report.errors.size(); ++i) csv << i << ',' << report.errors[i] << '\n';
}

}  // namespace fsp
