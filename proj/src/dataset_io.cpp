#include "dataset_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fsp {

namespace {

namespace fs = std::filesystem;

std::vector<IndexEntry> parse_index_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open index file: " + path.string());
  std::vector<IndexEntry> entries;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream ss(line);
    IndexEntry e;
    if (!(ss >> e.timestamp >> e.path)) {
      std::ostringstream os;
      os << path.string() << ":" << line_no << ": expected 'timestamp path'";
      throw ParseError(os.str());
    }
    if (!entries.empty() && e.timestamp <= entries.back().timestamp) {
      std::ostringstream os;
      os << path.string() << ":" << line_no << ": timestamps not strictly increasing";
      throw ParseError(os.str());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

Trajectory parse_trajectory_stream(std::istream& in, const std::string& name) {
  Trajectory out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream ss(line);
    TrajectoryEntry e;
    double qx, qy, qz, qw;
    if (!(ss >> e.timestamp >> e.position.x() >> e.position.y() >> e.position.z() >> qx >>
          qy >> qz >> qw)) {
      std::ostringstream os;
      os << name << ":" << line_no << ": expected 't tx ty tz qx qy qz qw'";
      throw ParseError(os.str());
    }
    e.orientation = Quat(qw, qx, qy, qz);
    const double n = e.orientation.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      std::ostringstream os;
      os << name << ":" << line_no << ": degenerate quaternion";
      throw ParseError(os.str());
    }
    e.orientation.normalize();
    out.push_back(e);
  }
  return out;
}

}  // namespace

SequenceManifest load_sequence(const std::string& root, double association_tolerance) {
  SequenceManifest m;
  m.root = root;
  const fs::path base(root);
  if (!fs::exists(base)) throw IoError("dataset not found: " + root);
  m.rgb = parse_index_file(base / "rgb.txt");
  m.depth = parse_index_file(base / "depth.txt");
  if (fs::exists(base / "masks.txt")) {
    m.masks = parse_index_file(base / "masks.txt");
    m.has_masks = true;
  }
  if (fs::exists(base / "groundtruth.txt")) {
    std::ifstream in(base / "groundtruth.txt");
    m.ground_truth = parse_trajectory_stream(in, (base / "groundtruth.txt").string());
  }

  std::vector<double> t_rgb(m.rgb.size()), t_depth(m.depth.size());
  for (size_t i = 0; i < m.rgb.size(); ++i) t_rgb[i] = m.rgb[i].timestamp;
  for (size_t i = 0; i < m.depth.size(); ++i) t_depth[i] = m.depth[i].timestamp;
  const auto pairs = associate_timestamps(t_rgb, t_depth, association_tolerance);

  std::vector<double> t_mask(m.masks.size());
  for (size_t i = 0; i < m.masks.size(); ++i) t_mask[i] = m.masks[i].timestamp;

  std::vector<double> paired_rgb_times(pairs.size());
  for (size_t k = 0; k < pairs.size(); ++k) paired_rgb_times[k] = t_rgb[pairs[k].first];
  const auto mask_pairs = associate_timestamps(paired_rgb_times, t_mask, association_tolerance);
  std::vector<std::string> mask_for_pair(pairs.size());
  for (const auto& [k, j] : mask_pairs) mask_for_pair[k] = m.masks[j].path;

  for (size_t k = 0; k < pairs.size(); ++k) {
    AssociatedFrame f;
    f.timestamp = t_rgb[pairs[k].first];
    f.rgb_path = m.rgb[pairs[k].first].path;
    f.depth_path = m.depth[pairs[k].second].path;
    f.mask_path = mask_for_pair[k];
    m.frames.push_back(std::move(f));
  }
  m.unpaired_rgb = m.rgb.size() - pairs.size();
  m.unpaired_depth = m.depth.size() - pairs.size();
  return m;
}

namespace {

ImageRGB downscale_rgb(const ImageRGB& in, int factor) {
  ImageRGB out(in.width / factor, in.height / factor, 0.0);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            acc += in.at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = acc * inv;
      }
    }
  }
  return out;
}

template <typename T>
Image<T, 1> downscale_nearest(const Image<T, 1>& in, int factor) {
  Image<T, 1> out(in.width / factor, in.height / factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y, 0) = in.at(x * factor, y * factor, 0);
  return out;
}

}  // namespace

FrameObservation load_frame(const SequenceManifest& manifest, size_t index,
                            const FrameLoadOptions& opts) {
  if (index >= manifest.frames.size()) throw InputError("load_frame: index out of range");
  if (opts.downscale < 1) throw InputError("load_frame: downscale must be >= 1");
  const AssociatedFrame& f = manifest.frames[index];
  const std::filesystem::path base(manifest.root);

  FrameObservation obs;
  obs.index = static_cast<int>(index);
  obs.timestamp = f.timestamp;
  obs.rgb = read_rgb_png((base / f.rgb_path).string());
  obs.depth = read_depth_png((base / f.depth_path).string(), opts.depth_scale);
  if (!f.mask_path.empty()) {
    obs.mask = read_label_png((base / f.mask_path).string());
  } else {
    obs.mask = ImageLabel(obs.rgb.width, obs.rgb.height, 0);
  }
  if (opts.downscale > 1) {
    obs.rgb = downscale_rgb(obs.rgb, opts.downscale);
    obs.depth = downscale_nearest(obs.depth, opts.downscale);
    obs.mask = downscale_nearest(obs.mask, opts.downscale);
  }
  obs.validate();
  return obs;
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory: " + path);
  return parse_trajectory_stream(in, path);
}

void write_trajectory(const Trajectory& trajectory, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory: " + path);
  out << std::setprecision(17);
  for (const TrajectoryEntry& e : trajectory) {
    if (!e.position.allFinite() || !e.orientation.coeffs().allFinite())
      throw NumericError("write_trajectory: non-finite pose");
    Quat q = e.orientation.normalized();
    out << e.timestamp << ' ' << e.position.x() << ' ' << e.position.y() << ' '
        << e.position.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w()
        << '\n';
  }
  if (!out) throw IoError("failed writing trajectory: " + path);
}

}  // namespace fsp
