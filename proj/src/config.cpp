#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace fsp {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("config: key '" + key + "' expects a number, got '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ParseError("config: key '" + key + "' expects an integer, got '" + value + "'");
  }
}

uint64_t parse_uint64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return static_cast<uint64_t>(v);
  } catch (const std::exception&) {
    throw ParseError("config: key '" + key + "' expects an unsigned integer, got '" + value +
                     "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParseError("config: key '" + key + "' expects true/false, got '" + value + "'");
}

void apply_preset_defaults(PipelineConfig& c, const std::string& preset) {
  if (preset == "tum") {
    c.coarse_stride = 128;
    c.fine_stride = 32;
    c.fx = 525.0;
    c.fy = 525.0;
    c.cx = 319.5;
    c.cy = 239.5;
    c.width = 640;
    c.height = 480;
    c.depth_scale = 5000.0;
  } else if (preset == "bonn") {
    c.coarse_stride = 256;
    c.fine_stride = 64;
    c.fx = 542.822841;
    c.fy = 542.576870;
    c.cx = 315.593520;
    c.cy = 237.756098;
    c.width = 640;
    c.height = 480;
    c.depth_scale = 5000.0;
  } else if (preset == "synthetic") {
    c.coarse_stride = 16;
    c.fine_stride = 4;
    c.fx = c.fy = 0.0;
    c.cx = c.cy = -1.0;
    c.width = c.height = 0;
    c.depth_scale = 0.0;
  } else {
    throw ParseError("config: unknown preset '" + preset + "' (tum, bonn or synthetic)");
  }
  c.preset = preset;
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset_root", [](PipelineConfig& c, const std::string&, const std::string& v) { c.dataset_root = v; }},
      {"synthetic_spec", [](PipelineConfig& c, const std::string&, const std::string& v) { c.synthetic_spec = v; }},
      {"preset", [](PipelineConfig& c, const std::string&, const std::string& v) { apply_preset_defaults(c, v); }},
      {"output_dir", [](PipelineConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      {"lambda_lo", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.lambda_lo = parse_double(k, v); }},
      {"lambda_up", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.lambda_up = parse_double(k, v); }},
      {"theta", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.theta = parse_double(k, v); }},
      {"coarse_iterations", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.coarse_iterations = parse_int(k, v); }},
      {"rotation_step", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.rotation_step = parse_double(k, v); }},
      {"translation_step", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.translation_step = parse_double(k, v); }},
      {"fine_max_iterations", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.fine_max_iterations = parse_int(k, v); }},
      {"fine_tolerance", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.fine_tolerance = parse_double(k, v); }},
      {"fine_convergence_count", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.fine_convergence_count = parse_int(k, v); }},
      {"iou_max", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.iou_max = parse_double(k, v); }},
      {"oc_min", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.oc_min = parse_double(k, v); }},
      {"static_streak", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.static_streak = parse_int(k, v); }},
      {"coarse_stride", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.coarse_stride = parse_int(k, v); }},
      {"fine_stride", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.fine_stride = parse_int(k, v); }},
      {"window_capacity", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.window_capacity = parse_int(k, v); }},
      {"initial_iterations", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.initial_iterations = parse_int(k, v); }},
      {"update_iterations", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.update_iterations = parse_int(k, v); }},
      {"association_tolerance", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.association_tolerance = parse_double(k, v); }},
      {"seed", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.seed = parse_uint64(k, v); }},
      {"gmm_seed", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.gmm_seed = parse_uint64(k, v); }},
      {"dynamic_filtering", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.dynamic_filtering = parse_bool(k, v); }},
      {"alpha_cutoff", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.alpha_cutoff = parse_double(k, v); }},
      {"downscale", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.downscale = parse_int(k, v); }},
      {"frame_step", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.frame_step = parse_int(k, v); }},
      {"max_frames", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.max_frames = parse_int(k, v); }},
      {"fx", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.fx = parse_double(k, v); }},
      {"fy", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.fy = parse_double(k, v); }},
      {"cx", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.cx = parse_double(k, v); }},
      {"cy", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.cy = parse_double(k, v); }},
      {"width", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.width = parse_int(k, v); }},
      {"height", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.height = parse_int(k, v); }},
      {"depth_scale", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.depth_scale = parse_double(k, v); }},
  };
  return table;
}

}  // namespace

void PipelineConfig::validate() const {
  if (preset != "tum" && preset != "bonn" && preset != "synthetic")
    throw InputError("config: unknown preset '" + preset + "'");
  if (!(lambda_lo >= 0.0 && lambda_lo <= lambda_up && lambda_up <= 1.0))
    throw InputError("config: need 0 <= lambda_lo <= lambda_up <= 1");
  if (!(theta > 0.0 && theta < 1.0)) throw InputError("config: need 0 < theta < 1");
  if (coarse_iterations < 2) throw InputError("config: coarse_iterations must be >= 2");
  if (!(iou_max > 0.0 && iou_max <= 1.0)) throw InputError("config: need 0 < iou_max <= 1");
  if (!(oc_min >= 0.0 && oc_min <= 1.0)) throw InputError("config: need 0 <= oc_min <= 1");
  if (static_streak < 1) throw InputError("config: static_streak must be >= 1");
  if (rotation_step <= 0 || translation_step <= 0)
    throw InputError("config: tracking steps must be positive");
  if (fine_max_iterations < 1 || fine_convergence_count < 1)
    throw InputError("config: fine iteration counts must be >= 1");
  if (fine_tolerance <= 0) throw InputError("config: fine_tolerance must be positive");
  if (coarse_stride < 1 || fine_stride < 1) throw InputError("config: strides must be >= 1");
  if (window_capacity < 1) throw InputError("config: window_capacity must be >= 1");
  if (initial_iterations < 0 || update_iterations < 0)
    throw InputError("config: mapping iteration counts must be >= 0");
  if (association_tolerance <= 0)
    throw InputError("config: association_tolerance must be positive");
  if (downscale < 1) throw InputError("config: downscale must be >= 1");
  if (frame_step < 1) throw InputError("config: frame_step must be >= 1");
  if (max_frames < 0) throw InputError("config: max_frames must be >= 0");
  if (!(alpha_cutoff >= 0.0 && alpha_cutoff < 1.0))
    throw InputError("config: need 0 <= alpha_cutoff < 1");
}

std::string PipelineConfig::canonical_text() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "alpha_cutoff=" << alpha_cutoff << '\n'
      << "association_tolerance=" << association_tolerance << '\n'
      << "coarse_iterations=" << coarse_iterations << '\n'
      << "coarse_stride=" << coarse_stride << '\n'
      << "cx=" << cx << '\n'
      << "cy=" << cy << '\n'
      << "dataset_root=" << dataset_root << '\n'
      << "depth_scale=" << depth_scale << '\n'
      << "downscale=" << downscale << '\n'
      << "dynamic_filtering=" << (dynamic_filtering ? "true" : "false") << '\n'
      << "fine_convergence_count=" << fine_convergence_count << '\n'
      << "fine_max_iterations=" << fine_max_iterations << '\n'
      << "fine_stride=" << fine_stride << '\n'
      << "fine_tolerance=" << fine_tolerance << '\n'
      << "frame_step=" << frame_step << '\n'
      << "fx=" << fx << '\n'
      << "fy=" << fy << '\n'
      << "gmm_seed=" << gmm_seed << '\n'
      << "height=" << height << '\n'
      << "initial_iterations=" << initial_iterations << '\n'
      << "iou_max=" << iou_max << '\n'
      << "lambda_lo=" << lambda_lo << '\n'
      << "lambda_up=" << lambda_up << '\n'
      << "max_frames=" << max_frames << '\n'
      << "oc_min=" << oc_min << '\n'
      << "output_dir=" << output_dir << '\n'
      << "preset=" << preset << '\n'
      << "rotation_step=" << rotation_step << '\n'
      << "seed=" << seed << '\n'
      << "static_streak=" << static_streak << '\n'
      << "synthetic_spec=" << synthetic_spec << '\n'
      << "theta=" << theta << '\n'
      << "translation_step=" << translation_step << '\n'
      << "update_iterations=" << update_iterations << '\n'
      << "width=" << width << '\n'
      << "window_capacity=" << window_capacity << '\n';
  return out.str();
}

PipelineConfig preset_config(const std::string& preset) {
  PipelineConfig config;
  apply_preset_defaults(config, preset);
  return config;
}

void apply_assignment(PipelineConfig& config, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ParseError("config: expected key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const auto it = setters().find(key);
  if (it == setters().end()) throw ParseError("config: unknown key '" + key + "'");
  it->second(config, key, value);
}

PipelineConfig parse_config(const std::string& text, const std::string& origin) {
  PipelineConfig config;
  std::istringstream in(text);
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.resize(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_assignment(config, line);
    } catch (const Error& e) {
      throw ParseError(origin + ":" + std::to_string(line_number) + ": " + e.what());
    }
  }
  return config;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path);
}

CameraIntrinsics config_intrinsics(const PipelineConfig& config) {
  CameraIntrinsics intr;
  intr.fx = config.fx;
  intr.fy = config.fy;
  intr.cx = config.cx;
  intr.cy = config.cy;
  intr.width = config.width;
  intr.height = config.height;
  intr.depth_scale = config.depth_scale > 0 ? config.depth_scale : 5000.0;
  if (intr.width <= 0 || intr.height <= 0 || intr.fx <= 0 || intr.fy <= 0)
    throw InputError(
        "config: intrinsics unspecified; choose a dataset preset or set fx/fy/cx/cy/width/height");
  intr.validate();
  return downscale_intrinsics(intr, config.downscale);
}

CameraIntrinsics downscale_intrinsics(const CameraIntrinsics& intrinsics, int factor) {
  if (factor < 1) throw InputError("downscale_intrinsics: factor must be >= 1");
  if (factor == 1) return intrinsics;
  CameraIntrinsics out = intrinsics;
  const double shift = (factor - 1) * 0.5;  // box-average center of the source block
  out.fx = intrinsics.fx / factor;
  out.fy = intrinsics.fy / factor;
  out.cx = (intrinsics.cx - shift) / factor;
  out.cy = (intrinsics.cy - shift) / factor;
  out.width = intrinsics.width / factor;
  out.height = intrinsics.height / factor;
  out.validate();
  return out;
}

}  // namespace fsp
