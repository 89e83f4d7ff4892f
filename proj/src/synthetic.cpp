#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dataset_io.hpp"
#include "image.hpp"

namespace fsp {

using nlohmann::json;

Vec3 MotionScript::at(double frame) const {
  if (keys.empty()) throw InputError("motion script has no keys");
  if (frame <= keys.front().frame) return keys.front().value;
  if (frame >= keys.back().frame) return keys.back().value;
  for (size_t i = 0; i + 1 < keys.size(); ++i) {
    if (frame > keys[i + 1].frame) continue;
    const double span = keys[i + 1].frame - keys[i].frame;
    const double a = span > 0.0 ? (frame - keys[i].frame) / span : 0.0;
    return (1.0 - a) * keys[i].value + a * keys[i + 1].value;
  }
  return keys.back().value;
}

void SyntheticSceneSpec::validate() const {
  if (width <= 0 || height <= 0) throw InputError("synthetic spec: width/height must be positive");
  if (frame_count < 2) throw InputError("synthetic spec: frame_count must be >= 2");
  if (camera_position.keys.empty() || camera_look_at.keys.empty())
    throw InputError("synthetic spec: camera scripts must have keys");
  if (noise.depth_dropout < 0.0 || noise.depth_dropout > 1.0)
    throw InputError("synthetic spec: depth_dropout outside [0,1]");
  std::set<int32_t> ids;
  for (const SyntheticObject& o : objects) {
    if (o.id < 1) throw InputError("synthetic spec: object id must be >= 1");
    if (!ids.insert(o.id).second) throw InputError("synthetic spec: duplicate object id");
    if (o.track.keys.empty()) throw InputError("synthetic spec: object track must have keys");
  }
}

namespace {

Vec3 vec3_field(const json& j, const std::string& name) {
  if (!j.contains(name)) throw ParseError("synthetic spec: missing field '" + name + "'");
  const auto& a = j.at(name);
  if (!a.is_array() || a.size() != 3)
    throw ParseError("synthetic spec: field '" + name + "' must be a 3-array");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

MotionScript script_field(const json& j, const std::string& name) {
  if (!j.contains(name)) throw ParseError("synthetic spec: missing field '" + name + "'");
  MotionScript s;
  for (const auto& k : j.at(name)) {
    if (!k.is_array() || k.size() != 4)
      throw ParseError("synthetic spec: script '" + name + "' keys must be [frame,x,y,z]");
    MotionScript::Key key;
    key.frame = k[0].get<double>();
    key.value = Vec3(k[1].get<double>(), k[2].get<double>(), k[3].get<double>());
    if (!s.keys.empty() && key.frame <= s.keys.back().frame)
      throw ParseError("synthetic spec: script '" + name + "' frames must increase");
    s.keys.push_back(key);
  }
  if (s.keys.empty()) throw ParseError("synthetic spec: script '" + name + "' is empty");
  return s;
}

}  // namespace

SyntheticSceneSpec parse_scene_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("synthetic spec: invalid JSON: ") + e.what());
  }
  try {
    SyntheticSceneSpec spec;
    spec.width = j.value("width", 64);
    spec.height = j.value("height", 64);
    spec.frame_count = j.value("frames", 2);
    spec.timestep = j.value("timestep", 1.0 / 30.0);
    spec.depth_scale = j.value("depth_scale", 5000.0);
    spec.seed = j.value("seed", uint64_t{1});
    spec.fx = j.value("fx", 0.0);
    spec.fy = j.value("fy", 0.0);
    spec.cx = j.value("cx", -1.0);
    spec.cy = j.value("cy", -1.0);

    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      spec.noise.photometric_sigma = n.value("photometric_sigma", 0.0);
      spec.noise.depth_sigma = n.value("depth_sigma", 0.0);
      spec.noise.depth_dropout = n.value("depth_dropout", 0.0);
    }

    if (!j.contains("camera")) throw ParseError("synthetic spec: missing field 'camera'");
    const auto& cam = j.at("camera");
    spec.camera_position = script_field(cam, "position");
    spec.camera_look_at = script_field(cam, "look_at");
    if (cam.contains("up")) spec.up = vec3_field(cam, "up");

    for (const auto& p : j.value("planes", json::array())) {
      SyntheticPlane plane;
      plane.point = vec3_field(p, "point");
      plane.normal = vec3_field(p, "normal").normalized();
      plane.color = vec3_field(p, "color");
      plane.texture_amp = p.value("texture_amp", 0.0);
      if (p.contains("texture_freq")) plane.texture_freq = vec3_field(p, "texture_freq");
      spec.planes.push_back(plane);
    }

    for (const auto& o : j.value("objects", json::array())) {
      SyntheticObject obj;
      if (!o.contains("id")) throw ParseError("synthetic spec: object missing field 'id'");
      obj.id = o.at("id").get<int32_t>();
      const std::string shape = o.value("shape", "sphere");
      if (shape == "sphere") {
        obj.shape = SyntheticObject::Shape::Sphere;
        if (!o.contains("radius"))
          throw ParseError("synthetic spec: sphere missing field 'radius'");
        obj.radius = o.at("radius").get<double>();
      } else if (shape == "box") {
        obj.shape = SyntheticObject::Shape::Box;
        obj.half_extents = vec3_field(o, "half_extents");
      } else {
        throw ParseError("synthetic spec: unknown shape '" + shape + "'");
      }
      obj.color = vec3_field(o, "color");
      obj.texture_amp = o.value("texture_amp", 0.0);
      if (o.contains("texture_freq")) obj.texture_freq = vec3_field(o, "texture_freq");
      obj.track = script_field(o, "track");
      spec.objects.push_back(obj);
    }

    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw ParseError(std::string("synthetic spec: ") + e.what());
  }
}

SyntheticSceneSpec load_scene_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene spec: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scene_spec(ss.str());
}

CameraIntrinsics spec_intrinsics(const SyntheticSceneSpec& spec) {
  CameraIntrinsics intr;
  intr.width = spec.width;
  intr.height = spec.height;
  // 60-degree horizontal field of view unless the spec pins focal lengths.
  const double default_f = 0.5 * spec.width / std::tan(M_PI / 6.0);
  intr.fx = spec.fx > 0.0 ? spec.fx : default_f;
  intr.fy = spec.fy > 0.0 ? spec.fy : default_f;
  intr.cx = spec.cx >= 0.0 ? spec.cx : 0.5 * (spec.width - 1);
  intr.cy = spec.cy >= 0.0 ? spec.cy : 0.5 * (spec.height - 1);
  intr.depth_scale = spec.depth_scale;
  return intr;
}

CameraPose camera_pose_at(const SyntheticSceneSpec& spec, double frame) {
  const Vec3 pos = spec.camera_position.at(frame);
  const Vec3 target = spec.camera_look_at.at(frame);
  Vec3 forward = target - pos;
  if (forward.norm() < 1e-12) throw InputError("camera looks at its own position");
  forward.normalize();
  const Vec3 down_world = -spec.up;
  Vec3 down = down_world - down_world.dot(forward) * forward;
  if (down.norm() < 1e-9) throw InputError("camera forward is parallel to the up vector");
  down.normalize();
  const Vec3 right = down.cross(forward);

  Mat3 c2w;
  c2w.col(0) = right;
  c2w.col(1) = down;
  c2w.col(2) = forward;

  CameraPose pose;
  pose.rotation = c2w.transpose();
  pose.translation = -c2w.transpose() * pos;
  return pose;
}

namespace {

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int32_t id = 0;
  Vec3 color = Vec3::Zero();
};

double texture_factor(const Vec3& p, double amp, const Vec3& freq) {
  if (amp == 0.0) return 1.0;
  return 1.0 + amp * std::sin(freq.x() * p.x() + 0.9) * std::sin(freq.y() * p.y() + 1.7) *
                   std::sin(freq.z() * p.z() + 2.3);
}

void intersect_plane(const SyntheticPlane& plane, const Vec3& origin, const Vec3& dir,
                     Hit& hit) {
  const double denom = dir.dot(plane.normal);
  if (std::abs(denom) < 1e-12) return;
  const double t = (plane.point - origin).dot(plane.normal) / denom;
  if (t <= 1e-9 || t >= hit.t) return;
  const Vec3 p = origin + t * dir;
  hit.t = t;
  hit.id = 0;
  hit.color = plane.color * texture_factor(p, plane.texture_amp, plane.texture_freq);
}

void intersect_sphere(const SyntheticObject& obj, const Vec3& center, const Vec3& origin,
                      const Vec3& dir, Hit& hit) {
  const Vec3 oc = origin - center;
  const double b = oc.dot(dir);
  const double c = oc.squaredNorm() - obj.radius * obj.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= 1e-9) t = -b + sq;
  if (t <= 1e-9 || t >= hit.t) return;
  const Vec3 local = origin + t * dir - center;
  hit.t = t;
  hit.id = obj.id;
  hit.color = obj.color * texture_factor(local, obj.texture_amp, obj.texture_freq);
}

void intersect_box(const SyntheticObject& obj, const Vec3& center, const Vec3& origin,
                   const Vec3& dir, Hit& hit) {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double lo = center[a] - obj.half_extents[a];
    const double hi = center[a] + obj.half_extents[a];
    if (std::abs(dir[a]) < 1e-12) {
      if (origin[a] < lo || origin[a] > hi) return;
      continue;
    }
    double t0 = (lo - origin[a]) / dir[a];
    double t1 = (hi - origin[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit) return;
  double t = t_enter;
  if (t <= 1e-9) t = t_exit;
  if (t <= 1e-9 || t >= hit.t) return;
  const Vec3 local = origin + t * dir - center;
  hit.t = t;
  hit.id = obj.id;
  hit.color = obj.color * texture_factor(local, obj.texture_amp, obj.texture_freq);
}

}  // namespace

SyntheticSequence generate_synthetic(const SyntheticSceneSpec& spec) {
  spec.validate();
  const CameraIntrinsics intr = spec_intrinsics(spec);
  SyntheticSequence seq;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool noisy = spec.noise.photometric_sigma > 0.0 || spec.noise.depth_sigma > 0.0 ||
                     spec.noise.depth_dropout > 0.0;

  for (int f = 0; f < spec.frame_count; ++f) {
    const CameraPose pose = camera_pose_at(spec, f);
    const Mat3 c2w = pose.rotation.transpose();
    const Vec3 origin = pose.camera_center();

    std::vector<Vec3> centers(spec.objects.size());
    for (size_t o = 0; o < spec.objects.size(); ++o) centers[o] = spec.objects[o].track.at(f);

    FrameObservation obs;
    obs.index = f;
    obs.timestamp = f * spec.timestep;
    obs.rgb = ImageRGB(spec.width, spec.height, 0.0);
    obs.depth = ImageGray(spec.width, spec.height, 0.0);
    obs.mask = ImageLabel(spec.width, spec.height, 0);

    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        Vec3 dir_cam((x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0);
        dir_cam.normalize();
        const Vec3 dir = c2w * dir_cam;

        Hit hit;
        for (const SyntheticPlane& plane : spec.planes)
          intersect_plane(plane, origin, dir, hit);
        for (size_t o = 0; o < spec.objects.size(); ++o) {
          const SyntheticObject& obj = spec.objects[o];
          if (obj.shape == SyntheticObject::Shape::Sphere)
            intersect_sphere(obj, centers[o], origin, dir, hit);
          else
            intersect_box(obj, centers[o], origin, dir, hit);
        }

        if (std::isfinite(hit.t)) {
          double depth = hit.t * dir_cam.z();  // camera-frame z of the hit point
          Vec3 color = hit.color.cwiseMax(0.0).cwiseMin(1.0);
          if (noisy) {
            for (int c = 0; c < 3; ++c)
              color[c] = std::clamp(color[c] + spec.noise.photometric_sigma * gauss(rng), 0.0, 1.0);
            if (spec.noise.depth_dropout > 0.0 && unit(rng) < spec.noise.depth_dropout) {
              depth = 0.0;
            } else if (spec.noise.depth_sigma > 0.0) {
              depth = std::max(0.0, depth + spec.noise.depth_sigma * gauss(rng));
            }
          }
          for (int c = 0; c < 3; ++c) obs.rgb.at(x, y, c) = color[c];
          obs.depth.at(x, y, 0) = depth;
          obs.mask.at(x, y, 0) = hit.id;
        }
      }
    }
    obs.validate();
    seq.frames.push_back(std::move(obs));

    TrajectoryEntry gt;
    gt.timestamp = f * spec.timestep;
    gt.position = origin;
    gt.orientation = Quat(c2w);
    seq.ground_truth.push_back(gt);
  }
  return seq;
}

void write_tum_dataset(const SyntheticSceneSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const SyntheticSequence seq = generate_synthetic(spec);
  const fs::path base(out_dir);
  fs::create_directories(base / "rgb");
  fs::create_directories(base / "depth");
  fs::create_directories(base / "masks");

  std::ofstream rgb_idx(base / "rgb.txt"), depth_idx(base / "depth.txt"),
      mask_idx(base / "masks.txt");
  if (!rgb_idx || !depth_idx || !mask_idx)
    throw IoError("cannot create index files under " + out_dir);
  rgb_idx << "# timestamp filename\n";
  depth_idx << "# timestamp filename\n";
  mask_idx << "# timestamp filename\n";
  rgb_idx << std::fixed << std::setprecision(6);
  depth_idx << std::fixed << std::setprecision(6);
  mask_idx << std::fixed << std::setprecision(6);

  for (const FrameObservation& obs : seq.frames) {
    std::ostringstream name;
    name << std::setfill('0') << std::setw(6) << obs.index << ".png";
    write_rgb_png((base / "rgb" / name.str()).string(), obs.rgb);
    write_depth_png((base / "depth" / name.str()).string(), obs.depth, spec.depth_scale);
    write_label_png((base / "masks" / name.str()).string(), obs.mask);
    rgb_idx << obs.timestamp << " rgb/" << name.str() << "\n";
    depth_idx << obs.timestamp << " depth/" << name.str() << "\n";
    mask_idx << obs.timestamp << " masks/" << name.str() << "\n";
  }
  write_trajectory(seq.ground_truth, (base / "groundtruth.txt").string());
}

}  // namespace fsp
