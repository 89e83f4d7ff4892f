#include "splat_renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace fsp {

namespace {

// Keeps the normalized depth smooth as accumulated alpha approaches zero;
// uncovered pixels blend toward depth 0 instead of dividing by zero.
constexpr double kDepthEps = 1e-12;

Mat2 invert_spd2(const Mat2& m, uint32_t source_index) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  if (!(det > 1e-12) || !std::isfinite(det)) {
    std::ostringstream os;
    os << "singular projected covariance for primitive at index " << source_index
       << " (det=" << det << ")";
    throw NumericError(os.str());
  }
  Mat2 inv;
  inv << m(1, 1) / det, -m(0, 1) / det, -m(1, 0) / det, m(0, 0) / det;
  return inv;
}

double max_eigenvalue_spd2(const Mat2& m) {
  const double half_trace = 0.5 * (m(0, 0) + m(1, 1));
  const double half_diff = 0.5 * (m(0, 0) - m(1, 1));
  return half_trace + std::sqrt(half_diff * half_diff + m(0, 1) * m(0, 1));
}

struct SortedView {
  std::vector<uint32_t> order;       // indices into projected, front to back
  std::vector<Mat2> inv;             // per original index
  std::vector<double> support_qmax;  // quadratic-form bound; inf when unbounded
};

SortedView sort_and_prepare(const std::vector<Projected2DGaussian>& projected,
                            const GaussianMap& map, const RenderOptions& opts) {
  SortedView view;
  view.order.resize(projected.size());
  std::iota(view.order.begin(), view.order.end(), 0u);
  std::sort(view.order.begin(), view.order.end(), [&](uint32_t a, uint32_t b) {
    if (projected[a].camera_depth != projected[b].camera_depth)
      return projected[a].camera_depth < projected[b].camera_depth;
    return projected[a].source_index < projected[b].source_index;
  });

  view.inv.resize(projected.size());
  view.support_qmax.resize(projected.size());
  for (size_t i = 0; i < projected.size(); ++i) {
    view.inv[i] = invert_spd2(projected[i].cov2d, projected[i].source_index);
    const double o = map.primitives().at(projected[i].source_index).opacity;
    if (opts.alpha_cutoff > 0.0) {
      view.support_qmax[i] =
          o > opts.alpha_cutoff ? 2.0 * std::log(o / opts.alpha_cutoff) : -1.0;
    } else {
      view.support_qmax[i] = o > 0.0 ? std::numeric_limits<double>::infinity() : -1.0;
    }
  }
  return view;
}

// Tile lists hold sorted ranks so each list stays in compositing order.
std::vector<std::vector<uint32_t>> build_tile_lists(
    const std::vector<Projected2DGaussian>& projected, const SortedView& view, int width,
    int height, const RenderOptions& opts, int& tiles_x, int& tiles_y) {
  const int ts = opts.tile_size;
  tiles_x = (width + ts - 1) / ts;
  tiles_y = (height + ts - 1) / ts;
  std::vector<std::vector<uint32_t>> lists(static_cast<size_t>(tiles_x) * tiles_y);
  for (uint32_t rank = 0; rank < view.order.size(); ++rank) {
    const uint32_t gi = view.order[rank];
    const double qmax = view.support_qmax[gi];
    if (qmax < 0.0) continue;
    const Projected2DGaussian& g = projected[gi];
    int x0 = 0, x1 = width - 1, y0 = 0, y1 = height - 1;
    if (std::isfinite(qmax)) {
      const double radius = std::sqrt(qmax * max_eigenvalue_spd2(g.cov2d));
      x0 = static_cast<int>(std::floor(g.mean2d.x() - radius));
      x1 = static_cast<int>(std::ceil(g.mean2d.x() + radius));
      y0 = static_cast<int>(std::floor(g.mean2d.y() - radius));
      y1 = static_cast<int>(std::ceil(g.mean2d.y() + radius));
      if (x1 < 0 || y1 < 0 || x0 >= width || y0 >= height) continue;
      x0 = std::max(x0, 0);
      y0 = std::max(y0, 0);
      x1 = std::min(x1, width - 1);
      y1 = std::min(y1, height - 1);
    }
    for (int ty = y0 / ts; ty <= y1 / ts; ++ty)
      for (int tx = x0 / ts; tx <= x1 / ts; ++tx)
        lists[static_cast<size_t>(ty) * tiles_x + tx].push_back(gi);
  }
  return lists;
}

RenderedFrame composite(const std::vector<Projected2DGaussian>& projected,
                        const GaussianMap& map, const SortedView& view,
                        const CameraIntrinsics& intrinsics, const RenderOptions& opts) {
  const int width = intrinsics.width;
  const int height = intrinsics.height;
  RenderedFrame frame;
  frame.color = ImageRGB(width, height, 0.0);
  frame.depth = ImageGray(width, height, 0.0);
  frame.alpha = ImageGray(width, height, 0.0);
  frame.blend_depth_raw = ImageGray(width, height, 0.0);
  frame.pixel_begin.assign(static_cast<size_t>(width) * height + 1, 0);

  int tiles_x = 0, tiles_y = 0;
  const auto tile_lists =
      build_tile_lists(projected, view, width, height, opts, tiles_x, tiles_y);

  frame.contributions.reserve(static_cast<size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t pix = static_cast<size_t>(y) * width + x;
      frame.pixel_begin[pix] = static_cast<uint32_t>(frame.contributions.size());
      const auto& list = tile_lists[static_cast<size_t>(y / opts.tile_size) * tiles_x +
                                    x / opts.tile_size];
      double transmittance = 1.0;
      Vec3 color = Vec3::Zero();
      double depth_sum = 0.0;
      double alpha_sum = 0.0;
      for (uint32_t gi : list) {
        if (transmittance < opts.min_transmittance) break;
        const Projected2DGaussian& g = projected[gi];
        const Vec2 d(x - g.mean2d.x(), y - g.mean2d.y());
        const Mat2& inv = view.inv[gi];
        const double q = d.x() * (inv(0, 0) * d.x() + inv(0, 1) * d.y()) +
                         d.y() * (inv(1, 0) * d.x() + inv(1, 1) * d.y());
        if (q > view.support_qmax[gi] || q < 0.0) continue;
        const GaussianPrimitive& prim = map.primitives()[g.source_index];
        const double alpha =
            std::min(prim.opacity * std::exp(-0.5 * q), opts.alpha_clamp);
        if (alpha < opts.alpha_cutoff || alpha <= 0.0) continue;
        const double weight = transmittance * alpha;
        color += weight * prim.color;
        depth_sum += weight * g.camera_depth;
        alpha_sum += weight;
        frame.contributions.push_back({gi, alpha});
        transmittance *= 1.0 - alpha;
      }
      for (int c = 0; c < 3; ++c) frame.color.at(x, y, c) = color[c];
      frame.blend_depth_raw.at(x, y, 0) = depth_sum;
      frame.alpha.at(x, y, 0) = alpha_sum;
      frame.depth.at(x, y, 0) = depth_sum / (alpha_sum + kDepthEps);
    }
  }
  frame.pixel_begin.back() = static_cast<uint32_t>(frame.contributions.size());
  return frame;
}

Mat3 quat_to_rotation(const Quat& q) { return q.toRotationMatrix(); }

// Frobenius inner products with the four partial derivatives of R(q) for a
// unit quaternion q = (w, x, y, z).
Eigen::Vector4d rotation_adjoint_to_quat(const Mat3& gr, const Quat& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3 dw, dx, dy, dz;
  dw << 0, -z, y, z, 0, -x, -y, x, 0;
  dx << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  dy << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  dz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  Eigen::Vector4d g;
  g[0] = 2.0 * (gr.cwiseProduct(dw)).sum();
  g[1] = 2.0 * (gr.cwiseProduct(dx)).sum();
  g[2] = 2.0 * (gr.cwiseProduct(dy)).sum();
  g[3] = 2.0 * (gr.cwiseProduct(dz)).sum();
  // Project onto the tangent of the unit sphere; optimizers renormalize
  // after stepping, and this makes the gradient consistent with that.
  const Eigen::Vector4d qv(w, x, y, z);
  return g - qv * qv.dot(g);
}

}  // namespace

void MapGradients::resize(size_t n) {
  mean.resize(n);
  scale.resize(n);
  orientation.resize(n);
  opacity.resize(n);
  color.resize(n);
  set_zero();
}

void MapGradients::set_zero() {
  std::fill(mean.begin(), mean.end(), Vec3::Zero().eval());
  std::fill(scale.begin(), scale.end(), Vec3::Zero().eval());
  std::fill(orientation.begin(), orientation.end(), Eigen::Vector4d::Zero().eval());
  std::fill(opacity.begin(), opacity.end(), 0.0);
  std::fill(color.begin(), color.end(), Vec3::Zero().eval());
}

std::vector<Projected2DGaussian> project(const GaussianMap& map, const CameraPose& pose,
                                         const CameraIntrinsics& intrinsics,
                                         const RenderOptions& opts) {
  if (map.primitives().empty()) throw InputError("project: map is empty");
  pose.validate();
  intrinsics.validate();

  std::vector<Projected2DGaussian> projected;
  projected.reserve(map.primitives().size());
  const Mat3 rot = pose.rotation;
  for (size_t i = 0; i < map.primitives().size(); ++i) {
    const GaussianPrimitive& prim = map.primitives()[i];
    const Vec3 mc = rot * prim.mean + pose.translation;
    const double z = mc.z();
    if (z <= opts.near_plane) continue;

    Projected2DGaussian out;
    out.source_index = static_cast<uint32_t>(i);
    out.object_id = prim.object_id;
    out.camera_depth = z;
    out.mean2d = Vec2(intrinsics.fx * mc.x() / z + intrinsics.cx,
                      intrinsics.fy * mc.y() / z + intrinsics.cy);

    Eigen::Matrix<double, 2, 3> jac;
    jac << intrinsics.fx / z, 0.0, -intrinsics.fx * mc.x() / (z * z), 0.0,
        intrinsics.fy / z, -intrinsics.fy * mc.y() / (z * z);
    const Mat3 cov_cam = rot * prim.world_covariance() * rot.transpose();
    Mat2 cov2d = jac * cov_cam * jac.transpose();
    cov2d(0, 0) += opts.cov_reg;
    cov2d(1, 1) += opts.cov_reg;
    cov2d(0, 1) = cov2d(1, 0) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));

    if (!out.mean2d.allFinite() || !cov2d.allFinite()) {
      std::ostringstream os;
      os << "non-finite projection for primitive uid " << prim.uid;
      throw NumericError(os.str());
    }
    out.cov2d = cov2d;
    projected.push_back(out);
  }
  return projected;
}

RenderedFrame rasterize(const std::vector<Projected2DGaussian>& projected, const GaussianMap& map,
                        const CameraIntrinsics& intrinsics, const RenderOptions& opts) {
  intrinsics.validate();
  const SortedView view = sort_and_prepare(projected, map, opts);
  return composite(projected, map, view, intrinsics, opts);
}

RenderGradients render_with_gradients(const GaussianMap& map, const CameraPose& pose,
                                      const CameraIntrinsics& intrinsics,
                                      const RenderAdjoint& adjoint, const RenderOptions& opts) {
  if (adjoint.color.width != intrinsics.width || adjoint.color.height != intrinsics.height ||
      adjoint.depth.width != intrinsics.width || adjoint.depth.height != intrinsics.height)
    throw InputError("render_with_gradients: adjoint size does not match intrinsics");

  const std::vector<Projected2DGaussian> projected = project(map, pose, intrinsics, opts);
  const SortedView view = sort_and_prepare(projected, map, opts);

  RenderGradients result;
  result.frame = composite(projected, map, view, intrinsics, opts);
  result.primitives.resize(map.primitives().size());

  const size_t n_proj = projected.size();
  std::vector<Vec2> acc_mean2d(n_proj, Vec2::Zero());
  std::vector<Vec3> acc_cov(n_proj, Vec3::Zero());  // (c00, c01, c11) of dL/dcov2d
  std::vector<double> acc_depth(n_proj, 0.0);
  std::vector<double> acc_opacity(n_proj, 0.0);
  std::vector<Vec3> acc_color(n_proj, Vec3::Zero());
  std::vector<char> touched(n_proj, 0);

  const int width = intrinsics.width;
  const int height = intrinsics.height;
  std::vector<double> phi, trans, alphas;
  std::vector<uint32_t> idxs;

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t pix = static_cast<size_t>(y) * width + x;
      const uint32_t begin = result.frame.pixel_begin[pix];
      const uint32_t end = result.frame.pixel_begin[pix + 1];
      if (begin == end) continue;

      const Vec3 g_color(adjoint.color.at(x, y, 0), adjoint.color.at(x, y, 1),
                         adjoint.color.at(x, y, 2));
      const double g_depth = adjoint.depth.at(x, y, 0);
      const double alpha_sum = result.frame.alpha.at(x, y, 0);
      const double depth_sum = result.frame.blend_depth_raw.at(x, y, 0);
      const double denom = alpha_sum + kDepthEps;
      const double g_depth_sum = g_depth / denom;
      const double g_alpha_sum = -g_depth * depth_sum / (denom * denom);

      phi.clear();
      trans.clear();
      alphas.clear();
      idxs.clear();
      double transmittance = 1.0;
      for (uint32_t k = begin; k < end; ++k) {
        const auto& contrib = result.frame.contributions[k];
        const Projected2DGaussian& g = projected[contrib.projected_index];
        const GaussianPrimitive& prim = map.primitives()[g.source_index];
        phi.push_back(g_color.dot(prim.color) + g_depth_sum * g.camera_depth + g_alpha_sum);
        trans.push_back(transmittance);
        alphas.push_back(contrib.alpha);
        idxs.push_back(contrib.projected_index);
        transmittance *= 1.0 - contrib.alpha;
      }

      double suffix = 0.0;  // sum over later contributors of weight * phi
      for (size_t k = phi.size(); k-- > 0;) {
        const uint32_t gi = idxs[k];
        const double alpha = alphas[k];
        const double t_k = trans[k];
        const double weight = t_k * alpha;
        const double dl_dalpha = t_k * phi[k] - suffix / (1.0 - alpha);
        suffix += weight * phi[k];
        touched[gi] = 1;

        const Projected2DGaussian& g = projected[gi];
        const GaussianPrimitive& prim = map.primitives()[g.source_index];
        acc_color[gi] += weight * g_color;
        acc_depth[gi] += weight * g_depth_sum;

        if (alpha < opts.alpha_clamp) {
          const double gauss = alpha / prim.opacity;  // exp(-q/2); alpha is unclamped here
          acc_opacity[gi] += gauss * dl_dalpha;
          const double dl_dq = -0.5 * prim.opacity * gauss * dl_dalpha;
          const Vec2 d(x - g.mean2d.x(), y - g.mean2d.y());
          const Vec2 md = view.inv[gi] * d;
          acc_mean2d[gi] += -2.0 * dl_dq * md;
          acc_cov[gi] +=
              dl_dq * Vec3(-md.x() * md.x(), -md.x() * md.y(), -md.y() * md.y());
        }
      }
    }
  }

  const Mat3 rot = pose.rotation;
  PoseTangent pose_grad = PoseTangent::Zero();
  for (size_t gi = 0; gi < n_proj; ++gi) {
    if (!touched[gi]) continue;
    const Projected2DGaussian& g = projected[gi];
    const GaussianPrimitive& prim = map.primitives()[g.source_index];
    const Vec3 mc = rot * prim.mean + pose.translation;
    const double z = mc.z();

    Eigen::Matrix<double, 2, 3> jac;
    jac << intrinsics.fx / z, 0.0, -intrinsics.fx * mc.x() / (z * z), 0.0,
        intrinsics.fy / z, -intrinsics.fy * mc.y() / (z * z);

    Mat2 g_cov2d;
    g_cov2d << acc_cov[gi].x(), acc_cov[gi].y(), acc_cov[gi].y(), acc_cov[gi].z();

    const Mat3 cov_world = prim.world_covariance();
    const Mat3 cov_cam = rot * cov_world * rot.transpose();
    const Mat3 g_cov_cam = jac.transpose() * g_cov2d * jac;
    const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2d * jac * cov_cam;

    Vec3 g_mc = jac.transpose() * acc_mean2d[gi];
    g_mc.z() += acc_depth[gi];
    const double z2 = z * z;
    const double z3 = z2 * z;
    g_mc.x() += g_jac(0, 2) * (-intrinsics.fx / z2);
    g_mc.y() += g_jac(1, 2) * (-intrinsics.fy / z2);
    g_mc.z() += g_jac(0, 0) * (-intrinsics.fx / z2) + g_jac(1, 1) * (-intrinsics.fy / z2) +
                g_jac(0, 2) * (2.0 * intrinsics.fx * mc.x() / z3) +
                g_jac(1, 2) * (2.0 * intrinsics.fy * mc.y() / z3);

    pose_grad.tail<3>() += g_mc;
    pose_grad.head<3>() += mc.cross(g_mc);
    for (int i = 0; i < 3; ++i) {
      const Mat3 e = skew(Vec3::Unit(i));
      pose_grad[i] += (g_cov_cam.cwiseProduct(e * cov_cam - cov_cam * e)).sum();
    }

    const size_t src = g.source_index;
    result.primitives.mean[src] += rot.transpose() * g_mc;
    result.primitives.opacity[src] += acc_opacity[gi];
    result.primitives.color[src] += acc_color[gi];

    const Mat3 g_cov_world = rot.transpose() * g_cov_cam * rot;
    const Mat3 rot_q = quat_to_rotation(prim.orientation);
    const Mat3 a_mat = rot_q * prim.scale.asDiagonal();
    const Mat3 g_a = 2.0 * g_cov_world * a_mat;
    Vec3 g_scale;
    for (int i = 0; i < 3; ++i) g_scale[i] = g_a.col(i).dot(rot_q.col(i));
    result.primitives.scale[src] += g_scale;
    const Mat3 g_rot_q = g_a * prim.scale.asDiagonal();
    result.primitives.orientation[src] += rotation_adjoint_to_quat(g_rot_q, prim.orientation);
  }
  result.pose = pose_grad;
  return result;
}

std::vector<double> accumulated_contribution(const RenderedFrame& frame,
                                             const std::vector<Projected2DGaussian>& projected,
                                             size_t primitive_count) {
  std::vector<double> acc(primitive_count, 0.0);
  const size_t pixels = frame.pixel_begin.size() - 1;
  for (size_t pix = 0; pix < pixels; ++pix) {
    double transmittance = 1.0;
    for (uint32_t k = frame.pixel_begin[pix]; k < frame.pixel_begin[pix + 1]; ++k) {
      const auto& contrib = frame.contributions[k];
      acc.at(projected.at(contrib.projected_index).source_index) +=
          transmittance * contrib.alpha;
      transmittance *= 1.0 - contrib.alpha;
    }
  }
  return acc;
}

}  // namespace fsp
