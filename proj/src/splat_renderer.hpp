#pragma once

#include <cstdint>
#include <vector>

#include "common.hpp"
#include "image.hpp"
#include "scene_model.hpp"

namespace fsp {

struct RenderOptions {
  double near_plane = 0.01;         // camera-depth cull threshold, meters
  double cov_reg = 0.3;             // added to cov2d diagonal, pixels^2
  double alpha_clamp = 0.99;        // per-splat alpha ceiling
  double min_transmittance = 1e-4;  // compositing stops below this
  double alpha_cutoff = 1e-8;       // support threshold; 0 = unbounded support
  int tile_size = 16;
};

struct Projected2DGaussian {
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Zero();  // regularized, symmetric positive definite
  double camera_depth = 0.0;
  uint32_t source_index = 0;
  int32_t object_id = 0;
};

struct RenderedFrame {
  ImageRGB color;
  ImageGray depth;  // alpha-normalized blended depth
  ImageGray alpha;  // accumulated opacity

  // Per-pixel contributor lists in compositing order, stored flat. Ranges
  // are indexed by flattened pixel; `alpha` is the clamped per-splat alpha.
  struct Contribution {
    uint32_t projected_index;
    double alpha;
  };
  std::vector<Contribution> contributions;
  std::vector<uint32_t> pixel_begin;  // size pixels+1
  ImageGray blend_depth_raw;          // un-normalized depth sum, backward input
};

// Adjoint of a scalar loss with respect to the rendered outputs. Color
// weights are per channel; depth weights apply to the normalized depth.
struct RenderAdjoint {
  ImageRGB color;
  ImageGray depth;
};

using PoseTangent = Eigen::Matrix<double, 6, 1>;  // [rotation | translation]

struct MapGradients {
  std::vector<Vec3> mean;
  std::vector<Vec3> scale;
  std::vector<Eigen::Vector4d> orientation;  // (w, x, y, z), tangent to unit sphere
  std::vector<double> opacity;
  std::vector<Vec3> color;

  void resize(size_t n);
  void set_zero();
};

// Projects all primitives to image space, culling those closer than the
// near plane. cov2d follows the local-affine (EWA) approximation with the
// regularizer from `opts` already added.
std::vector<Projected2DGaussian> project(const GaussianMap& map, const CameraPose& pose,
                                         const CameraIntrinsics& intrinsics,
                                         const RenderOptions& opts = {});

// Front-to-back alpha compositing over depth-sorted splats (stable ties by
// source_index). Input order does not affect the result.
RenderedFrame rasterize(const std::vector<Projected2DGaussian>& projected, const GaussianMap& map,
                        const CameraIntrinsics& intrinsics, const RenderOptions& opts = {});

struct RenderGradients {
  RenderedFrame frame;
  PoseTangent pose = PoseTangent::Zero();
  MapGradients primitives;
};

// Renders and backpropagates the given output adjoint through compositing,
// projection and the camera transform. The pose gradient lives in the
// left-multiplied tangent convention of CameraPose::retract.
RenderGradients render_with_gradients(const GaussianMap& map, const CameraPose& pose,
                                      const CameraIntrinsics& intrinsics,
                                      const RenderAdjoint& adjoint, const RenderOptions& opts = {});

// Accumulated per-primitive rendered contribution (sum over pixels of the
// compositing weight), used for visibility sets.
std::vector<double> accumulated_contribution(const RenderedFrame& frame,
                                             const std::vector<Projected2DGaussian>& projected,
                                             size_t primitive_count);

}  // namespace fsp
