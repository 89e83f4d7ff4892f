#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "common.hpp"
#include "scene_model.hpp"
#include "splat_renderer.hpp"

namespace fsp {

using PixelSet = std::vector<size_t>;  // flattened row-major pixel indices

struct GeometricLoss {
  double value = 0.0;
  bool degenerate = false;  // no valid-depth pixel in the set
};

struct LossTerms {
  double photometric = 0.0;
  double geometric = 0.0;
  double combined = 0.0;
  bool geometric_degenerate = false;
};

struct ObjectLossBreakdown {
  std::map<int32_t, LossTerms> per_object;  // excludes the background id 0
  LossTerms background;
  double lambda_a = 0.0;
  double invalid_depth_fraction = 0.0;
};

// Mean over the set of per-pixel L1 color difference averaged over channels.
double masked_photometric(const RenderedFrame& rendered, const FrameObservation& frame,
                          const PixelSet& pixel_set);

// Mean |rendered - observed| depth over set pixels with valid observed depth.
GeometricLoss masked_geometric(const RenderedFrame& rendered, const FrameObservation& frame,
                               const PixelSet& pixel_set);

// lambda = lo + (up - lo) * invalid_depth_fraction, over the whole depth map.
double adaptive_lambda(const FrameObservation& frame, double lambda_lo = 0.88,
                       double lambda_up = 0.95);
double invalid_depth_fraction(const FrameObservation& frame);

double combine(double photometric, double geometric, double lambda_a);

// Losses for the background set and every non-empty object set.
ObjectLossBreakdown compute_losses(const RenderedFrame& rendered, const FrameObservation& frame,
                                   const FramePartition& partition, double lambda_lo = 0.88,
                                   double lambda_up = 0.95);

struct MappingLoss {
  double value = 0.0;
  LossTerms terms;
  ImageGray weights;     // 1 on optimized pixels, 0 on dynamic or uncovered ones
  size_t kept_pixels = 0;
};

// Combined loss over pixels whose mask id is not dynamic. Pixels where the
// rendered alpha is below coverage_floor (pruned, not yet re-densified) get
// zero weight.
MappingLoss mapping_loss(const RenderedFrame& rendered, const FrameObservation& frame,
                         const std::set<int32_t>& dynamic_ids, double lambda_a,
                         double coverage_floor = 1e-3);

struct AdjointOptions {
  // Depth residual gradients are gated to pixels the map already covers;
  // nearly transparent pixels make the normalized-depth adjoint ill
  // conditioned without affecting the loss value.
  double depth_alpha_gate = 0.5;
};

// Accumulates d(combined loss)/d(rendered color, depth) for one pixel set
// into `adjoint`. L1 subgradient convention: sign(0) = 0.
void accumulate_tracking_adjoint(RenderAdjoint& adjoint, const RenderedFrame& rendered,
                                 const FrameObservation& frame, const PixelSet& pixel_set,
                                 double lambda_a, const AdjointOptions& opts = {});

RenderAdjoint make_zero_adjoint(int width, int height);

// Adjoint of mapping_loss given its weight image.
RenderAdjoint mapping_adjoint(const RenderedFrame& rendered, const FrameObservation& frame,
                              const ImageGray& weights, double lambda_a,
                              const AdjointOptions& opts = {});

}  // namespace fsp
