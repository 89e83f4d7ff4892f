#include "loss.hpp"

#include <cmath>

namespace fsp {

namespace {

double sign_of(double r) { return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0); }

void check_set(const PixelSet& pixel_set, const RenderedFrame& rendered,
               const FrameObservation& frame) {
  if (pixel_set.empty()) throw InputError("loss: empty pixel set");
  if (!rendered.color.same_shape(frame.rgb))
    throw InputError("loss: rendered and observed sizes differ");
}

}  // namespace

double masked_photometric(const RenderedFrame& rendered, const FrameObservation& frame,
                          const PixelSet& pixel_set) {
  check_set(pixel_set, rendered, frame);
  double sum = 0.0;
  for (size_t p : pixel_set) {
    for (int c = 0; c < 3; ++c)
      sum += std::abs(rendered.color.at_index(p, c) - frame.rgb.at_index(p, c));
  }
  return sum / (3.0 * static_cast<double>(pixel_set.size()));
}

GeometricLoss masked_geometric(const RenderedFrame& rendered, const FrameObservation& frame,
                               const PixelSet& pixel_set) {
  check_set(pixel_set, rendered, frame);
  double sum = 0.0;
  size_t valid = 0;
  for (size_t p : pixel_set) {
    const double observed = frame.depth.at_index(p, 0);
    if (!depth_valid(observed)) continue;
    sum += std::abs(rendered.depth.at_index(p, 0) - observed);
    ++valid;
  }
  GeometricLoss out;
  if (valid == 0) {
    out.degenerate = true;
    return out;
  }
  out.value = sum / static_cast<double>(valid);
  return out;
}

double invalid_depth_fraction(const FrameObservation& frame) {
  const size_t pixels = frame.depth.pixel_count();
  if (pixels == 0) throw InputError("invalid_depth_fraction: empty depth map");
  size_t invalid = 0;
  for (size_t p = 0; p < pixels; ++p)
    if (!depth_valid(frame.depth.at_index(p, 0))) ++invalid;
  return static_cast<double>(invalid) / static_cast<double>(pixels);
}

double adaptive_lambda(const FrameObservation& frame, double lambda_lo, double lambda_up) {
  if (!(lambda_lo <= lambda_up) || lambda_lo < 0.0 || lambda_up > 1.0)
    throw InputError("adaptive_lambda: bounds must satisfy 0 <= lo <= up <= 1");
  return lambda_lo + (lambda_up - lambda_lo) * invalid_depth_fraction(frame);
}

double combine(double photometric, double geometric, double lambda_a) {
  if (!(lambda_a >= 0.0 && lambda_a <= 1.0))
    throw InputError("combine: lambda outside [0,1]");
  if (!std::isfinite(photometric) || !std::isfinite(geometric))
    throw NumericError("combine: non-finite loss input");
  return lambda_a * photometric + (1.0 - lambda_a) * geometric;
}

namespace {

LossTerms terms_for_set(const RenderedFrame& rendered, const FrameObservation& frame,
                        const PixelSet& set, double lambda_a) {
  LossTerms t;
  t.photometric = masked_photometric(rendered, frame, set);
  const GeometricLoss geo = masked_geometric(rendered, frame, set);
  t.geometric = geo.value;
  t.geometric_degenerate = geo.degenerate;
  t.combined = combine(t.photometric, t.geometric, lambda_a);
  return t;
}

}  // namespace

ObjectLossBreakdown compute_losses(const RenderedFrame& rendered, const FrameObservation& frame,
                                   const FramePartition& partition, double lambda_lo,
                                   double lambda_up) {
  ObjectLossBreakdown out;
  out.invalid_depth_fraction = invalid_depth_fraction(frame);
  out.lambda_a = lambda_lo + (lambda_up - lambda_lo) * out.invalid_depth_fraction;

  const auto bg = partition.sets.find(0);
  if (bg == partition.sets.end() || bg->second.empty())
    throw InputError("compute_losses: frame has no background pixels");
  out.background = terms_for_set(rendered, frame, bg->second, out.lambda_a);

  for (const auto& [id, set] : partition.sets) {
    if (id == 0 || set.empty()) continue;
    out.per_object[id] = terms_for_set(rendered, frame, set, out.lambda_a);
  }
  return out;
}

MappingLoss mapping_loss(const RenderedFrame& rendered, const FrameObservation& frame,
                         const std::set<int32_t>& dynamic_ids, double lambda_a,
                         double coverage_floor) {
  if (!rendered.color.same_shape(frame.rgb))
    throw InputError("mapping_loss: rendered and observed sizes differ");
  MappingLoss out;
  out.weights = ImageGray(frame.rgb.width, frame.rgb.height, 0.0);

  PixelSet kept;
  kept.reserve(frame.rgb.pixel_count());
  for (size_t p = 0; p < frame.rgb.pixel_count(); ++p) {
    if (dynamic_ids.count(frame.mask.at_index(p, 0))) continue;
    if (rendered.alpha.at_index(p, 0) < coverage_floor) continue;
    out.weights.at_index(p, 0) = 1.0;
    kept.push_back(p);
  }
  if (kept.empty()) throw InputError("mapping_loss: no pixels left to optimize");

  out.kept_pixels = kept.size();
  out.terms = terms_for_set(rendered, frame, kept, lambda_a);
  out.value = out.terms.combined;
  return out;
}

RenderAdjoint make_zero_adjoint(int width, int height) {
  RenderAdjoint adj;
  adj.color = ImageRGB(width, height, 0.0);
  adj.depth = ImageGray(width, height, 0.0);
  return adj;
}

void accumulate_tracking_adjoint(RenderAdjoint& adjoint, const RenderedFrame& rendered,
                                 const FrameObservation& frame, const PixelSet& pixel_set,
                                 double lambda_a, const AdjointOptions& opts) {
  check_set(pixel_set, rendered, frame);

  size_t valid_depth = 0;
  for (size_t p : pixel_set)
    if (depth_valid(frame.depth.at_index(p, 0))) ++valid_depth;

  const double color_w = lambda_a / (3.0 * static_cast<double>(pixel_set.size()));
  const double depth_w =
      valid_depth > 0 ? (1.0 - lambda_a) / static_cast<double>(valid_depth) : 0.0;

  for (size_t p : pixel_set) {
    for (int c = 0; c < 3; ++c) {
      adjoint.color.at_index(p, c) +=
          color_w * sign_of(rendered.color.at_index(p, c) - frame.rgb.at_index(p, c));
    }
    const double observed = frame.depth.at_index(p, 0);
    if (depth_w == 0.0 || !depth_valid(observed)) continue;
    if (rendered.alpha.at_index(p, 0) < opts.depth_alpha_gate) continue;
    adjoint.depth.at_index(p, 0) +=
        depth_w * sign_of(rendered.depth.at_index(p, 0) - observed);
  }
}

RenderAdjoint mapping_adjoint(const RenderedFrame& rendered, const FrameObservation& frame,
                              const ImageGray& weights, double lambda_a,
                              const AdjointOptions& opts) {
  if (!weights.same_shape(rendered.depth))
    throw InputError("mapping_adjoint: weight image size mismatch");
  PixelSet kept;
  kept.reserve(weights.pixel_count());
  for (size_t p = 0; p < weights.pixel_count(); ++p)
    if (weights.at_index(p, 0) > 0.0) kept.push_back(p);
  RenderAdjoint adj = make_zero_adjoint(rendered.color.width, rendered.color.height);
  if (kept.empty()) return adj;
  accumulate_tracking_adjoint(adj, rendered, frame, kept, lambda_a, opts);
  return adj;
}

}  // namespace fsp
