#pragma once

#include <utility>
#include <vector>

#include "vgw/ops.hpp"
#include "vgw/png_image.hpp"

namespace vgw {

// Flow fields are [N,2,H,W] tensors: channel 0 holds x displacement, channel
// 1 y displacement, in pixels at the field's own resolution. Pyramids run
// coarsest to finest and each level doubles both spatial extents.
template <class S>
using FlowPyramid = std::vector<Tensor<S>>;

template <class S> void check_flow(const Tensor<S>& flow, const char* where);
template <class S> void check_pyramid(const FlowPyramid<S>& pyr, const char* where);

/// Backward warping: output(p) samples `image` bilinearly at p + flow(p).
/// Taps outside the image read zero, so content fades out at the border
/// instead of smearing. Differentiable in both image and flow.
template <class S>
Tensor<S> warp_bilinear(const Tensor<S>& image, const Tensor<S>& flow);

/// Parameters of one sigmoid gate in the pyramid fusion chain: a 3x3 conv
/// over the 4-channel stack (finer flow, upsampled aggregate).
template <class S>
struct GateParams {
  Tensor<S> weight;  // [1,4,3,3]
  Tensor<S> bias;    // [1]
};

/// Coarse-to-fine fusion: the running aggregate is upsampled (nearest, with
/// displacements doubled to stay in pixel units) and blended with the next
/// finer level through a learned per-pixel gate. Needs levels-1 gate params.
template <class S>
Tensor<S> gated_aggregate(const FlowPyramid<S>& pyramid,
                          const std::vector<GateParams<S>>& gates);

/// Doubles flow resolution; every output pixel is a convex combination
/// (softmax of `weight_logits`, renormalized over in-bounds entries at the
/// border) of the 3x3 coarse neighborhood around its parent pixel, then
/// scaled by 2 to convert displacements to the finer pixel grid.
template <class S>
Tensor<S> convex_upsample(const Tensor<S>& flow, const Tensor<S>& weight_logits);

/// Repeated 2x average pooling; returns `levels` images coarsest first, the
/// last being `image` itself.
template <class S>
std::vector<Tensor<S>> image_pyramid(const Tensor<S>& image, int levels);

/// Warps the source image pyramid by both flow pyramids level by level.
/// Returns (visible-warped, invisible-warped), coarsest first.
template <class S>
std::pair<std::vector<Tensor<S>>, std::vector<Tensor<S>>> build_warped_pyramids(
    const Tensor<S>& source, const FlowPyramid<S>& flow_v, const FlowPyramid<S>& flow_i);

/// Direction/magnitude rendering for debugging: hue = flow angle, value =
/// magnitude normalized by the per-sample maximum.
template <class S>
Image8 flow_to_image(const Tensor<S>& flow, int n = 0);

}  // namespace vgw
