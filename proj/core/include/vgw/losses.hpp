#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vgw/ops.hpp"
#include "vgw/visibility.hpp"
#include "vgw/warp.hpp"

namespace vgw {

struct LossWeights {
  // Flow-stage term weights: perceptual, masked L1, total variation, style.
  // Style gets a large weight because Gram magnitudes are tiny for
  // normalized features.
  float beta1 = 1.0f, beta2 = 5.0f, beta3 = 0.1f, beta4 = 100.0f;
  // Generator-stage term weights: reconstruction, perceptual, style,
  // adversarial.
  float alpha_rec = 5.0f, alpha_per = 1.0f, alpha_sty = 100.0f, alpha_adv = 1.0f;
  // Visibility cross-entropy weight inside the warping objective, and the
  // self-supervised patch-adversarial weight for unpaired samples. Both
  // exist so the whole supervised objective can be switched off cleanly.
  float lambda_cce = 1.0f, lambda_ss = 1.0f;
};

/// Frozen random-feature pyramid standing in for a pretrained perceptual
/// network: three 4x4 stride-2 convs (3 -> 16 -> 32 -> 64 channels) with
/// leaky ReLU, rows of each weight matrix orthonormalized. Same seed gives
/// bit-identical weights; gradients flow through to the images but never to
/// the weights.
template <class S>
class FeatureExtractor {
 public:
  static constexpr int kStages = 3;

  explicit FeatureExtractor(uint64_t seed);
  std::vector<Tensor<S>> extract(const Tensor<S>& image) const;
  const std::vector<Tensor<S>>& stage_weights() const { return weights_; }

 private:
  std::vector<Tensor<S>> weights_, biases_;
};

/// Composite losses expose their parts: `total` stays on the tape, `terms`
/// are plain values (weighted, as summed into the total) for logging.
template <class S>
struct LossBreakdown {
  Tensor<S> total;
  std::vector<std::pair<std::string, double>> terms;
};

/// Mean absolute difference over mask-selected elements: sum(|a-b| * m) /
/// max(sum(m) * C, 1). The mask [N,1,H,W] is treated as a constant weight.
template <class S>
Tensor<S> masked_l1(const Tensor<S>& a, const Tensor<S>& b, const Tensor<S>& m);

/// Mean squared feature distance, summed over extractor stages. The mask
/// multiplies both images in pixel space first, so masked-out regions
/// compare as black on black.
template <class S>
Tensor<S> perceptual_loss(const Tensor<S>& a, const Tensor<S>& b, const Tensor<S>& m,
                          const FeatureExtractor<S>& fx);

/// Squared Frobenius distance of channel Gram matrices, each stage scaled by
/// 1/C^2, summed over stages. Same pixel-space masking as perceptual_loss.
template <class S>
Tensor<S> style_loss(const Tensor<S>& a, const Tensor<S>& b, const Tensor<S>& m,
                     const FeatureExtractor<S>& fx);

/// Stage-wise variants when features were already extracted (the composites
/// reuse one extraction for both perceptual and style terms).
template <class S>
Tensor<S> perceptual_from_features(const std::vector<Tensor<S>>& fa,
                                   const std::vector<Tensor<S>>& fb);
template <class S>
Tensor<S> style_from_features(const std::vector<Tensor<S>>& fa, const std::vector<Tensor<S>>& fb);

/// Mean |forward difference| over the valid horizontal pairs plus the same
/// over vertical pairs, across all channels.
template <class S> Tensor<S> tv_loss(const Tensor<S>& f);

/// Mean per-pixel cross-entropy of 3-class logits against the map classes,
/// log-sum-exp stabilized.
template <class S>
Tensor<S> cce_loss(const Tensor<S>& logits, const std::vector<VisibilityMap>& targets);

template <class S> Tensor<S> lsgan_generator_loss(const Tensor<S>& d_fake);
template <class S>
Tensor<S> lsgan_discriminator_loss(const Tensor<S>& d_real, const Tensor<S>& d_fake);

/// Same least-squares objectives applied to patch score maps; unconditional.
template <class S> Tensor<S> patchgan_generator_loss(const Tensor<S>& patch_fake);
template <class S>
Tensor<S> patchgan_discriminator_loss(const Tensor<S>& patch_real, const Tensor<S>& patch_fake);

/// Warping objective over a flow/mask pyramid: per level, the visible part
/// pays perceptual + L1 + tv and the invisible part pays perceptual + style
/// + tv; the visibility logits pay cross-entropy once at full resolution.
/// Target pyramids come from repeated 2x average pooling of `target`.
template <class S>
LossBreakdown<S> flow_warp_loss(const std::vector<Tensor<S>>& warped_v,
                                const std::vector<Tensor<S>>& warped_i,
                                const Tensor<S>& target,
                                const std::vector<std::pair<Tensor<S>, Tensor<S>>>& masks,
                                const FlowPyramid<S>& flows_v, const FlowPyramid<S>& flows_i,
                                const Tensor<S>& vm_logits,
                                const std::vector<VisibilityMap>& vm_gt,
                                const FeatureExtractor<S>& fx, const LossWeights& w);

/// Paired generator objective: reconstruction + perceptual + style over the
/// full image plus the least-squares adversarial term from a discriminator
/// run on concat(I_gen, K_t heatmaps).
template <class S>
LossBreakdown<S> supervised_loss(const Tensor<S>& I_gen, const Tensor<S>& I_t,
                                 const Tensor<S>& K_t,
                                 const std::function<Tensor<S>(const Tensor<S>&)>& discriminator,
                                 const FeatureExtractor<S>& fx, const LossWeights& w);

}  // namespace vgw
