#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vgw/ops.hpp"
#include "vgw/rng.hpp"
#include "vgw/warp.hpp"

namespace vgw {

struct NetworkConfig {
  int image_size = 64;
  // Flow levels predicted directly (coarsest at image_size / 2^levels);
  // one more level comes from convex upsampling.
  int pyramid_levels = 3;
  int base_channels = 32;
  int pose_joints = 18;
  int vis_classes = 3;
  uint64_t rng_seed = 0;

  /// Throws unless image_size == 8 * 2^pyramid_levels with sane fields.
  void validate() const;
};

template <class S>
using NamedParams = std::vector<std::pair<std::string, Tensor<S>>>;

template <class S>
struct ConvLayer {
  Tensor<S> w, b;
  int stride = 1, pad = 1;

  Tensor<S> operator()(const Tensor<S>& x) const { return conv2d(x, w, b, stride, pad); }
  void append_params(const std::string& prefix, NamedParams<S>& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

// ---------------------------------------------------------------------------
// Flow module: a UNet over concat(I_s, K_s, K_t) emitting per-level flow
// pairs (visible + invisible), visibility logits, and convex-upsampling
// logits, plus the gate parameters that fuse the pyramid.
// ---------------------------------------------------------------------------
template <class S>
struct FlowPredictor {
  ConvLayer<S> stem;                 // at image size
  std::vector<ConvLayer<S>> encs;    // pyramid_levels stride-2 convs down to 8x8
  ConvLayer<S> bott;                 // 3x3 at 8x8
  std::vector<ConvLayer<S>> decs;    // pyramid_levels + 1 entries, 8x8 up to image size
  std::vector<ConvLayer<S>> heads;   // 4 flow channels per level, zero-initialized
  ConvLayer<S> vm_head;              // 3 class logits at the finest predicted level
  ConvLayer<S> convex_head;          // 9 upsampling logits at image size
  std::vector<GateParams<S>> gates_v, gates_i;

  void append_params(const std::string& prefix, NamedParams<S>& out) const;
};

template <class S>
struct FlowForward {
  FlowPyramid<S> flows_v, flows_i;  // directly predicted levels, coarsest first
  Tensor<S> vm_logits;              // [N,3,image,image]
  Tensor<S> convex_logits;          // [N,9,image,image]
};

template <class S>
FlowForward<S> flow_predictor_forward(const FlowPredictor<S>& net, const Tensor<S>& I_s,
                                      const Tensor<S>& K_s, const Tensor<S>& K_t,
                                      const NetworkConfig& cfg);

/// Full flow composition: raw pyramids are gate-fused per class, the
/// aggregate is convex-upsampled to image size (both classes share the
/// predicted upsampling logits), and the full-resolution fields are appended
/// so pyr_v/pyr_i line up with the warping-loss levels.
template <class S>
struct FlowVisOut {
  FlowForward<S> raw;
  Tensor<S> flow_v_full, flow_i_full;  // [N,2,image,image]
  FlowPyramid<S> pyr_v, pyr_i;         // raw levels + full level, coarsest first
};

template <class S>
FlowVisOut<S> flowvis_forward(const FlowPredictor<S>& net, const Tensor<S>& I_s,
                              const Tensor<S>& K_s, const Tensor<S>& K_t,
                              const NetworkConfig& cfg);

// ---------------------------------------------------------------------------
// Generator: pose encoder, texture encoder with skip links, and the
// style-modulated multi-resolution decoder.
// ---------------------------------------------------------------------------
template <class S>
struct PoseEncoder {
  ConvLayer<S> stem, down1, down2, res1, res2;
  void append_params(const std::string& prefix, NamedParams<S>& out) const;
};

/// [N, 4*base, 16, 16] features from both keypoint heatmap stacks.
template <class S>
Tensor<S> pose_encoder_forward(const PoseEncoder<S>& net, const Tensor<S>& K_s,
                               const Tensor<S>& K_t);

template <class S>
struct TextureEncoder {
  ConvLayer<S> in64, down32, down16, skip32, skip16;
  void append_params(const std::string& prefix, NamedParams<S>& out) const;
};

/// Feature pyramid {64, 32, 16}, finest first, from the 9-channel stack
/// concat(I_v, I_i, one-hot vismap).
template <class S>
std::vector<Tensor<S>> texture_encoder_forward(const TextureEncoder<S>& net, const Tensor<S>& I_v,
                                               const Tensor<S>& I_i, const Tensor<S>& vm_onehot);

/// Per-pixel multiplicative injection: normalize_instance(conv(x * (1 +
/// style))). `style` must already be projected to x's channel count.
template <class S>
Tensor<S> style_modulate_2d(const Tensor<S>& x, const Tensor<S>& style,
                            const ConvLayer<S>& conv);

template <class S>
struct Decoder {
  ConvLayer<S> proj16, proj32, proj64;  // 1x1 style projections per scale
  ConvLayer<S> mod16, mod32, mod64;     // modulated 3x3 convs
  ConvLayer<S> up32, up64;              // post-upsample fusion convs
  ConvLayer<S> rgb16, rgb32, rgb64;     // per-scale image heads
  void append_params(const std::string& prefix, NamedParams<S>& out) const;
};

/// Multi-resolution synthesis 16 -> 32 -> 64; each scale is style-modulated
/// by the matching texture level, coarse RGB outputs are upsampled and
/// summed into finer ones, and the result maps through tanh into [0,1].
template <class S>
Tensor<S> decoder_forward(const Decoder<S>& net, const Tensor<S>& e_p,
                          const std::vector<Tensor<S>>& e_tex);

// ---------------------------------------------------------------------------
// Critics.
// ---------------------------------------------------------------------------
template <class S>
struct CondDiscriminator {
  ConvLayer<S> l1, l2, l3, head;
  void append_params(const std::string& prefix, NamedParams<S>& out) const;
};

/// Pose-conditioned score map over concat(I, K_t): [N,1,8,8] at 64x64.
template <class S>
Tensor<S> discriminator_forward(const CondDiscriminator<S>& net, const Tensor<S>& I,
                                const Tensor<S>& K_t);
/// Same network on an already-stacked [N, 3+J, H, W] input.
template <class S>
Tensor<S> discriminator_forward(const CondDiscriminator<S>& net, const Tensor<S>& stacked);

template <class S>
struct PatchDiscriminator {
  ConvLayer<S> l1, l2, l3, head;
  void append_params(const std::string& prefix, NamedParams<S>& out) const;
};

/// Unconditional patch realness map: [N,1,8,8] at 64x64 (three 4x4 stride-2
/// layers, so scores move one cell when the input moves 8 px).
template <class S>
Tensor<S> patch_discriminator_forward(const PatchDiscriminator<S>& net, const Tensor<S>& I);

// ---------------------------------------------------------------------------
// Bundle.
// ---------------------------------------------------------------------------
template <class S>
struct Models {
  NetworkConfig cfg;
  FlowPredictor<S> flow;
  PoseEncoder<S> pose;
  TextureEncoder<S> tex;
  Decoder<S> dec;
  CondDiscriminator<S> cond_d;
  PatchDiscriminator<S> patch_d;
};

/// Deterministic construction from cfg.rng_seed: He-style init scaled for
/// leaky ReLU, zero-initialized flow/convex heads and gates (training starts
/// from the identity warp with gates at 0.5).
template <class S>
Models<S> build_models(const NetworkConfig& cfg);

template <class S>
NamedParams<S> named_params(const Models<S>& m);

/// Flow-module subset (what the first training stage optimizes).
template <class S>
NamedParams<S> flow_params(const Models<S>& m);
/// Generator subset (pose/texture/decoder).
template <class S>
NamedParams<S> generator_params(const Models<S>& m);

template <class S>
void set_requires_grad(const NamedParams<S>& params, bool v);

/// Human-readable layer/parameter table.
template <class S>
std::string describe_models(const Models<S>& m);

}  // namespace vgw
