#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vgw/png_image.hpp"
#include "vgw/tensor.hpp"

namespace vgw {

/// Per-pixel correspondence onto body-part texture charts. Part 0 is
/// background; u,v are chart coordinates in [0,1], meaningful only where
/// part > 0.
struct UVMap {
  int height = 0, width = 0;
  std::vector<uint8_t> part;
  std::vector<float> u, v;

  size_t idx(int y, int x) const { return size_t(y) * size_t(width) + size_t(x); }
};

/// Per-pixel visibility classes of a target view relative to a source view.
struct VisibilityMap {
  static constexpr uint8_t kBackground = 0, kVisible = 1, kInvisible = 2;

  int height = 0, width = 0;
  std::vector<uint8_t> classes;

  uint8_t at(int y, int x) const { return classes[size_t(y) * size_t(width) + size_t(x)]; }
  uint8_t& at(int y, int x) { return classes[size_t(y) * size_t(width) + size_t(x)]; }
};

/// Labels each target pixel: background where uv_t has no part; visible when
/// some source pixel shares the part with both |du| and |dv| within eps
/// (Chebyshev distance); invisible otherwise. Uses a grid-hash index with
/// bucket side eps, which is exact for this metric, not approximate.
VisibilityMap compute_vismap_gt(const UVMap& uv_s, const UVMap& uv_t, float eps = 0.02f);

/// Argmax over the 3 class channels of [N,3,H,W] logits for sample n.
template <class S>
VisibilityMap vismap_from_logits(const Tensor<S>& logits, int n = 0);

/// Binary visible/invisible masks as gradient-detached [1,1,H,W] tensors.
template <class S>
std::pair<Tensor<S>, Tensor<S>> split_masks(const VisibilityMap& vm);
/// Batch form: stacks per-sample masks into [N,1,H,W].
template <class S>
std::pair<Tensor<S>, Tensor<S>> split_masks(const std::vector<VisibilityMap>& vms);

/// 2x2 majority-vote reduction chain; `levels` maps returned coarsest first,
/// the last being `vm` itself. Ties pick the most conservative class for
/// texture losses: invisible beats background beats visible.
std::vector<VisibilityMap> vismap_pyramid(const VisibilityMap& vm, int levels);

/// Mask pairs (m_v, m_i) per pyramid level, coarsest first.
template <class S>
std::vector<std::pair<Tensor<S>, Tensor<S>>> downsample_vismap(const VisibilityMap& vm,
                                                               int levels);

/// One-hot [1,3,H,W] encoding of the classes.
template <class S>
Tensor<S> vismap_one_hot(const VisibilityMap& vm);

/// Debug rendering: background black, visible green, invisible red.
Image8 vismap_to_image(const VisibilityMap& vm);

/// PNG triplet <prefix>.part.png (8-bit), <prefix>.u.png / .v.png (16-bit,
/// value = round(coord * 65535)).
void save_uvmap(const std::string& prefix, const UVMap& uv);
UVMap load_uvmap(const std::string& prefix);

}  // namespace vgw
