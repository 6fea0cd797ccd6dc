#include "vgw/warp.hpp"

#include <cmath>
#include <limits>

namespace vgw {
namespace {

// The nine convex-upsampling taps cover the 3x3 coarse neighborhood; entry k
// maps to offset (dy, dx) = (k/3 - 1, k%3 - 1).
template <class S>
void convex_weights_at(const S* logits, int64_t lstride, int cy, int cx, int CH, int CW, S* w) {
  S m = -std::numeric_limits<S>::infinity();
  for (int k = 0; k < 9; ++k) {
    const int ny = cy + k / 3 - 1, nx = cx + k % 3 - 1;
    w[k] = (ny >= 0 && ny < CH && nx >= 0 && nx < CW) ? logits[k * lstride]
                                                      : -std::numeric_limits<S>::infinity();
    if (w[k] > m) m = w[k];
  }
  S z = S(0);
  for (int k = 0; k < 9; ++k) {
    w[k] = std::isinf(w[k]) ? S(0) : std::exp(w[k] - m);
    z += w[k];
  }
  for (int k = 0; k < 9; ++k) w[k] /= z;
}

}  // namespace

template <class S>
void check_flow(const Tensor<S>& flow, const char* where) {
  if (!flow.defined() || flow.rank() != 4 || flow.dim(1) != 2)
    throw std::runtime_error(std::string(where) + ": flow must be [N,2,H,W], got " +
                             (flow.defined() ? shape_str(flow.shape()) : "undefined"));
  for (S v : flow.values())
    if (!std::isfinite(double(v)))
      throw std::runtime_error(std::string(where) + ": flow contains non-finite values");
}

template <class S>
void check_pyramid(const FlowPyramid<S>& pyr, const char* where) {
  if (pyr.empty()) throw std::runtime_error(std::string(where) + ": empty flow pyramid");
  for (size_t l = 0; l < pyr.size(); ++l) {
    check_flow(pyr[l], where);
    if (l > 0 && (pyr[l].dim(2) != 2 * pyr[l - 1].dim(2) || pyr[l].dim(3) != 2 * pyr[l - 1].dim(3)))
      throw std::runtime_error(std::string(where) + ": level " + std::to_string(l) +
                               " does not double the previous level, " +
                               shape_str(pyr[l - 1].shape()) + " -> " + shape_str(pyr[l].shape()));
  }
}

template <class S>
Tensor<S> warp_bilinear(const Tensor<S>& image, const Tensor<S>& flow) {
  check_flow(flow, "warp_bilinear");
  if (image.rank() != 4 || image.dim(0) != flow.dim(0) || image.dim(2) != flow.dim(2) ||
      image.dim(3) != flow.dim(3))
    throw std::runtime_error("warp_bilinear: image " + shape_str(image.shape()) +
                             " and flow " + shape_str(flow.shape()) + " disagree on N,H,W");
  const int N = image.dim(0), C = image.dim(1), H = image.dim(2), W = image.dim(3);
  Tensor<S> out = Tensor<S>::zeros(image.shape());

  auto sample = [&](const S* img, int y, int x) -> S {
    return (y >= 0 && y < H && x >= 0 && x < W) ? img[y * W + x] : S(0);
  };

  for (int n = 0; n < N; ++n)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const S sx = S(x) + flow.at(n, 0, y, x);
        const S sy = S(y) + flow.at(n, 1, y, x);
        const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
        const S fx = sx - S(x0), fy = sy - S(y0);
        for (int c = 0; c < C; ++c) {
          const S* img = image.data() + (int64_t(n) * C + c) * H * W;
          out.at(n, c, y, x) = (S(1) - fy) * ((S(1) - fx) * sample(img, y0, x0) +
                                              fx * sample(img, y0, x0 + 1)) +
                               fy * ((S(1) - fx) * sample(img, y0 + 1, x0) +
                                     fx * sample(img, y0 + 1, x0 + 1));
        }
      }

  if (detail::recording<S>({&image, &flow})) {
    auto id = image.node();
    auto fd = flow.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      if (id->requires_grad) detail::ensure_grad(*id);
      if (fd->requires_grad) detail::ensure_grad(*fd);
      const int64_t plane = int64_t(H) * W;
      for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            const int64_t fbase = (int64_t(n) * 2) * plane + y * W + x;
            const S sx = S(x) + fd->values[size_t(fbase)];
            const S sy = S(y) + fd->values[size_t(fbase + plane)];
            const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
            const S fx = sx - S(x0), fy = sy - S(y0);
            const bool in00 = y0 >= 0 && y0 < H && x0 >= 0 && x0 < W;
            const bool in01 = y0 >= 0 && y0 < H && x0 + 1 >= 0 && x0 + 1 < W;
            const bool in10 = y0 + 1 >= 0 && y0 + 1 < H && x0 >= 0 && x0 < W;
            const bool in11 = y0 + 1 >= 0 && y0 + 1 < H && x0 + 1 >= 0 && x0 + 1 < W;
            S gfx = S(0), gfy = S(0);
            for (int c = 0; c < C; ++c) {
              const int64_t ibase = (int64_t(n) * C + c) * plane;
              const S g = od->grad[size_t(ibase + y * W + x)];
              if (g == S(0)) continue;
              const S v00 = in00 ? id->values[size_t(ibase + y0 * W + x0)] : S(0);
              const S v01 = in01 ? id->values[size_t(ibase + y0 * W + x0 + 1)] : S(0);
              const S v10 = in10 ? id->values[size_t(ibase + (y0 + 1) * W + x0)] : S(0);
              const S v11 = in11 ? id->values[size_t(ibase + (y0 + 1) * W + x0 + 1)] : S(0);
              if (id->requires_grad) {
                if (in00) id->grad[size_t(ibase + y0 * W + x0)] += g * (S(1) - fy) * (S(1) - fx);
                if (in01) id->grad[size_t(ibase + y0 * W + x0 + 1)] += g * (S(1) - fy) * fx;
                if (in10) id->grad[size_t(ibase + (y0 + 1) * W + x0)] += g * fy * (S(1) - fx);
                if (in11) id->grad[size_t(ibase + (y0 + 1) * W + x0 + 1)] += g * fy * fx;
              }
              gfx += g * ((S(1) - fy) * (v01 - v00) + fy * (v11 - v10));
              gfy += g * ((S(1) - fx) * (v10 - v00) + fx * (v11 - v01));
            }
            if (fd->requires_grad) {
              fd->grad[size_t(fbase)] += gfx;
              fd->grad[size_t(fbase + plane)] += gfy;
            }
          }
    });
  }
  return out;
}

template <class S>
Tensor<S> gated_aggregate(const FlowPyramid<S>& pyramid, const std::vector<GateParams<S>>& gates) {
  check_pyramid(pyramid, "gated_aggregate");
  if (gates.size() + 1 != pyramid.size())
    throw std::runtime_error("gated_aggregate: " + std::to_string(pyramid.size()) +
                             " levels need " + std::to_string(pyramid.size() - 1) +
                             " gates, got " + std::to_string(gates.size()));
  Tensor<S> agg = pyramid[0];
  for (size_t l = 1; l < pyramid.size(); ++l) {
    // Displacements live in pixels of their own grid, so doubling the
    // resolution doubles the stored values too.
    Tensor<S> up = scale(upsample_nearest2x(agg), 2.0);
    Tensor<S> gate_in = concat_channel<S>({pyramid[l], up});
    Tensor<S> g = sigmoid(conv2d(gate_in, gates[l - 1].weight, gates[l - 1].bias, 1, 1));
    // g*fine + (1-g)*up, written as up + g*(fine - up).
    agg = add(up, scale_channels(sub(pyramid[l], up), g));
  }
  return agg;
}

template <class S>
Tensor<S> convex_upsample(const Tensor<S>& flow, const Tensor<S>& weight_logits) {
  check_flow(flow, "convex_upsample");
  const int N = flow.dim(0), CH = flow.dim(2), CW = flow.dim(3);
  const int OH = 2 * CH, OW = 2 * CW;
  if (weight_logits.rank() != 4 || weight_logits.dim(0) != N || weight_logits.dim(1) != 9 ||
      weight_logits.dim(2) != OH || weight_logits.dim(3) != OW)
    throw std::runtime_error("convex_upsample: logits must be [" + std::to_string(N) + ",9," +
                             std::to_string(OH) + "," + std::to_string(OW) + "], got " +
                             shape_str(weight_logits.shape()));

  Tensor<S> out = Tensor<S>::zeros({N, 2, OH, OW});
  const int64_t lplane = int64_t(OH) * OW;
  const int64_t fplane = int64_t(CH) * CW;

  for (int n = 0; n < N; ++n)
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox) {
        const int cy = oy / 2, cx = ox / 2;
        S w[9];
        convex_weights_at(weight_logits.data() + int64_t(n) * 9 * lplane + oy * OW + ox, lplane,
                          cy, cx, CH, CW, w);
        S acc0 = S(0), acc1 = S(0);
        for (int k = 0; k < 9; ++k) {
          if (w[k] == S(0)) continue;
          const int ny = cy + k / 3 - 1, nx = cx + k % 3 - 1;
          acc0 += w[k] * flow.data()[(int64_t(n) * 2) * fplane + ny * CW + nx];
          acc1 += w[k] * flow.data()[(int64_t(n) * 2 + 1) * fplane + ny * CW + nx];
        }
        out.at(n, 0, oy, ox) = S(2) * acc0;
        out.at(n, 1, oy, ox) = S(2) * acc1;
      }

  if (detail::recording<S>({&flow, &weight_logits})) {
    auto fd = flow.node();
    auto ld = weight_logits.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      if (fd->requires_grad) detail::ensure_grad(*fd);
      if (ld->requires_grad) detail::ensure_grad(*ld);
      for (int n = 0; n < N; ++n)
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox) {
            const int cy = oy / 2, cx = ox / 2;
            S w[9];
            convex_weights_at(ld->values.data() + int64_t(n) * 9 * lplane + oy * OW + ox, lplane,
                              cy, cx, CH, CW, w);
            const S g0 = od->grad[size_t((int64_t(n) * 2) * lplane + oy * OW + ox)];
            const S g1 = od->grad[size_t((int64_t(n) * 2 + 1) * lplane + oy * OW + ox)];
            const S y0 = od->values[size_t((int64_t(n) * 2) * lplane + oy * OW + ox)];
            const S y1 = od->values[size_t((int64_t(n) * 2 + 1) * lplane + oy * OW + ox)];
            for (int k = 0; k < 9; ++k) {
              if (w[k] == S(0)) continue;
              const int ny = cy + k / 3 - 1, nx = cx + k % 3 - 1;
              const S f0 = fd->values[size_t((int64_t(n) * 2) * fplane + ny * CW + nx)];
              const S f1 = fd->values[size_t((int64_t(n) * 2 + 1) * fplane + ny * CW + nx)];
              if (fd->requires_grad) {
                fd->grad[size_t((int64_t(n) * 2) * fplane + ny * CW + nx)] += S(2) * w[k] * g0;
                fd->grad[size_t((int64_t(n) * 2 + 1) * fplane + ny * CW + nx)] += S(2) * w[k] * g1;
              }
              if (ld->requires_grad)
                ld->grad[size_t(int64_t(n) * 9 * lplane + k * lplane + oy * OW + ox)] +=
                    w[k] * (g0 * (S(2) * f0 - y0) + g1 * (S(2) * f1 - y1));
            }
          }
    });
  }
  return out;
}

template <class S>
std::vector<Tensor<S>> image_pyramid(const Tensor<S>& image, int levels) {
  if (levels < 1) throw std::runtime_error("image_pyramid: need at least one level");
  std::vector<Tensor<S>> pyr;
  pyr.resize(size_t(levels));
  pyr[size_t(levels - 1)] = image;
  for (int l = levels - 2; l >= 0; --l) pyr[size_t(l)] = downsample_avg2x(pyr[size_t(l + 1)]);
  return pyr;
}

template <class S>
std::pair<std::vector<Tensor<S>>, std::vector<Tensor<S>>> build_warped_pyramids(
    const Tensor<S>& source, const FlowPyramid<S>& flow_v, const FlowPyramid<S>& flow_i) {
  check_pyramid(flow_v, "build_warped_pyramids");
  check_pyramid(flow_i, "build_warped_pyramids");
  if (flow_v.size() != flow_i.size())
    throw std::runtime_error("build_warped_pyramids: pyramid level counts differ");
  const auto& finest = flow_v.back();
  if (finest.dim(2) != source.dim(2) || finest.dim(3) != source.dim(3))
    throw std::runtime_error("build_warped_pyramids: finest level " + shape_str(finest.shape()) +
                             " does not match source " + shape_str(source.shape()));
  auto imgs = image_pyramid(source, int(flow_v.size()));
  std::vector<Tensor<S>> warped_v, warped_i;
  for (size_t l = 0; l < flow_v.size(); ++l) {
    warped_v.push_back(warp_bilinear(imgs[l], flow_v[l]));
    warped_i.push_back(warp_bilinear(imgs[l], flow_i[l]));
  }
  return {std::move(warped_v), std::move(warped_i)};
}

template <class S>
Image8 flow_to_image(const Tensor<S>& flow, int n) {
  check_flow(flow, "flow_to_image");
  const int H = flow.dim(2), W = flow.dim(3);
  double maxmag = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      maxmag = std::max(maxmag, std::hypot(double(flow.at(n, 0, y, x)),
                                           double(flow.at(n, 1, y, x))));
  Image8 img;
  img.width = W;
  img.height = H;
  img.channels = 3;
  img.pixels.assign(size_t(W) * H * 3, 0);
  if (maxmag == 0.0) return img;

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double fx = double(flow.at(n, 0, y, x)), fy = double(flow.at(n, 1, y, x));
      double hue = std::atan2(fy, fx) * 180.0 / 3.14159265358979323846;
      if (hue < 0) hue += 360.0;
      const double v = std::hypot(fx, fy) / maxmag;
      // HSV -> RGB with s = 1.
      const double c = v, hp = hue / 60.0;
      const double xx = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
      double r = 0, g = 0, b = 0;
      switch (int(hp) % 6) {
        case 0: r = c; g = xx; break;
        case 1: r = xx; g = c; break;
        case 2: g = c; b = xx; break;
        case 3: g = xx; b = c; break;
        case 4: r = xx; b = c; break;
        default: r = c; b = xx; break;
      }
      img.at(y, x, 0) = uint8_t(std::lround(r * 255.0));
      img.at(y, x, 1) = uint8_t(std::lround(g * 255.0));
      img.at(y, x, 2) = uint8_t(std::lround(b * 255.0));
    }
  return img;
}

#define VGW_INSTANTIATE(S)                                                                   \
  template void check_flow(const Tensor<S>&, const char*);                                  \
  template void check_pyramid(const FlowPyramid<S>&, const char*);                          \
  template Tensor<S> warp_bilinear(const Tensor<S>&, const Tensor<S>&);                     \
  template Tensor<S> gated_aggregate(const FlowPyramid<S>&, const std::vector<GateParams<S>>&); \
  template Tensor<S> convex_upsample(const Tensor<S>&, const Tensor<S>&);                   \
  template std::vector<Tensor<S>> image_pyramid(const Tensor<S>&, int);                     \
  template std::pair<std::vector<Tensor<S>>, std::vector<Tensor<S>>> build_warped_pyramids( \
      const Tensor<S>&, const FlowPyramid<S>&, const FlowPyramid<S>&);                      \
  template Image8 flow_to_image(const Tensor<S>&, int);

VGW_INSTANTIATE(float)
VGW_INSTANTIATE(double)
#undef VGW_INSTANTIATE

}  // namespace vgw
