#include <cmath>

#include "vgw/ops.hpp"

namespace vgw {
namespace {

template <class S>
void require_nchw(const Tensor<S>& x, const char* op) {
  if (x.rank() != 4)
    throw std::runtime_error(std::string(op) + ": expected NCHW, got " + shape_str(x.shape()));
}

// One bilinear tap along a single axis for the half-pixel 2x upsampling grid.
struct Tap {
  int i0, i1;
  double w0, w1;
};

inline Tap tap_for(int o, int extent) {
  const double pos = 0.5 * o - 0.25;  // (o + 0.5) / 2 - 0.5
  int i0 = int(std::floor(pos));
  const double f = pos - i0;
  int i1 = i0 + 1;
  if (i0 < 0) i0 = 0;
  if (i1 > extent - 1) i1 = extent - 1;
  return {i0, i1, 1.0 - f, f};
}

}  // namespace

template <class S>
Tensor<S> upsample_nearest2x(const Tensor<S>& x) {
  require_nchw(x, "upsample_nearest2x");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<S> out = Tensor<S>::zeros({N, C, 2 * H, 2 * W});
  for (int64_t p = 0; p < int64_t(N) * C; ++p) {
    const S* xp = x.data() + p * H * W;
    S* op = out.data() + p * 4 * H * W;
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        const S v = xp[h * W + w];
        S* d = op + (2 * h) * (2 * W) + 2 * w;
        d[0] = v;
        d[1] = v;
        d[2 * W] = v;
        d[2 * W + 1] = v;
      }
  }

  if (detail::recording<S>({&x})) {
    auto xd = x.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      detail::ensure_grad(*xd);
      for (int64_t p = 0; p < int64_t(N) * C; ++p) {
        S* gx = xd->grad.data() + p * H * W;
        const S* g = od->grad.data() + p * 4 * H * W;
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            const S* s = g + (2 * h) * (2 * W) + 2 * w;
            gx[h * W + w] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
          }
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> downsample_avg2x(const Tensor<S>& x) {
  require_nchw(x, "downsample_avg2x");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2)
    throw std::runtime_error("downsample_avg2x: extents must be even, got " +
                             shape_str(x.shape()));
  const int OH = H / 2, OW = W / 2;
  Tensor<S> out = Tensor<S>::zeros({N, C, OH, OW});
  for (int64_t p = 0; p < int64_t(N) * C; ++p) {
    const S* xp = x.data() + p * H * W;
    S* op = out.data() + p * OH * OW;
    for (int h = 0; h < OH; ++h)
      for (int w = 0; w < OW; ++w) {
        const S* s = xp + (2 * h) * W + 2 * w;
        op[h * OW + w] = (s[0] + s[1] + s[W] + s[W + 1]) * S(0.25);
      }
  }

  if (detail::recording<S>({&x})) {
    auto xd = x.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      detail::ensure_grad(*xd);
      for (int64_t p = 0; p < int64_t(N) * C; ++p) {
        S* gx = xd->grad.data() + p * H * W;
        const S* g = od->grad.data() + p * OH * OW;
        for (int h = 0; h < OH; ++h)
          for (int w = 0; w < OW; ++w) {
            const S q = g[h * OW + w] * S(0.25);
            S* d = gx + (2 * h) * W + 2 * w;
            d[0] += q;
            d[1] += q;
            d[W] += q;
            d[W + 1] += q;
          }
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> upsample_bilinear2x(const Tensor<S>& x) {
  require_nchw(x, "upsample_bilinear2x");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OH = 2 * H, OW = 2 * W;
  auto ytaps = std::make_shared<std::vector<Tap>>();
  auto xtaps = std::make_shared<std::vector<Tap>>();
  for (int o = 0; o < OH; ++o) ytaps->push_back(tap_for(o, H));
  for (int o = 0; o < OW; ++o) xtaps->push_back(tap_for(o, W));

  Tensor<S> out = Tensor<S>::zeros({N, C, OH, OW});
  for (int64_t p = 0; p < int64_t(N) * C; ++p) {
    const S* xp = x.data() + p * H * W;
    S* op = out.data() + p * OH * OW;
    for (int oy = 0; oy < OH; ++oy) {
      const Tap& ty = (*ytaps)[size_t(oy)];
      for (int ox = 0; ox < OW; ++ox) {
        const Tap& tx = (*xtaps)[size_t(ox)];
        op[oy * OW + ox] = S(ty.w0 * tx.w0) * xp[ty.i0 * W + tx.i0] +
                           S(ty.w0 * tx.w1) * xp[ty.i0 * W + tx.i1] +
                           S(ty.w1 * tx.w0) * xp[ty.i1 * W + tx.i0] +
                           S(ty.w1 * tx.w1) * xp[ty.i1 * W + tx.i1];
      }
    }
  }

  if (detail::recording<S>({&x})) {
    auto xd = x.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      detail::ensure_grad(*xd);
      for (int64_t p = 0; p < int64_t(N) * C; ++p) {
        S* gx = xd->grad.data() + p * H * W;
        const S* g = od->grad.data() + p * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
          const Tap& ty = (*ytaps)[size_t(oy)];
          for (int ox = 0; ox < OW; ++ox) {
            const Tap& tx = (*xtaps)[size_t(ox)];
            const S gv = g[oy * OW + ox];
            gx[ty.i0 * W + tx.i0] += S(ty.w0 * tx.w0) * gv;
            gx[ty.i0 * W + tx.i1] += S(ty.w0 * tx.w1) * gv;
            gx[ty.i1 * W + tx.i0] += S(ty.w1 * tx.w0) * gv;
            gx[ty.i1 * W + tx.i1] += S(ty.w1 * tx.w1) * gv;
          }
        }
      }
    });
  }
  return out;
}

#define VGW_INSTANTIATE(S)                            \
  template Tensor<S> upsample_nearest2x(const Tensor<S>&); \
  template Tensor<S> downsample_avg2x(const Tensor<S>&);   \
  template Tensor<S> upsample_bilinear2x(const Tensor<S>&);

VGW_INSTANTIATE(float)
VGW_INSTANTIATE(double)
#undef VGW_INSTANTIATE

}  // namespace vgw
