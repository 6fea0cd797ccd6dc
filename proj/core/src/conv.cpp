#include <algorithm>
#include <vector>

#include "blas.hpp"
#include "vgw/ops.hpp"

namespace vgw {
namespace {

// Unrolls conv patches into a [C*K*K, OH*OW] matrix so the convolution
// becomes one GEMM per sample. Out-of-image taps are zero (zero padding).
template <class S>
void im2col(const S* x, int C, int H, int W, int K, int stride, int pad, int OH, int OW, S* col) {
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < K; ++ky)
      for (int kx = 0; kx < K; ++kx) {
        S* row = col + ((int64_t(c) * K + ky) * K + kx) * OH * OW;
        // Output columns whose tap lands inside [0, W).
        int lo = 0;
        while (lo < OW && lo * stride + kx - pad < 0) ++lo;
        int hi = OW;
        while (hi > lo && (hi - 1) * stride + kx - pad >= W) --hi;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride + ky - pad;
          S* dst = row + int64_t(oy) * OW;
          if (iy < 0 || iy >= H) {
            std::fill_n(dst, OW, S(0));
            continue;
          }
          const S* src = x + (int64_t(c) * H + iy) * W;
          std::fill_n(dst, lo, S(0));
          if (stride == 1)
            std::copy_n(src + lo + kx - pad, hi - lo, dst + lo);
          else
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride + kx - pad];
          std::fill_n(dst + hi, OW - hi, S(0));
        }
      }
}

// Scatter-adds a column matrix back onto the image grid (adjoint of im2col).
template <class S>
void col2im_add(const S* col, int C, int H, int W, int K, int stride, int pad, int OH, int OW,
                S* dx) {
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < K; ++ky)
      for (int kx = 0; kx < K; ++kx) {
        const S* row = col + ((int64_t(c) * K + ky) * K + kx) * OH * OW;
        int lo = 0;
        while (lo < OW && lo * stride + kx - pad < 0) ++lo;
        int hi = OW;
        while (hi > lo && (hi - 1) * stride + kx - pad >= W) --hi;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          S* dst = dx + (int64_t(c) * H + iy) * W;
          const S* src = row + int64_t(oy) * OW;
          for (int ox = lo; ox < hi; ++ox) dst[ox * stride + kx - pad] += src[ox];
        }
      }
}

}  // namespace

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias, int stride,
                 int pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw std::runtime_error("conv2d: expected x NCHW and w OCKK, got " + shape_str(x.shape()) +
                             " and " + shape_str(w.shape()));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(0), K = w.dim(2);
  if (w.dim(1) != C)
    throw std::runtime_error("conv2d: weight expects " + std::to_string(w.dim(1)) +
                             " input channels, tensor has " + std::to_string(C));
  if (w.dim(3) != K || K < 1)
    throw std::runtime_error("conv2d: kernel must be square and non-empty, got " +
                             shape_str(w.shape()));
  if (stride != 1 && stride != 2)
    throw std::runtime_error("conv2d: stride " + std::to_string(stride) + " unsupported");
  if (pad < 0) throw std::runtime_error("conv2d: negative padding");
  if (bias.rank() != 1 || bias.dim(0) != O)
    throw std::runtime_error("conv2d: bias shape " + shape_str(bias.shape()) + " must be [" +
                             std::to_string(O) + "]");
  if ((H + 2 * pad - K) % stride != 0 || (W + 2 * pad - K) % stride != 0 || H + 2 * pad < K ||
      W + 2 * pad < K)
    throw std::runtime_error("conv2d: extent " + std::to_string(H) + "x" + std::to_string(W) +
                             " with K=" + std::to_string(K) + " pad=" + std::to_string(pad) +
                             " stride=" + std::to_string(stride) + " does not tile exactly");
  const int OH = (H + 2 * pad - K) / stride + 1;
  const int OW = (W + 2 * pad - K) / stride + 1;
  const int64_t CKK = int64_t(C) * K * K;
  const int64_t P = int64_t(OH) * OW;
  const bool direct = (K == 1 && pad == 0 && stride == 1);  // col matrix is x itself

  Tensor<S> out = Tensor<S>::zeros({N, O, OH, OW});
  static thread_local std::vector<S> col_buf;
  if (!direct) col_buf.resize(size_t(CKK * P));

  for (int n = 0; n < N; ++n) {
    const S* xn = x.data() + int64_t(n) * C * H * W;
    const S* col = xn;
    if (!direct) {
      im2col(xn, C, H, W, K, stride, pad, OH, OW, col_buf.data());
      col = col_buf.data();
    }
    S* yn = out.data() + int64_t(n) * O * P;
    detail::gemm(CblasNoTrans, CblasNoTrans, O, int(P), int(CKK), S(1), w.data(), int(CKK), col,
                 int(P), S(0), yn, int(P));
    for (int o = 0; o < O; ++o) {
      const S b = bias.at(o);
      S* row = yn + int64_t(o) * P;
      for (int64_t i = 0; i < P; ++i) row[i] += b;
    }
  }

  if (detail::recording<S>({&x, &w, &bias})) {
    auto xd = x.node();
    auto wd = w.node();
    auto bd = bias.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      std::vector<S> col;
      std::vector<S> dcol;
      if (!direct && wd->requires_grad) col.resize(size_t(CKK * P));
      if (!direct && xd->requires_grad) dcol.resize(size_t(CKK * P));
      if (xd->requires_grad) detail::ensure_grad(*xd);
      if (wd->requires_grad) detail::ensure_grad(*wd);
      if (bd->requires_grad) detail::ensure_grad(*bd);

      for (int n = 0; n < N; ++n) {
        const S* gy = od->grad.data() + int64_t(n) * O * P;
        if (bd->requires_grad)
          for (int o = 0; o < O; ++o) {
            S acc = S(0);
            const S* row = gy + int64_t(o) * P;
            for (int64_t i = 0; i < P; ++i) acc += row[i];
            bd->grad[size_t(o)] += acc;
          }
        if (wd->requires_grad) {
          const S* colp = xd->values.data() + int64_t(n) * C * H * W;
          if (!direct) {
            im2col(colp, C, H, W, K, stride, pad, OH, OW, col.data());
            colp = col.data();
          }
          detail::gemm(CblasNoTrans, CblasTrans, O, int(CKK), int(P), S(1), gy, int(P), colp,
                       int(P), S(1), wd->grad.data(), int(CKK));
        }
        if (xd->requires_grad) {
          if (direct) {
            detail::gemm(CblasTrans, CblasNoTrans, int(CKK), int(P), O, S(1), wd->values.data(),
                         int(CKK), gy, int(P), S(1), xd->grad.data() + int64_t(n) * C * H * W,
                         int(P));
          } else {
            detail::gemm(CblasTrans, CblasNoTrans, int(CKK), int(P), O, S(1), wd->values.data(),
                         int(CKK), gy, int(P), S(0), dcol.data(), int(P));
            col2im_add(dcol.data(), C, H, W, K, stride, pad, OH, OW,
                       xd->grad.data() + int64_t(n) * C * H * W);
          }
        }
      }
    });
  }
  return out;
}

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                              int, int);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                               int, int);

}  // namespace vgw
