#include <algorithm>
#include <cmath>

#include "blas.hpp"
#include "vgw/ops.hpp"

namespace vgw {
namespace {

// Channel ops treat a tensor as [outer, C, inner] around the channel axis:
// axis 1 for rank >= 2, axis 0 for vectors.
struct Fiber {
  int64_t outer, channels, inner;
};

template <class S>
Fiber fiber_of(const Tensor<S>& x) {
  if (x.rank() == 1) return {1, x.dim(0), 1};
  int64_t inner = 1;
  for (int i = 2; i < x.rank(); ++i) inner *= x.dim(i);
  return {x.dim(0), x.dim(1), inner};
}

}  // namespace

template <class S>
Tensor<S> concat_channel(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw std::runtime_error("concat_channel: no inputs");
  const Fiber f0 = fiber_of(xs[0]);
  int total_c = 0;
  for (const auto& x : xs) {
    if (x.rank() != xs[0].rank())
      throw std::runtime_error("concat_channel: rank mismatch between " +
                               shape_str(xs[0].shape()) + " and " + shape_str(x.shape()));
    const Fiber f = fiber_of(x);
    if (f.outer != f0.outer || f.inner != f0.inner)
      throw std::runtime_error("concat_channel: non-channel extents differ, " +
                               shape_str(xs[0].shape()) + " vs " + shape_str(x.shape()));
    total_c += int(f.channels);
  }

  Shape out_shape = xs[0].shape();
  out_shape[xs[0].rank() == 1 ? 0 : 1] = total_c;
  Tensor<S> out = Tensor<S>::zeros(out_shape);

  int c_off = 0;
  for (const auto& x : xs) {
    const Fiber f = fiber_of(x);
    for (int64_t o = 0; o < f.outer; ++o)
      std::copy_n(x.data() + o * f.channels * f.inner, f.channels * f.inner,
                  out.data() + (o * total_c + c_off) * f.inner);
    c_off += int(f.channels);
  }

  std::vector<const Tensor<S>*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  if (Tape<S>::current() &&
      std::any_of(ptrs.begin(), ptrs.end(), [](auto* t) { return t->requires_grad(); })) {
    std::vector<std::shared_ptr<TensorData<S>>> ids;
    for (const auto& x : xs) ids.push_back(x.node());
    auto od = out.node();
    const Fiber fo = f0;
    detail::record_op(out, [=]() {
      int off = 0;
      for (const auto& id : ids) {
        const int64_t c = int64_t(id->values.size()) / (fo.outer * fo.inner);
        if (id->requires_grad) {
          detail::ensure_grad(*id);
          for (int64_t o = 0; o < fo.outer; ++o) {
            const S* g = od->grad.data() + (o * total_c + off) * fo.inner;
            S* dst = id->grad.data() + o * c * fo.inner;
            for (int64_t i = 0; i < c * fo.inner; ++i) dst[i] += g[i];
          }
        }
        off += int(c);
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> slice_channel(const Tensor<S>& x, int c0, int count) {
  const Fiber f = fiber_of(x);
  if (c0 < 0 || count <= 0 || c0 + count > f.channels)
    throw std::runtime_error("slice_channel: [" + std::to_string(c0) + "," +
                             std::to_string(c0 + count) + ") out of range for " +
                             shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[x.rank() == 1 ? 0 : 1] = count;
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  for (int64_t o = 0; o < f.outer; ++o)
    std::copy_n(x.data() + (o * f.channels + c0) * f.inner, int64_t(count) * f.inner,
                out.data() + o * count * f.inner);

  if (detail::recording<S>({&x})) {
    auto xd = x.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      detail::ensure_grad(*xd);
      for (int64_t o = 0; o < f.outer; ++o) {
        const S* g = od->grad.data() + o * count * f.inner;
        S* dst = xd->grad.data() + (o * f.channels + c0) * f.inner;
        for (int64_t i = 0; i < int64_t(count) * f.inner; ++i) dst[i] += g[i];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> crop(const Tensor<S>& x, int y0, int x0, int h, int w) {
  if (x.rank() != 4)
    throw std::runtime_error("crop: expected NCHW, got " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > H || x0 + w > W)
    throw std::runtime_error("crop: window " + std::to_string(h) + "x" + std::to_string(w) +
                             " at (" + std::to_string(y0) + "," + std::to_string(x0) +
                             ") exceeds " + shape_str(x.shape()));
  Tensor<S> out = Tensor<S>::zeros({N, C, h, w});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < h; ++y)
        std::copy_n(x.data() + x.offset(n, c, y0 + y, x0), w,
                    out.data() + out.offset(n, c, y, 0));

  if (detail::recording<S>({&x})) {
    auto xd = x.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      detail::ensure_grad(*xd);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          for (int y = 0; y < h; ++y) {
            const S* g = od->grad.data() + ((int64_t(n) * C + c) * h + y) * w;
            S* dst = xd->grad.data() + ((int64_t(n) * C + c) * H + y0 + y) * W + x0;
            for (int i = 0; i < w; ++i) dst[i] += g[i];
          }
    });
  }
  return out;
}

template <class S>
Tensor<S> softmax_channel(const Tensor<S>& x) {
  const Fiber f = fiber_of(x);
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (int64_t o = 0; o < f.outer; ++o)
    for (int64_t i = 0; i < f.inner; ++i) {
      const int64_t base = o * f.channels * f.inner + i;
      S m = x.at(int(base));
      for (int64_t c = 1; c < f.channels; ++c)
        m = std::max(m, x.data()[base + c * f.inner]);
      S z = S(0);
      for (int64_t c = 0; c < f.channels; ++c) {
        S e = std::exp(x.data()[base + c * f.inner] - m);
        out.data()[base + c * f.inner] = e;
        z += e;
      }
      for (int64_t c = 0; c < f.channels; ++c) out.data()[base + c * f.inner] /= z;
    }

  if (detail::recording<S>({&x})) {
    auto xd = x.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      detail::ensure_grad(*xd);
      for (int64_t o = 0; o < f.outer; ++o)
        for (int64_t i = 0; i < f.inner; ++i) {
          const int64_t base = o * f.channels * f.inner + i;
          S dot = S(0);
          for (int64_t c = 0; c < f.channels; ++c)
            dot += od->grad[size_t(base + c * f.inner)] * od->values[size_t(base + c * f.inner)];
          for (int64_t c = 0; c < f.channels; ++c) {
            const S y = od->values[size_t(base + c * f.inner)];
            xd->grad[size_t(base + c * f.inner)] +=
                y * (od->grad[size_t(base + c * f.inner)] - dot);
          }
        }
    });
  }
  return out;
}

template <class S>
Tensor<S> normalize_instance(const Tensor<S>& x, double eps) {
  if (x.rank() != 4)
    throw std::runtime_error("normalize_instance: expected NCHW, got " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1);
  const int64_t M = int64_t(x.dim(2)) * x.dim(3);
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  // Saved inverse std per (n,c) plane; backward reuses it.
  auto istd = std::make_shared<std::vector<S>>(size_t(N) * C);

  for (int64_t p = 0; p < int64_t(N) * C; ++p) {
    const S* xp = x.data() + p * M;
    S mu = S(0);
    for (int64_t i = 0; i < M; ++i) mu += xp[i];
    mu /= S(M);
    S var = S(0);
    for (int64_t i = 0; i < M; ++i) var += (xp[i] - mu) * (xp[i] - mu);
    var /= S(M);
    const S is = S(1) / std::sqrt(var + S(eps));
    (*istd)[size_t(p)] = is;
    S* op = out.data() + p * M;
    for (int64_t i = 0; i < M; ++i) op[i] = (xp[i] - mu) * is;
  }

  if (detail::recording<S>({&x})) {
    auto xd = x.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      detail::ensure_grad(*xd);
      for (int64_t p = 0; p < int64_t(N) * C; ++p) {
        const S* g = od->grad.data() + p * M;
        const S* y = od->values.data() + p * M;
        const S is = (*istd)[size_t(p)];
        S gsum = S(0), gy = S(0);
        for (int64_t i = 0; i < M; ++i) {
          gsum += g[i];
          gy += g[i] * y[i];
        }
        gsum /= S(M);
        gy /= S(M);
        S* gx = xd->grad.data() + p * M;
        for (int64_t i = 0; i < M; ++i) gx[i] += is * (g[i] - gsum - y[i] * gy);
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> gram_matrix(const Tensor<S>& x) {
  if (x.rank() != 4)
    throw std::runtime_error("gram_matrix: expected NCHW, got " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1);
  const int64_t M = int64_t(x.dim(2)) * x.dim(3);
  Tensor<S> out = Tensor<S>::zeros({N, C, C});
  const S inv = S(1) / S(M);
  for (int n = 0; n < N; ++n)
    detail::gemm(CblasNoTrans, CblasTrans, C, C, int(M), inv, x.data() + int64_t(n) * C * M,
                 int(M), x.data() + int64_t(n) * C * M, int(M), S(0),
                 out.data() + int64_t(n) * C * C, C);

  if (detail::recording<S>({&x})) {
    auto xd = x.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      detail::ensure_grad(*xd);
      std::vector<S> sym(size_t(C) * C);
      for (int n = 0; n < N; ++n) {
        const S* g = od->grad.data() + int64_t(n) * C * C;
        for (int i = 0; i < C; ++i)
          for (int j = 0; j < C; ++j) sym[size_t(i) * C + j] = g[i * C + j] + g[j * C + i];
        // dX = (dG + dG^T) X / M, accumulated into the existing grad.
        detail::gemm(CblasNoTrans, CblasNoTrans, C, int(M), C, inv, sym.data(), C,
                     xd->values.data() + int64_t(n) * C * M, int(M), S(1),
                     xd->grad.data() + int64_t(n) * C * M, int(M));
      }
    });
  }
  return out;
}

#define VGW_INSTANTIATE(S)                                                    \
  template Tensor<S> concat_channel(const std::vector<Tensor<S>>&);          \
  template Tensor<S> slice_channel(const Tensor<S>&, int, int);              \
  template Tensor<S> crop(const Tensor<S>&, int, int, int, int);             \
  template Tensor<S> softmax_channel(const Tensor<S>&);                      \
  template Tensor<S> normalize_instance(const Tensor<S>&, double);           \
  template Tensor<S> gram_matrix(const Tensor<S>&);

VGW_INSTANTIATE(float)
VGW_INSTANTIATE(double)
#undef VGW_INSTANTIATE

}  // namespace vgw
