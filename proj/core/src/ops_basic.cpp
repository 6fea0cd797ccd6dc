#include <cmath>

#include "blas.hpp"
#include "vgw/ops.hpp"

namespace vgw {
namespace {

template <class S>
[[noreturn]] void shape_error(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  throw std::runtime_error(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                           shape_str(b.shape()) + " do not match");
}

// Binary elementwise with scalar broadcast on either side. `f` maps
// (x, y) -> out; `dfa`/`dfb` map (x, y, gout) -> grad contribution.
template <class S, class F, class Da, class Db>
Tensor<S> binary_op(const char* name, const Tensor<S>& a, const Tensor<S>& b, F f, Da dfa, Db dfb) {
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  if (!same_shape(a.shape(), b.shape()) && !a_scalar && !b_scalar) shape_error(name, a, b);

  const Tensor<S>& big = (a_scalar && !b_scalar) ? b : a;
  Tensor<S> out = Tensor<S>::zeros(big.shape());
  const int64_t n = out.numel();
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[a_scalar ? 0 : i], pb[b_scalar ? 0 : i]);

  if (detail::recording<S>({&a, &b})) {
    auto ad = a.node();
    auto bd = b.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      const S* gy = od->grad.data();
      if (ad->requires_grad) {
        detail::ensure_grad(*ad);
        for (int64_t i = 0; i < n; ++i)
          ad->grad[a_scalar ? 0 : size_t(i)] +=
              dfa(ad->values[a_scalar ? 0 : size_t(i)], bd->values[b_scalar ? 0 : size_t(i)], gy[i]);
      }
      if (bd->requires_grad) {
        detail::ensure_grad(*bd);
        for (int64_t i = 0; i < n; ++i)
          bd->grad[b_scalar ? 0 : size_t(i)] +=
              dfb(ad->values[a_scalar ? 0 : size_t(i)], bd->values[b_scalar ? 0 : size_t(i)], gy[i]);
      }
    });
  }
  return out;
}

template <class S, class F, class Df>
Tensor<S> unary_op(const Tensor<S>& a, F f, Df df) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const int64_t n = a.numel();
  const S* pa = a.data();
  S* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);

  if (detail::recording<S>({&a})) {
    auto ad = a.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      detail::ensure_grad(*ad);
      for (int64_t i = 0; i < n; ++i)
        ad->grad[size_t(i)] += df(ad->values[size_t(i)], od->values[size_t(i)]) * od->grad[size_t(i)];
    });
  }
  return out;
}

}  // namespace

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      "add", a, b, [](S x, S y) { return x + y; }, [](S, S, S g) { return g; },
      [](S, S, S g) { return g; });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      "sub", a, b, [](S x, S y) { return x - y; }, [](S, S, S g) { return g; },
      [](S, S, S g) { return -g; });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      "mul", a, b, [](S x, S y) { return x * y; }, [](S, S y, S g) { return y * g; },
      [](S x, S, S g) { return x * g; });
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, double c) {
  const S sc = S(c);
  return unary_op(
      a, [sc](S x) { return sc * x; }, [sc](S, S) { return sc; });
}

template <class S>
Tensor<S> abs(const Tensor<S>& a) {
  return unary_op(
      a, [](S x) { return std::abs(x); },
      [](S x, S) { return S((x > S(0)) - (x < S(0))); });
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
  return unary_op(
      a, [](S x) { return x > S(0) ? x : S(0); }, [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <class S>
Tensor<S> leaky_relu(const Tensor<S>& a, double slope) {
  const S k = S(slope);
  return unary_op(
      a, [k](S x) { return x > S(0) ? x : k * x; }, [k](S x, S) { return x > S(0) ? S(1) : k; });
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  return unary_op(
      a,
      [](S x) {
        // Split on sign so exp never overflows.
        if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
        S e = std::exp(x);
        return e / (S(1) + e);
      },
      [](S, S y) { return y * (S(1) - y); });
}

template <class S>
Tensor<S> tanh(const Tensor<S>& a) {
  return unary_op(
      a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <class S>
Tensor<S> square(const Tensor<S>& a) {
  return unary_op(
      a, [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}

template <class S>
Tensor<S> scale_channels(const Tensor<S>& x, const Tensor<S>& s) {
  if (x.rank() != 4 || s.rank() != 4 || s.dim(1) != 1 || x.dim(0) != s.dim(0) ||
      x.dim(2) != s.dim(2) || x.dim(3) != s.dim(3))
    throw std::runtime_error("scale_channels: expected [N,C,H,W] x [N,1,H,W], got " +
                             shape_str(x.shape()) + " x " + shape_str(s.shape()));
  const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (int n = 0; n < N; ++n) {
    const S* sp = s.data() + int64_t(n) * HW;
    for (int c = 0; c < C; ++c) {
      const S* xp = x.data() + (int64_t(n) * C + c) * HW;
      S* op = out.data() + (int64_t(n) * C + c) * HW;
      for (int i = 0; i < HW; ++i) op[i] = xp[i] * sp[i];
    }
  }

  if (detail::recording<S>({&x, &s})) {
    auto xd = x.node();
    auto sd = s.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      for (int n = 0; n < N; ++n) {
        const S* sp = sd->values.data() + int64_t(n) * HW;
        for (int c = 0; c < C; ++c) {
          const int64_t base = (int64_t(n) * C + c) * HW;
          const S* gy = od->grad.data() + base;
          if (xd->requires_grad) {
            detail::ensure_grad(*xd);
            S* gx = xd->grad.data() + base;
            for (int i = 0; i < HW; ++i) gx[i] += gy[i] * sp[i];
          }
          if (sd->requires_grad) {
            detail::ensure_grad(*sd);
            S* gs = sd->grad.data() + int64_t(n) * HW;
            const S* xp = xd->values.data() + base;
            for (int i = 0; i < HW; ++i) gs[i] += gy[i] * xp[i];
          }
        }
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::zeros({1});
  const int64_t n = a.numel();
  S acc = S(0);
  const S* pa = a.data();
  for (int64_t i = 0; i < n; ++i) acc += pa[i];
  out.at(0) = acc;

  if (detail::recording<S>({&a})) {
    auto ad = a.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      detail::ensure_grad(*ad);
      const S g = od->grad[0];
      for (int64_t i = 0; i < n; ++i) ad->grad[size_t(i)] += g;
    });
  }
  return out;
}

template <class S>
Tensor<S> mean(const Tensor<S>& a) {
  const int64_t n = a.numel();
  return scale(sum(a), 1.0 / double(n));
}

template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
    throw std::runtime_error("linear: expected x [N,F], w [O,F], got " + shape_str(x.shape()) +
                             " and " + shape_str(w.shape()));
  const int N = x.dim(0), F = x.dim(1), O = w.dim(0);
  if (bias.rank() != 1 || bias.dim(0) != O)
    throw std::runtime_error("linear: bias shape " + shape_str(bias.shape()) + " must be [" +
                             std::to_string(O) + "]");

  Tensor<S> out = Tensor<S>::zeros({N, O});
  detail::gemm(CblasNoTrans, CblasTrans, N, O, F, S(1), x.data(), F, w.data(), F, S(0), out.data(),
               O);
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) out.at(n * O + o) += bias.at(o);

  if (detail::recording<S>({&x, &w, &bias})) {
    auto xd = x.node();
    auto wd = w.node();
    auto bd = bias.node();
    auto od = out.node();
    detail::record_op(out, [=]() {
      const S* gy = od->grad.data();
      if (xd->requires_grad) {
        detail::ensure_grad(*xd);
        detail::gemm(CblasNoTrans, CblasNoTrans, N, F, O, S(1), gy, O, wd->values.data(), F, S(1),
                     xd->grad.data(), F);
      }
      if (wd->requires_grad) {
        detail::ensure_grad(*wd);
        detail::gemm(CblasTrans, CblasNoTrans, O, F, N, S(1), gy, O, xd->values.data(), F, S(1),
                     wd->grad.data(), F);
      }
      if (bd->requires_grad) {
        detail::ensure_grad(*bd);
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < O; ++o) bd->grad[size_t(o)] += gy[n * O + o];
      }
    });
  }
  return out;
}

#define VGW_INSTANTIATE(S)                                                     \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                 \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                 \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                 \
  template Tensor<S> scale(const Tensor<S>&, double);                         \
  template Tensor<S> abs(const Tensor<S>&);                                   \
  template Tensor<S> relu(const Tensor<S>&);                                  \
  template Tensor<S> leaky_relu(const Tensor<S>&, double);                    \
  template Tensor<S> sigmoid(const Tensor<S>&);                               \
  template Tensor<S> tanh(const Tensor<S>&);                                  \
  template Tensor<S> square(const Tensor<S>&);                                \
  template Tensor<S> scale_channels(const Tensor<S>&, const Tensor<S>&);      \
  template Tensor<S> sum(const Tensor<S>&);                                   \
  template Tensor<S> mean(const Tensor<S>&);                                  \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);

VGW_INSTANTIATE(float)
VGW_INSTANTIATE(double)
#undef VGW_INSTANTIATE

}  // namespace vgw
