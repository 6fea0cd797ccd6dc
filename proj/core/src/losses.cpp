#include "vgw/losses.hpp"

#include <algorithm>
#include <cmath>

#include "vgw/rng.hpp"

namespace vgw {
namespace {

// Rows of a [rows, cols] matrix drawn from a normal distribution and
// orthonormalized in double precision. Requires rows <= cols.
std::vector<double> orthonormal_rows(int rows, int cols, Rng& rng) {
  std::vector<double> m(size_t(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    while (true) {
      for (int c = 0; c < cols; ++c) m[size_t(r) * cols + c] = rng.normal();
      for (int p = 0; p < r; ++p) {
        double dot = 0;
        for (int c = 0; c < cols; ++c)
          dot += m[size_t(r) * cols + c] * m[size_t(p) * cols + c];
        for (int c = 0; c < cols; ++c) m[size_t(r) * cols + c] -= dot * m[size_t(p) * cols + c];
      }
      double norm = 0;
      for (int c = 0; c < cols; ++c) norm += m[size_t(r) * cols + c] * m[size_t(r) * cols + c];
      norm = std::sqrt(norm);
      if (norm > 1e-8) {  // redraw on a (vanishingly unlikely) degenerate row
        for (int c = 0; c < cols; ++c) m[size_t(r) * cols + c] /= norm;
        break;
      }
    }
  }
  return m;
}

template <class S>
void check_mask(const Tensor<S>& a, const Tensor<S>& m, const char* op) {
  if (m.rank() != 4 || m.dim(1) != 1 || m.dim(0) != a.dim(0) || m.dim(2) != a.dim(2) ||
      m.dim(3) != a.dim(3))
    throw std::runtime_error(std::string(op) + ": mask " + shape_str(m.shape()) +
                             " must be [N,1,H,W] matching " + shape_str(a.shape()));
}

}  // namespace

template <class S>
FeatureExtractor<S>::FeatureExtractor(uint64_t seed) {
  const int chans[kStages + 1] = {3, 16, 32, 64};
  const int K = 4;
  for (int s = 0; s < kStages; ++s) {
    const int O = chans[s + 1], C = chans[s];
    Rng rng(Rng::mix(seed, uint64_t(s)));
    std::vector<double> rows = orthonormal_rows(O, C * K * K, rng);
    Tensor<S> w = Tensor<S>::zeros({O, C, K, K});
    for (int64_t i = 0; i < w.numel(); ++i) w.at(int(i)) = S(rows[size_t(i)]);
    weights_.push_back(w);
    biases_.push_back(Tensor<S>::zeros({O}));
  }
}

template <class S>
std::vector<Tensor<S>> FeatureExtractor<S>::extract(const Tensor<S>& image) const {
  if (image.rank() != 4 || image.dim(1) != 3)
    throw std::runtime_error("FeatureExtractor: expected [N,3,H,W], got " +
                             shape_str(image.shape()));
  std::vector<Tensor<S>> stages;
  Tensor<S> x = image;
  for (int s = 0; s < kStages; ++s) {
    x = leaky_relu(conv2d(x, weights_[size_t(s)], biases_[size_t(s)], 2, 1));
    stages.push_back(x);
  }
  return stages;
}

template <class S>
Tensor<S> masked_l1(const Tensor<S>& a, const Tensor<S>& b, const Tensor<S>& m) {
  if (!same_shape(a.shape(), b.shape()))
    throw std::runtime_error("masked_l1: shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
  check_mask(a, m, "masked_l1");
  double denom = 0;
  for (S v : m.values()) denom += double(v);
  denom = std::max(denom * a.dim(1), 1.0);
  // The denominator lives off the tape, so keep the numerator's mask off it
  // too instead of leaking a half-correct mask gradient.
  return scale(sum(scale_channels(abs(sub(a, b)), m.detach())), 1.0 / denom);
}

template <class S>
Tensor<S> perceptual_from_features(const std::vector<Tensor<S>>& fa,
                                   const std::vector<Tensor<S>>& fb) {
  Tensor<S> total;
  for (size_t s = 0; s < fa.size(); ++s) {
    Tensor<S> t = mean(square(sub(fa[s], fb[s])));
    total = total.defined() ? add(total, t) : t;
  }
  return total;
}

template <class S>
Tensor<S> style_from_features(const std::vector<Tensor<S>>& fa, const std::vector<Tensor<S>>& fb) {
  Tensor<S> total;
  for (size_t s = 0; s < fa.size(); ++s) {
    const int C = fa[s].dim(1);
    Tensor<S> d = sub(gram_matrix(fa[s]), gram_matrix(fb[s]));
    Tensor<S> t = scale(sum(square(d)), 1.0 / (double(C) * C));
    total = total.defined() ? add(total, t) : t;
  }
  return total;
}

template <class S>
Tensor<S> perceptual_loss(const Tensor<S>& a, const Tensor<S>& b, const Tensor<S>& m,
                          const FeatureExtractor<S>& fx) {
  check_mask(a, m, "perceptual_loss");
  return perceptual_from_features(fx.extract(scale_channels(a, m)),
                                  fx.extract(scale_channels(b, m)));
}

template <class S>
Tensor<S> style_loss(const Tensor<S>& a, const Tensor<S>& b, const Tensor<S>& m,
                     const FeatureExtractor<S>& fx) {
  check_mask(a, m, "style_loss");
  return style_from_features(fx.extract(scale_channels(a, m)),
                             fx.extract(scale_channels(b, m)));
}

template <class S>
Tensor<S> tv_loss(const Tensor<S>& f) {
  if (f.rank() != 4 || f.dim(2) < 2 || f.dim(3) < 2)
    throw std::runtime_error("tv_loss: need an NCHW tensor at least 2x2, got " +
                             shape_str(f.shape()));
  const int H = f.dim(2), W = f.dim(3);
  Tensor<S> dx = sub(crop(f, 0, 1, H, W - 1), crop(f, 0, 0, H, W - 1));
  Tensor<S> dy = sub(crop(f, 1, 0, H - 1, W), crop(f, 0, 0, H - 1, W));
  return add(mean(abs(dx)), mean(abs(dy)));
}

template <class S>
Tensor<S> cce_loss(const Tensor<S>& logits, const std::vector<VisibilityMap>& targets) {
  if (logits.rank() != 4 || logits.dim(1) != 3)
    throw std::runtime_error("cce_loss: expected [N,3,H,W] logits, got " +
                             shape_str(logits.shape()));
  const int N = logits.dim(0), H = logits.dim(2), W = logits.dim(3);
  if (int(targets.size()) != N)
    throw std::runtime_error("cce_loss: " + std::to_string(targets.size()) + " maps for batch " +
                             std::to_string(N));
  for (const auto& t : targets)
    if (t.height != H || t.width != W)
      throw std::runtime_error("cce_loss: target map resolution mismatch");

  const double inv = 1.0 / (double(N) * H * W);
  double acc = 0;
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const S l0 = logits.at(n, 0, y, x), l1 = logits.at(n, 1, y, x), l2 = logits.at(n, 2, y, x);
        const double m = std::max({double(l0), double(l1), double(l2)});
        const double lse =
            m + std::log(std::exp(double(l0) - m) + std::exp(double(l1) - m) +
                         std::exp(double(l2) - m));
        acc += lse - double(logits.at(n, targets[size_t(n)].at(y, x), y, x));
      }
  Tensor<S> out = Tensor<S>::scalar(S(acc * inv));

  if (detail::recording<S>({&logits})) {
    auto ld = logits.node();
    auto od = out.node();
    auto maps = targets;  // small copies keep the closure self-contained
    detail::record_op(out, [=]() {
      detail::ensure_grad(*ld);
      const S g = od->grad[0];
      const int64_t plane = int64_t(H) * W;
      for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            const int64_t base = (int64_t(n) * 3) * plane + y * W + x;
            const double l0 = double(ld->values[size_t(base)]);
            const double l1 = double(ld->values[size_t(base + plane)]);
            const double l2 = double(ld->values[size_t(base + 2 * plane)]);
            const double m = std::max({l0, l1, l2});
            const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m), e2 = std::exp(l2 - m);
            const double z = e0 + e1 + e2;
            const uint8_t t = maps[size_t(n)].at(y, x);
            ld->grad[size_t(base)] += g * S((e0 / z - (t == 0 ? 1.0 : 0.0)) * inv);
            ld->grad[size_t(base + plane)] += g * S((e1 / z - (t == 1 ? 1.0 : 0.0)) * inv);
            ld->grad[size_t(base + 2 * plane)] += g * S((e2 / z - (t == 2 ? 1.0 : 0.0)) * inv);
          }
    });
  }
  return out;
}

template <class S>
Tensor<S> lsgan_generator_loss(const Tensor<S>& d_fake) {
  return scale(mean(square(sub(d_fake, Tensor<S>::scalar(S(1))))), 0.5);
}

template <class S>
Tensor<S> lsgan_discriminator_loss(const Tensor<S>& d_real, const Tensor<S>& d_fake) {
  return add(scale(mean(square(sub(d_real, Tensor<S>::scalar(S(1))))), 0.5),
             scale(mean(square(d_fake)), 0.5));
}

template <class S>
Tensor<S> patchgan_generator_loss(const Tensor<S>& patch_fake) {
  return lsgan_generator_loss(patch_fake);
}

template <class S>
Tensor<S> patchgan_discriminator_loss(const Tensor<S>& patch_real, const Tensor<S>& patch_fake) {
  return lsgan_discriminator_loss(patch_real, patch_fake);
}

template <class S>
LossBreakdown<S> flow_warp_loss(const std::vector<Tensor<S>>& warped_v,
                                const std::vector<Tensor<S>>& warped_i, const Tensor<S>& target,
                                const std::vector<std::pair<Tensor<S>, Tensor<S>>>& masks,
                                const FlowPyramid<S>& flows_v, const FlowPyramid<S>& flows_i,
                                const Tensor<S>& vm_logits,
                                const std::vector<VisibilityMap>& vm_gt,
                                const FeatureExtractor<S>& fx, const LossWeights& w) {
  const size_t L = warped_v.size();
  if (warped_i.size() != L || masks.size() != L || flows_v.size() != L || flows_i.size() != L)
    throw std::runtime_error("flow_warp_loss: level counts disagree (" + std::to_string(L) + "/" +
                             std::to_string(warped_i.size()) + "/" + std::to_string(masks.size()) +
                             "/" + std::to_string(flows_v.size()) + "/" +
                             std::to_string(flows_i.size()) + ")");

  auto targets = image_pyramid(target, int(L));
  Tensor<S> zero = Tensor<S>::scalar(S(0));
  Tensor<S> vis_vgg = zero, vis_l1 = zero, vis_tv = zero;
  Tensor<S> invis_vgg = zero, invis_sty = zero, invis_tv = zero;

  for (size_t l = 0; l < L; ++l) {
    const auto& [m_v, m_i] = masks[l];
    if (w.beta1 > 0)
      vis_vgg = add(vis_vgg,
                    scale(perceptual_loss(warped_v[l], targets[l], m_v, fx), double(w.beta1)));
    if (w.beta2 > 0)
      vis_l1 = add(vis_l1, scale(masked_l1(warped_v[l], targets[l], m_v), double(w.beta2)));
    if (w.beta3 > 0) {
      vis_tv = add(vis_tv, scale(tv_loss(flows_v[l]), double(w.beta3)));
      invis_tv = add(invis_tv, scale(tv_loss(flows_i[l]), double(w.beta3)));
    }
    if (w.beta1 > 0 || w.beta4 > 0) {
      auto fa = fx.extract(scale_channels(warped_i[l], m_i));
      auto fb = fx.extract(scale_channels(targets[l], m_i));
      if (w.beta1 > 0)
        invis_vgg = add(invis_vgg, scale(perceptual_from_features(fa, fb), double(w.beta1)));
      if (w.beta4 > 0)
        invis_sty = add(invis_sty, scale(style_from_features(fa, fb), double(w.beta4)));
    }
  }
  Tensor<S> cce =
      w.lambda_cce > 0 ? scale(cce_loss(vm_logits, vm_gt), double(w.lambda_cce)) : zero;

  LossBreakdown<S> out;
  out.total = add(add(add(vis_vgg, vis_l1), add(vis_tv, invis_tv)),
                  add(add(invis_vgg, invis_sty), cce));
  out.terms = {{"vis_vgg", double(vis_vgg.item())},   {"vis_l1", double(vis_l1.item())},
               {"vis_tv", double(vis_tv.item())},     {"invis_vgg", double(invis_vgg.item())},
               {"invis_sty", double(invis_sty.item())}, {"invis_tv", double(invis_tv.item())},
               {"cce", double(cce.item())},           {"total", double(out.total.item())}};
  return out;
}

template <class S>
LossBreakdown<S> supervised_loss(const Tensor<S>& I_gen, const Tensor<S>& I_t,
                                 const Tensor<S>& K_t,
                                 const std::function<Tensor<S>(const Tensor<S>&)>& discriminator,
                                 const FeatureExtractor<S>& fx, const LossWeights& w) {
  if (!same_shape(I_gen.shape(), I_t.shape()))
    throw std::runtime_error("supervised_loss: generated " + shape_str(I_gen.shape()) +
                             " vs target " + shape_str(I_t.shape()));
  Tensor<S> ones = Tensor<S>::full({I_gen.dim(0), 1, I_gen.dim(2), I_gen.dim(3)}, S(1));
  Tensor<S> zero = Tensor<S>::scalar(S(0));

  Tensor<S> rec = w.alpha_rec > 0 ? scale(masked_l1(I_gen, I_t, ones), double(w.alpha_rec)) : zero;
  Tensor<S> per = zero, sty = zero;
  if (w.alpha_per > 0 || w.alpha_sty > 0) {
    auto fa = fx.extract(I_gen);
    auto fb = fx.extract(I_t);
    if (w.alpha_per > 0)
      per = scale(perceptual_from_features(fa, fb), double(w.alpha_per));
    if (w.alpha_sty > 0) sty = scale(style_from_features(fa, fb), double(w.alpha_sty));
  }
  Tensor<S> adv = zero;
  if (w.alpha_adv > 0) {
    Tensor<S> score = discriminator(concat_channel<S>({I_gen, K_t}));
    adv = scale(lsgan_generator_loss(score), double(w.alpha_adv));
  }

  LossBreakdown<S> out;
  out.total = add(add(rec, per), add(sty, adv));
  out.terms = {{"rec", double(rec.item())},
               {"per", double(per.item())},
               {"sty", double(sty.item())},
               {"adv", double(adv.item())},
               {"total", double(out.total.item())}};
  return out;
}

#define VGW_INSTANTIATE(S)                                                                       \
  template class FeatureExtractor<S>;                                                           \
  template Tensor<S> masked_l1(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);           \
  template Tensor<S> perceptual_from_features(const std::vector<Tensor<S>>&,                    \
                                              const std::vector<Tensor<S>>&);                   \
  template Tensor<S> style_from_features(const std::vector<Tensor<S>>&,                         \
                                         const std::vector<Tensor<S>>&);                        \
  template Tensor<S> perceptual_loss(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,      \
                                     const FeatureExtractor<S>&);                               \
  template Tensor<S> style_loss(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,           \
                                const FeatureExtractor<S>&);                                    \
  template Tensor<S> tv_loss(const Tensor<S>&);                                                 \
  template Tensor<S> cce_loss(const Tensor<S>&, const std::vector<VisibilityMap>&);             \
  template Tensor<S> lsgan_generator_loss(const Tensor<S>&);                                    \
  template Tensor<S> lsgan_discriminator_loss(const Tensor<S>&, const Tensor<S>&);              \
  template Tensor<S> patchgan_generator_loss(const Tensor<S>&);                                 \
  template Tensor<S> patchgan_discriminator_loss(const Tensor<S>&, const Tensor<S>&);           \
  template LossBreakdown<S> flow_warp_loss(                                                     \
      const std::vector<Tensor<S>>&, const std::vector<Tensor<S>>&, const Tensor<S>&,           \
      const std::vector<std::pair<Tensor<S>, Tensor<S>>>&, const FlowPyramid<S>&,               \
      const FlowPyramid<S>&, const Tensor<S>&, const std::vector<VisibilityMap>&,               \
      const FeatureExtractor<S>&, const LossWeights&);                                          \
  template LossBreakdown<S> supervised_loss(                                                    \
      const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,                                     \
      const std::function<Tensor<S>(const Tensor<S>&)>&, const FeatureExtractor<S>&,            \
      const LossWeights&);

VGW_INSTANTIATE(float)
VGW_INSTANTIATE(double)
#undef VGW_INSTANTIATE

}  // namespace vgw
