#include "vgw/gradsuite.hpp"

#include <algorithm>
#include <cmath>

#include "vgw/losses.hpp"
#include "vgw/networks.hpp"
#include "vgw/rng.hpp"
#include "vgw/warp.hpp"

namespace vgw {
namespace {

using T = Tensor<double>;
using Fn = std::function<T(const std::vector<T>&)>;

T randt(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  T t = T::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

// Magnitudes in [margin, 1], random sign: keeps abs/relu kinks at distance.
T rand_away(const Shape& shape, Rng& rng, double margin) {
  T t = T::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i)
    t.at(i) = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(margin, 1.0);
  return t;
}

// b = a + sign * U(gap, 3*gap): |a - b| stays off the L1 kink.
T offset_from(const T& a, Rng& rng, double gap) {
  T t = T::zeros(a.shape());
  for (int64_t i = 0; i < t.numel(); ++i)
    t.at(i) = a.at(i) + (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(gap, 3.0 * gap);
  return t;
}

// Shuffled lattice: all values distinct with pairwise gaps >= 1/numel, so
// total-variation terms never sit within finite-difference reach of a kink.
T lattice(const Shape& shape, Rng& rng) {
  T t = T::zeros(shape);
  const int64_t n = t.numel();
  std::vector<int64_t> perm;
  perm.resize(size_t(n));
  for (int64_t i = 0; i < n; ++i) perm[size_t(i)] = i;
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(perm[size_t(i)], perm[size_t(rng.uniform_int(0, int(i)))]);
  for (int64_t i = 0; i < n; ++i) t.at(i) = (double(perm[size_t(i)]) + 0.5) / double(n);
  return t;
}

// Random body/background UV pair; roughly 60% of target body pixels reuse
// the source chart coordinates and read back as visible.
std::pair<UVMap, UVMap> random_uv_pair(int size, Rng& rng) {
  UVMap uv_s, uv_t;
  for (UVMap* uv : {&uv_s, &uv_t}) {
    uv->height = uv->width = size;
    uv->part.assign(size_t(size) * size_t(size), 0);
    uv->u.assign(size_t(size) * size_t(size), 0.f);
    uv->v.assign(size_t(size) * size_t(size), 0.f);
  }
  for (size_t i = 0; i < uv_s.part.size(); ++i) {
    if (rng.bernoulli(0.7)) {
      uv_s.part[i] = uint8_t(rng.uniform_int(1, 4));
      uv_s.u[i] = float(rng.uniform(0.0, 1.0));
      uv_s.v[i] = float(rng.uniform(0.0, 1.0));
    }
    if (rng.bernoulli(0.7)) {
      if (uv_s.part[i] != 0 && rng.bernoulli(0.6)) {
        uv_t.part[i] = uv_s.part[i];
        uv_t.u[i] = uv_s.u[i];
        uv_t.v[i] = uv_s.v[i];
      } else {
        uv_t.part[i] = uint8_t(rng.uniform_int(1, 4));
        uv_t.u[i] = float(rng.uniform(0.0, 1.0));
        uv_t.v[i] = float(rng.uniform(0.0, 1.0));
      }
    }
  }
  return {uv_s, uv_t};
}

// Sub-pixel displacements: fractional parts in [0.3, 0.7] on both axes.
T subpixel_flow(const Shape& shape, Rng& rng) {
  T t = T::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i)
    t.at(i) = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.3, 0.7);
  return t;
}

struct Suite {
  std::vector<GradSuiteRow> rows;
  uint64_t seed;
  uint64_t idx = 0;

  Rng next_rng() { return Rng(Rng::mix(seed, 1000 + idx)); }

  void run(const std::string& name, const Fn& f, const std::vector<T>& inputs,
           GradCheckOptions opt = {}) {
    ++idx;
    GradCheckResult r = gradient_check<double>(f, inputs, opt);
    rows.push_back({name, r.max_rel_err, r.describe(), r.ok(kGradSuiteTol)});
  }
};

}  // namespace

bool all_pass(const std::vector<GradSuiteRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const GradSuiteRow& r) { return r.pass; });
}

std::vector<GradSuiteRow> run_gradient_suite(uint64_t seed) {
  Suite s{{}, seed};

  // Elementwise and reduction primitives.
  {
    Rng rng = s.next_rng();
    T a = randt({2, 3}, rng), b = randt({2, 3}, rng);
    s.run("add", [](const std::vector<T>& in) { return sum(add(in[0], in[1])); }, {a, b});
    s.run("add_broadcast_scalar",
          [](const std::vector<T>& in) { return sum(add(in[0], in[1])); },
          {a, T::scalar(0.37)});
    s.run("sub", [](const std::vector<T>& in) { return sum(sub(in[0], in[1])); }, {a, b});
    s.run("mul", [](const std::vector<T>& in) { return sum(mul(in[0], in[1])); }, {a, b});
    s.run("scale", [](const std::vector<T>& in) { return sum(scale(in[0], 1.7)); }, {a});
    s.run("square", [](const std::vector<T>& in) { return sum(square(in[0])); }, {a});
    s.run("sum", [](const std::vector<T>& in) { return sum(in[0]); }, {a});
    s.run("mean", [](const std::vector<T>& in) { return mean(in[0]); }, {a});
  }
  {
    Rng rng = s.next_rng();
    T a = rand_away({2, 8}, rng, 0.2);
    s.run("abs", [](const std::vector<T>& in) { return sum(abs(in[0])); }, {a});
    s.run("relu", [](const std::vector<T>& in) { return sum(relu(in[0])); }, {a});
    s.run("leaky_relu", [](const std::vector<T>& in) { return sum(leaky_relu(in[0])); }, {a});
  }
  {
    Rng rng = s.next_rng();
    T a = randt({2, 6}, rng, -2.0, 2.0);
    s.run("sigmoid", [](const std::vector<T>& in) { return sum(sigmoid(in[0])); }, {a});
    s.run("tanh", [](const std::vector<T>& in) { return sum(vgw::tanh(in[0])); }, {a});
    s.run("softmax_channel",
          [](const std::vector<T>& in) { return sum(mul(in[1], softmax_channel(in[0]))); },
          {randt({1, 5, 2, 2}, rng), randt({1, 5, 2, 2}, rng)});
  }

  // Shape ops; a second factor keeps the reduction gradient non-uniform.
  {
    Rng rng = s.next_rng();
    T x = randt({1, 3, 4, 4}, rng), m = randt({1, 1, 4, 4}, rng);
    T w0 = randt({1, 3, 4, 4}, rng), w1 = randt({1, 2, 4, 4}, rng);
    s.run("scale_channels",
          [&](const std::vector<T>& in) { return sum(mul(w0, scale_channels(in[0], in[1]))); },
          {x, m});
    s.run("concat_channel",
          [&](const std::vector<T>& in) {
            return sum(mul(concat_channel<double>({in[0], in[1]}),
                           concat_channel<double>({w0, w1})));
          },
          {x, randt({1, 2, 4, 4}, rng)});
    s.run("slice_channel",
          [&](const std::vector<T>& in) { return sum(mul(w1, slice_channel(in[0], 1, 2))); },
          {x});
    s.run("crop",
          [](const std::vector<T>& in) { return sum(square(crop(in[0], 1, 0, 2, 3))); }, {x});
  }

  // Convolution and linear algebra.
  {
    Rng rng = s.next_rng();
    T x = randt({2, 3, 8, 8}, rng), w = randt({4, 3, 3, 3}, rng, -0.5, 0.5);
    T bias = randt({4}, rng);
    s.run("conv2d_3x3_s1",
          [](const std::vector<T>& in) {
            return sum(square(conv2d(in[0], in[1], in[2], 1, 1)));
          },
          {x, w, bias}, {1e-5, 48});
    T w2 = randt({4, 3, 4, 4}, rng, -0.5, 0.5);
    s.run("conv2d_4x4_s2",
          [](const std::vector<T>& in) {
            return sum(square(conv2d(in[0], in[1], in[2], 2, 1)));
          },
          {x, w2, bias}, {1e-5, 48});
    T w3 = randt({5, 3, 1, 1}, rng, -0.5, 0.5);
    s.run("conv2d_1x1",
          [](const std::vector<T>& in) {
            return sum(square(conv2d(in[0], in[1], in[2], 1, 0)));
          },
          {x, w3, randt({5}, rng)}, {1e-5, 48});
    T lx = randt({3, 6}, rng), lw = randt({4, 6}, rng), lb = randt({4}, rng);
    s.run("linear",
          [](const std::vector<T>& in) {
            return sum(square(linear(in[0], in[1], in[2])));
          },
          {lx, lw, lb});
    s.run("conv_relu_sum_composite",
          [](const std::vector<T>& in) {
            return sum(relu(conv2d(in[0], in[1], in[2], 1, 1)));
          },
          {rand_away({1, 2, 6, 6}, rng, 0.2), randt({3, 2, 3, 3}, rng, 0.1, 0.5),
           randt({3}, rng, 0.05, 0.2)},
          {1e-5, 48});
  }
  {
    Rng rng = s.next_rng();
    T x = randt({2, 3, 4, 4}, rng), w = randt({2, 3, 4, 4}, rng);
    s.run("normalize_instance",
          [&](const std::vector<T>& in) { return sum(mul(w, normalize_instance(in[0]))); },
          {x});
    s.run("gram_matrix",
          [](const std::vector<T>& in) { return sum(square(gram_matrix(in[0]))); }, {x});
  }

  // Resampling.
  {
    Rng rng = s.next_rng();
    T x = randt({1, 2, 4, 4}, rng);
    T w8 = randt({1, 2, 8, 8}, rng), w2 = randt({1, 2, 2, 2}, rng);
    s.run("upsample_nearest2x",
          [&](const std::vector<T>& in) { return sum(mul(w8, upsample_nearest2x(in[0]))); },
          {x});
    s.run("upsample_bilinear2x",
          [&](const std::vector<T>& in) { return sum(mul(w8, upsample_bilinear2x(in[0]))); },
          {x});
    s.run("downsample_avg2x",
          [&](const std::vector<T>& in) { return sum(mul(w2, downsample_avg2x(in[0]))); },
          {x});
    s.run("image_pyramid",
          [](const std::vector<T>& in) {
            T acc = T::scalar(0.0);
            for (const T& level : image_pyramid(in[0], 3)) acc = add(acc, sum(square(level)));
            return acc;
          },
          {randt({1, 3, 8, 8}, rng)});
  }

  // Warping.
  {
    Rng rng = s.next_rng();
    T img = randt({1, 3, 6, 6}, rng, 0.0, 1.0);
    T flow = subpixel_flow({1, 2, 6, 6}, rng);
    T w = randt({1, 3, 6, 6}, rng);
    s.run("warp_bilinear",
          [&](const std::vector<T>& in) { return sum(mul(w, warp_bilinear(in[0], in[1]))); },
          {img, flow}, {1e-5, 64});
    T cflow = subpixel_flow({1, 2, 4, 4}, rng);
    T logits = randt({1, 9, 8, 8}, rng);
    T w8 = randt({1, 2, 8, 8}, rng);
    s.run("convex_upsample",
          [&](const std::vector<T>& in) { return sum(mul(w8, convex_upsample(in[0], in[1]))); },
          {cflow, logits}, {1e-5, 64});
  }
  {
    Rng rng = s.next_rng();
    T f0 = subpixel_flow({1, 2, 4, 4}, rng);
    T f1 = subpixel_flow({1, 2, 8, 8}, rng);
    T f2 = subpixel_flow({1, 2, 16, 16}, rng);
    T gw0 = randt({1, 4, 3, 3}, rng, -0.3, 0.3), gb0 = randt({1}, rng, -0.2, 0.2);
    T gw1 = randt({1, 4, 3, 3}, rng, -0.3, 0.3), gb1 = randt({1}, rng, -0.2, 0.2);
    T w16 = randt({1, 2, 16, 16}, rng);
    s.run("gated_aggregate",
          [&](const std::vector<T>& in) {
            std::vector<GateParams<double>> gates{{in[3], in[4]}, {in[5], in[6]}};
            return sum(mul(w16, gated_aggregate<double>({in[0], in[1], in[2]}, gates)));
          },
          {f0, f1, f2, gw0, gb0, gw1, gb1}, {1e-5, 32});
  }

  // Losses. Images live in [0,1]; pairs are offset 0.1..0.3 off the L1 kink.
  {
    Rng rng = s.next_rng();
    T a = randt({1, 3, 8, 8}, rng, 0.2, 0.8);
    T b = offset_from(a, rng, 0.1);
    T m = randt({1, 1, 8, 8}, rng, 0.1, 1.0);
    s.run("masked_l1",
          [&m](const std::vector<T>& in) { return masked_l1(in[0], in[1], m); }, {a, b},
          {1e-5, 64});
    FeatureExtractor<double> fx(7);
    s.run("perceptual_loss",
          [&](const std::vector<T>& in) { return perceptual_loss(in[0], in[1], in[2], fx); },
          {a, b, m}, {1e-5, 48});
    s.run("style_loss",
          [&](const std::vector<T>& in) { return style_loss(in[0], in[1], in[2], fx); },
          {a, b, m}, {1e-5, 48});
    s.run("tv_loss", [](const std::vector<T>& in) { return tv_loss(in[0]); },
          {lattice({1, 2, 8, 8}, rng)}, {1e-5, 64});
  }
  {
    Rng rng = s.next_rng();
    auto [uv_s, uv_t] = random_uv_pair(8, rng);
    std::vector<VisibilityMap> vm{compute_vismap_gt(uv_s, uv_t, 0.02f)};
    s.run("cce_loss",
          [&](const std::vector<T>& in) { return cce_loss(in[0], vm); },
          {randt({1, 3, 8, 8}, rng, -1.5, 1.5)}, {1e-5, 64});
    T dr = randt({1, 1, 4, 4}, rng), df = randt({1, 1, 4, 4}, rng);
    s.run("lsgan_generator_loss",
          [](const std::vector<T>& in) { return lsgan_generator_loss(in[0]); }, {df});
    s.run("lsgan_discriminator_loss",
          [](const std::vector<T>& in) { return lsgan_discriminator_loss(in[0], in[1]); },
          {dr, df});
    s.run("patchgan_generator_loss",
          [](const std::vector<T>& in) { return patchgan_generator_loss(in[0]); }, {df});
    s.run("patchgan_discriminator_loss",
          [](const std::vector<T>& in) { return patchgan_discriminator_loss(in[0], in[1]); },
          {dr, df});
  }

  // Composite warping objective on a 2-level pyramid at 16 px.
  {
    Rng rng = s.next_rng();
    FeatureExtractor<double> fx(7);
    auto [uv_s, uv_t] = random_uv_pair(16, rng);
    std::vector<VisibilityMap> vm{compute_vismap_gt(uv_s, uv_t, 0.02f)};
    auto masks = downsample_vismap<double>(vm[0], 2);
    std::vector<std::pair<T, T>> mask_pyr(masks.begin(), masks.end());
    T src = randt({1, 3, 16, 16}, rng, 0.1, 0.9);
    T tgt = randt({1, 3, 16, 16}, rng, 0.1, 0.9);
    LossWeights w;
    s.run("flow_warp_loss",
          [&](const std::vector<T>& in) {
            FlowPyramid<double> pv{in[1], in[2]}, pi{in[3], in[4]};
            auto [wv, wi] = build_warped_pyramids(in[0], pv, pi);
            return flow_warp_loss(wv, wi, tgt, mask_pyr, pv, pi, in[5], vm, fx, w).total;
          },
          {src, subpixel_flow({1, 2, 8, 8}, rng), subpixel_flow({1, 2, 16, 16}, rng),
           subpixel_flow({1, 2, 8, 8}, rng), subpixel_flow({1, 2, 16, 16}, rng),
           randt({1, 3, 16, 16}, rng, -1.0, 1.0)},
          {1e-5, 16});

    T dw = randt({1, 5, 3, 3}, rng, -0.3, 0.3), db = randt({1}, rng);
    std::function<T(const T&)> dfn = [&](const T& stacked) {
      return conv2d(stacked, dw, db, 1, 1);
    };
    T gen = randt({1, 3, 16, 16}, rng, 0.2, 0.8);
    T sup_tgt = offset_from(gen, rng, 0.1);
    T kt = randt({1, 2, 16, 16}, rng, 0.0, 1.0);
    s.run("supervised_loss",
          [&](const std::vector<T>& in) {
            return supervised_loss(in[0], sup_tgt, kt, dfn, fx, w).total;
          },
          {gen}, {1e-5, 24});
  }

  // Network forwards at 32 px / 4 base channels: input gradients run the
  // entire backward chain. Zero-initialized heads get jiggled first so no
  // path is vacuously zero.
  {
    NetworkConfig nc;
    nc.image_size = 32;
    nc.pyramid_levels = 2;
    nc.base_channels = 4;
    nc.rng_seed = seed;
    Models<double> m = build_models<double>(nc);
    Rng rng = s.next_rng();
    for (auto& [name, p] : named_params(m)) {
      (void)name;
      Tensor<double> t(p);
      for (int64_t i = 0; i < t.numel(); ++i) t.at(i) += rng.uniform(-0.05, 0.05);
    }
    set_requires_grad(named_params(m), false);

    T I_s = randt({1, 3, 32, 32}, rng, 0.0, 1.0);
    T K_s = randt({1, 18, 32, 32}, rng, 0.0, 1.0);
    T K_t = randt({1, 18, 32, 32}, rng, 0.0, 1.0);
    s.run("flow_predictor_forward",
          [&](const std::vector<T>& in) {
            FlowVisOut<double> out = flowvis_forward(m.flow, in[0], in[1], in[2], nc);
            T acc = mean(square(out.raw.vm_logits));
            for (const T& f : out.pyr_v) acc = add(acc, mean(square(f)));
            for (const T& f : out.pyr_i) acc = add(acc, mean(square(f)));
            return acc;
          },
          {I_s, K_s, K_t}, {1e-5, 6});
    s.run("pose_encoder_forward",
          [&](const std::vector<T>& in) {
            return mean(square(pose_encoder_forward(m.pose, in[0], in[1])));
          },
          {K_s, K_t}, {1e-5, 8});
    T onehot = randt({1, 3, 32, 32}, rng, 0.0, 1.0);
    s.run("texture_encoder_forward",
          [&](const std::vector<T>& in) {
            T acc = T::scalar(0.0);
            for (const T& f : texture_encoder_forward(m.tex, in[0], in[1], in[2]))
              acc = add(acc, mean(square(f)));
            return acc;
          },
          {I_s, I_s, onehot}, {1e-5, 8});
    const int B = nc.base_channels;
    T e_p = randt({1, 4 * B, 8, 8}, rng);
    T f64 = randt({1, B, 32, 32}, rng);
    T s32 = randt({1, 2 * B, 16, 16}, rng);
    T s16 = randt({1, 4 * B, 8, 8}, rng);
    s.run("decoder_forward",
          [&](const std::vector<T>& in) {
            return mean(square(decoder_forward(m.dec, in[0], {in[1], in[2], in[3]})));
          },
          {e_p, f64, s32, s16}, {1e-5, 6});
    s.run("cond_discriminator_forward",
          [&](const std::vector<T>& in) {
            return mean(square(discriminator_forward(m.cond_d, in[0], in[1])));
          },
          {I_s, K_t}, {1e-5, 8});
    s.run("patch_discriminator_forward",
          [&](const std::vector<T>& in) {
            return mean(square(patch_discriminator_forward(m.patch_d, in[0])));
          },
          {I_s}, {1e-5, 12});
  }

  return s.rows;
}

}  // namespace vgw
