#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "vgw/rng.hpp"
#include "vgw/warp.hpp"

using namespace vgw;
using T = Tensor<float>;

namespace {

T random_image(Rng& rng, int n, int c, int h, int w) {
  T t = T::zeros({n, c, h, w});
  for (auto& v : t.values()) v = float(rng.uniform());
  return t;
}

T random_flow(Rng& rng, int n, int h, int w, double mag) {
  T t = T::zeros({n, 2, h, w});
  for (auto& v : t.values()) v = float(rng.uniform(-mag, mag));
  return t;
}

// Scalar reference for one bilinear tap with zero padding.
float ref_sample(const T& img, int n, int c, double y, double x) {
  const int H = img.dim(2), W = img.dim(3);
  const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto px = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
    return img.at(n, c, yy, xx);
  };
  return float((1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
               fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1)));
}

GateParams<float> const_gate(float bias) {
  return GateParams<float>{T::zeros({1, 4, 3, 3}), T::full({1}, bias)};
}

}  // namespace

TEST_SUITE("warp") {

TEST_CASE("zero flow reproduces the image bit for bit") {
  Rng rng(11);
  T img = random_image(rng, 2, 3, 8, 8);
  T flow = T::zeros({2, 2, 8, 8});
  T out = warp_bilinear(img, flow);
  CHECK(out.shape() == img.shape());
  for (int i = 0; i < img.numel(); ++i) CHECK(out.at(i) == img.at(i));
}

TEST_CASE("integer flow shifts content and fades the border") {
  // flow = (+1, 0): each output pixel reads one pixel to its right.
  T img = T::zeros({1, 1, 1, 4});
  for (int x = 0; x < 4; ++x) img.at(0, 0, 0, x) = float(10 + x);
  T flow = T::zeros({1, 2, 1, 4});
  for (int x = 0; x < 4; ++x) flow.at(0, 0, 0, x) = 1.0f;
  T out = warp_bilinear(img, flow);
  CHECK(out.at(0, 0, 0, 0) == 11.0f);
  CHECK(out.at(0, 0, 0, 1) == 12.0f);
  CHECK(out.at(0, 0, 0, 2) == 13.0f);
  CHECK(out.at(0, 0, 0, 3) == 0.0f);  // reads past the edge
}

TEST_CASE("fractional flow matches the scalar bilinear reference") {
  Rng rng(12);
  T img = random_image(rng, 1, 3, 6, 7);
  T flow = random_flow(rng, 1, 6, 7, 2.5);
  T out = warp_bilinear(img, flow);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 7; ++x) {
        const double sx = x + flow.at(0, 0, y, x);
        const double sy = y + flow.at(0, 1, y, x);
        CHECK(out.at(0, c, y, x) == doctest::Approx(ref_sample(img, 0, c, sy, sx)).epsilon(1e-6));
      }
}

TEST_CASE("warp is linear in the image") {
  Rng rng(13);
  T a = random_image(rng, 1, 2, 5, 5);
  T b = random_image(rng, 1, 2, 5, 5);
  T flow = random_flow(rng, 1, 5, 5, 1.5);
  T ab = T::zeros({1, 2, 5, 5});
  for (int i = 0; i < ab.numel(); ++i) ab.at(i) = a.at(i) + b.at(i);
  T w_ab = warp_bilinear(ab, flow);
  T w_a = warp_bilinear(a, flow);
  T w_b = warp_bilinear(b, flow);
  for (int i = 0; i < ab.numel(); ++i)
    CHECK(w_ab.at(i) == doctest::Approx(w_a.at(i) + w_b.at(i)).epsilon(1e-6));
}

TEST_CASE("warp rejects mismatched resolutions") {
  T img = T::zeros({1, 3, 8, 8});
  T flow = T::zeros({1, 2, 4, 4});
  CHECK_THROWS_WITH_AS(warp_bilinear(img, flow), doctest::Contains("disagree"),
                       std::runtime_error);
  T flow3 = T::zeros({1, 3, 8, 8});
  CHECK_THROWS_WITH_AS(warp_bilinear(img, flow3), doctest::Contains("[N,2,H,W]"),
                       std::runtime_error);
}

TEST_CASE("gated fusion saturates to the expected limits") {
  Rng rng(14);
  FlowPyramid<float> pyr = {random_flow(rng, 1, 4, 4, 1.0), random_flow(rng, 1, 8, 8, 1.0),
                            random_flow(rng, 1, 16, 16, 1.0)};

  // Gate wide open everywhere: the finest level passes through.
  T open = gated_aggregate<float>(pyr, {const_gate(20.0f), const_gate(20.0f)});
  for (int i = 0; i < pyr[2].numel(); ++i)
    CHECK(open.at(i) == doctest::Approx(pyr[2].at(i)).epsilon(1e-6));

  // Gate closed everywhere: the coarsest level is upsampled through the
  // chain, doubling displacements at each step.
  T closed = gated_aggregate<float>(pyr, {const_gate(-20.0f), const_gate(-20.0f)});
  T expect = scale(upsample_nearest2x(scale(upsample_nearest2x(pyr[0]), 2.0)), 2.0);
  for (int i = 0; i < expect.numel(); ++i)
    CHECK(closed.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-5));
}

TEST_CASE("zero gate parameters blend evenly") {
  Rng rng(15);
  FlowPyramid<float> pyr = {random_flow(rng, 1, 4, 4, 1.0), random_flow(rng, 1, 8, 8, 1.0)};
  T out = gated_aggregate<float>(pyr, {const_gate(0.0f)});
  T up = scale(upsample_nearest2x(pyr[0]), 2.0);
  for (int i = 0; i < out.numel(); ++i)
    CHECK(out.at(i) == doctest::Approx(0.5f * pyr[1].at(i) + 0.5f * up.at(i)).epsilon(1e-6));
}

TEST_CASE("single level pyramid passes through unchanged") {
  Rng rng(16);
  FlowPyramid<float> pyr = {random_flow(rng, 1, 8, 8, 1.0)};
  T out = gated_aggregate<float>(pyr, {});
  for (int i = 0; i < out.numel(); ++i) CHECK(out.at(i) == pyr[0].at(i));
}

TEST_CASE("gated fusion checks the gate count") {
  Rng rng(17);
  FlowPyramid<float> pyr = {random_flow(rng, 1, 4, 4, 1.0), random_flow(rng, 1, 8, 8, 1.0)};
  CHECK_THROWS_WITH_AS(gated_aggregate<float>(pyr, {}), doctest::Contains("gates"),
                       std::runtime_error);
}

TEST_CASE("convex upsample doubles a constant flow") {
  T flow = T::zeros({1, 2, 4, 4});
  for (int i = 0; i < 16; ++i) flow.at(i) = 0.75f;            // x channel
  for (int i = 16; i < 32; ++i) flow.at(i) = -1.25f;          // y channel
  Rng rng(18);
  T logits = T::zeros({1, 9, 8, 8});
  for (auto& v : logits.values()) v = float(rng.uniform(-2.0, 2.0));
  T out = convex_upsample(flow, logits);
  CHECK(out.shape() == Shape{1, 2, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      CHECK(out.at(0, 0, y, x) == doctest::Approx(1.5).epsilon(1e-6));
      CHECK(out.at(0, 1, y, x) == doctest::Approx(-2.5).epsilon(1e-6));
    }
}

TEST_CASE("uniform logits average the in-bounds neighborhood") {
  Rng rng(19);
  T flow = random_flow(rng, 1, 4, 4, 2.0);
  T logits = T::zeros({1, 9, 8, 8});
  T out = convex_upsample(flow, logits);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const int py = y / 2, px = x / 2;
        double acc = 0.0;
        int cnt = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = py + dy, xx = px + dx;
            if (yy < 0 || yy >= 4 || xx < 0 || xx >= 4) continue;
            acc += flow.at(0, c, yy, xx);
            ++cnt;
          }
        CHECK(out.at(0, c, y, x) == doctest::Approx(2.0 * acc / cnt).epsilon(1e-5));
      }
}

TEST_CASE("convex upsample stays inside twice the coarse range") {
  Rng rng(20);
  T flow = random_flow(rng, 2, 4, 4, 3.0);
  T logits = T::zeros({2, 9, 8, 8});
  for (auto& v : logits.values()) v = float(rng.uniform(-4.0, 4.0));
  T out = convex_upsample(flow, logits);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c) {
      float lo = 1e30f, hi = -1e30f;
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          lo = std::min(lo, flow.at(n, c, y, x));
          hi = std::max(hi, flow.at(n, c, y, x));
        }
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          CHECK(out.at(n, c, y, x) >= 2 * lo - 1e-4f);
          CHECK(out.at(n, c, y, x) <= 2 * hi + 1e-4f);
        }
    }
}

TEST_CASE("convex upsample validates logits shape") {
  T flow = T::zeros({1, 2, 4, 4});
  T bad = T::zeros({1, 9, 4, 4});
  CHECK_THROWS_WITH_AS(convex_upsample(flow, bad), doctest::Contains("logits"),
                       std::runtime_error);
}

TEST_CASE("image pyramid sizes and averaging") {
  Rng rng(21);
  T img = random_image(rng, 1, 3, 16, 16);
  auto pyr = image_pyramid(img, 3);
  REQUIRE(pyr.size() == 3);
  CHECK(pyr[0].shape() == Shape{1, 3, 4, 4});
  CHECK(pyr[1].shape() == Shape{1, 3, 8, 8});
  CHECK(pyr[2].shape() == Shape{1, 3, 16, 16});
  for (int i = 0; i < img.numel(); ++i) CHECK(pyr[2].at(i) == img.at(i));

  T half = downsample_avg2x(img);
  for (int i = 0; i < half.numel(); ++i) CHECK(pyr[1].at(i) == doctest::Approx(half.at(i)));
  T quarter = downsample_avg2x(half);
  for (int i = 0; i < quarter.numel(); ++i) CHECK(pyr[0].at(i) == doctest::Approx(quarter.at(i)));
}

TEST_CASE("warped pyramids with zero flows equal the image pyramid") {
  Rng rng(22);
  T img = random_image(rng, 1, 3, 16, 16);
  FlowPyramid<float> zv = {T::zeros({1, 2, 4, 4}), T::zeros({1, 2, 8, 8}),
                           T::zeros({1, 2, 16, 16})};
  auto [wv, wi] = build_warped_pyramids(img, zv, zv);
  auto pyr = image_pyramid(img, 3);
  REQUIRE(wv.size() == 3);
  REQUIRE(wi.size() == 3);
  for (int l = 0; l < 3; ++l)
    for (int i = 0; i < pyr[l].numel(); ++i) {
      CHECK(wv[l].at(i) == pyr[l].at(i));
      CHECK(wi[l].at(i) == pyr[l].at(i));
    }
}

TEST_CASE("warped pyramids warp each scale independently") {
  Rng rng(23);
  T img = random_image(rng, 1, 3, 16, 16);
  FlowPyramid<float> fv = {random_flow(rng, 1, 4, 4, 1.0), random_flow(rng, 1, 8, 8, 1.0),
                           random_flow(rng, 1, 16, 16, 1.0)};
  FlowPyramid<float> fi = {random_flow(rng, 1, 4, 4, 1.0), random_flow(rng, 1, 8, 8, 1.0),
                           random_flow(rng, 1, 16, 16, 1.0)};
  auto [wv, wi] = build_warped_pyramids(img, fv, fi);
  auto pyr = image_pyramid(img, 3);
  for (int l = 0; l < 3; ++l) {
    T ev = warp_bilinear(pyr[size_t(l)], fv[size_t(l)]);
    T ei = warp_bilinear(pyr[size_t(l)], fi[size_t(l)]);
    for (int i = 0; i < ev.numel(); ++i) {
      CHECK(wv[size_t(l)].at(i) == doctest::Approx(ev.at(i)).epsilon(1e-6));
      CHECK(wi[size_t(l)].at(i) == doctest::Approx(ei.at(i)).epsilon(1e-6));
    }
  }
}

TEST_CASE("warped pyramids validate the finest level against the source") {
  T img = T::zeros({1, 3, 16, 16});
  FlowPyramid<float> bad = {T::zeros({1, 2, 4, 4}), T::zeros({1, 2, 8, 8})};
  CHECK_THROWS_WITH_AS(build_warped_pyramids(img, bad, bad),
                       doctest::Contains("does not match source"), std::runtime_error);
}

TEST_CASE("flow rendering is deterministic with sane dimensions") {
  Rng rng(24);
  T flow = random_flow(rng, 1, 8, 8, 3.0);
  Image8 a = flow_to_image(flow);
  Image8 b = flow_to_image(flow);
  CHECK(a.width == 8);
  CHECK(a.height == 8);
  CHECK(a.channels == 3);
  CHECK(a.pixels == b.pixels);

  // Zero flow renders black (magnitude 0 everywhere).
  Image8 z = flow_to_image(T::zeros({1, 2, 4, 4}));
  for (uint8_t p : z.pixels) CHECK(p == 0);
}

}  // TEST_SUITE
