#include "vgw/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace vgw {
namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 1.0) * (0.01 * 1.0);
constexpr double kC2 = (0.03 * 1.0) * (0.03 * 1.0);

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> g{};
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    g[size_t(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += g[size_t(i)];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable valid-mode Gaussian filter of one H x W plane.
std::vector<double> filter_plane(const std::vector<double>& p, int h, int w) {
  const auto g = gaussian_window();
  const int wo = w - kWin + 1, ho = h - kWin + 1;
  std::vector<double> tmp(size_t(h) * size_t(wo));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[size_t(k)] * p[size_t(y) * w + x + k];
      tmp[size_t(y) * wo + x] = acc;
    }
  std::vector<double> out(size_t(ho) * size_t(wo));
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[size_t(k)] * tmp[size_t(y + k) * wo + x];
      out[size_t(y) * wo + x] = acc;
    }
  return out;
}

double mean_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  double sum = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) sum += std::abs(double(a.at(i)) - double(b.at(i)));
  return sum / double(a.numel());
}

// masked_l1 semantics on [1,3,S,S] images with a [1,1,S,S] mask.
double masked_mean_abs(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& m) {
  const int c = a.dim(1);
  const int64_t plane = a.numel() / c;
  double sum = 0.0, wsum = 0.0;
  for (int64_t i = 0; i < plane; ++i) wsum += double(m.at(i));
  for (int ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < plane; ++i)
      sum += std::abs(double(a.at(ch * plane + i)) - double(b.at(ch * plane + i))) *
             double(m.at(i));
  return sum / std::max(wsum * c, 1.0);
}

}  // namespace

template <class S>
double ssim(const Tensor<S>& a, const Tensor<S>& b) {
  if (!same_shape(a.shape(), b.shape()))
    throw std::runtime_error("ssim: shape mismatch: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  if (a.rank() != 4) throw std::runtime_error("ssim: expected [N,C,H,W], got " + shape_str(a.shape()));
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (h < kWin || w < kWin)
    throw std::runtime_error("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                             " is smaller than the 11x11 window");

  const int64_t plane = int64_t(h) * w;
  const size_t np = size_t(plane);
  std::vector<double> pa(np), pb(np), paa(np), pbb(np), pab(np);
  double total = 0.0;
  for (int img = 0; img < n * c; ++img) {
    const int64_t base = img * plane;
    for (int64_t i = 0; i < plane; ++i) {
      const double va = double(a.at(base + i)), vb = double(b.at(base + i));
      pa[size_t(i)] = va;
      pb[size_t(i)] = vb;
      paa[size_t(i)] = va * va;
      pbb[size_t(i)] = vb * vb;
      pab[size_t(i)] = va * vb;
    }
    const auto mu_a = filter_plane(pa, h, w), mu_b = filter_plane(pb, h, w);
    const auto e_aa = filter_plane(paa, h, w), e_bb = filter_plane(pbb, h, w);
    const auto e_ab = filter_plane(pab, h, w);
    double acc = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      acc += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
             ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
    total += acc / double(mu_a.size());
  }
  return total / double(n * c);
}

EvalReport evaluate(const Models<float>& m, const std::vector<ReposeSample>& split,
                    const TrainConfig& cfg) {
  if (split.empty()) throw std::runtime_error("evaluate: empty split");
  FeatureExtractor<float> fx(feature_extractor_seed());
  EvalReport rep;
  rep.mean.sample_id = "mean";
  for (const ReposeSample& s : split) {
    if (!s.paired)
      throw std::runtime_error("evaluate: sample " + s.sample_id +
                               " is unpaired; evaluation needs ground-truth targets");
    InferenceResult r = repose_inference(m, s.I_s, s.K_s, s.K_t, cfg);
    VisibilityMap vm = compute_vismap_gt(s.uv_s, s.uv_t, float(cfg.vis_eps));
    auto [m_v, m_i] = split_masks<float>(vm);

    EvalRow row;
    row.sample_id = s.sample_id;
    row.ssim = ssim(r.I_gen, s.I_t);
    row.l1 = mean_abs_diff(r.I_gen, s.I_t);
    row.l1_visible = masked_mean_abs(r.I_gen, s.I_t, m_v);
    row.gram_invisible = double(style_loss(r.I_gen, s.I_t, m_i, fx).item());
    row.ssim_baseline = ssim(s.I_s, s.I_t);
    row.l1_baseline = mean_abs_diff(s.I_s, s.I_t);
    row.l1_visible_baseline = masked_mean_abs(s.I_s, s.I_t, m_v);
    rep.rows.push_back(row);

    rep.mean.ssim += row.ssim;
    rep.mean.l1 += row.l1;
    rep.mean.l1_visible += row.l1_visible;
    rep.mean.gram_invisible += row.gram_invisible;
    rep.mean.ssim_baseline += row.ssim_baseline;
    rep.mean.l1_baseline += row.l1_baseline;
    rep.mean.l1_visible_baseline += row.l1_visible_baseline;
  }
  const double n = double(rep.rows.size());
  rep.mean.ssim /= n;
  rep.mean.l1 /= n;
  rep.mean.l1_visible /= n;
  rep.mean.gram_invisible /= n;
  rep.mean.ssim_baseline /= n;
  rep.mean.l1_baseline /= n;
  rep.mean.l1_visible_baseline /= n;
  return rep;
}

void write_eval_csv(std::ostream& os, const EvalReport& rep) {
  os << "sample_id,ssim,l1,l1_visible,gram_invisible,ssim_baseline,l1_baseline\n";
  char buf[64];
  for (const EvalRow& r : rep.rows) {
    os << r.sample_id;
    for (double v : {r.ssim, r.l1, r.l1_visible, r.gram_invisible, r.ssim_baseline,
                     r.l1_baseline}) {
      std::snprintf(buf, sizeof buf, "%.9g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
}

template double ssim(const Tensor<float>&, const Tensor<float>&);
template double ssim(const Tensor<double>&, const Tensor<double>&);

}  // namespace vgw
