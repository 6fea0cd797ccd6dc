// Acceptance gate: one criterion per invocation, selected with --criterion N.
// Prints a single "criterion N <name>: PASS/FAIL (...)" line and exits 0/1.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "vgw/gradsuite.hpp"
#include "vgw/metrics.hpp"
#include "vgw/rng.hpp"
#include "vgw/training.hpp"
#include "vgw/warp.hpp"

using namespace vgw;
using T = Tensor<float>;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

T noise(Rng& rng, Shape shape, float lo = 0.0f, float hi = 1.0f) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<float> v(size_t(n), 0.0f);
  for (float& x : v) x = lo + float(rng.uniform()) * (hi - lo);
  return T::from(std::move(shape), std::move(v));
}

double mean_abs(const T& a, const T& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += std::fabs(double(a.at(i)) - double(b.at(i)));
  return s / double(a.numel());
}

double max_abs_diff(const T& a, const T& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::fabs(double(a.at(i)) - double(b.at(i))));
  return m;
}

UVMap random_uv(Rng& rng, int size, int max_part) {
  UVMap uv;
  uv.height = uv.width = size;
  uv.part.assign(size_t(size) * size, 0);
  uv.u.assign(size_t(size) * size, 0.0f);
  uv.v.assign(size_t(size) * size, 0.0f);
  for (size_t i = 0; i < uv.part.size(); ++i) {
    if (rng.bernoulli(0.35)) continue;
    uv.part[i] = uint8_t(rng.uniform_int(1, max_part));
    uv.u[i] = float(rng.uniform());
    uv.v[i] = float(rng.uniform());
  }
  return uv;
}

VisibilityMap brute_vismap(const UVMap& uv_s, const UVMap& uv_t, float eps) {
  VisibilityMap vm;
  vm.height = uv_t.height;
  vm.width = uv_t.width;
  vm.classes.assign(uv_t.part.size(), VisibilityMap::kBackground);
  for (size_t t = 0; t < uv_t.part.size(); ++t) {
    if (uv_t.part[t] == 0) continue;
    vm.classes[t] = VisibilityMap::kInvisible;
    for (size_t s = 0; s < uv_s.part.size(); ++s) {
      if (uv_s.part[s] != uv_t.part[t]) continue;
      if (std::fabs(uv_s.u[s] - uv_t.u[t]) <= eps && std::fabs(uv_s.v[s] - uv_t.v[t]) <= eps) {
        vm.classes[t] = VisibilityMap::kVisible;
        break;
      }
    }
  }
  return vm;
}

VisibilityMap random_vm(Rng& rng, int size) {
  VisibilityMap vm;
  vm.height = vm.width = size;
  vm.classes.resize(size_t(size) * size);
  for (auto& c : vm.classes) c = uint8_t(rng.uniform_int(0, 2));
  return vm;
}

// ---- criterion 1: finite-difference checks over every differentiable op ----

bool crit_gradient_suite(const fs::path&, std::string& detail) {
  const auto rows = run_gradient_suite(42);
  double worst = 0.0;
  int fails = 0;
  for (const auto& r : rows) {
    worst = std::max(worst, r.max_rel_err);
    if (!r.pass) {
      ++fails;
      std::cerr << "  " << r.name << ": " << r.detail << "\n";
    }
  }
  detail = std::to_string(rows.size()) + " ops, max rel err " + fmt(worst) + ", tol " +
           fmt(kGradSuiteTol);
  if (fails) detail += ", " + std::to_string(fails) + " failing";
  return all_pass(rows);
}

// ---- criterion 2: warp identities ----

bool crit_warp_identities(const fs::path&, std::string& detail) {
  Rng rng(1002);
  bool ok = true;
  std::ostringstream why;

  T img = noise(rng, {2, 3, 16, 16});
  if (warp_bilinear(img, T::zeros({2, 2, 16, 16})).values() != img.values()) {
    ok = false;
    why << " zero-flow not bit-exact;";
  }

  // Integer flow (+1, 0): every pixel reads its right neighbor, last column
  // reads the zero padding. Integer taps keep bilinear weights at {0,1}.
  T shift = concat_channel<float>({T::full({1, 1, 16, 16}, 1.0f), T::zeros({1, 1, 16, 16})});
  T one = noise(rng, {1, 3, 16, 16});
  T shifted = warp_bilinear(one, shift);
  double shift_err = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const float want = x + 1 < 16 ? one.at(0, c, y, x + 1) : 0.0f;
        shift_err = std::max(shift_err, std::fabs(double(shifted.at(0, c, y, x) - want)));
      }
  if (shift_err != 0.0) {
    ok = false;
    why << " integer shift err " << fmt(shift_err) << ";";
  }

  // Convex upsampling cannot leave [2*min, 2*max] of the coarse channel.
  T flow = noise(rng, {1, 2, 6, 6}, -3.0f, 3.0f);
  T up = convex_upsample(flow, noise(rng, {1, 9, 12, 12}, -2.0f, 2.0f));
  for (int c = 0; c < 2 && ok; ++c) {
    float lo = flow.at(c * 36), hi = lo;
    for (int i = 0; i < 36; ++i) {
      lo = std::min(lo, flow.at(c * 36 + i));
      hi = std::max(hi, flow.at(c * 36 + i));
    }
    for (int i = 0; i < 144; ++i) {
      const float v = up.at(c * 144 + i);
      if (v < 2 * lo - 1e-6f || v > 2 * hi + 1e-6f) {
        ok = false;
        why << " convexity violated: " << v << " outside [" << 2 * lo << "," << 2 * hi << "];";
        break;
      }
    }
  }

  // Saturated gates reduce the fusion chain to its endpoints.
  FlowPyramid<float> pyr = {noise(rng, {1, 2, 4, 4}, -2.0f, 2.0f),
                            noise(rng, {1, 2, 8, 8}, -2.0f, 2.0f),
                            noise(rng, {1, 2, 16, 16}, -2.0f, 2.0f)};
  auto const_gates = [](float bias) {
    std::vector<GateParams<float>> gs(2);
    for (auto& g : gs) {
      g.weight = T::zeros({1, 4, 3, 3});
      g.bias = T::full({1}, bias);
    }
    return gs;
  };
  const double open_err = max_abs_diff(gated_aggregate(pyr, const_gates(20.0f)), pyr.back());
  T coarse_up = scale(upsample_nearest2x(scale(upsample_nearest2x(pyr[0]), 2.0f)), 2.0f);
  const double closed_err = max_abs_diff(gated_aggregate(pyr, const_gates(-20.0f)), coarse_up);
  if (open_err > 1e-6) {
    ok = false;
    why << " open gate err " << fmt(open_err) << ";";
  }
  if (closed_err > 1e-6) {
    ok = false;
    why << " closed gate err " << fmt(closed_err) << ";";
  }

  detail = ok ? "zero-flow exact, integer shift exact, convexity bound holds, gate limits " +
                    fmt(std::max(open_err, closed_err))
              : why.str();
  return ok;
}

// ---- criterion 3: visibility matcher vs brute force ----

bool crit_visibility_oracle(const fs::path&, std::string& detail) {
  Rng rng(1003);
  int mismatches = 0, monotonicity_breaks = 0;
  const std::vector<float> eps_ladder = {0.01f, 0.02f, 0.05f};
  for (int trial = 0; trial < 200; ++trial) {
    UVMap uv_s = random_uv(rng, 16, 8), uv_t = random_uv(rng, 16, 8);
    std::vector<VisibilityMap> maps;
    for (float eps : eps_ladder) {
      VisibilityMap fast = compute_vismap_gt(uv_s, uv_t, eps);
      if (fast.classes != brute_vismap(uv_s, uv_t, eps).classes) ++mismatches;
      maps.push_back(std::move(fast));
    }
    for (size_t e = 1; e < maps.size(); ++e)
      for (size_t i = 0; i < maps[e].classes.size(); ++i) {
        // Growing eps can only turn invisible into visible.
        const uint8_t prev = maps[e - 1].classes[i], cur = maps[e].classes[i];
        if (prev == VisibilityMap::kVisible && cur != VisibilityMap::kVisible)
          ++monotonicity_breaks;
        if ((prev == VisibilityMap::kBackground) != (cur == VisibilityMap::kBackground))
          ++monotonicity_breaks;
      }
  }
  detail = "200 pairs x 3 eps, " + std::to_string(mismatches) + " mismatches, " +
           std::to_string(monotonicity_breaks) + " inclusion breaks";
  return mismatches == 0 && monotonicity_breaks == 0;
}

// ---- criterion 4: loss decompositions and perfect-input zeros ----

bool crit_loss_decomposition(const fs::path&, std::string& detail) {
  Rng rng(1004);
  FeatureExtractor<float> fx(7);
  LossWeights w;
  bool ok = true;
  std::ostringstream why;

  auto check = [&](bool cond, const char* what, double got) {
    if (!cond) {
      ok = false;
      why << " " << what << " " << fmt(got) << ";";
    }
  };

  // Warping objective on a random scene.
  const int size = 32;
  T src = noise(rng, {1, 3, size, size});
  T tgt = noise(rng, {1, 3, size, size});
  FlowPyramid<float> fv = {noise(rng, {1, 2, 16, 16}, -2.0f, 2.0f),
                           noise(rng, {1, 2, 32, 32}, -2.0f, 2.0f)};
  FlowPyramid<float> fi = {noise(rng, {1, 2, 16, 16}, -2.0f, 2.0f),
                           noise(rng, {1, 2, 32, 32}, -2.0f, 2.0f)};
  auto [wv, wi] = build_warped_pyramids(src, fv, fi);
  VisibilityMap vm = random_vm(rng, size);
  auto masks = downsample_vismap<float>(vm, 2);
  T logits = noise(rng, {1, 3, size, size}, -1.0f, 1.0f);
  auto br = flow_warp_loss(wv, wi, tgt, masks, fv, fi, logits, {vm}, fx, w);
  double sum = 0.0, total = 0.0;
  for (const auto& [name, value] : br.terms) {
    if (name == "total") total = value;
    else sum += value;
    check(value >= 0.0, "negative warp term", value);
  }
  check(std::fabs(total - sum) <= 1e-6 * std::max(1.0, std::fabs(total)),
        "warp total != sum of terms", total - sum);
  check(std::fabs(double(br.total.item()) - total) <= 1e-6, "warp total tensor mismatch",
        br.total.item() - total);

  // Perfect inputs: identical images, zero flows, confident correct logits.
  FlowPyramid<float> zv = {T::zeros({1, 2, 16, 16}), T::zeros({1, 2, 32, 32})};
  auto [pv, pi] = build_warped_pyramids(tgt, zv, zv);
  T sharp = scale(vismap_one_hot<float>(vm), 40.0f);
  auto perfect = flow_warp_loss(pv, pi, tgt, masks, zv, zv, sharp, {vm}, fx, w);
  for (const auto& [name, value] : perfect.terms)
    check(value <= 1e-6, "warp term nonzero at perfect input", value);

  // Supervised objective: decomposition on a random generation.
  T gen = noise(rng, {1, 3, size, size});
  T kt = noise(rng, {1, 18, size, size});
  std::function<T(const T&)> critic = [](const T& x) { return mean(x); };
  auto sup = supervised_loss(gen, tgt, kt, critic, fx, w);
  sum = total = 0.0;
  for (const auto& [name, value] : sup.terms) {
    if (name == "total") total = value;
    else sum += value;
  }
  check(std::fabs(total - sum) <= 1e-6 * std::max(1.0, std::fabs(total)),
        "supervised total != sum of terms", total - sum);

  LossWeights no_adv = w;
  no_adv.alpha_adv = 0.0f;
  std::function<T(const T&)> no_call = [](const T&) -> T {
    throw std::runtime_error("critic called with alpha_adv = 0");
  };
  auto zero = supervised_loss(tgt, tgt, kt, no_call, fx, no_adv);
  check(zero.total.item() == 0.0f, "supervised loss at identical images", zero.total.item());

  // Adversarial pieces at their optima.
  check(lsgan_generator_loss(T::full({1, 1, 4, 4}, 1.0f)).item() == 0.0f, "lsgan gen optimum",
        0.0);
  check(lsgan_discriminator_loss(T::full({1, 1, 4, 4}, 1.0f), T::zeros({1, 1, 4, 4})).item() ==
            0.0f,
        "lsgan disc optimum", 0.0);

  // Uniform 3-class logits cost exactly ln 3 per pixel.
  const double uniform = double(cce_loss(T::zeros({1, 3, 8, 8}), {random_vm(rng, 8)}).item());
  check(std::fabs(uniform - std::log(3.0)) <= 1e-6, "uniform cce vs ln3",
        uniform - std::log(3.0));

  check(masked_l1(tgt, tgt, T::full({1, 1, size, size}, 1.0f)).item() == 0.0f,
        "masked_l1 identical", 0.0);

  detail = ok ? "warp and supervised totals match their parts, perfect inputs are zero, "
                "uniform cce = ln3"
              : why.str();
  return ok;
}

// ---- criterion 5: single-pair overfit probes ----

bool crit_overfit_probes(const fs::path& workdir, std::string& detail) {
  fs::path dir = workdir / "c5_pair";
  fs::remove_all(dir);
  generate_corpus(dir.string(), 1, 501, 0.0, 64);
  auto data = load_corpus(dir.string());

  TrainConfig cfg;
  cfg.image_size = 64;
  cfg.pyramid_levels = 3;
  cfg.base_channels = 16;
  cfg.batch_size = 1;
  cfg.seed = 50;

  auto m = build_models<float>(cfg.network());
  cfg.stage = "flow";
  cfg.steps = 500;
  train_flow_stage(m, data, cfg, nullptr);

  const ReposeSample& s = data[0];
  VisibilityMap vm = compute_vismap_gt(s.uv_s, s.uv_t, float(cfg.vis_eps));
  auto [m_v, m_i] = split_masks<float>(vm);
  InferenceResult r1 = repose_inference(m, s.I_s, s.K_s, s.K_t, cfg);
  const double vis_l1 = double(masked_l1(r1.I_v, s.I_t, m_v).item());

  size_t agree = 0;
  for (size_t i = 0; i < vm.classes.size(); ++i) agree += r1.vm.classes[i] == vm.classes[i];
  const double vm_acc = double(agree) / double(vm.classes.size());

  cfg.stage = "generator";
  cfg.steps = 1000;
  train_generator_stage(m, data, cfg, nullptr);
  InferenceResult r2 = repose_inference(m, s.I_s, s.K_s, s.K_t, cfg);
  const double full_l1 = mean_abs(r2.I_gen, s.I_t);

  detail = "flow visible l1 " + fmt(vis_l1) + " (<0.02), generator l1 " + fmt(full_l1) +
           " (<0.05), vismap acc " + fmt(vm_acc) + " (>=0.99)";
  return vis_l1 < 0.02 && full_l1 < 0.05 && vm_acc >= 0.99;
}

// ---- criterion 6: desk-scale convergence against the identity baseline ----

bool crit_desk_convergence(const fs::path& workdir, std::string& detail) {
  fs::path train_dir = workdir / "c6_train", held_dir = workdir / "c6_held";
  if (!fs::exists(train_dir / "001023")) {
    fs::remove_all(train_dir);
    generate_corpus(train_dir.string(), 1024, 601, 0.5, 64);
  }
  if (!fs::exists(held_dir / "000063")) {
    fs::remove_all(held_dir);
    generate_corpus(held_dir.string(), 64, 602, 0.0, 64);
  }
  auto train = load_corpus(train_dir.string());
  auto held = load_corpus(held_dir.string());

  TrainConfig cfg;
  cfg.image_size = 64;
  cfg.pyramid_levels = 3;
  cfg.base_channels = 12;
  cfg.batch_size = 1;
  cfg.seed = 60;

  auto m = build_models<float>(cfg.network());
  cfg.stage = "flow";
  cfg.steps = 5000;
  train_flow_stage(m, train, cfg, nullptr);
  cfg.stage = "generator";
  cfg.steps = 5000;
  train_generator_stage(m, train, cfg, nullptr);
  cfg.stage = "finetune";
  cfg.steps = 2000;
  finetune_stage(m, train, cfg, nullptr);

  EvalReport rep = evaluate(m, held, cfg);
  const double ssim_gain = rep.mean.ssim - rep.mean.ssim_baseline;
  const double l1_ratio = rep.mean.l1_visible / rep.mean.l1_visible_baseline;
  detail = "64 held-out pairs: ssim " + fmt(rep.mean.ssim) + " vs baseline " +
           fmt(rep.mean.ssim_baseline) + " (gain " + fmt(ssim_gain) +
           ", need >=0.05), visible l1 ratio " + fmt(l1_ratio) + " (need <=0.5)";
  return ssim_gain >= 0.05 && l1_ratio <= 0.5;
}

// ---- criterion 7: stochastic schedule frequencies ----

bool crit_schedule_statistics(const fs::path& workdir, std::string& detail) {
  fs::path dir = workdir / "c7_corpus";
  if (!fs::exists(dir / "000007")) {
    fs::remove_all(dir);
    generate_corpus(dir.string(), 8, 701, 0.5, 32);
  }
  auto data = load_corpus(dir.string());

  TrainConfig cfg;
  cfg.image_size = 32;
  cfg.pyramid_levels = 2;
  cfg.base_channels = 4;
  cfg.batch_size = 1;
  cfg.seed = 70;

  auto in_bounds = [](long long hits, long long draws, double p) {
    const double mu = double(draws) * p;
    const double sigma = std::sqrt(double(draws) * p * (1 - p));
    return std::fabs(double(hits) - mu) <= 3.0 * sigma;
  };

  cfg.stage = "flow";
  cfg.steps = 5000;
  auto mf = build_models<float>(cfg.network());
  StageReport flow = train_flow_stage(mf, data, cfg, nullptr);

  cfg.stage = "generator";
  auto mg = build_models<float>(cfg.network());
  StageReport gen = train_generator_stage(mg, data, cfg, nullptr);

  cfg.stage = "finetune";
  cfg.steps = 1250;
  cfg.batch_size = 4;
  auto mt = build_models<float>(cfg.network());
  StageReport ft = finetune_stage(mt, data, cfg, nullptr);
  const long long slots = 1250LL * 4;

  const bool tf_ok = in_bounds(flow.teacher_forced, 5000, 0.5);
  const bool ip_ok = in_bounds(gen.inpainted, 5000, 0.2);
  const bool up_ok = in_bounds(ft.unpaired_seen, slots, 0.5) &&
                     ft.paired_seen + ft.unpaired_seen == slots;
  detail = "teacher " + std::to_string(flow.teacher_forced) + "/5000 (p=0.5), inpaint " +
           std::to_string(gen.inpainted) + "/5000 (p=0.2), unpaired " +
           std::to_string(ft.unpaired_seen) + "/" + std::to_string(slots) +
           " (p=0.5), 3-sigma bounds";
  return tf_ok && ip_ok && up_ok;
}

// ---- criterion 8: ablation switches change the trajectory ----

bool crit_ablation_switches(const fs::path& workdir, std::string& detail) {
  fs::path dir = workdir / "c8_corpus";
  if (!fs::exists(dir / "000007")) {
    fs::remove_all(dir);
    generate_corpus(dir.string(), 8, 801, 0.5, 32);
  }
  auto data = load_corpus(dir.string());

  TrainConfig base;
  base.stage = "finetune";
  base.image_size = 32;
  base.pyramid_levels = 2;
  base.base_channels = 4;
  base.batch_size = 2;
  base.steps = 200;
  base.seed = 80;

  std::vector<std::pair<std::string, TrainConfig>> variants;
  {
    TrainConfig c = base;
    c.use_vismap = false;
    c.use_invisible_warp = false;
    variants.emplace_back("no_vismap_no_invis", c);
  }
  {
    TrainConfig c = base;
    c.use_invisible_warp = false;
    variants.emplace_back("no_invis", c);
  }
  {
    TrainConfig c = base;
    c.use_source_keypoints = false;
    variants.emplace_back("no_source_kps", c);
  }
  {
    TrainConfig c = base;
    c.use_self_supervised = false;
    variants.emplace_back("no_self_sup", c);
  }

  std::vector<std::string> csvs;
  for (auto& [name, c] : variants) {
    auto m = build_models<float>(c.network());
    std::ostringstream csv;
    StageReport rep = finetune_stage(m, data, c, &csv);
    if (rep.steps_run != 200) {
      detail = name + " ran " + std::to_string(rep.steps_run) + " of 200 steps";
      return false;
    }
    if (!std::isfinite(rep.final_loss)) {
      detail = name + " ended non-finite";
      return false;
    }
    csvs.push_back(csv.str());
  }
  int identical = 0;
  for (size_t i = 0; i < csvs.size(); ++i)
    for (size_t j = i + 1; j < csvs.size(); ++j) identical += csvs[i] == csvs[j];
  detail = "4 switch configs x 200 steps, " + std::to_string(identical) +
           " identical trajectory pairs";
  return identical == 0;
}

// ---- criterion 9: ssim against a direct window-statistics reference ----

double ssim_reference(const Tensor<double>& a, const Tensor<double>& b) {
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  const int win = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  std::vector<double> g(win);
  double s = 0.0;
  for (int i = 0; i < win; ++i) {
    const double d = i - (win - 1) / 2.0;
    g[size_t(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    s += g[size_t(i)];
  }
  for (double& v : g) v /= s;
  double total = 0.0;
  const int64_t plane = int64_t(h) * w;
  for (int img = 0; img < n * c; ++img) {
    double acc = 0.0;
    int windows = 0;
    for (int y = 0; y + win <= h; ++y)
      for (int x = 0; x + win <= w; ++x) {
        double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double wt = g[size_t(i)] * g[size_t(j)];
            const double va = a.at(img * plane + (y + i) * w + (x + j));
            const double vb = b.at(img * plane + (y + i) * w + (x + j));
            ma += wt * va;
            mb += wt * vb;
            aa += wt * va * va;
            bb += wt * vb * vb;
            ab += wt * va * vb;
          }
        acc += ((2 * ma * mb + c1) * (2 * (ab - ma * mb) + c2)) /
               ((ma * ma + mb * mb + c1) * ((aa - ma * ma) + (bb - mb * mb) + c2));
        ++windows;
      }
    total += acc / windows;
  }
  return total / (n * c);
}

bool crit_ssim_reference(const fs::path&, std::string& detail) {
  Rng rng(1009);
  auto draw = [&](int64_t n) {
    std::vector<double> v(size_t(n), 0.0);
    for (double& x : v) x = rng.uniform();
    return v;
  };
  Tensor<double> a = Tensor<double>::from({1, 3, 20, 24}, draw(3 * 20 * 24));
  Tensor<double> b = Tensor<double>::from({1, 3, 20, 24}, draw(3 * 20 * 24));
  const double ref_err = std::fabs(ssim(a, b) - ssim_reference(a, b));
  const bool self = ssim(a, a) == 1.0;
  const double sym_err = std::fabs(ssim(a, b) - ssim(b, a));
  detail = "vs direct reference " + fmt(ref_err) + " (<=1e-6), self " +
           (self ? std::string("exactly 1") : std::string("NOT 1")) + ", symmetry " +
           fmt(sym_err) + " (<=1e-9)";
  return ref_err <= 1e-6 && self && sym_err <= 1e-9;
}

// ---- criterion 10: bit-identical reruns ----

bool crit_reproducibility(const fs::path& workdir, std::string& detail) {
  fs::path dir = workdir / "c10_corpus";
  if (!fs::exists(dir / "000005")) {
    fs::remove_all(dir);
    generate_corpus(dir.string(), 6, 1001, 0.5, 32);
  }
  auto data = load_corpus(dir.string());

  TrainConfig cfg;
  cfg.stage = "flow";
  cfg.image_size = 32;
  cfg.pyramid_levels = 2;
  cfg.base_channels = 4;
  cfg.batch_size = 2;
  cfg.steps = 100;
  cfg.seed = 100;

  std::ostringstream csv_a, csv_b;
  auto ma = build_models<float>(cfg.network());
  train_flow_stage(ma, data, cfg, &csv_a);
  auto mb = build_models<float>(cfg.network());
  train_flow_stage(mb, data, cfg, &csv_b);

  const bool csv_same = csv_a.str() == csv_b.str() && !csv_a.str().empty();

  const ReposeSample& s = data[0];
  InferenceResult r1 = repose_inference(ma, s.I_s, s.K_s, s.K_t, cfg);
  InferenceResult r2 = repose_inference(ma, s.I_s, s.K_s, s.K_t, cfg);
  InferenceResult rb = repose_inference(mb, s.I_s, s.K_s, s.K_t, cfg);
  const bool infer_same = r1.I_gen.values() == r2.I_gen.values() &&
                          r1.I_gen.values() == rb.I_gen.values() &&
                          r1.flow_v.values() == rb.flow_v.values() &&
                          r1.vm.classes == rb.vm.classes;

  detail = std::string("100-step csv ") + (csv_same ? "identical" : "DIFFERS") +
           ", inference outputs " + (infer_same ? "identical" : "DIFFER");
  return csv_same && infer_same;
}

struct Criterion {
  const char* name;
  bool (*fn)(const fs::path&, std::string&);
};

const Criterion kCriteria[] = {
    {"gradient-suite", crit_gradient_suite},
    {"warp-identities", crit_warp_identities},
    {"visibility-oracle", crit_visibility_oracle},
    {"loss-decomposition", crit_loss_decomposition},
    {"overfit-probes", crit_overfit_probes},
    {"desk-convergence", crit_desk_convergence},
    {"schedule-statistics", crit_schedule_statistics},
    {"ablation-switches", crit_ablation_switches},
    {"ssim-reference", crit_ssim_reference},
    {"reproducibility", crit_reproducibility},
};

}  // namespace

int main(int argc, char** argv) {
  int criterion = 0;
  fs::path workdir = fs::temp_directory_path() / "vgw_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) criterion = std::atoi(argv[++i]);
    else if (a == "--workdir" && i + 1 < argc) workdir = argv[++i];
    else {
      std::cerr << "usage: " << argv[0] << " --criterion N [--workdir DIR]\n";
      return 2;
    }
  }
  if (criterion < 1 || criterion > 10) {
    std::cerr << "error: --criterion must be 1..10\n";
    return 2;
  }
  fs::create_directories(workdir);

  const Criterion& c = kCriteria[criterion - 1];
  std::string detail;
  bool pass = false;
  try {
    pass = c.fn(workdir, detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  std::cout << "criterion " << criterion << " " << c.name << ": " << (pass ? "PASS" : "FAIL")
            << " (" << detail << ")\n";
  return pass ? 0 : 1;
}
