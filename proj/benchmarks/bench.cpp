#include <benchmark/benchmark.h>

#include <filesystem>

#include "vgw/losses.hpp"
#include "vgw/metrics.hpp"
#include "vgw/rng.hpp"
#include "vgw/training.hpp"
#include "vgw/warp.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

using namespace vgw;
using T = Tensor<float>;
namespace fs = std::filesystem;

T noise(Rng& rng, Shape shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<float> v(size_t(n), 0.0f);
  for (float& x : v) x = float(rng.uniform());
  return T::from(std::move(shape), std::move(v));
}

void BM_conv2d_forward(benchmark::State& state) {
  const int c = int(state.range(0));
  Rng rng(1);
  T x = noise(rng, {1, c, 64, 64});
  T w = noise(rng, {c, c, 3, 3});
  T b = noise(rng, {c});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * 64 * 64 * c);
}
BENCHMARK(BM_conv2d_forward)->Arg(16)->Arg(32)->Arg(64);

void BM_conv2d_train(benchmark::State& state) {
  const int c = int(state.range(0));
  Rng rng(2);
  T x = noise(rng, {1, c, 64, 64});
  T w = noise(rng, {c, c, 3, 3});
  T b = noise(rng, {c});
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  Tape<float> tape;
  for (auto _ : state) {
    Tape<float>::Scope scope(tape);
    T loss = mean(conv2d(x, w, b, 1, 1));
    tape.backward(loss);
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_conv2d_train)->Arg(16)->Arg(32);

void BM_warp_bilinear(benchmark::State& state) {
  const int s = int(state.range(0));
  Rng rng(3);
  T img = noise(rng, {1, 3, s, s});
  T flow = noise(rng, {1, 2, s, s});
  for (auto _ : state) benchmark::DoNotOptimize(warp_bilinear(img, flow));
  state.SetItemsProcessed(state.iterations() * s * s);
}
BENCHMARK(BM_warp_bilinear)->Arg(64)->Arg(128)->Arg(256);

void BM_convex_upsample(benchmark::State& state) {
  Rng rng(4);
  T flow = noise(rng, {1, 2, 32, 32});
  T logits = noise(rng, {1, 9, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(convex_upsample(flow, logits));
}
BENCHMARK(BM_convex_upsample);

void BM_ssim(benchmark::State& state) {
  const int s = int(state.range(0));
  Rng rng(5);
  T a = noise(rng, {1, 3, s, s});
  T b = noise(rng, {1, 3, s, s});
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_ssim)->Arg(64)->Arg(128);

void BM_flow_warp_loss(benchmark::State& state) {
  Rng rng(6);
  FeatureExtractor<float> fx(7);
  LossWeights w;
  T src = noise(rng, {1, 3, 64, 64});
  T tgt = noise(rng, {1, 3, 64, 64});
  FlowPyramid<float> fv, fi;
  for (int s = 16; s <= 64; s *= 2) {
    fv.push_back(noise(rng, {1, 2, s, s}));
    fi.push_back(noise(rng, {1, 2, s, s}));
  }
  auto [wv, wi] = build_warped_pyramids(src, fv, fi);
  VisibilityMap vm;
  vm.height = vm.width = 64;
  vm.classes.resize(64 * 64);
  for (auto& c : vm.classes) c = uint8_t(rng.uniform_int(0, 2));
  auto masks = downsample_vismap<float>(vm, 3);
  T logits = noise(rng, {1, 3, 64, 64});
  for (auto _ : state)
    benchmark::DoNotOptimize(flow_warp_loss(wv, wi, tgt, masks, fv, fi, logits, {vm}, fx, w));
}
BENCHMARK(BM_flow_warp_loss);

// One full optimizer step of the flow stage on a 32px corpus, the unit most
// runtime discussions care about.
void BM_flow_train_step(benchmark::State& state) {
  fs::path dir = fs::temp_directory_path() / "vgw_bench_corpus";
  if (!fs::exists(dir / "000003")) {
    fs::remove_all(dir);
    generate_corpus(dir.string(), 4, 42, 0.0, 32);
  }
  auto data = load_corpus(dir.string());
  TrainConfig cfg;
  cfg.stage = "flow";
  cfg.image_size = 32;
  cfg.pyramid_levels = 2;
  cfg.base_channels = int(state.range(0));
  cfg.batch_size = 1;
  cfg.steps = 1;
  auto m = build_models<float>(cfg.network());
  for (auto _ : state) {
    cfg.seed += 1;  // fresh schedule stream each step
    benchmark::DoNotOptimize(train_flow_stage(m, data, cfg, nullptr));
  }
}
BENCHMARK(BM_flow_train_step)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  openblas_set_num_threads(1);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  return 0;
}
