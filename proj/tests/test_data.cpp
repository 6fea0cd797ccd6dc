#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vgw/data.hpp"
#include "vgw/rng.hpp"
#include "vgw/visibility.hpp"

using namespace vgw;
using T = Tensor<float>;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("t pose renders all joints confidently inside the canvas") {
  SpriteRender r = render_sprite(t_pose_spec(64), 64);
  CHECK(r.image.shape() == Shape{1, 3, 64, 64});
  for (int j = 0; j < kNumJoints; ++j) {
    INFO("joint ", std::string(joint_names()[size_t(j)]));
    CHECK(r.kps[size_t(j)][0] >= 0.0);
    CHECK(r.kps[size_t(j)][0] < 64.0);
    CHECK(r.kps[size_t(j)][1] >= 0.0);
    CHECK(r.kps[size_t(j)][1] < 64.0);
    CHECK(r.kps[size_t(j)][2] == 1.0);
  }
  // The body covers something and leaves background.
  int body = 0;
  for (uint8_t p : r.uv.part) body += p > 0;
  CHECK(body > 200);
  CHECK(body < 64 * 64);
}

TEST_CASE("rendering is deterministic") {
  Rng rng(91);
  SpriteSpec spec = random_spec(rng, 64);
  SpriteRender a = render_sprite(spec, 64);
  SpriteRender b = render_sprite(spec, 64);
  CHECK(a.image.values() == b.image.values());
  CHECK(a.uv.part == b.uv.part);
  CHECK(a.uv.u == b.uv.u);
  CHECK(a.uv.v == b.uv.v);
  CHECK(a.kps == b.kps);
}

TEST_CASE("pixels reproduce the part texture at their chart coordinates") {
  Rng rng(92);
  for (int trial = 0; trial < 3; ++trial) {
    SpriteSpec spec = random_spec(rng, 64);
    SpriteRender r = render_sprite(spec, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const size_t i = r.uv.idx(y, x);
        const uint8_t part = r.uv.part[i];
        if (part == 0) continue;
        const auto rgb = sample_part_texture(spec.tex[size_t(part - 1)], r.uv.u[i], r.uv.v[i]);
        for (int c = 0; c < 3; ++c)
          CHECK(r.image.at(0, c, y, x) == doctest::Approx(rgb[size_t(c)]).epsilon(1e-6));
      }
  }
}

TEST_CASE("back facing bodies use the back half of the charts") {
  SpriteSpec spec = t_pose_spec(64);
  spec.back_facing = true;
  SpriteRender r = render_sprite(spec, 64);
  int back_pixels = 0;
  for (size_t i = 0; i < r.uv.part.size(); ++i) {
    const uint8_t part = r.uv.part[i];
    if (part == 0 || part == 2) continue;  // skip background and head
    CHECK(r.uv.u[i] >= 0.5f);
    ++back_pixels;
  }
  CHECK(back_pixels > 100);
  // Face landmarks read as unseen from behind.
  CHECK(r.kps[0][2] == 0.0);   // nose
  CHECK(r.kps[14][2] == 0.0);  // r_eye
  CHECK(r.kps[15][2] == 0.0);  // l_eye
}

TEST_CASE("bodies leaving the canvas are rejected by joint name") {
  SpriteSpec spec = t_pose_spec(64);
  spec.cx = 1.0f;  // pelvis at the left edge pushes the right arm out
  CHECK_THROWS_WITH_AS(render_sprite(spec, 64), doctest::Contains("outside"),
                       std::runtime_error);
  try {
    render_sprite(spec, 64);
  } catch (const std::runtime_error& e) {
    bool named = false;
    for (const char* name : joint_names())
      if (std::string(e.what()).find(name) != std::string::npos) named = true;
    CHECK(named);
  }
}

TEST_CASE("keypoint rasterization") {
  Keypoints kps{};
  for (auto& k : kps) k = {0.0, 0.0, 0.0};
  kps[0] = {20.0, 24.0, 1.0};  // integer position, confident
  kps[1] = {40.0, 40.0, 0.0};  // zero confidence

  T hm = rasterize_keypoints<float>(kps, 64);
  CHECK(hm.shape() == Shape{1, kNumJoints, 64, 64});

  // Peak of exactly one at the joint pixel, falling off as a Gaussian.
  CHECK(hm.at(0, 0, 24, 20) == 1.0f);
  const double sig = 1.5;
  CHECK(hm.at(0, 0, 24, 21) == doctest::Approx(std::exp(-1.0 / (2 * sig * sig))).epsilon(1e-6));
  CHECK(hm.at(0, 0, 25, 21) == doctest::Approx(std::exp(-2.0 / (2 * sig * sig))).epsilon(1e-6));

  // Zero-confidence joints contribute nothing.
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) CHECK(hm.at(0, 1, y, x) == 0.0f);

  // Total mass of an interior Gaussian approaches 2 pi sigma^2.
  double mass = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) mass += hm.at(0, 0, y, x);
  CHECK(mass == doctest::Approx(2.0 * 3.14159265358979 * sig * sig).epsilon(1e-3));
}

TEST_CASE("inpaint masks are binary with bounded coverage") {
  Rng rng(93);
  for (int draw = 0; draw < 300; ++draw) {
    T m = random_inpaint_mask<float>(64, rng);
    CHECK(m.shape() == Shape{1, 1, 64, 64});
    double covered = 0;
    for (float v : m.values()) {
      CHECK((v == 0.0f || v == 1.0f));
      covered += v;
    }
    covered /= double(m.numel());
    CHECK(covered >= 0.10);
    CHECK(covered <= 0.40);
  }
  Rng r1(7), r2(7);
  CHECK(random_inpaint_mask<float>(64, r1).values() ==
        random_inpaint_mask<float>(64, r2).values());
}

TEST_CASE("samples are deterministic in seed and index") {
  ReposeSample a = make_sample(1001, 3, false, 64);
  ReposeSample b = make_sample(1001, 3, false, 64);
  CHECK(a.I_s.values() == b.I_s.values());
  CHECK(a.I_t.values() == b.I_t.values());
  CHECK(a.K_s == b.K_s);
  CHECK(a.uv_t.u == b.uv_t.u);

  ReposeSample c = make_sample(1002, 3, false, 64);
  CHECK(a.I_s.values() != c.I_s.values());
}

TEST_CASE("paired samples guarantee visible overlap") {
  for (int64_t idx = 0; idx < 4; ++idx) {
    ReposeSample s = make_sample(1003, idx, false, 64);
    CHECK(s.paired);
    VisibilityMap vm = compute_vismap_gt(s.uv_s, s.uv_t);
    int visible = 0;
    for (uint8_t c : vm.classes) visible += c == VisibilityMap::kVisible;
    CHECK(visible > 0);
  }
}

TEST_CASE("unpaired samples come from different bodies") {
  ReposeSample s = make_sample(1004, 0, true, 64);
  CHECK(!s.paired);
  CHECK(s.I_s.values() != s.I_t.values());
}

TEST_CASE("corpus generation is exact and reproducible") {
  fs::path a = fresh_dir("vgw_corpus_a");
  fs::path b = fresh_dir("vgw_corpus_b");
  generate_corpus(a.string(), 12, 77, 0.5, 32);
  generate_corpus(b.string(), 12, 77, 0.5, 32);

  auto dirs = list_sample_dirs(a.string());
  REQUIRE(dirs.size() == 12);
  CHECK(fs::path(dirs[0]).filename().string() == "000000");
  CHECK(fs::path(dirs[11]).filename().string() == "000011");
  CHECK(std::is_sorted(dirs.begin(), dirs.end()));

  int unpaired = 0;
  for (const auto& d : dirs) unpaired += !load_sample(d).paired;
  CHECK(unpaired == 6);

  // Byte-identical across runs with the same seed.
  for (const char* f : {"src.png", "tgt.png", "kps.json", "meta.json", "uv_src.u.png"}) {
    CHECK(slurp(a / "000003" / f) == slurp(b / "000003" / f));
  }

  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("sample save and load round trip") {
  fs::path dir = fresh_dir("vgw_sample_rt");
  ReposeSample s = make_sample(1005, 1, false, 64);
  s.sample_id = "rt";
  save_sample((dir / "rt").string(), s);
  ReposeSample back = load_sample((dir / "rt").string());

  CHECK(back.paired == s.paired);
  CHECK(back.seed == s.seed);
  CHECK(back.sample_id == "rt");
  CHECK(back.K_s == s.K_s);
  CHECK(back.K_t == s.K_t);
  CHECK(back.uv_s.part == s.uv_s.part);
  for (int i = 0; i < s.I_s.numel(); ++i) {
    CHECK(std::fabs(back.I_s.at(i) - s.I_s.at(i)) <= 0.5f / 255.0f + 1e-6f);
    CHECK(std::fabs(back.I_t.at(i) - s.I_t.at(i)) <= 0.5f / 255.0f + 1e-6f);
  }
  for (size_t i = 0; i < s.uv_s.u.size(); ++i) {
    CHECK(std::fabs(back.uv_s.u[i] - s.uv_s.u[i]) <= 0.5f / 65535.0f);
    CHECK(std::fabs(back.uv_s.v[i] - s.uv_s.v[i]) <= 0.5f / 65535.0f);
  }
  fs::remove_all(dir);
}

TEST_CASE("load failures name the field") {
  fs::path dir = fresh_dir("vgw_sample_err");
  ReposeSample s = make_sample(1006, 0, false, 32);
  save_sample((dir / "x").string(), s);

  fs::remove(dir / "x" / "uv_src.u.png");
  CHECK_THROWS_WITH_AS(load_sample((dir / "x").string()), doctest::Contains("uv_s"),
                       std::runtime_error);

  save_sample((dir / "y").string(), s);
  {
    std::ofstream bad(dir / "y" / "kps.json");
    bad << "{\"src\": [[1,2,3]], \"tgt\": []}\n";
  }
  CHECK_THROWS_WITH_AS(load_sample((dir / "y").string()), doctest::Contains("18"),
                       std::runtime_error);

  save_sample((dir / "z").string(), s);
  {
    std::ofstream bad(dir / "z" / "meta.json");
    bad << "{\"seed\": 5}\n";
  }
  CHECK_THROWS_WITH_AS(load_sample((dir / "z").string()), doctest::Contains("paired"),
                       std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("batch concatenation stacks along the sample axis") {
  T a = T::from({1, 2, 1, 2}, {1, 2, 3, 4});
  T b = T::from({1, 2, 1, 2}, {5, 6, 7, 8});
  T c = T::from({2, 2, 1, 2}, {9, 10, 11, 12, 13, 14, 15, 16});
  T out = batch_concat<float>({a, b, c});
  CHECK(out.shape() == Shape{4, 2, 1, 2});
  CHECK(out.at(0) == 1.0f);
  CHECK(out.at(4) == 5.0f);
  CHECK(out.at(8) == 9.0f);
  CHECK(out.at(15) == 16.0f);

  CHECK_THROWS_WITH_AS(batch_concat<float>({a, T::zeros({1, 2, 2, 2})}),
                       doctest::Contains("shape mismatch"), std::runtime_error);
  CHECK_THROWS_WITH_AS(batch_concat<float>({}), doctest::Contains("no tensors"),
                       std::runtime_error);
}

TEST_CASE("joint names cover the coco layout") {
  const auto& names = joint_names();
  CHECK(std::string(names[0]) == "nose");
  CHECK(std::string(names[1]) == "neck");
  CHECK(std::string(names[8]) == "r_hip");
  CHECK(std::string(names[17]) == "l_ear");
}

}  // TEST_SUITE
