#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vgw/rng.hpp"
#include "vgw/tensor.hpp"
#include "vgw/visibility.hpp"

namespace vgw {

constexpr int kNumJoints = 18;  // COCO order, see joint_names()
constexpr int kNumParts = 10;   // torso, head, 4 arm segments, 4 leg segments

/// COCO-18 names: nose, neck, r_shoulder, r_elbow, r_wrist, l_shoulder,
/// l_elbow, l_wrist, r_hip, r_knee, r_ankle, l_hip, l_knee, l_ankle, r_eye,
/// l_eye, r_ear, l_ear.
const std::array<const char*, kNumJoints>& joint_names();

enum class TexKind : uint8_t { Checker = 0, Stripe = 1, Glyph = 2, Solid = 3 };

struct PartTexture {
  TexKind kind = TexKind::Checker;
  std::array<float, 3> fg{0.85f, 0.25f, 0.2f};
  std::array<float, 3> bg{0.15f, 0.2f, 0.6f};
};

/// Articulated stick figure: a pelvis-rooted skeleton posed by joint angles,
/// fleshed out with textured quads. Lengths and widths are in pixels at
/// scale 1 (defaults sized for a 64px canvas; `scale` covers body size and
/// canvas resolution alike).
///
/// Articulation limits honored by the random samplers:
///   lean [-0.30, 0.30]   head_tilt [-0.40, 0.40]
///   sho  [-0.25, 2.60]   elb [-2.10, 2.10]   (0 = hanging, pi/2 = T-pose)
///   hip  [-0.45, 1.10]   knee [-0.15, 1.90]
struct SpriteSpec {
  float cx = 32.0f, cy = 37.5f;  // pelvis anchor
  float lean = 0.0f, head_tilt = 0.0f;
  float sho[2] = {1.5707963f, 1.5707963f};  // [0] = right, [1] = left
  float elb[2] = {0.0f, 0.0f};
  float hip[2] = {0.0f, 0.0f};
  float knee[2] = {0.0f, 0.0f};
  bool back_facing = false;

  float scale = 1.0f;
  float torso_len = 13.0f, torso_w = 10.0f;
  float head_len = 9.0f, head_w = 7.0f;
  float arm_len = 8.0f, arm_w = 3.0f;
  float leg_len = 9.0f, leg_w = 4.0f;
  float shoulder_w = 10.0f, hip_w = 8.0f;

  std::array<PartTexture, kNumParts> tex;
};

using Keypoints = std::array<std::array<double, 3>, kNumJoints>;  // x, y, confidence

/// Front-facing T-pose centered on a size x size canvas.
SpriteSpec t_pose_spec(int size);
/// Fresh spec: random pose, facing, body scale, and per-part textures.
SpriteSpec random_spec(Rng& rng, int size);
/// Redraws only the pose fields (keeps body and textures); may flip facing.
void random_repose(SpriteSpec& spec, Rng& rng, int size);

struct SpriteRender {
  Tensor<float> image;  // [1,3,S,S] in [0,1]
  UVMap uv;
  Keypoints kps;
};

/// Paints the body parts as textured oriented quads in a fixed painter's
/// order (legs, torso, head, then arms, so arms occlude the body). Each
/// covered pixel gets the exact chart coordinate of its texel center, so
/// sampling the texture at the emitted (u,v) reproduces the pixel and equal
/// chart points render identically across poses. Back-facing bodies shift u
/// into the chart's back half (except the head), which makes front and back
/// surfaces distinct for visibility purposes. Joints fully covered by a part
/// they don't belong to get confidence 0, as do face landmarks from behind.
SpriteRender render_sprite(const SpriteSpec& spec, int size);

/// The continuous texture the renderer samples: u in [0,0.5) is the front
/// surface, [0.5,1) the back (mirrored palette).
std::array<float, 3> sample_part_texture(const PartTexture& t, float u, float v);

struct ReposeSample {
  Tensor<float> I_s, I_t;  // [1,3,S,S]
  Keypoints K_s, K_t;
  UVMap uv_s, uv_t;
  bool paired = true;
  uint64_t seed = 0;
  std::string sample_id;
};

/// Deterministic sample from stream mix(seed, index). Paired samples share
/// one body reposed twice (with occasional front/back flips) and are
/// re-drawn until at least one target pixel is visible from the source;
/// unpaired samples use two independent bodies with clearly different
/// scales.
ReposeSample make_sample(uint64_t seed, int64_t index, bool unpaired, int size);

/// Writes n samples under root/<zero-padded index>/. The unpaired flag count
/// is exact: round(n * unpaired_fraction), spread evenly over the indices.
void generate_corpus(const std::string& root, int n, uint64_t seed, double unpaired_fraction,
                     int size = 64);

/// Sorted sample directories under a corpus root.
std::vector<std::string> list_sample_dirs(const std::string& root);

/// Heatmaps [1,J,S,S]: channel j = exp(-((x-x_j)^2+(y-y_j)^2)/(2 sigma^2))
/// evaluated at integer pixel coordinates; zero where confidence <= 0.
template <class S>
Tensor<S> rasterize_keypoints(const Keypoints& kps, int size, double sigma = 1.5);

/// Binary [1,1,S,S] union of 1-3 random rectangles covering 10-40% of the
/// canvas (re-drawn until the union lands in that range).
template <class S>
Tensor<S> random_inpaint_mask(int size, Rng& rng);

/// Layout: <dir>/{src.png, tgt.png, kps.json, uv_src.*.png, uv_tgt.*.png,
/// meta.json}. Round trip preserves keypoints and flags exactly and images
/// to 8-bit quantization. Load failures name the sample field involved.
void save_sample(const std::string& dir, const ReposeSample& s);
ReposeSample load_sample(const std::string& dir);

/// Concatenates equal-shaped tensors along dim 0 ([1,C,H,W] -> [N,C,H,W]).
/// Plain data movement, not recorded on the tape.
template <class S>
Tensor<S> batch_concat(const std::vector<Tensor<S>>& items);

}  // namespace vgw
