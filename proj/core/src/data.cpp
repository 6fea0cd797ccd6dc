#include "vgw/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "vgw/png_image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vgw {
namespace {

// Part ids in the UV map (0 = background).
enum PartId : uint8_t {
  kTorso = 1,
  kHead,
  kUpArmR,
  kForeR,
  kUpArmL,
  kForeL,
  kThighR,
  kShinR,
  kThighL,
  kShinL,
};

// Painter's order: legs, torso, head, then arms so arms occlude everything.
constexpr PartId kDrawOrder[kNumParts] = {kThighR, kShinR, kThighL, kShinL, kTorso,
                                          kHead,   kUpArmR, kForeR,  kUpArmL, kForeL};

// Texel grid per chart: u spans 16 columns (8 front + 8 back), v 8 rows.
// Texel centers are >= 1/32 apart, far above both the 16-bit PNG
// quantization step and the visibility matching tolerance.
constexpr int kTexAcross = 8, kTexAlong = 8;

constexpr uint8_t kGlyphRows[kTexAlong] = {0x3c, 0x42, 0xa5, 0x81, 0xa5, 0x99, 0x42, 0x3c};

struct Vec2 {
  float x = 0, y = 0;
};
Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(float s, Vec2 a) { return {s * a.x, s * a.y}; }
float dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

// Direction for angle phi: 0 points down (+y, image coords), pi points up.
Vec2 ang(float phi) { return {std::sin(phi), std::cos(phi)}; }
Vec2 perp(Vec2 d) { return {-d.y, d.x}; }

struct Quad {
  PartId part;
  Vec2 p0, dir;  // dir unit, along the limb
  float len = 0, w = 0;
};

struct Skeleton {
  std::array<Vec2, kNumJoints> pos;
  std::array<Quad, kNumParts> quads;  // indexed by part id - 1
};

constexpr float kPi = 3.14159265358979323846f;

Skeleton build_skeleton(const SpriteSpec& sp) {
  Skeleton sk;
  const float sc = sp.scale;
  // The figure's right side appears on screen-left when facing the camera.
  const float sideR = sp.back_facing ? -1.0f : 1.0f;

  const Vec2 pelvis{sp.cx, sp.cy};
  const float phiT = kPi + sp.lean;
  const Vec2 up = ang(phiT), across = perp(up);
  const Vec2 neck = pelvis + (sp.torso_len * sc) * up;

  const float phiH = phiT + sp.head_tilt;
  const Vec2 hd = ang(phiH), hx = perp(hd);
  sk.pos[0] = neck + (0.78f * sp.head_len * sc) * hd;  // nose
  sk.pos[1] = neck;
  sk.pos[14] = neck + (0.70f * sp.head_len * sc) * hd - (sideR * 0.20f * sp.head_w * sc) * hx;
  sk.pos[15] = neck + (0.70f * sp.head_len * sc) * hd + (sideR * 0.20f * sp.head_w * sc) * hx;
  sk.pos[16] = neck + (0.50f * sp.head_len * sc) * hd - (sideR * 0.46f * sp.head_w * sc) * hx;
  sk.pos[17] = neck + (0.50f * sp.head_len * sc) * hd + (sideR * 0.46f * sp.head_w * sc) * hx;

  for (int s = 0; s < 2; ++s) {  // s = 0 right, 1 left
    const float side = (s == 0) ? sideR : -sideR;
    const Vec2 sho = neck - (side * 0.5f * sp.shoulder_w * sc) * across;
    const float phiUa = phiT + kPi - side * sp.sho[s];
    const Vec2 elb = sho + (sp.arm_len * sc) * ang(phiUa);
    const Vec2 wri = elb + (sp.arm_len * sc) * ang(phiUa - side * sp.elb[s]);
    sk.pos[size_t(2 + 3 * s)] = sho;
    sk.pos[size_t(3 + 3 * s)] = elb;
    sk.pos[size_t(4 + 3 * s)] = wri;

    const Vec2 hip = pelvis - (side * 0.5f * sp.hip_w * sc) * across;
    const float phiTh = phiT + kPi - side * sp.hip[s];
    const Vec2 kne = hip + (sp.leg_len * sc) * ang(phiTh);
    const Vec2 ank = kne + (sp.leg_len * sc) * ang(phiTh + side * sp.knee[s]);
    sk.pos[size_t(8 + 3 * s)] = hip;
    sk.pos[size_t(9 + 3 * s)] = kne;
    sk.pos[size_t(10 + 3 * s)] = ank;
  }

  auto quad = [&](PartId id, Vec2 a, Vec2 b, float w) {
    Vec2 d = b - a;
    float len = std::sqrt(dot(d, d));
    sk.quads[size_t(id - 1)] = Quad{id, a, (1.0f / len) * d, len, w * sc};
  };
  quad(kTorso, pelvis, neck, sp.torso_w);
  quad(kHead, neck, neck + (sp.head_len * sc) * hd, sp.head_w);
  quad(kUpArmR, sk.pos[2], sk.pos[3], sp.arm_w);
  quad(kForeR, sk.pos[3], sk.pos[4], sp.arm_w);
  quad(kUpArmL, sk.pos[5], sk.pos[6], sp.arm_w);
  quad(kForeL, sk.pos[6], sk.pos[7], sp.arm_w);
  quad(kThighR, sk.pos[8], sk.pos[9], sp.leg_w);
  quad(kShinR, sk.pos[9], sk.pos[10], sp.leg_w);
  quad(kThighL, sk.pos[11], sk.pos[12], sp.leg_w);
  quad(kShinL, sk.pos[12], sk.pos[13], sp.leg_w);
  return sk;
}

// Owner parts per joint: a joint reads as unoccluded if any of these parts
// is what the renderer left on top near its pixel.
const std::array<std::vector<uint8_t>, kNumJoints>& joint_owners() {
  static const std::array<std::vector<uint8_t>, kNumJoints> owners = {{
      {kHead},            // nose
      {kTorso, kHead},    // neck
      {kTorso, kUpArmR},  // r_shoulder
      {kUpArmR, kForeR},  // r_elbow
      {kForeR},           // r_wrist
      {kTorso, kUpArmL},  // l_shoulder
      {kUpArmL, kForeL},  // l_elbow
      {kForeL},           // l_wrist
      {kTorso, kThighR},  // r_hip
      {kThighR, kShinR},  // r_knee
      {kShinR},           // r_ankle
      {kTorso, kThighL},  // l_hip
      {kThighL, kShinL},  // l_knee
      {kShinL},           // l_ankle
      {kHead},            // r_eye
      {kHead},            // l_eye
      {kHead},            // r_ear
      {kHead},            // l_ear
  }};
  return owners;
}

void draw_texture(Rng& rng, PartTexture& t) {
  t.kind = TexKind(rng.uniform_int(0, 3));
  for (;;) {
    for (int c = 0; c < 3; ++c) t.fg[size_t(c)] = float(rng.uniform(0.1, 0.95));
    for (int c = 0; c < 3; ++c) t.bg[size_t(c)] = float(rng.uniform(0.1, 0.95));
    float sep = 0;
    for (int c = 0; c < 3; ++c) sep = std::max(sep, std::abs(t.fg[size_t(c)] - t.bg[size_t(c)]));
    if (sep >= 0.25f) return;  // keep some contrast so structure is learnable
  }
}

void draw_pose(SpriteSpec& sp, Rng& rng, int size) {
  const float k = float(size) / 64.0f;
  sp.cx = float(size) * 0.5f + float(rng.uniform(-2.0, 2.0)) * k;
  sp.cy = float(size) * 0.585f + float(rng.uniform(-1.5, 1.5)) * k;
  sp.lean = float(rng.uniform(-0.30, 0.30));
  sp.head_tilt = float(rng.uniform(-0.40, 0.40));
  for (int s = 0; s < 2; ++s) {
    sp.sho[s] = float(rng.uniform(-0.25, 2.60));
    sp.elb[s] = float(rng.uniform(-2.10, 2.10));
    sp.hip[s] = float(rng.uniform(-0.45, 1.10));
    sp.knee[s] = float(rng.uniform(-0.15, 1.90));
  }
}

std::string two_dec(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return j;
}

Keypoints parse_kps(const json& j, const char* key) {
  if (!j.contains(key)) throw std::runtime_error(std::string("missing key \"") + key + "\"");
  const json& arr = j.at(key);
  if (!arr.is_array() || arr.size() != kNumJoints)
    throw std::runtime_error(std::string("\"") + key + "\" must list exactly " +
                             std::to_string(kNumJoints) + " joints, got " +
                             std::to_string(arr.size()));
  Keypoints k;
  for (size_t i = 0; i < kNumJoints; ++i) {
    const json& row = arr[i];
    if (!row.is_array() || row.size() != 3)
      throw std::runtime_error(std::string("\"") + key + "\"[" + std::to_string(i) +
                               "] must be [x, y, confidence]");
    for (size_t c = 0; c < 3; ++c) k[i][c] = row[c].get<double>();
  }
  return k;
}

}  // namespace

const std::array<const char*, kNumJoints>& joint_names() {
  static const std::array<const char*, kNumJoints> names = {
      "nose",    "neck",    "r_shoulder", "r_elbow", "r_wrist", "l_shoulder",
      "l_elbow", "l_wrist", "r_hip",      "r_knee",  "r_ankle", "l_hip",
      "l_knee",  "l_ankle", "r_eye",      "l_eye",   "r_ear",   "l_ear"};
  return names;
}

std::array<float, 3> sample_part_texture(const PartTexture& t, float u, float v) {
  const bool back = u >= 0.5f;
  const float uf = back ? (u - 0.5f) * 2.0f : u * 2.0f;
  const int ti = std::min(int(uf * kTexAcross), kTexAcross - 1);
  const int tj = std::min(int(v * kTexAlong), kTexAlong - 1);
  bool on = true;
  switch (t.kind) {
    case TexKind::Checker: on = ((ti + tj) & 1) != 0; break;
    case TexKind::Stripe: on = (tj & 1) != 0; break;
    case TexKind::Glyph: on = ((kGlyphRows[tj] >> ti) & 1) != 0; break;
    case TexKind::Solid: on = true; break;
  }
  if (back) on = !on;  // back surface swaps the palette
  return on ? t.fg : t.bg;
}

SpriteSpec t_pose_spec(int size) {
  SpriteSpec sp;
  const float k = float(size) / 64.0f;
  sp.cx = float(size) * 0.5f;
  sp.cy = float(size) * 0.585f;
  sp.scale = k;
  return sp;
}

SpriteSpec random_spec(Rng& rng, int size) {
  SpriteSpec sp;
  draw_pose(sp, rng, size);
  sp.back_facing = rng.bernoulli(0.35);
  sp.scale = float(rng.uniform(0.8, 1.1)) * float(size) / 64.0f;
  for (auto& t : sp.tex) draw_texture(rng, t);
  return sp;
}

void random_repose(SpriteSpec& sp, Rng& rng, int size) {
  // Pose, position, and facing are re-drawn; body and textures stay. The
  // flip probability keeps plenty of front/back pairs in a corpus, which is
  // where large invisible regions come from.
  draw_pose(sp, rng, size);
  if (rng.bernoulli(0.4)) sp.back_facing = !sp.back_facing;
}

SpriteRender render_sprite(const SpriteSpec& spec, int size) {
  if (spec.scale <= 0 || spec.torso_len <= 0 || spec.head_len <= 0 || spec.arm_len <= 0 ||
      spec.leg_len <= 0)
    throw std::runtime_error("render_sprite: lengths and scale must be positive");

  const Skeleton sk = build_skeleton(spec);
  for (int j = 0; j < kNumJoints; ++j) {
    const Vec2 p = sk.pos[size_t(j)];
    if (!(p.x >= 1.0f && p.x <= float(size) - 2.0f && p.y >= 1.0f && p.y <= float(size) - 2.0f))
      throw std::runtime_error(std::string("render_sprite: joint ") + joint_names()[size_t(j)] +
                               " at (" + two_dec(p.x) + ", " + two_dec(p.y) +
                               ") falls outside the " + std::to_string(size) + "px canvas");
  }

  SpriteRender out;
  out.image = Tensor<float>::full({1, 3, size, size}, 0.06f);
  out.uv.height = size;
  out.uv.width = size;
  out.uv.part.assign(size_t(size) * size_t(size), 0);
  out.uv.u.assign(size_t(size) * size_t(size), 0.0f);
  out.uv.v.assign(size_t(size) * size_t(size), 0.0f);

  for (PartId id : kDrawOrder) {
    const Quad& q = sk.quads[size_t(id - 1)];
    const Vec2 n = perp(q.dir);
    const Vec2 c0 = q.p0 - (0.5f * q.w) * n, c1 = q.p0 + (0.5f * q.w) * n;
    const Vec2 e0 = c0 + q.len * q.dir, e1 = c1 + q.len * q.dir;
    const int x0 = std::max(0, int(std::floor(std::min({c0.x, c1.x, e0.x, e1.x}))) - 1);
    const int x1 = std::min(size - 1, int(std::ceil(std::max({c0.x, c1.x, e0.x, e1.x}))) + 1);
    const int y0 = std::max(0, int(std::floor(std::min({c0.y, c1.y, e0.y, e1.y}))) - 1);
    const int y1 = std::min(size - 1, int(std::ceil(std::max({c0.y, c1.y, e0.y, e1.y}))) + 1);
    const bool back_chart = spec.back_facing && id != kHead;

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 rel = Vec2{float(x) + 0.5f, float(y) + 0.5f} - q.p0;
        const float s = dot(rel, q.dir) / q.len;
        const float t = dot(rel, n) / q.w + 0.5f;
        if (s < 0.0f || s >= 1.0f || t < 0.0f || t >= 1.0f) continue;
        const int ti = std::min(int(t * kTexAcross), kTexAcross - 1);
        const int tj = std::min(int(s * kTexAlong), kTexAlong - 1);
        float u = (float(ti) + 0.5f) / (2 * kTexAcross);
        if (back_chart) u += 0.5f;
        const float v = (float(tj) + 0.5f) / kTexAlong;
        const auto rgb = sample_part_texture(spec.tex[size_t(id - 1)], u, v);
        for (int c = 0; c < 3; ++c) out.image.at(0, c, y, x) = rgb[size_t(c)];
        const size_t i = out.uv.idx(y, x);
        out.uv.part[i] = id;
        out.uv.u[i] = u;
        out.uv.v[i] = v;
      }
    }
  }

  for (int j = 0; j < kNumJoints; ++j) {
    const Vec2 p = sk.pos[size_t(j)];
    out.kps[size_t(j)] = {double(p.x), double(p.y), 0.0};
    const int px = int(std::lround(p.x)), py = int(std::lround(p.y));
    const auto& owners = joint_owners()[size_t(j)];
    for (int dy = -1; dy <= 1 && out.kps[size_t(j)][2] == 0.0; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int qx = px + dx, qy = py + dy;
        if (qx < 0 || qy < 0 || qx >= size || qy >= size) continue;
        const uint8_t part = out.uv.part[out.uv.idx(qy, qx)];
        if (std::find(owners.begin(), owners.end(), part) != owners.end()) {
          out.kps[size_t(j)][2] = 1.0;
          break;
        }
      }
  }
  if (spec.back_facing)  // face landmarks are hidden from behind
    for (int j : {0, 14, 15}) out.kps[size_t(j)][2] = 0.0;
  return out;
}

ReposeSample make_sample(uint64_t seed, int64_t index, bool unpaired, int size) {
  Rng rng(Rng::mix(seed, uint64_t(index)));
  ReposeSample s;
  s.paired = !unpaired;
  s.seed = Rng::mix(seed, uint64_t(index));

  const SpriteSpec src = random_spec(rng, size);
  SpriteRender rs = render_sprite(src, size);

  if (unpaired) {
    SpriteSpec tgt = random_spec(rng, size);
    // Different body types, per the pairing protocol.
    while (std::abs(tgt.scale - src.scale) < 0.08f * float(size) / 64.0f)
      tgt.scale = float(rng.uniform(0.8, 1.1)) * float(size) / 64.0f;
    SpriteRender rt = render_sprite(tgt, size);
    s.I_t = rt.image;
    s.K_t = rt.kps;
    s.uv_t = rt.uv;
  } else {
    for (int attempt = 0;; ++attempt) {
      SpriteSpec tgt = src;
      random_repose(tgt, rng, size);
      SpriteRender rt = render_sprite(tgt, size);
      const VisibilityMap vm = compute_vismap_gt(rs.uv, rt.uv);
      const bool any_visible =
          std::find(vm.classes.begin(), vm.classes.end(), VisibilityMap::kVisible) !=
          vm.classes.end();
      if (any_visible) {
        s.I_t = rt.image;
        s.K_t = rt.kps;
        s.uv_t = rt.uv;
        break;
      }
      if (attempt >= 64)
        throw std::runtime_error("make_sample: no visible overlap after 64 re-poses (index " +
                                 std::to_string(index) + ")");
    }
  }
  s.I_s = rs.image;
  s.K_s = rs.kps;
  s.uv_s = rs.uv;
  return s;
}

void generate_corpus(const std::string& root, int n, uint64_t seed, double unpaired_fraction,
                     int size) {
  if (n < 1) throw std::runtime_error("generate_corpus: need n >= 1");
  if (unpaired_fraction < 0.0 || unpaired_fraction > 1.0)
    throw std::runtime_error("generate_corpus: unpaired_fraction must lie in [0,1]");
  fs::create_directories(root);

  // Exact count, spread evenly over indices (Bresenham-style).
  const int64_t k = std::llround(unpaired_fraction * n);
  for (int64_t i = 0; i < n; ++i) {
    const bool unpaired = ((i + 1) * k) / n != (i * k) / n;
    ReposeSample s = make_sample(seed, i, unpaired, size);
    char id[24];
    std::snprintf(id, sizeof id, "%06lld", (long long)i);
    s.sample_id = id;
    save_sample((fs::path(root) / id).string(), s);
  }
}

std::vector<std::string> list_sample_dirs(const std::string& root) {
  std::vector<std::string> dirs;
  if (!fs::is_directory(root))
    throw std::runtime_error("list_sample_dirs: not a directory: " + root);
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path().string());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

template <class S>
Tensor<S> rasterize_keypoints(const Keypoints& kps, int size, double sigma) {
  Tensor<S> out = Tensor<S>::zeros({1, kNumJoints, size, size});
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> gx, gy;
  gx.resize(size_t(size));
  gy.resize(size_t(size));
  for (int j = 0; j < kNumJoints; ++j) {
    if (!(kps[size_t(j)][2] > 0.0)) continue;
    const double xj = kps[size_t(j)][0], yj = kps[size_t(j)][1];
    for (int x = 0; x < size; ++x) gx[size_t(x)] = std::exp(-(x - xj) * (x - xj) * inv);
    for (int y = 0; y < size; ++y) gy[size_t(y)] = std::exp(-(y - yj) * (y - yj) * inv);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(0, j, y, x) = S(gx[size_t(x)] * gy[size_t(y)]);
  }
  return out;
}

template <class S>
Tensor<S> random_inpaint_mask(int size, Rng& rng) {
  std::vector<uint8_t> m;
  for (;;) {
    m.assign(size_t(size) * size_t(size), 0);
    const int rects = rng.uniform_int(1, 3);
    for (int r = 0; r < rects; ++r) {
      const int w = std::max(1, int(std::lround(rng.uniform(0.18, 0.55) * size)));
      const int h = std::max(1, int(std::lround(rng.uniform(0.18, 0.55) * size)));
      const int x0 = rng.uniform_int(0, size - w);
      const int y0 = rng.uniform_int(0, size - h);
      for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) m[size_t(y) * size_t(size) + size_t(x)] = 1;
    }
    const int64_t covered = std::count(m.begin(), m.end(), uint8_t(1));
    const double frac = double(covered) / (double(size) * size);
    if (frac >= 0.10 && frac <= 0.40) break;
  }
  Tensor<S> out = Tensor<S>::zeros({1, 1, size, size});
  for (int64_t i = 0; i < out.numel(); ++i) out.at(int(i)) = S(m[size_t(i)]);
  return out;
}

void save_sample(const std::string& dir, const ReposeSample& s) {
  fs::create_directories(dir);
  const fs::path d(dir);
  write_image8((d / "src.png").string(), to_image8(s.I_s));
  write_image8((d / "tgt.png").string(), to_image8(s.I_t));
  save_uvmap((d / "uv_src").string(), s.uv_s);
  save_uvmap((d / "uv_tgt").string(), s.uv_t);

  json kj;
  for (const auto& [field, kp] : {std::pair{"src", &s.K_s}, std::pair{"tgt", &s.K_t}}) {
    json arr = json::array();
    for (const auto& row : *kp) arr.push_back({row[0], row[1], row[2]});
    kj[field] = std::move(arr);
  }
  std::ofstream kf((d / "kps.json").string());
  if (!kf) throw std::runtime_error("save_sample: cannot write " + (d / "kps.json").string());
  kf << kj.dump(1) << "\n";

  json mj;
  mj["paired"] = s.paired;
  mj["seed"] = s.seed;
  std::ofstream mf((d / "meta.json").string());
  if (!mf) throw std::runtime_error("save_sample: cannot write " + (d / "meta.json").string());
  mf << mj.dump(1) << "\n";
}

ReposeSample load_sample(const std::string& dir) {
  const fs::path d(dir);
  ReposeSample s;
  s.sample_id = d.filename().string();

  auto guarded = [&](const char* field, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      throw std::runtime_error("load_sample: " + std::string(field) + ": " + e.what());
    }
  };

  s.I_s = guarded("I_s", [&] { return from_image8<float>(read_image8((d / "src.png").string())); });
  s.I_t = guarded("I_t", [&] { return from_image8<float>(read_image8((d / "tgt.png").string())); });
  s.uv_s = guarded("uv_s", [&] { return load_uvmap((d / "uv_src").string()); });
  s.uv_t = guarded("uv_t", [&] { return load_uvmap((d / "uv_tgt").string()); });
  if (s.uv_s.height != s.I_s.dim(2) || s.uv_s.width != s.I_s.dim(3))
    throw std::runtime_error("load_sample: uv_s: size " + std::to_string(s.uv_s.width) + "x" +
                             std::to_string(s.uv_s.height) + " does not match src.png");

  const json kj = guarded("kps.json", [&] { return read_json_file((d / "kps.json").string()); });
  s.K_s = guarded("K_s", [&] { return parse_kps(kj, "src"); });
  s.K_t = guarded("K_t", [&] { return parse_kps(kj, "tgt"); });

  const json mj = guarded("meta.json", [&] { return read_json_file((d / "meta.json").string()); });
  s.paired = guarded("paired", [&] {
    if (!mj.contains("paired") || !mj.at("paired").is_boolean())
      throw std::runtime_error("missing or non-boolean");
    return mj.at("paired").get<bool>();
  });
  s.seed = guarded("seed", [&] {
    if (!mj.contains("seed") || !mj.at("seed").is_number_unsigned())
      throw std::runtime_error("missing or non-unsigned");
    return mj.at("seed").get<uint64_t>();
  });
  return s;
}

template <class S>
Tensor<S> batch_concat(const std::vector<Tensor<S>>& items) {
  if (items.empty()) throw std::runtime_error("batch_concat: no tensors");
  const Shape& first = items[0].shape();
  int64_t n0 = 0;
  for (const auto& t : items) {
    if (t.rank() != int(first.size()))
      throw std::runtime_error("batch_concat: rank mismatch");
    for (int i = 1; i < t.rank(); ++i)
      if (t.dim(i) != first[size_t(i)])
        throw std::runtime_error("batch_concat: shape mismatch, " + shape_str(t.shape()) +
                                 " vs " + shape_str(first));
    n0 += t.dim(0);
  }
  Shape shape = first;
  shape[0] = int(n0);
  Tensor<S> out = Tensor<S>::zeros(shape);
  S* dst = out.data();
  for (const auto& t : items) {
    std::memcpy(dst, t.data(), size_t(t.numel()) * sizeof(S));
    dst += t.numel();
  }
  return out;
}

template Tensor<float> rasterize_keypoints<float>(const Keypoints&, int, double);
template Tensor<double> rasterize_keypoints<double>(const Keypoints&, int, double);
template Tensor<float> random_inpaint_mask<float>(int, Rng&);
template Tensor<double> random_inpaint_mask<double>(int, Rng&);
template Tensor<float> batch_concat<float>(const std::vector<Tensor<float>>&);
template Tensor<double> batch_concat<double>(const std::vector<Tensor<double>>&);

}  // namespace vgw
