#include "vgw/visibility.hpp"

#include <cmath>
#include <unordered_map>

namespace vgw {
namespace {

void check_uvmap(const UVMap& uv, const char* name) {
  const size_t n = size_t(uv.height) * size_t(uv.width);
  if (uv.height <= 0 || uv.width <= 0 || uv.part.size() != n || uv.u.size() != n ||
      uv.v.size() != n)
    throw std::runtime_error(std::string(name) + ": inconsistent UV map buffers");
  for (size_t i = 0; i < n; ++i)
    if (uv.part[i] > 0 && (uv.u[i] < 0.f || uv.u[i] > 1.f || uv.v[i] < 0.f || uv.v[i] > 1.f))
      throw std::runtime_error(std::string(name) + ": uv outside [0,1] on a body pixel");
}

// part | u-bucket | v-bucket packed into one key; buckets of side eps over
// [0,1] stay far below the 20-bit fields.
uint64_t bucket_key(uint8_t part, int64_t fu, int64_t fv) {
  return (uint64_t(part) << 40) | (uint64_t(fu) << 20) | uint64_t(fv);
}

}  // namespace

VisibilityMap compute_vismap_gt(const UVMap& uv_s, const UVMap& uv_t, float eps) {
  check_uvmap(uv_s, "compute_vismap_gt(uv_s)");
  check_uvmap(uv_t, "compute_vismap_gt(uv_t)");
  if (uv_s.height != uv_t.height || uv_s.width != uv_t.width)
    throw std::runtime_error("compute_vismap_gt: source " + std::to_string(uv_s.width) + "x" +
                             std::to_string(uv_s.height) + " vs target " +
                             std::to_string(uv_t.width) + "x" + std::to_string(uv_t.height));
  if (!(eps > 0.f)) throw std::runtime_error("compute_vismap_gt: eps must be positive");

  std::unordered_map<uint64_t, std::vector<int32_t>> buckets;
  const size_t n = size_t(uv_s.height) * size_t(uv_s.width);
  for (size_t i = 0; i < n; ++i) {
    if (uv_s.part[i] == 0) continue;
    const int64_t fu = int64_t(std::floor(uv_s.u[i] / eps));
    const int64_t fv = int64_t(std::floor(uv_s.v[i] / eps));
    buckets[bucket_key(uv_s.part[i], fu, fv)].push_back(int32_t(i));
  }

  VisibilityMap vm;
  vm.height = uv_t.height;
  vm.width = uv_t.width;
  vm.classes.assign(n, VisibilityMap::kBackground);
  for (size_t i = 0; i < n; ++i) {
    if (uv_t.part[i] == 0) continue;
    const float ut = uv_t.u[i], vt = uv_t.v[i];
    const int64_t fu = int64_t(std::floor(ut / eps));
    const int64_t fv = int64_t(std::floor(vt / eps));
    bool hit = false;
    for (int64_t du = -1; du <= 1 && !hit; ++du)
      for (int64_t dv = -1; dv <= 1 && !hit; ++dv) {
        if (fu + du < 0 || fv + dv < 0) continue;
        auto it = buckets.find(bucket_key(uv_t.part[i], fu + du, fv + dv));
        if (it == buckets.end()) continue;
        for (int32_t q : it->second)
          if (std::fabs(uv_s.u[size_t(q)] - ut) <= eps &&
              std::fabs(uv_s.v[size_t(q)] - vt) <= eps) {
            hit = true;
            break;
          }
      }
    vm.classes[i] = hit ? VisibilityMap::kVisible : VisibilityMap::kInvisible;
  }
  return vm;
}

template <class S>
VisibilityMap vismap_from_logits(const Tensor<S>& logits, int n) {
  if (logits.rank() != 4 || logits.dim(1) != 3)
    throw std::runtime_error("vismap_from_logits: expected [N,3,H,W], got " +
                             shape_str(logits.shape()));
  const int H = logits.dim(2), W = logits.dim(3);
  VisibilityMap vm;
  vm.height = H;
  vm.width = W;
  vm.classes.resize(size_t(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      int best = 0;
      for (int c = 1; c < 3; ++c)
        if (logits.at(n, c, y, x) > logits.at(n, best, y, x)) best = c;
      vm.at(y, x) = uint8_t(best);
    }
  return vm;
}

template <class S>
std::pair<Tensor<S>, Tensor<S>> split_masks(const VisibilityMap& vm) {
  return split_masks<S>(std::vector<VisibilityMap>{vm});
}

template <class S>
std::pair<Tensor<S>, Tensor<S>> split_masks(const std::vector<VisibilityMap>& vms) {
  if (vms.empty()) throw std::runtime_error("split_masks: no maps");
  const int N = int(vms.size()), H = vms[0].height, W = vms[0].width;
  Tensor<S> m_v = Tensor<S>::zeros({N, 1, H, W});
  Tensor<S> m_i = Tensor<S>::zeros({N, 1, H, W});
  for (int n = 0; n < N; ++n) {
    if (vms[size_t(n)].height != H || vms[size_t(n)].width != W)
      throw std::runtime_error("split_masks: map " + std::to_string(n) + " resolution differs");
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const uint8_t c = vms[size_t(n)].at(y, x);
        if (c == VisibilityMap::kVisible) m_v.at(n, 0, y, x) = S(1);
        else if (c == VisibilityMap::kInvisible) m_i.at(n, 0, y, x) = S(1);
      }
  }
  return {m_v, m_i};
}

std::vector<VisibilityMap> vismap_pyramid(const VisibilityMap& vm, int levels) {
  if (levels < 1) throw std::runtime_error("vismap_pyramid: need at least one level");
  const int div = 1 << (levels - 1);
  if (vm.height % div || vm.width % div)
    throw std::runtime_error("vismap_pyramid: " + std::to_string(vm.width) + "x" +
                             std::to_string(vm.height) + " not divisible by " +
                             std::to_string(div));
  std::vector<VisibilityMap> pyr;
  pyr.resize(size_t(levels));
  pyr[size_t(levels - 1)] = vm;
  for (int l = levels - 2; l >= 0; --l) {
    const VisibilityMap& fine = pyr[size_t(l + 1)];
    VisibilityMap coarse;
    coarse.height = fine.height / 2;
    coarse.width = fine.width / 2;
    coarse.classes.resize(size_t(coarse.height) * coarse.width);
    for (int y = 0; y < coarse.height; ++y)
      for (int x = 0; x < coarse.width; ++x) {
        int cnt[3] = {0, 0, 0};
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) ++cnt[fine.at(2 * y + dy, 2 * x + dx)];
        // Tie order: invisible, then background, then visible.
        uint8_t win;
        if (cnt[2] >= cnt[0] && cnt[2] >= cnt[1]) win = VisibilityMap::kInvisible;
        else if (cnt[0] >= cnt[1]) win = VisibilityMap::kBackground;
        else win = VisibilityMap::kVisible;
        coarse.at(y, x) = win;
      }
    pyr[size_t(l)] = std::move(coarse);
  }
  return pyr;
}

template <class S>
std::vector<std::pair<Tensor<S>, Tensor<S>>> downsample_vismap(const VisibilityMap& vm,
                                                               int levels) {
  std::vector<std::pair<Tensor<S>, Tensor<S>>> out;
  for (const VisibilityMap& level : vismap_pyramid(vm, levels))
    out.push_back(split_masks<S>(level));
  return out;
}

template <class S>
Tensor<S> vismap_one_hot(const VisibilityMap& vm) {
  Tensor<S> t = Tensor<S>::zeros({1, 3, vm.height, vm.width});
  for (int y = 0; y < vm.height; ++y)
    for (int x = 0; x < vm.width; ++x) t.at(0, vm.at(y, x), y, x) = S(1);
  return t;
}

Image8 vismap_to_image(const VisibilityMap& vm) {
  Image8 img;
  img.width = vm.width;
  img.height = vm.height;
  img.channels = 3;
  img.pixels.assign(size_t(vm.width) * vm.height * 3, 0);
  for (int y = 0; y < vm.height; ++y)
    for (int x = 0; x < vm.width; ++x) {
      const uint8_t c = vm.at(y, x);
      if (c == VisibilityMap::kVisible) img.at(y, x, 1) = 255;
      else if (c == VisibilityMap::kInvisible) img.at(y, x, 0) = 255;
    }
  return img;
}

void save_uvmap(const std::string& prefix, const UVMap& uv) {
  check_uvmap(uv, "save_uvmap");
  Image8 part;
  part.width = uv.width;
  part.height = uv.height;
  part.channels = 1;
  part.pixels.assign(uv.part.begin(), uv.part.end());
  write_image8(prefix + ".part.png", part);

  for (int which = 0; which < 2; ++which) {
    const std::vector<float>& src = which == 0 ? uv.u : uv.v;
    Image16 img;
    img.width = uv.width;
    img.height = uv.height;
    img.pixels.resize(src.size());
    for (size_t i = 0; i < src.size(); ++i)
      img.pixels[i] = uint16_t(std::lround(double(src[i]) * 65535.0));
    write_image16(prefix + (which == 0 ? ".u.png" : ".v.png"), img);
  }
}

UVMap load_uvmap(const std::string& prefix) {
  Image8 part = read_image8(prefix + ".part.png");
  if (part.channels != 1)
    throw std::runtime_error(prefix + ".part.png: expected a grayscale part map");
  Image16 u = read_image16(prefix + ".u.png");
  Image16 v = read_image16(prefix + ".v.png");
  if (u.width != part.width || u.height != part.height || v.width != part.width ||
      v.height != part.height)
    throw std::runtime_error(prefix + ": part/u/v resolutions disagree");

  UVMap uv;
  uv.height = part.height;
  uv.width = part.width;
  uv.part.assign(part.pixels.begin(), part.pixels.end());
  uv.u.resize(u.pixels.size());
  uv.v.resize(v.pixels.size());
  for (size_t i = 0; i < u.pixels.size(); ++i) {
    uv.u[i] = float(u.pixels[i]) / 65535.f;
    uv.v[i] = float(v.pixels[i]) / 65535.f;
  }
  return uv;
}

#define VGW_INSTANTIATE(S)                                                           \
  template VisibilityMap vismap_from_logits(const Tensor<S>&, int);                 \
  template std::pair<Tensor<S>, Tensor<S>> split_masks(const VisibilityMap&);       \
  template std::pair<Tensor<S>, Tensor<S>> split_masks(const std::vector<VisibilityMap>&); \
  template std::vector<std::pair<Tensor<S>, Tensor<S>>> downsample_vismap(          \
      const VisibilityMap&, int);                                                   \
  template Tensor<S> vismap_one_hot(const VisibilityMap&);

VGW_INSTANTIATE(float)
VGW_INSTANTIATE(double)
#undef VGW_INSTANTIATE

}  // namespace vgw
