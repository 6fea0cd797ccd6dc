#include "vgw/networks.hpp"

#include <cmath>
#include <sstream>

namespace vgw {
namespace {

template <class S>
ConvLayer<S> make_conv(Rng& rng, int in_c, int out_c, int k, int stride, int pad,
                       bool zero_init = false) {
  ConvLayer<S> layer;
  layer.w = Tensor<S>::zeros({out_c, in_c, k, k});
  layer.b = Tensor<S>::zeros({out_c});
  layer.stride = stride;
  layer.pad = pad;
  if (!zero_init) {
    // He-style scale adjusted for the leaky ReLU slope used everywhere.
    const double gain2 = 2.0 / (1.0 + 0.2 * 0.2);
    const double stdev = std::sqrt(gain2 / (double(in_c) * k * k));
    for (int64_t i = 0; i < layer.w.numel(); ++i) layer.w.at(int(i)) = S(rng.normal() * stdev);
  }
  layer.w.set_requires_grad(true);
  layer.b.set_requires_grad(true);
  return layer;
}

template <class S>
GateParams<S> make_gate(Rng&) {
  // Zero weights put every gate at sigmoid(0) = 0.5 initially.
  GateParams<S> g;
  g.weight = Tensor<S>::zeros({1, 4, 3, 3});
  g.bias = Tensor<S>::zeros({1});
  g.weight.set_requires_grad(true);
  g.bias.set_requires_grad(true);
  return g;
}

template <class S>
void check_image(const Tensor<S>& t, int channels, int size, const char* what) {
  if (t.rank() != 4 || t.dim(1) != channels || t.dim(2) != size || t.dim(3) != size)
    throw std::runtime_error(std::string(what) + ": expected [N," + std::to_string(channels) +
                             "," + std::to_string(size) + "," + std::to_string(size) + "], got " +
                             shape_str(t.shape()));
}

}  // namespace

void NetworkConfig::validate() const {
  if (pyramid_levels < 2)
    throw std::runtime_error("NetworkConfig: need at least 2 pyramid levels");
  if (image_size != 8 << pyramid_levels)
    throw std::runtime_error("NetworkConfig: image_size " + std::to_string(image_size) +
                             " must equal 8 * 2^" + std::to_string(pyramid_levels) +
                             " so the encoder bottoms out at 8x8");
  if (base_channels < 4 || base_channels % 4 != 0)
    throw std::runtime_error("NetworkConfig: base_channels must be a positive multiple of 4");
  if (pose_joints <= 0 || vis_classes != 3)
    throw std::runtime_error("NetworkConfig: unsupported joint/class counts");
}

// ---------------------------------------------------------------------------
// Parameter registration (order here fixes the checkpoint layout).
// ---------------------------------------------------------------------------

template <class S>
void FlowPredictor<S>::append_params(const std::string& p, NamedParams<S>& out) const {
  stem.append_params(p + ".stem", out);
  for (size_t i = 0; i < encs.size(); ++i) encs[i].append_params(p + ".enc" + std::to_string(i), out);
  bott.append_params(p + ".bott", out);
  for (size_t i = 0; i < decs.size(); ++i) decs[i].append_params(p + ".dec" + std::to_string(i), out);
  for (size_t i = 0; i < heads.size(); ++i)
    heads[i].append_params(p + ".head" + std::to_string(i), out);
  vm_head.append_params(p + ".vm_head", out);
  convex_head.append_params(p + ".convex_head", out);
  for (size_t i = 0; i < gates_v.size(); ++i) {
    out.emplace_back(p + ".gate_v" + std::to_string(i) + ".w", gates_v[i].weight);
    out.emplace_back(p + ".gate_v" + std::to_string(i) + ".b", gates_v[i].bias);
    out.emplace_back(p + ".gate_i" + std::to_string(i) + ".w", gates_i[i].weight);
    out.emplace_back(p + ".gate_i" + std::to_string(i) + ".b", gates_i[i].bias);
  }
}

template <class S>
void PoseEncoder<S>::append_params(const std::string& p, NamedParams<S>& out) const {
  stem.append_params(p + ".stem", out);
  down1.append_params(p + ".down1", out);
  down2.append_params(p + ".down2", out);
  res1.append_params(p + ".res1", out);
  res2.append_params(p + ".res2", out);
}

template <class S>
void TextureEncoder<S>::append_params(const std::string& p, NamedParams<S>& out) const {
  in64.append_params(p + ".in64", out);
  down32.append_params(p + ".down32", out);
  down16.append_params(p + ".down16", out);
  skip32.append_params(p + ".skip32", out);
  skip16.append_params(p + ".skip16", out);
}

template <class S>
void Decoder<S>::append_params(const std::string& p, NamedParams<S>& out) const {
  proj16.append_params(p + ".proj16", out);
  proj32.append_params(p + ".proj32", out);
  proj64.append_params(p + ".proj64", out);
  mod16.append_params(p + ".mod16", out);
  mod32.append_params(p + ".mod32", out);
  mod64.append_params(p + ".mod64", out);
  up32.append_params(p + ".up32", out);
  up64.append_params(p + ".up64", out);
  rgb16.append_params(p + ".rgb16", out);
  rgb32.append_params(p + ".rgb32", out);
  rgb64.append_params(p + ".rgb64", out);
}

template <class S>
void CondDiscriminator<S>::append_params(const std::string& p, NamedParams<S>& out) const {
  l1.append_params(p + ".l1", out);
  l2.append_params(p + ".l2", out);
  l3.append_params(p + ".l3", out);
  head.append_params(p + ".head", out);
}

template <class S>
void PatchDiscriminator<S>::append_params(const std::string& p, NamedParams<S>& out) const {
  l1.append_params(p + ".l1", out);
  l2.append_params(p + ".l2", out);
  l3.append_params(p + ".l3", out);
  head.append_params(p + ".head", out);
}

// ---------------------------------------------------------------------------
// Construction.
// ---------------------------------------------------------------------------

template <class S>
Models<S> build_models(const NetworkConfig& cfg) {
  cfg.validate();
  Models<S> m;
  m.cfg = cfg;
  const int B = cfg.base_channels;
  const int J = cfg.pose_joints;
  const int L = cfg.pyramid_levels;
  Rng rng(Rng::mix(cfg.rng_seed, 0x6e657473));  // one stream, fixed layer order

  // Flow UNet. Encoder features at S/2^j carry 2^j * B channels.
  m.flow.stem = make_conv<S>(rng, 3 + 2 * J, B, 3, 1, 1);
  for (int j = 0; j < L; ++j)
    m.flow.encs.push_back(make_conv<S>(rng, (1 << j) * B, (2 << j) * B, 4, 2, 1));
  m.flow.bott = make_conv<S>(rng, (1 << L) * B, (1 << L) * B, 3, 1, 1);
  m.flow.decs.push_back(make_conv<S>(rng, (1 << L) * B, (1 << (L - 1)) * B, 3, 1, 1));
  for (int k = 1; k < L; ++k) {
    const int c = (1 << (L - k)) * B;  // upsampled feature and skip each carry c
    m.flow.decs.push_back(make_conv<S>(rng, 2 * c, c / 2, 3, 1, 1));
  }
  m.flow.decs.push_back(make_conv<S>(rng, 2 * B, B, 3, 1, 1));
  for (int k = 0; k < L; ++k)
    m.flow.heads.push_back(make_conv<S>(rng, (1 << (L - 1 - k)) * B, 4, 3, 1, 1, true));
  m.flow.vm_head = make_conv<S>(rng, B, 3, 3, 1, 1);
  m.flow.convex_head = make_conv<S>(rng, B, 9, 3, 1, 1, true);
  for (int k = 0; k < L - 1; ++k) {
    m.flow.gates_v.push_back(make_gate<S>(rng));
    m.flow.gates_i.push_back(make_gate<S>(rng));
  }

  m.pose.stem = make_conv<S>(rng, 2 * J, B, 3, 1, 1);
  m.pose.down1 = make_conv<S>(rng, B, 2 * B, 4, 2, 1);
  m.pose.down2 = make_conv<S>(rng, 2 * B, 4 * B, 4, 2, 1);
  m.pose.res1 = make_conv<S>(rng, 4 * B, 4 * B, 3, 1, 1);
  m.pose.res2 = make_conv<S>(rng, 4 * B, 4 * B, 3, 1, 1);

  m.tex.in64 = make_conv<S>(rng, 9, B, 3, 1, 1);
  m.tex.down32 = make_conv<S>(rng, B, 2 * B, 4, 2, 1);
  m.tex.down16 = make_conv<S>(rng, 2 * B, 4 * B, 4, 2, 1);
  m.tex.skip32 = make_conv<S>(rng, 3 * B, 2 * B, 3, 1, 1);
  m.tex.skip16 = make_conv<S>(rng, 6 * B, 4 * B, 3, 1, 1);

  m.dec.proj16 = make_conv<S>(rng, 4 * B, 4 * B, 1, 1, 0);
  m.dec.proj32 = make_conv<S>(rng, 2 * B, 2 * B, 1, 1, 0);
  m.dec.proj64 = make_conv<S>(rng, B, B, 1, 1, 0);
  m.dec.mod16 = make_conv<S>(rng, 4 * B, 4 * B, 3, 1, 1);
  m.dec.mod32 = make_conv<S>(rng, 2 * B, 2 * B, 3, 1, 1);
  m.dec.mod64 = make_conv<S>(rng, B, B, 3, 1, 1);
  m.dec.up32 = make_conv<S>(rng, 4 * B, 2 * B, 3, 1, 1);
  m.dec.up64 = make_conv<S>(rng, 2 * B, B, 3, 1, 1);
  m.dec.rgb16 = make_conv<S>(rng, 4 * B, 3, 3, 1, 1);
  m.dec.rgb32 = make_conv<S>(rng, 2 * B, 3, 3, 1, 1);
  m.dec.rgb64 = make_conv<S>(rng, B, 3, 3, 1, 1);

  m.cond_d.l1 = make_conv<S>(rng, 3 + J, B, 4, 2, 1);
  m.cond_d.l2 = make_conv<S>(rng, B, 2 * B, 4, 2, 1);
  m.cond_d.l3 = make_conv<S>(rng, 2 * B, 4 * B, 4, 2, 1);
  m.cond_d.head = make_conv<S>(rng, 4 * B, 1, 3, 1, 1);

  m.patch_d.l1 = make_conv<S>(rng, 3, B, 4, 2, 1);
  m.patch_d.l2 = make_conv<S>(rng, B, 2 * B, 4, 2, 1);
  m.patch_d.l3 = make_conv<S>(rng, 2 * B, 4 * B, 4, 2, 1);
  m.patch_d.head = make_conv<S>(rng, 4 * B, 1, 1, 1, 0);
  return m;
}

// ---------------------------------------------------------------------------
// Forwards.
// ---------------------------------------------------------------------------

template <class S>
FlowForward<S> flow_predictor_forward(const FlowPredictor<S>& net, const Tensor<S>& I_s,
                                      const Tensor<S>& K_s, const Tensor<S>& K_t,
                                      const NetworkConfig& cfg) {
  const int L = cfg.pyramid_levels;
  check_image(I_s, 3, cfg.image_size, "flow_predictor_forward(I_s)");
  check_image(K_s, cfg.pose_joints, cfg.image_size, "flow_predictor_forward(K_s)");
  check_image(K_t, cfg.pose_joints, cfg.image_size, "flow_predictor_forward(K_t)");

  std::vector<Tensor<S>> e;
  e.push_back(leaky_relu(net.stem(concat_channel<S>({I_s, K_s, K_t}))));
  for (int j = 0; j < L; ++j) e.push_back(leaky_relu(net.encs[size_t(j)](e.back())));

  FlowForward<S> out;
  Tensor<S> h = leaky_relu(net.bott(e.back()));
  Tensor<S> vm_fine;
  for (int k = 0; k < L; ++k) {
    if (k == 0)
      h = leaky_relu(net.decs[0](h));
    else
      h = leaky_relu(net.decs[size_t(k)](
          concat_channel<S>({upsample_nearest2x(h), e[size_t(L - k)]})));
    Tensor<S> f = net.heads[size_t(k)](h);
    out.flows_v.push_back(slice_channel(f, 0, 2));
    out.flows_i.push_back(slice_channel(f, 2, 2));
    if (k == L - 1) vm_fine = net.vm_head(h);
  }
  h = leaky_relu(net.decs[size_t(L)](concat_channel<S>({upsample_nearest2x(h), e[0]})));
  out.convex_logits = net.convex_head(h);
  out.vm_logits = upsample_bilinear2x(vm_fine);
  return out;
}

template <class S>
FlowVisOut<S> flowvis_forward(const FlowPredictor<S>& net, const Tensor<S>& I_s,
                              const Tensor<S>& K_s, const Tensor<S>& K_t,
                              const NetworkConfig& cfg) {
  FlowVisOut<S> out;
  out.raw = flow_predictor_forward(net, I_s, K_s, K_t, cfg);
  Tensor<S> agg_v = gated_aggregate(out.raw.flows_v, net.gates_v);
  Tensor<S> agg_i = gated_aggregate(out.raw.flows_i, net.gates_i);
  out.flow_v_full = convex_upsample(agg_v, out.raw.convex_logits);
  out.flow_i_full = convex_upsample(agg_i, out.raw.convex_logits);
  out.pyr_v = out.raw.flows_v;
  out.pyr_v.push_back(out.flow_v_full);
  out.pyr_i = out.raw.flows_i;
  out.pyr_i.push_back(out.flow_i_full);
  return out;
}

template <class S>
Tensor<S> pose_encoder_forward(const PoseEncoder<S>& net, const Tensor<S>& K_s,
                               const Tensor<S>& K_t) {
  Tensor<S> p = leaky_relu(net.stem(concat_channel<S>({K_s, K_t})));
  p = leaky_relu(net.down1(p));
  p = leaky_relu(net.down2(p));
  return add(p, net.res2(leaky_relu(net.res1(p))));
}

template <class S>
std::vector<Tensor<S>> texture_encoder_forward(const TextureEncoder<S>& net, const Tensor<S>& I_v,
                                               const Tensor<S>& I_i, const Tensor<S>& vm_onehot) {
  if (!same_shape(I_v.shape(), I_i.shape()) || vm_onehot.dim(1) != 3)
    throw std::runtime_error("texture_encoder_forward: inputs disagree, " +
                             shape_str(I_v.shape()) + " / " + shape_str(I_i.shape()) + " / " +
                             shape_str(vm_onehot.shape()));
  Tensor<S> f64 = leaky_relu(net.in64(concat_channel<S>({I_v, I_i, vm_onehot})));
  Tensor<S> f32 = leaky_relu(net.down32(f64));
  Tensor<S> f16 = leaky_relu(net.down16(f32));
  Tensor<S> s32 = leaky_relu(net.skip32(concat_channel<S>({f32, downsample_avg2x(f64)})));
  Tensor<S> s16 = leaky_relu(net.skip16(concat_channel<S>({f16, downsample_avg2x(s32)})));
  return {f64, s32, s16};
}

template <class S>
Tensor<S> style_modulate_2d(const Tensor<S>& x, const Tensor<S>& style,
                            const ConvLayer<S>& conv) {
  if (!same_shape(x.shape(), style.shape()))
    throw std::runtime_error("style_modulate_2d: feature " + shape_str(x.shape()) +
                             " vs style " + shape_str(style.shape()));
  return normalize_instance(conv(mul(x, add(style, Tensor<S>::scalar(S(1))))));
}

template <class S>
Tensor<S> decoder_forward(const Decoder<S>& net, const Tensor<S>& e_p,
                          const std::vector<Tensor<S>>& e_tex) {
  if (e_tex.size() != 3)
    throw std::runtime_error("decoder_forward: expected 3 texture levels, got " +
                             std::to_string(e_tex.size()));
  Tensor<S> m16 =
      add(e_p, leaky_relu(style_modulate_2d(e_p, net.proj16(e_tex[2]), net.mod16)));
  Tensor<S> rgb = net.rgb16(m16);

  Tensor<S> u32 = leaky_relu(net.up32(upsample_nearest2x(m16)));
  Tensor<S> m32 =
      add(u32, leaky_relu(style_modulate_2d(u32, net.proj32(e_tex[1]), net.mod32)));
  rgb = add(net.rgb32(m32), upsample_bilinear2x(rgb));

  Tensor<S> u64 = leaky_relu(net.up64(upsample_nearest2x(m32)));
  Tensor<S> m64 =
      add(u64, leaky_relu(style_modulate_2d(u64, net.proj64(e_tex[0]), net.mod64)));
  rgb = add(net.rgb64(m64), upsample_bilinear2x(rgb));

  return scale(add(tanh(rgb), Tensor<S>::scalar(S(1))), 0.5);
}

template <class S>
Tensor<S> discriminator_forward(const CondDiscriminator<S>& net, const Tensor<S>& I,
                                const Tensor<S>& K_t) {
  return discriminator_forward(net, concat_channel<S>({I, K_t}));
}

template <class S>
Tensor<S> discriminator_forward(const CondDiscriminator<S>& net, const Tensor<S>& stacked) {
  Tensor<S> h = leaky_relu(net.l1(stacked));
  h = leaky_relu(net.l2(h));
  h = leaky_relu(net.l3(h));
  return net.head(h);
}

template <class S>
Tensor<S> patch_discriminator_forward(const PatchDiscriminator<S>& net, const Tensor<S>& I) {
  Tensor<S> h = leaky_relu(net.l1(I));
  h = leaky_relu(net.l2(h));
  h = leaky_relu(net.l3(h));
  return net.head(h);
}

// ---------------------------------------------------------------------------
// Registry.
// ---------------------------------------------------------------------------

template <class S>
NamedParams<S> named_params(const Models<S>& m) {
  NamedParams<S> out;
  m.flow.append_params("flow", out);
  m.pose.append_params("pose", out);
  m.tex.append_params("tex", out);
  m.dec.append_params("dec", out);
  m.cond_d.append_params("cond_d", out);
  m.patch_d.append_params("patch_d", out);
  return out;
}

template <class S>
NamedParams<S> flow_params(const Models<S>& m) {
  NamedParams<S> out;
  m.flow.append_params("flow", out);
  return out;
}

template <class S>
NamedParams<S> generator_params(const Models<S>& m) {
  NamedParams<S> out;
  m.pose.append_params("pose", out);
  m.tex.append_params("tex", out);
  m.dec.append_params("dec", out);
  return out;
}

template <class S>
void set_requires_grad(const NamedParams<S>& params, bool v) {
  for (const auto& [name, t] : params) {
    (void)name;
    Tensor<S>(t).set_requires_grad(v);
  }
}

template <class S>
std::string describe_models(const Models<S>& m) {
  std::ostringstream os;
  os << "image_size=" << m.cfg.image_size << " pyramid_levels=" << m.cfg.pyramid_levels
     << " base_channels=" << m.cfg.base_channels << " pose_joints=" << m.cfg.pose_joints
     << "\n\n";
  os << "parameter                        shape           count\n";
  os << "-------------------------------- --------------- ---------\n";
  int64_t total = 0;
  for (const auto& [name, t] : named_params(m)) {
    std::string n = name, sh = shape_str(t.shape());
    n.resize(32, ' ');
    sh.resize(15, ' ');
    os << n << " " << sh << " " << t.numel() << "\n";
    total += t.numel();
  }
  os << "\ntotal parameters: " << total << "\n";
  return os.str();
}

#define VGW_INSTANTIATE(S)                                                                     \
  template struct FlowPredictor<S>;                                                           \
  template struct PoseEncoder<S>;                                                             \
  template struct TextureEncoder<S>;                                                          \
  template struct Decoder<S>;                                                                 \
  template struct CondDiscriminator<S>;                                                       \
  template struct PatchDiscriminator<S>;                                                      \
  template Models<S> build_models(const NetworkConfig&);                                      \
  template FlowForward<S> flow_predictor_forward(const FlowPredictor<S>&, const Tensor<S>&,   \
                                                 const Tensor<S>&, const Tensor<S>&,          \
                                                 const NetworkConfig&);                       \
  template FlowVisOut<S> flowvis_forward(const FlowPredictor<S>&, const Tensor<S>&,           \
                                         const Tensor<S>&, const Tensor<S>&,                 \
                                         const NetworkConfig&);                              \
  template Tensor<S> pose_encoder_forward(const PoseEncoder<S>&, const Tensor<S>&,            \
                                          const Tensor<S>&);                                 \
  template std::vector<Tensor<S>> texture_encoder_forward(const TextureEncoder<S>&,           \
                                                          const Tensor<S>&, const Tensor<S>&, \
                                                          const Tensor<S>&);                 \
  template Tensor<S> style_modulate_2d(const Tensor<S>&, const Tensor<S>&,                   \
                                       const ConvLayer<S>&);                                 \
  template Tensor<S> decoder_forward(const Decoder<S>&, const Tensor<S>&,                    \
                                     const std::vector<Tensor<S>>&);                         \
  template Tensor<S> discriminator_forward(const CondDiscriminator<S>&, const Tensor<S>&,     \
                                           const Tensor<S>&);                                \
  template Tensor<S> discriminator_forward(const CondDiscriminator<S>&, const Tensor<S>&);    \
  template Tensor<S> patch_discriminator_forward(const PatchDiscriminator<S>&,                \
                                                 const Tensor<S>&);                          \
  template NamedParams<S> named_params(const Models<S>&);                                    \
  template NamedParams<S> flow_params(const Models<S>&);                                     \
  template NamedParams<S> generator_params(const Models<S>&);                                \
  template void set_requires_grad(const NamedParams<S>&, bool);                              \
  template std::string describe_models(const Models<S>&);

VGW_INSTANTIATE(float)
VGW_INSTANTIATE(double)
#undef VGW_INSTANTIATE

}  // namespace vgw
