#include "vgw/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vgw/io.hpp"
#include "vgw/tape.hpp"

namespace vgw {
namespace {

constexpr uint64_t kFxSeed = 0x7ea7f00dULL;

// Dedicated RNG stream ids per stage: schedule draws must not shift when an
// unrelated feature toggles, so sample picking and mask generation each get
// their own stream.
enum StreamId : uint64_t { kSched = 1, kData = 2, kMask = 3 };

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::runtime_error("config: " + key + ": not a number: \"" + v + "\"");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  double d = parse_double(key, v);
  if (d != std::floor(d)) throw std::runtime_error("config: " + key + ": not an integer: " + v);
  return int(d);
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw std::runtime_error("config: " + key + ": not an unsigned integer: \"" + v + "\"");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw std::runtime_error("config: " + key + ": expected true/false, got \"" + v + "\"");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

void write_terms(std::ostream* csv, int step, const std::string& stage,
                 const std::vector<std::pair<std::string, double>>& terms) {
  if (!csv) return;
  char buf[64];
  for (const auto& [name, value] : terms) {
    std::snprintf(buf, sizeof buf, "%.9g", value);
    *csv << step << ',' << stage << ',' << name << ',' << buf << '\n';
  }
}

struct Batch {
  Tensor<float> I_s, I_t;        // [N,3,S,S]
  Tensor<float> K_s_hm, K_t_hm;  // [N,J,S,S]
  std::vector<VisibilityMap> vm; // GT target-vs-source, paired batches only
  int n() const { return I_s.defined() ? I_s.dim(0) : 0; }
};

Tensor<float> stack_heatmaps(const std::vector<const ReposeSample*>& samples, bool source,
                             int size, bool zeroed) {
  if (zeroed) return Tensor<float>::zeros({int(samples.size()), kNumJoints, size, size});
  std::vector<Tensor<float>> hms;
  hms.reserve(samples.size());
  for (const ReposeSample* s : samples)
    hms.push_back(rasterize_keypoints<float>(source ? s->K_s : s->K_t, size));
  return batch_concat(hms);
}

Batch build_batch(const std::vector<const ReposeSample*>& samples,
                  const std::vector<const VisibilityMap*>& vms, const TrainConfig& cfg) {
  Batch b;
  std::vector<Tensor<float>> is, it;
  for (const ReposeSample* s : samples) {
    is.push_back(s->I_s);
    it.push_back(s->I_t);
  }
  b.I_s = batch_concat(is);
  b.I_t = batch_concat(it);
  b.K_s_hm = stack_heatmaps(samples, true, cfg.image_size, !cfg.use_source_keypoints);
  b.K_t_hm = stack_heatmaps(samples, false, cfg.image_size, false);
  for (const VisibilityMap* vm : vms) b.vm.push_back(*vm);
  return b;
}

// Per-level (m_v, m_i) stacks, coarsest first, from per-sample maps.
std::vector<std::pair<Tensor<float>, Tensor<float>>> batched_mask_pyramid(
    const std::vector<VisibilityMap>& vms, int levels) {
  std::vector<std::vector<std::pair<Tensor<float>, Tensor<float>>>> per;
  per.reserve(vms.size());
  for (const auto& vm : vms) per.push_back(downsample_vismap<float>(vm, levels));
  std::vector<std::pair<Tensor<float>, Tensor<float>>> out;
  for (int l = 0; l < levels; ++l) {
    std::vector<Tensor<float>> mv, mi;
    for (const auto& p : per) {
      mv.push_back(p[size_t(l)].first);
      mi.push_back(p[size_t(l)].second);
    }
    out.emplace_back(batch_concat(mv), batch_concat(mi));
  }
  return out;
}

std::vector<VisibilityMap> predicted_vismaps(const Tensor<float>& logits) {
  std::vector<VisibilityMap> vms;
  for (int n = 0; n < logits.dim(0); ++n) vms.push_back(vismap_from_logits(logits, n));
  return vms;
}

// Warping objective for a paired batch. `teacher` picks GT masks over
// detached predicted ones; the cross-entropy always targets GT.
LossBreakdown<float> warp_objective(const FlowVisOut<float>& out, const Batch& b, bool teacher,
                                    const TrainConfig& cfg, const FeatureExtractor<float>& fx) {
  const int levels = cfg.pyramid_levels + 1;
  std::vector<std::pair<Tensor<float>, Tensor<float>>> masks;
  if (cfg.use_vismap) {
    masks = batched_mask_pyramid(teacher ? b.vm : predicted_vismaps(out.raw.vm_logits), levels);
  } else {
    for (int l = 0; l < levels; ++l) {
      const int s = cfg.image_size >> (levels - 1 - l);
      masks.emplace_back(Tensor<float>::full({b.n(), 1, s, s}, 1.0f),
                         Tensor<float>::zeros({b.n(), 1, s, s}));
    }
  }
  if (!cfg.use_invisible_warp)
    for (auto& [mv, mi] : masks) {
      (void)mv;
      mi = Tensor<float>::zeros(mi.shape());
    }

  auto [warped_v, warped_i] = build_warped_pyramids(b.I_s, out.pyr_v, out.pyr_i);
  LossWeights w = cfg.weights;
  if (!cfg.use_vismap) w.lambda_cce = 0.0f;
  return flow_warp_loss(warped_v, warped_i, b.I_t, masks, out.pyr_v, out.pyr_i,
                        out.raw.vm_logits, b.vm, fx, w);
}

struct GenInputs {
  Tensor<float> I_v, I_i, vm_onehot, pose_src, pose_tgt;
};

// Texture/pose inputs for the reposing pathway; masks and the one-hot map
// come from the predicted logits (detached), matching inference.
GenInputs repose_inputs(const FlowVisOut<float>& out, const Batch& b, const TrainConfig& cfg) {
  GenInputs g;
  const int N = b.n(), S = cfg.image_size;
  Tensor<float> mv, mi;
  if (cfg.use_vismap) {
    std::vector<Tensor<float>> mvs, mis, hots;
    for (const VisibilityMap& vm : predicted_vismaps(out.raw.vm_logits)) {
      auto [v, i] = split_masks<float>(vm);
      mvs.push_back(v);
      mis.push_back(i);
      hots.push_back(vismap_one_hot<float>(vm));
    }
    mv = batch_concat(mvs);
    mi = batch_concat(mis);
    g.vm_onehot = batch_concat(hots);
  } else {
    mv = Tensor<float>::full({N, 1, S, S}, 1.0f);
    mi = Tensor<float>::zeros({N, 1, S, S});
    g.vm_onehot = Tensor<float>::zeros({N, 3, S, S});
  }
  g.I_v = scale_channels(warp_bilinear(b.I_s, out.flow_v_full), mv);
  g.I_i = cfg.use_invisible_warp
              ? scale_channels(warp_bilinear(b.I_s, out.flow_i_full), mi)
              : Tensor<float>::zeros({N, 3, S, S});
  g.pose_src = b.K_s_hm;
  g.pose_tgt = b.K_t_hm;
  return g;
}

// Inpainting auxiliary task: masked target as the sole texture input,
// identity pose pair, holes marked invisible.
GenInputs inpaint_inputs(const Batch& b, const TrainConfig& cfg, Rng& rng_mask) {
  GenInputs g;
  const int N = b.n(), S = cfg.image_size;
  std::vector<Tensor<float>> ms;
  for (int i = 0; i < N; ++i) ms.push_back(random_inpaint_mask<float>(S, rng_mask));
  Tensor<float> mask = batch_concat(ms);
  Tensor<float> keep = sub(Tensor<float>::full({N, 1, S, S}, 1.0f), mask);
  g.I_v = scale_channels(b.I_t, keep);
  g.I_i = Tensor<float>::zeros({N, 3, S, S});
  g.vm_onehot = cfg.use_vismap
                    ? concat_channel<float>({Tensor<float>::zeros({N, 1, S, S}), keep, mask})
                    : Tensor<float>::zeros({N, 3, S, S});
  g.pose_src = cfg.use_source_keypoints ? b.K_t_hm
                                        : Tensor<float>::zeros({N, kNumJoints, S, S});
  g.pose_tgt = b.K_t_hm;
  return g;
}

Tensor<float> generator_forward(const Models<float>& m, const GenInputs& g) {
  Tensor<float> e_p = pose_encoder_forward(m.pose, g.pose_src, g.pose_tgt);
  std::vector<Tensor<float>> e_tex =
      texture_encoder_forward(m.tex, g.I_v, g.I_i, g.vm_onehot);
  return decoder_forward(m.dec, e_p, e_tex);
}

NamedParams<float> cond_d_params(const Models<float>& m) {
  NamedParams<float> out;
  m.cond_d.append_params("cond_d", out);
  return out;
}

NamedParams<float> patch_d_params(const Models<float>& m) {
  NamedParams<float> out;
  m.patch_d.append_params("patch_d", out);
  return out;
}

void check_finite(double v, const char* stage, int step) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string(stage) + ": loss diverged (non-finite) at step " +
                             std::to_string(step));
}

void progress(const char* stage, int step, int steps, double loss) {
  if (step == 1 || step % 500 == 0 || step == steps)
    std::cerr << "[" << stage << "] step " << step << "/" << steps << " total=" << loss
              << std::endl;
}

std::vector<size_t> paired_pool(const std::vector<ReposeSample>& data) {
  std::vector<size_t> idx;
  for (size_t i = 0; i < data.size(); ++i)
    if (data[i].paired) idx.push_back(i);
  return idx;
}

// GT visibility for the listed samples, computed once per stage.
std::vector<VisibilityMap> vm_cache_for(const std::vector<ReposeSample>& data,
                                        const std::vector<size_t>& pool, double eps) {
  std::vector<VisibilityMap> cache;
  cache.resize(data.size());
  for (size_t i : pool) cache[i] = compute_vismap_gt(data[i].uv_s, data[i].uv_t, float(eps));
  return cache;
}

}  // namespace

uint64_t feature_extractor_seed() { return kFxSeed; }

void TrainConfig::validate() const {
  if (stage != "flow" && stage != "generator" && stage != "finetune")
    throw std::runtime_error("config: stage must be flow, generator, or finetune, got \"" +
                             stage + "\"");
  if (batch_size < 1) throw std::runtime_error("config: batch_size must be >= 1");
  if (lr < 0) throw std::runtime_error("config: lr must be positive (0 = stage default)");
  if (steps < 0) throw std::runtime_error("config: steps must be >= 0 (0 = stage default)");
  for (auto [name, p] : {std::pair{"teacher_force_p", teacher_force_p},
                         std::pair{"inpaint_p", inpaint_p}, std::pair{"unpaired_p", unpaired_p}})
    if (p < 0.0 || p > 1.0)
      throw std::runtime_error(std::string("config: ") + name + " must lie in [0,1]");
  if (vis_eps <= 0) throw std::runtime_error("config: vis_eps must be positive");
  network().validate();
}

double TrainConfig::stage_lr() const {
  if (lr > 0) return lr;
  return stage == "finetune" ? 5e-5 : 1e-4;
}

int TrainConfig::stage_steps() const {
  if (steps > 0) return steps;
  return stage == "finetune" ? 10000 : 20000;
}

NetworkConfig TrainConfig::network() const {
  NetworkConfig nc;
  nc.image_size = image_size;
  nc.pyramid_levels = pyramid_levels;
  nc.base_channels = base_channels;
  nc.rng_seed = seed;
  return nc;
}

void apply_config_kv(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "stage") c.stage = value;
  else if (key == "batch_size") c.batch_size = parse_int(key, value);
  else if (key == "lr") c.lr = parse_double(key, value);
  else if (key == "adam_beta1") c.adam_beta1 = parse_double(key, value);
  else if (key == "adam_beta2") c.adam_beta2 = parse_double(key, value);
  else if (key == "adam_eps") c.adam_eps = parse_double(key, value);
  else if (key == "steps") c.steps = parse_int(key, value);
  else if (key == "teacher_force_p") c.teacher_force_p = parse_double(key, value);
  else if (key == "inpaint_p") c.inpaint_p = parse_double(key, value);
  else if (key == "unpaired_p") c.unpaired_p = parse_double(key, value);
  else if (key == "use_vismap") c.use_vismap = parse_bool(key, value);
  else if (key == "use_invisible_warp") c.use_invisible_warp = parse_bool(key, value);
  else if (key == "use_source_keypoints") c.use_source_keypoints = parse_bool(key, value);
  else if (key == "use_self_supervised") c.use_self_supervised = parse_bool(key, value);
  else if (key == "freeze_flow_in_finetune") c.freeze_flow_in_finetune = parse_bool(key, value);
  else if (key == "seed") c.seed = parse_u64(key, value);
  else if (key == "image_size") c.image_size = parse_int(key, value);
  else if (key == "pyramid_levels") c.pyramid_levels = parse_int(key, value);
  else if (key == "base_channels") c.base_channels = parse_int(key, value);
  else if (key == "vis_eps") c.vis_eps = parse_double(key, value);
  else if (key == "beta1") c.weights.beta1 = float(parse_double(key, value));
  else if (key == "beta2") c.weights.beta2 = float(parse_double(key, value));
  else if (key == "beta3") c.weights.beta3 = float(parse_double(key, value));
  else if (key == "beta4") c.weights.beta4 = float(parse_double(key, value));
  else if (key == "alpha_rec") c.weights.alpha_rec = float(parse_double(key, value));
  else if (key == "alpha_per") c.weights.alpha_per = float(parse_double(key, value));
  else if (key == "alpha_sty") c.weights.alpha_sty = float(parse_double(key, value));
  else if (key == "alpha_adv") c.weights.alpha_adv = float(parse_double(key, value));
  else if (key == "lambda_cce") c.weights.lambda_cce = float(parse_double(key, value));
  else if (key == "lambda_ss") c.weights.lambda_ss = float(parse_double(key, value));
  else throw std::runtime_error("config: unknown key \"" + key + "\"");
}

TrainConfig load_train_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (size_t h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) +
                               ": expected key = value");
    apply_config_kv(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

std::string dump_train_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "stage = " << c.stage << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "lr = " << c.stage_lr() << "\n";
  os << "adam_beta1 = " << c.adam_beta1 << "\n";
  os << "adam_beta2 = " << c.adam_beta2 << "\n";
  os << "adam_eps = " << c.adam_eps << "\n";
  os << "steps = " << c.stage_steps() << "\n";
  os << "teacher_force_p = " << c.teacher_force_p << "\n";
  os << "inpaint_p = " << c.inpaint_p << "\n";
  os << "unpaired_p = " << c.unpaired_p << "\n";
  os << "use_vismap = " << (c.use_vismap ? "true" : "false") << "\n";
  os << "use_invisible_warp = " << (c.use_invisible_warp ? "true" : "false") << "\n";
  os << "use_source_keypoints = " << (c.use_source_keypoints ? "true" : "false") << "\n";
  os << "use_self_supervised = " << (c.use_self_supervised ? "true" : "false") << "\n";
  os << "freeze_flow_in_finetune = " << (c.freeze_flow_in_finetune ? "true" : "false") << "\n";
  os << "seed = " << c.seed << "\n";
  os << "image_size = " << c.image_size << "\n";
  os << "pyramid_levels = " << c.pyramid_levels << "\n";
  os << "base_channels = " << c.base_channels << "\n";
  os << "vis_eps = " << c.vis_eps << "\n";
  os << "beta1 = " << c.weights.beta1 << "\n";
  os << "beta2 = " << c.weights.beta2 << "\n";
  os << "beta3 = " << c.weights.beta3 << "\n";
  os << "beta4 = " << c.weights.beta4 << "\n";
  os << "alpha_rec = " << c.weights.alpha_rec << "\n";
  os << "alpha_per = " << c.weights.alpha_per << "\n";
  os << "alpha_sty = " << c.weights.alpha_sty << "\n";
  os << "alpha_adv = " << c.weights.alpha_adv << "\n";
  os << "lambda_cce = " << c.weights.lambda_cce << "\n";
  os << "lambda_ss = " << c.weights.lambda_ss << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

template <class S>
AdamState<S> make_adam_state(const NamedParams<S>& params) {
  AdamState<S> st;
  for (const auto& [name, t] : params) {
    (void)name;
    st.m.push_back(Tensor<S>::zeros(t.shape()));
    st.v.push_back(Tensor<S>::zeros(t.shape()));
  }
  return st;
}

template <class S>
void adam_step(const NamedParams<S>& params, AdamState<S>& st, double lr, double beta1,
               double beta2, double eps) {
  if (params.size() != st.m.size())
    throw std::runtime_error("adam_step: state covers " + std::to_string(st.m.size()) +
                             " parameters, got " + std::to_string(params.size()));
  ++st.step;
  const double bc1 = 1.0 - std::pow(beta1, double(st.step));
  const double bc2 = 1.0 - std::pow(beta2, double(st.step));
  for (size_t p = 0; p < params.size(); ++p) {
    const auto& [name, t] = params[p];
    Tensor<S> param(t);
    const auto& g = param.grad();
    if (g.empty()) continue;  // untouched by backward: zero gradient
    S* m = st.m[p].data();
    S* v = st.v[p].data();
    S* x = param.data();
    for (int64_t i = 0; i < param.numel(); ++i) {
      const double gi = double(g[size_t(i)]);
      if (!std::isfinite(gi))
        throw std::runtime_error("adam_step: non-finite gradient in parameter " + name);
      const double mi = beta1 * double(m[i]) + (1.0 - beta1) * gi;
      const double vi = beta2 * double(v[i]) + (1.0 - beta2) * gi * gi;
      m[i] = S(mi);
      v[i] = S(vi);
      x[i] = S(double(x[i]) - lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
  }
}

template <class S>
void zero_grads(const NamedParams<S>& params) {
  for (const auto& [name, t] : params) {
    (void)name;
    Tensor<S>(t).zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Stages.
// ---------------------------------------------------------------------------

StageReport train_flow_stage(Models<float>& m, const std::vector<ReposeSample>& data,
                             const TrainConfig& cfg_in, std::ostream* loss_csv) {
  TrainConfig cfg = cfg_in;
  cfg.stage = "flow";
  cfg.validate();
  const std::vector<size_t> pool = paired_pool(data);
  if (pool.empty()) throw std::runtime_error("train_flow_stage: dataset has no paired samples");
  const auto vm_cache = vm_cache_for(data, pool, cfg.vis_eps);

  FeatureExtractor<float> fx(kFxSeed);
  Rng sched(Rng::mix(cfg.seed, kSched)), picker(Rng::mix(cfg.seed, kData));
  NamedParams<float> params = flow_params(m);
  set_requires_grad(params, true);
  AdamState<float> st = make_adam_state(params);
  const double lr = cfg.stage_lr();
  const int steps = cfg.stage_steps();
  const NetworkConfig ncfg = m.cfg;

  StageReport rep;
  for (int step = 1; step <= steps; ++step) {
    std::vector<const ReposeSample*> samples;
    std::vector<const VisibilityMap*> vms;
    for (int i = 0; i < cfg.batch_size; ++i) {
      size_t idx = pool[size_t(picker.uniform_int(0, int(pool.size()) - 1))];
      samples.push_back(&data[idx]);
      vms.push_back(&vm_cache[idx]);
    }
    Batch b = build_batch(samples, vms, cfg);
    const bool teacher = sched.bernoulli(cfg.teacher_force_p);
    rep.teacher_forced += teacher ? 1 : 0;

    Tape<float> tape;
    {
      Tape<float>::Scope scope(tape);
      FlowVisOut<float> out = flowvis_forward(m.flow, b.I_s, b.K_s_hm, b.K_t_hm, ncfg);
      LossBreakdown<float> lb = warp_objective(out, b, teacher, cfg, fx);
      const double total = double(lb.total.item());
      check_finite(total, "train_flow_stage", step);
      zero_grads(params);
      tape.backward(lb.total);
      adam_step(params, st, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      write_terms(loss_csv, step, "flow", lb.terms);
      rep.final_loss = total;
      progress("flow", step, steps, total);
    }
    rep.backward_runs += tape.backward_runs();
    rep.steps_run = step;
  }
  return rep;
}

StageReport train_generator_stage(Models<float>& m, const std::vector<ReposeSample>& data,
                                  const TrainConfig& cfg_in, std::ostream* loss_csv) {
  TrainConfig cfg = cfg_in;
  cfg.stage = "generator";
  cfg.validate();
  const std::vector<size_t> pool = paired_pool(data);
  if (pool.empty())
    throw std::runtime_error("train_generator_stage: dataset has no paired samples");
  const auto vm_cache = vm_cache_for(data, pool, cfg.vis_eps);

  FeatureExtractor<float> fx(kFxSeed);
  Rng sched(Rng::mix(cfg.seed, kSched)), picker(Rng::mix(cfg.seed, kData));
  Rng masker(Rng::mix(cfg.seed, kMask));

  // Flow weights are frozen this stage; freezing via requires_grad also
  // keeps the flow forward off the tape entirely.
  set_requires_grad(flow_params(m), false);
  NamedParams<float> g_params = generator_params(m);
  NamedParams<float> d_params = cond_d_params(m);
  set_requires_grad(g_params, true);
  set_requires_grad(d_params, true);
  AdamState<float> g_st = make_adam_state(g_params), d_st = make_adam_state(d_params);
  const double lr = cfg.stage_lr();
  const int steps = cfg.stage_steps();
  const NetworkConfig ncfg = m.cfg;

  StageReport rep;
  for (int step = 1; step <= steps; ++step) {
    std::vector<const ReposeSample*> samples;
    std::vector<const VisibilityMap*> vms;
    for (int i = 0; i < cfg.batch_size; ++i) {
      size_t idx = pool[size_t(picker.uniform_int(0, int(pool.size()) - 1))];
      samples.push_back(&data[idx]);
      vms.push_back(&vm_cache[idx]);
    }
    Batch b = build_batch(samples, vms, cfg);
    const bool inpaint = sched.bernoulli(cfg.inpaint_p);
    rep.inpainted += inpaint ? 1 : 0;

    Tensor<float> fake;
    Tape<float> tape;
    {
      Tape<float>::Scope scope(tape);
      GenInputs gi;
      if (inpaint) {
        gi = inpaint_inputs(b, cfg, masker);
      } else {
        FlowVisOut<float> out = flowvis_forward(m.flow, b.I_s, b.K_s_hm, b.K_t_hm, ncfg);
        gi = repose_inputs(out, b, cfg);
      }
      Tensor<float> I_gen = generator_forward(m, gi);
      std::function<Tensor<float>(const Tensor<float>&)> dfn =
          [&](const Tensor<float>& stacked) { return discriminator_forward(m.cond_d, stacked); };
      LossBreakdown<float> lb = supervised_loss(I_gen, b.I_t, b.K_t_hm, dfn, fx, cfg.weights);
      const double total = double(lb.total.item());
      check_finite(total, "train_generator_stage", step);
      zero_grads(g_params);
      tape.backward(lb.total);
      adam_step(g_params, g_st, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      write_terms(loss_csv, step, "generator", lb.terms);
      rep.final_loss = total;
      progress("generator", step, steps, total);
      fake = I_gen.detach();
    }
    rep.backward_runs += tape.backward_runs();

    // One discriminator step per generator step.
    Tape<float> d_tape;
    {
      Tape<float>::Scope scope(d_tape);
      Tensor<float> d_real = discriminator_forward(m.cond_d, b.I_t, b.K_t_hm);
      Tensor<float> d_fake = discriminator_forward(m.cond_d, fake, b.K_t_hm);
      Tensor<float> dl = lsgan_discriminator_loss(d_real, d_fake);
      check_finite(double(dl.item()), "train_generator_stage(D)", step);
      zero_grads(d_params);
      d_tape.backward(dl);
      adam_step(d_params, d_st, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      write_terms(loss_csv, step, "generator", {{"d_loss", double(dl.item())}});
    }
    rep.steps_run = step;
  }
  return rep;
}

StageReport finetune_stage(Models<float>& m, const std::vector<ReposeSample>& data,
                           const TrainConfig& cfg_in, std::ostream* loss_csv) {
  TrainConfig cfg = cfg_in;
  cfg.stage = "finetune";
  cfg.validate();
  if (data.empty()) throw std::runtime_error("finetune_stage: empty dataset");
  const std::vector<size_t> paired = paired_pool(data);
  std::vector<size_t> unpaired;
  for (size_t i = 0; i < data.size(); ++i)
    if (!data[i].paired) unpaired.push_back(i);
  auto vm_cache = vm_cache_for(data, paired, cfg.vis_eps);

  FeatureExtractor<float> fx(kFxSeed);
  Rng sched(Rng::mix(cfg.seed, kSched)), picker(Rng::mix(cfg.seed, kData));

  NamedParams<float> main_params = cfg.freeze_flow_in_finetune ? NamedParams<float>{}
                                                               : flow_params(m);
  for (auto& p : generator_params(m)) main_params.push_back(p);
  set_requires_grad(flow_params(m), !cfg.freeze_flow_in_finetune);
  set_requires_grad(generator_params(m), true);
  NamedParams<float> cd_params = cond_d_params(m), pd_params = patch_d_params(m);
  set_requires_grad(cd_params, true);
  set_requires_grad(pd_params, true);
  AdamState<float> main_st = make_adam_state(main_params);
  AdamState<float> cd_st = make_adam_state(cd_params), pd_st = make_adam_state(pd_params);
  const double lr = cfg.stage_lr();
  const int steps = cfg.stage_steps();
  const NetworkConfig ncfg = m.cfg;

  StageReport rep;
  for (int step = 1; step <= steps; ++step) {
    // Schedule draws in a fixed order: teacher forcing first, then one
    // role draw per batch slot.
    const bool teacher = sched.bernoulli(cfg.teacher_force_p);
    rep.teacher_forced += teacher ? 1 : 0;
    std::vector<bool> role_unpaired;
    for (int i = 0; i < cfg.batch_size; ++i)
      role_unpaired.push_back(sched.bernoulli(cfg.unpaired_p));

    std::vector<const ReposeSample*> ps, us;
    std::vector<const VisibilityMap*> pvms, uvms;
    for (bool up : role_unpaired) {
      // The role decides the loss treatment; if the matching pool is empty
      // the sample is borrowed from the other one.
      const std::vector<size_t>& want = up ? unpaired : paired;
      const std::vector<size_t>& have = want.empty() ? (up ? paired : unpaired) : want;
      size_t idx = have[size_t(picker.uniform_int(0, int(have.size()) - 1))];
      if (up) {
        us.push_back(&data[idx]);
        uvms.push_back(nullptr);
      } else {
        // Borrowed samples were not in the paired pool, so fill their map on
        // first use.
        if (vm_cache[idx].height == 0)
          vm_cache[idx] = compute_vismap_gt(data[idx].uv_s, data[idx].uv_t, float(cfg.vis_eps));
        ps.push_back(&data[idx]);
        pvms.push_back(&vm_cache[idx]);
      }
    }
    rep.paired_seen += int(ps.size());
    rep.unpaired_seen += int(us.size());

    Tensor<float> fake_p, fake_u;
    Batch bp, bu;
    std::vector<std::pair<std::string, double>> terms;
    Tape<float> tape;
    {
      Tape<float>::Scope scope(tape);
      Tensor<float> total = Tensor<float>::scalar(0.0f);

      if (!ps.empty()) {
        bp = build_batch(ps, pvms, cfg);
        FlowVisOut<float> out = flowvis_forward(m.flow, bp.I_s, bp.K_s_hm, bp.K_t_hm, ncfg);
        LossBreakdown<float> wrp = warp_objective(out, bp, teacher, cfg, fx);
        Tensor<float> I_gen = generator_forward(m, repose_inputs(out, bp, cfg));
        std::function<Tensor<float>(const Tensor<float>&)> dfn =
            [&](const Tensor<float>& stacked) { return discriminator_forward(m.cond_d, stacked); };
        LossBreakdown<float> sup =
            supervised_loss(I_gen, bp.I_t, bp.K_t_hm, dfn, fx, cfg.weights);
        total = add(total, add(wrp.total, sup.total));
        for (const auto& [name, v] : wrp.terms)
          if (name != "total") terms.emplace_back("wrp_" + name, v);
        for (const auto& [name, v] : sup.terms)
          if (name != "total") terms.emplace_back("sup_" + name, v);
        fake_p = I_gen.detach();
      }

      if (!us.empty()) {
        bu = build_batch(us, {}, cfg);  // unpaired samples carry no GT maps
        FlowVisOut<float> out = flowvis_forward(m.flow, bu.I_s, bu.K_s_hm, bu.K_t_hm, ncfg);
        Tensor<float> I_gen = generator_forward(m, repose_inputs(out, bu, cfg));
        if (cfg.use_self_supervised && cfg.weights.lambda_ss > 0) {
          Tensor<float> l_ss =
              scale(patchgan_generator_loss(patch_discriminator_forward(m.patch_d, I_gen)),
                    double(cfg.weights.lambda_ss));
          total = add(total, l_ss);
          terms.emplace_back("l_ss", double(l_ss.item()));
        }
        fake_u = I_gen.detach();
      }

      const double tv = double(total.item());
      check_finite(tv, "finetune_stage", step);
      terms.emplace_back("total", tv);
      zero_grads(main_params);
      tape.backward(total);
      adam_step(main_params, main_st, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      write_terms(loss_csv, step, "finetune", terms);
      rep.final_loss = tv;
      progress("finetune", step, steps, tv);
    }
    rep.backward_runs += tape.backward_runs();

    if (fake_p.defined()) {
      Tape<float> d_tape;
      Tape<float>::Scope scope(d_tape);
      Tensor<float> d_real = discriminator_forward(m.cond_d, bp.I_t, bp.K_t_hm);
      Tensor<float> d_fake = discriminator_forward(m.cond_d, fake_p, bp.K_t_hm);
      Tensor<float> dl = lsgan_discriminator_loss(d_real, d_fake);
      zero_grads(cd_params);
      d_tape.backward(dl);
      adam_step(cd_params, cd_st, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      write_terms(loss_csv, step, "finetune", {{"d_loss", double(dl.item())}});
    }

    // Patch critic: real corpus images vs unpaired generations.
    if (fake_u.defined()) {
      Tape<float> d_tape;
      Tape<float>::Scope scope(d_tape);
      Tensor<float> p_real = patch_discriminator_forward(m.patch_d, bu.I_t);
      Tensor<float> p_fake = patch_discriminator_forward(m.patch_d, fake_u);
      Tensor<float> dl = patchgan_discriminator_loss(p_real, p_fake);
      zero_grads(pd_params);
      d_tape.backward(dl);
      adam_step(pd_params, pd_st, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      write_terms(loss_csv, step, "finetune", {{"patch_d_loss", double(dl.item())}});
    }
    rep.steps_run = step;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Inference + checkpoints.
// ---------------------------------------------------------------------------

InferenceResult repose_inference(const Models<float>& m, const Tensor<float>& I_s,
                                 const Keypoints& K_s, const Keypoints& K_t,
                                 const TrainConfig& cfg) {
  const int S = m.cfg.image_size;
  if (I_s.rank() != 4 || I_s.dim(0) != 1 || I_s.dim(1) != 3 || I_s.dim(2) != S ||
      I_s.dim(3) != S)
    throw std::runtime_error("repose_inference: image_size: expected [1,3," + std::to_string(S) +
                             "," + std::to_string(S) + "], got " + shape_str(I_s.shape()));

  Tensor<float> hm_s = cfg.use_source_keypoints
                           ? rasterize_keypoints<float>(K_s, S)
                           : Tensor<float>::zeros({1, kNumJoints, S, S});
  Tensor<float> hm_t = rasterize_keypoints<float>(K_t, S);

  FlowVisOut<float> out = flowvis_forward(m.flow, I_s, hm_s, hm_t, m.cfg);

  InferenceResult r;
  r.flow_v = out.flow_v_full;
  r.flow_i = out.flow_i_full;
  r.vm = cfg.use_vismap ? vismap_from_logits(out.raw.vm_logits, 0) : VisibilityMap{};

  Tensor<float> mv, mi, onehot;
  if (cfg.use_vismap) {
    auto [v, i] = split_masks<float>(r.vm);
    mv = v;
    mi = i;
    onehot = vismap_one_hot<float>(r.vm);
  } else {
    mv = Tensor<float>::full({1, 1, S, S}, 1.0f);
    mi = Tensor<float>::zeros({1, 1, S, S});
    onehot = Tensor<float>::zeros({1, 3, S, S});
  }
  r.I_v = scale_channels(warp_bilinear(I_s, r.flow_v), mv);
  r.I_i = cfg.use_invisible_warp ? scale_channels(warp_bilinear(I_s, r.flow_i), mi)
                                 : Tensor<float>::zeros({1, 3, S, S});

  GenInputs gi;
  gi.I_v = r.I_v;
  gi.I_i = r.I_i;
  gi.vm_onehot = onehot;
  gi.pose_src = hm_s;
  gi.pose_tgt = hm_t;
  r.I_gen = generator_forward(m, gi);
  return r;
}

void save_models(const std::string& path, const Models<float>& m) {
  auto entries = named_params(m);
  auto meta = [&](const char* name, int v) {
    entries.emplace_back(name, Tensor<float>::scalar(float(v)));
  };
  meta("meta.image_size", m.cfg.image_size);
  meta("meta.pyramid_levels", m.cfg.pyramid_levels);
  meta("meta.base_channels", m.cfg.base_channels);
  meta("meta.pose_joints", m.cfg.pose_joints);
  meta("meta.vis_classes", m.cfg.vis_classes);
  save_checkpoint(path, entries);
}

Models<float> load_models(const std::string& path) {
  auto entries = load_checkpoint<float>(path);
  auto find = [&](const std::string& name) -> Tensor<float>* {
    for (auto& [n, t] : entries)
      if (n == name) return &t;
    return nullptr;
  };
  NetworkConfig nc;
  auto meta = [&](const char* name, int& out) {
    Tensor<float>* t = find(name);
    if (!t) throw std::runtime_error("load_models: " + path + ": missing " + name);
    out = int(std::lround(double(t->item())));
  };
  meta("meta.image_size", nc.image_size);
  meta("meta.pyramid_levels", nc.pyramid_levels);
  meta("meta.base_channels", nc.base_channels);
  meta("meta.pose_joints", nc.pose_joints);
  meta("meta.vis_classes", nc.vis_classes);

  Models<float> m = build_models<float>(nc);
  size_t used = 5;
  for (auto& [name, param] : named_params(m)) {
    Tensor<float>* src = find(name);
    if (!src) throw std::runtime_error("load_models: " + path + ": missing parameter " + name);
    if (!same_shape(src->shape(), param.shape()))
      throw std::runtime_error("load_models: " + path + ": parameter " + name + " has shape " +
                               shape_str(src->shape()) + ", model expects " +
                               shape_str(param.shape()));
    Tensor<float> dst(param);
    std::copy(src->values().begin(), src->values().end(), dst.values().begin());
    ++used;
  }
  if (used != entries.size())
    throw std::runtime_error("load_models: " + path + ": checkpoint holds " +
                             std::to_string(entries.size()) + " records, model uses " +
                             std::to_string(used));
  return m;
}

std::vector<ReposeSample> load_corpus(const std::string& root) {
  std::vector<ReposeSample> out;
  for (const std::string& dir : list_sample_dirs(root)) out.push_back(load_sample(dir));
  if (out.empty()) throw std::runtime_error("load_corpus: no sample directories under " + root);
  return out;
}

template AdamState<float> make_adam_state(const NamedParams<float>&);
template AdamState<double> make_adam_state(const NamedParams<double>&);
template void adam_step(const NamedParams<float>&, AdamState<float>&, double, double, double,
                        double);
template void adam_step(const NamedParams<double>&, AdamState<double>&, double, double, double,
                        double);
template void zero_grads(const NamedParams<float>&);
template void zero_grads(const NamedParams<double>&);

}  // namespace vgw
