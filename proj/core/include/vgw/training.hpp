#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vgw/data.hpp"
#include "vgw/losses.hpp"
#include "vgw/networks.hpp"

namespace vgw {

/// Everything a run needs, one flat document. lr and steps of 0 mean "use
/// the stage default" (lr 1e-4 / 1e-4 / 5e-5, steps 20000 / 20000 / 10000).
struct TrainConfig {
  std::string stage = "flow";  // flow | generator | finetune
  int batch_size = 8;
  double lr = 0.0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  int steps = 0;
  double teacher_force_p = 0.5;  // warping losses use GT masks this often
  double inpaint_p = 0.2;        // generator steps that train inpainting
  double unpaired_p = 0.5;       // finetune per-sample unpaired draw
  bool use_vismap = true;           // off: no mask split, no cce, no vm input
  bool use_invisible_warp = true;   // off: invisible branch zeroed out
  bool use_source_keypoints = true; // off: K_s channels fed as zeros
  bool use_self_supervised = true;  // off: unpaired samples get no loss
  bool freeze_flow_in_finetune = false;
  uint64_t seed = 0;
  int image_size = 64, pyramid_levels = 3, base_channels = 32;
  double vis_eps = 0.02;  // chart-matching tolerance for GT visibility
  LossWeights weights;

  void validate() const;
  double stage_lr() const;
  int stage_steps() const;
  NetworkConfig network() const;
};

/// One `key = value` assignment; throws on unknown keys or bad values.
/// Keys are the TrainConfig field names (weights as beta1..beta4,
/// alpha_rec/per/sty/adv, lambda_cce, lambda_ss).
void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Flat key = value file, '#' comments. Values override `base`.
TrainConfig load_train_config(const std::string& path, TrainConfig base = {});
std::string dump_train_config(const TrainConfig& cfg);

/// Seed of the frozen perceptual/style feature extractor. Fixed so losses
/// and the evaluation Gram metric agree across stages and runs.
uint64_t feature_extractor_seed();

template <class S>
struct AdamState {
  std::vector<Tensor<S>> m, v;  // aligned with the parameter list
  int64_t step = 0;
};

template <class S>
AdamState<S> make_adam_state(const NamedParams<S>& params);

/// Bias-corrected Adam; moment math runs in double. Parameters with no
/// accumulated gradient are treated as zero-gradient (unchanged). A
/// non-finite gradient aborts naming the parameter.
template <class S>
void adam_step(const NamedParams<S>& params, AdamState<S>& st, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

template <class S>
void zero_grads(const NamedParams<S>& params);

struct StageReport {
  int steps_run = 0;
  int teacher_forced = 0;  // schedule draws that came up true
  int inpainted = 0;
  int paired_seen = 0, unpaired_seen = 0;  // finetune per-sample roles
  uint64_t backward_runs = 0;              // main-objective tape sweeps
  double final_loss = 0.0;
};

/// Flow-module pretraining on paired samples. Per step: one Bernoulli
/// teacher-forcing draw decides whether the warping losses see GT masks or
/// detached predicted ones; the visibility cross-entropy always targets GT.
/// Writes "step,stage,term,value" CSV rows when loss_csv is given.
StageReport train_flow_stage(Models<float>& m, const std::vector<ReposeSample>& data,
                             const TrainConfig& cfg, std::ostream* loss_csv);

/// Generator training with the flow module frozen. Per step one Bernoulli
/// draw picks the inpainting auxiliary task (masked target as sole texture
/// input, identity pose) or the reposing pathway; the conditional
/// discriminator takes one step per generator step.
StageReport train_generator_stage(Models<float>& m, const std::vector<ReposeSample>& data,
                                  const TrainConfig& cfg, std::ostream* loss_csv);

/// End-to-end finetuning with intra-batch paired/unpaired mixing. Paired
/// samples pay the warping + supervised objectives, unpaired ones only the
/// self-supervised patch-adversarial term; one backward pass covers both.
/// The patch discriminator trains on corpus images vs unpaired generations.
StageReport finetune_stage(Models<float>& m, const std::vector<ReposeSample>& data,
                           const TrainConfig& cfg, std::ostream* loss_csv);

struct InferenceResult {
  Tensor<float> I_gen;            // [1,3,S,S]
  Tensor<float> I_v, I_i;         // masked warped inputs the decoder saw
  Tensor<float> flow_v, flow_i;   // full-resolution fields
  VisibilityMap vm;               // predicted classes
};

/// Deterministic single-sample generation; honors the ablation switches.
InferenceResult repose_inference(const Models<float>& m, const Tensor<float>& I_s,
                                 const Keypoints& K_s, const Keypoints& K_t,
                                 const TrainConfig& cfg);

/// Checkpoints hold every named parameter plus the network dimensions, so a
/// model can be rebuilt without the original config. Mismatched or missing
/// entries fail naming the field.
void save_models(const std::string& path, const Models<float>& m);
Models<float> load_models(const std::string& path);

/// Loads every sample directory under a corpus root (sorted by id).
std::vector<ReposeSample> load_corpus(const std::string& root);

}  // namespace vgw
