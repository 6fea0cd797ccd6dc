#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "vgw/gradsuite.hpp"
#include "vgw/metrics.hpp"
#include "vgw/training.hpp"
#include "vgw/warp.hpp"

extern "C" void openblas_set_num_threads(int);

namespace vgw {
namespace {

namespace fs = std::filesystem;

// Every TrainConfig key exposed as a flag, one-to-one with the config file.
const std::vector<std::pair<const char*, const char*>> kCfgFlags = {
    {"batch_size", "samples per training step"},
    {"lr", "learning rate (0 = stage default)"},
    {"adam_beta1", "Adam first-moment decay"},
    {"adam_beta2", "Adam second-moment decay"},
    {"adam_eps", "Adam denominator epsilon"},
    {"steps", "training steps (0 = stage default)"},
    {"teacher_force_p", "probability of GT masks in the warping losses"},
    {"inpaint_p", "probability of the inpainting auxiliary task"},
    {"unpaired_p", "per-sample probability of an unpaired draw"},
    {"use_vismap", "predict and use the visibility map (true/false)"},
    {"use_invisible_warp", "keep the invisible warp branch (true/false)"},
    {"use_source_keypoints", "feed source keypoints (true/false)"},
    {"use_self_supervised", "apply the unpaired patch loss (true/false)"},
    {"freeze_flow_in_finetune", "freeze flow weights during finetune"},
    {"seed", "master RNG seed"},
    {"image_size", "square image extent in pixels"},
    {"pyramid_levels", "flow pyramid levels (image_size == 8*2^levels)"},
    {"base_channels", "channel width of the networks"},
    {"vis_eps", "UV matching tolerance for GT visibility"},
    {"beta1", "warping loss: visible/invisible perceptual weight"},
    {"beta2", "warping loss: visible L1 weight"},
    {"beta3", "warping loss: flow smoothness weight"},
    {"beta4", "warping loss: invisible style weight"},
    {"alpha_rec", "supervised loss: reconstruction weight"},
    {"alpha_per", "supervised loss: perceptual weight"},
    {"alpha_sty", "supervised loss: style weight"},
    {"alpha_adv", "supervised loss: adversarial weight"},
    {"lambda_cce", "visibility cross-entropy weight"},
    {"lambda_ss", "self-supervised patch loss weight"},
};

struct CfgCapture {
  std::string config_path;
  std::map<std::string, std::string> flag_vals;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key = value config file");
    for (const auto& [key, desc] : kCfgFlags)
      cmd->add_option("--" + std::string(key), flag_vals[key], desc);
  }

  // defaults < config file < explicit flags
  TrainConfig resolve(CLI::App* cmd, std::set<std::string>* explicit_keys = nullptr) const {
    TrainConfig cfg;
    if (!config_path.empty()) {
      cfg = load_train_config(config_path, cfg);
      if (explicit_keys) {
        std::ifstream in(config_path);
        std::string line;
        while (std::getline(in, line)) {
          if (size_t h = line.find('#'); h != std::string::npos) line.resize(h);
          size_t eq = line.find('=');
          if (eq == std::string::npos) continue;
          std::string key = line.substr(0, eq);
          key.erase(0, key.find_first_not_of(" \t"));
          key.erase(key.find_last_not_of(" \t") + 1);
          if (!key.empty()) explicit_keys->insert(key);
        }
      }
    }
    for (const auto& [key, value] : flag_vals) {
      if (cmd->count("--" + key) == 0) continue;
      apply_config_kv(cfg, key, value);
      if (explicit_keys) explicit_keys->insert(key);
    }
    return cfg;
  }
};

// Checkpoint dimensions win unless the user pinned a conflicting value.
void reconcile_ckpt_dims(TrainConfig& cfg, const NetworkConfig& meta,
                         const std::set<std::string>& explicit_keys) {
  auto fix = [&](const char* key, int& field, int ckpt) {
    if (explicit_keys.count(key) && field != ckpt)
      throw std::runtime_error(std::string("checkpoint/config mismatch: ") + key + ": config " +
                               std::to_string(field) + ", checkpoint " + std::to_string(ckpt));
    field = ckpt;
  };
  fix("image_size", cfg.image_size, meta.image_size);
  fix("pyramid_levels", cfg.pyramid_levels, meta.pyramid_levels);
  fix("base_channels", cfg.base_channels, meta.base_channels);
}

std::ofstream open_out_file(const std::string& path, const char* what) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(std::string(what) + ": cannot open " + path);
  return out;
}

void print_report(std::ostream& out, const char* stage, const StageReport& rep) {
  out << stage << ": ran " << rep.steps_run << " steps, final loss " << rep.final_loss;
  if (rep.teacher_forced) out << ", teacher-forced " << rep.teacher_forced;
  if (rep.inpainted) out << ", inpainted " << rep.inpainted;
  if (rep.paired_seen || rep.unpaired_seen)
    out << ", paired " << rep.paired_seen << " / unpaired " << rep.unpaired_seen;
  out << "\n";
}

int cmd_gen_data(CLI::App* cmd, const CfgCapture& cc, int n, const std::string& out_dir,
                 double unpaired_fraction, std::ostream& out) {
  TrainConfig cfg = cc.resolve(cmd);
  generate_corpus(out_dir, n, cfg.seed, unpaired_fraction, cfg.image_size);
  out << "wrote " << n << " samples to " << out_dir << "\n";
  return 0;
}

int cmd_gradcheck(CLI::App* cmd, const CfgCapture& cc, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = cc.resolve(cmd);
  const auto rows = run_gradient_suite(cfg.seed);
  size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.3e", r.max_rel_err);
    out << r.name << std::string(width + 2 - r.name.size(), ' ') << buf << "  "
        << (r.pass ? "pass" : "FAIL") << "\n";
    if (!r.pass) out << "  " << r.detail << "\n";
  }
  out << rows.size() << " ops checked, tolerance " << kGradSuiteTol << "\n";
  if (!all_pass(rows)) {
    err << "error: gradient checks failed\n";
    return 2;
  }
  return 0;
}

using StageFn = StageReport (*)(Models<float>&, const std::vector<ReposeSample>&,
                                const TrainConfig&, std::ostream*);

int cmd_train(CLI::App* cmd, const CfgCapture& cc, const std::string& stage, StageFn fn,
              const std::string& data_dir, const std::string& ckpt_in,
              const std::string& ckpt_out, const std::string& loss_csv_path,
              std::ostream& out) {
  std::set<std::string> explicit_keys;
  TrainConfig cfg = cc.resolve(cmd, &explicit_keys);
  cfg.stage = stage;

  Models<float> m = [&] {
    if (ckpt_in.empty()) return build_models<float>(cfg.network());
    Models<float> loaded = load_models(ckpt_in);
    reconcile_ckpt_dims(cfg, loaded.cfg, explicit_keys);
    return loaded;
  }();
  cfg.validate();

  std::vector<ReposeSample> data = load_corpus(data_dir);
  std::ofstream csv;
  if (!loss_csv_path.empty()) csv = open_out_file(loss_csv_path, "loss csv");
  StageReport rep = fn(m, data, cfg, loss_csv_path.empty() ? nullptr : &csv);
  save_models(ckpt_out, m);
  print_report(out, stage.c_str(), rep);
  out << "saved checkpoint to " << ckpt_out << "\n";
  return 0;
}

int cmd_repose(CLI::App* cmd, const CfgCapture& cc, const std::string& ckpt,
               const std::string& sample_dir, const std::string& out_dir, bool debug,
               std::ostream& out) {
  std::set<std::string> explicit_keys;
  TrainConfig cfg = cc.resolve(cmd, &explicit_keys);
  Models<float> m = load_models(ckpt);
  reconcile_ckpt_dims(cfg, m.cfg, explicit_keys);
  ReposeSample s = load_sample(sample_dir);

  InferenceResult r = repose_inference(m, s.I_s, s.K_s, s.K_t, cfg);
  fs::create_directories(out_dir);
  auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
  write_image8(path("i_gen.png"), to_image8(r.I_gen));
  if (debug) {
    VisibilityMap vm = r.vm;
    if (vm.height == 0) {  // use_vismap off: render an all-background map
      vm.height = vm.width = m.cfg.image_size;
      vm.classes.assign(size_t(vm.height) * size_t(vm.width), VisibilityMap::kBackground);
    }
    write_image8(path("vismap.png"), vismap_to_image(vm));
    write_image8(path("i_v.png"), to_image8(r.I_v));
    write_image8(path("i_i.png"), to_image8(r.I_i));
    write_image8(path("flow_v.png"), flow_to_image(r.flow_v));
    write_image8(path("flow_i.png"), flow_to_image(r.flow_i));
    write_image8(path("warped_full.png"), to_image8(warp_bilinear(s.I_s, r.flow_v)));
  }
  out << "wrote " << path("i_gen.png") << (debug ? " and 6 debug images" : "") << "\n";
  return 0;
}

int cmd_eval(CLI::App* cmd, const CfgCapture& cc, const std::string& ckpt,
             const std::string& data_dir, const std::string& csv_path, std::ostream& out) {
  std::set<std::string> explicit_keys;
  TrainConfig cfg = cc.resolve(cmd, &explicit_keys);
  Models<float> m = load_models(ckpt);
  reconcile_ckpt_dims(cfg, m.cfg, explicit_keys);

  EvalReport rep = evaluate(m, load_corpus(data_dir), cfg);
  std::ofstream csv = open_out_file(csv_path, "eval csv");
  write_eval_csv(csv, rep);
  out << "evaluated " << rep.count() << " samples -> " << csv_path << "\n";
  out << "mean ssim " << rep.mean.ssim << " (baseline " << rep.mean.ssim_baseline << ")\n";
  out << "mean l1 " << rep.mean.l1 << " (baseline " << rep.mean.l1_baseline << ")\n";
  out << "mean visible l1 " << rep.mean.l1_visible << " (baseline "
      << rep.mean.l1_visible_baseline << ")\n";
  out << "mean invisible gram " << rep.mean.gram_invisible << "\n";
  return 0;
}

int cmd_describe(CLI::App* cmd, const CfgCapture& cc, const std::string& ckpt,
                 std::ostream& out) {
  std::set<std::string> explicit_keys;
  TrainConfig cfg = cc.resolve(cmd, &explicit_keys);
  if (!ckpt.empty()) {
    Models<float> m = load_models(ckpt);
    reconcile_ckpt_dims(cfg, m.cfg, explicit_keys);
    out << describe_models(m);
  } else {
    out << describe_models(build_models<float>(cfg.network()));
  }
  out << "\n" << dump_train_config(cfg);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  openblas_set_num_threads(1);  // deterministic single-threaded numerics

  CLI::App app{"visibility-guided flow warping and human reposing toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic articulated-sprite corpus");
  CfgCapture gen_cc;
  gen_cc.attach(gen);
  int gen_n = 0;
  std::string gen_out;
  double gen_unpaired = 0.5;
  gen->add_option("--n", gen_n, "number of samples")->required();
  gen->add_option("--out", gen_out, "corpus output directory")->required();
  gen->add_option("--unpaired_fraction", gen_unpaired, "fraction flagged unpaired");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks for every operator");
  CfgCapture gc_cc;
  gc_cc.attach(gc);

  // train commands
  struct TrainCmd {
    CLI::App* cmd = nullptr;
    CfgCapture cc;
    std::string data, ckpt_in, ckpt_out, loss_csv;
  };
  auto add_train = [&](const char* name, const char* desc, bool needs_ckpt) {
    TrainCmd tc;
    tc.cmd = app.add_subcommand(name, desc);
    tc.cc.attach(tc.cmd);
    tc.cmd->add_option("--data", tc.data, "corpus root directory")->required();
    if (needs_ckpt)
      tc.cmd->add_option("--ckpt", tc.ckpt_in, "input checkpoint")->required();
    tc.cmd->add_option("--out", tc.ckpt_out, "output checkpoint path")->required();
    tc.cmd->add_option("--loss_csv", tc.loss_csv, "per-term loss log (step,stage,term,value)");
    return tc;
  };
  TrainCmd tf = add_train("train-flow", "pretrain the flow/visibility module", false);
  TrainCmd tg = add_train("train-generator", "train the generator on a frozen flow module", true);
  TrainCmd ft = add_train("finetune", "finetune end to end with unpaired mixing", true);

  // repose
  auto* rp = app.add_subcommand("repose", "generate one reposed image from a sample");
  CfgCapture rp_cc;
  rp_cc.attach(rp);
  std::string rp_ckpt, rp_sample, rp_out = ".";
  bool rp_debug = false;
  rp->add_option("--ckpt", rp_ckpt, "model checkpoint")->required();
  rp->add_option("--sample", rp_sample, "sample directory")->required();
  rp->add_option("--out", rp_out, "output directory");
  rp->add_flag("--debug", rp_debug, "also write vismap, warped inputs, and flow renderings");

  // eval
  auto* ev = app.add_subcommand("eval", "score a checkpoint on a held-out paired split");
  CfgCapture ev_cc;
  ev_cc.attach(ev);
  std::string ev_ckpt, ev_data, ev_csv = "eval.csv";
  ev->add_option("--ckpt", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--data", ev_data, "held-out corpus root")->required();
  ev->add_option("--out", ev_csv, "output CSV path");

  // describe
  auto* ds = app.add_subcommand("describe", "print the model parameter table");
  CfgCapture ds_cc;
  ds_cc.attach(ds);
  std::string ds_ckpt;
  ds->add_option("--ckpt", ds_ckpt, "describe this checkpoint instead of the config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs[0]->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    auto subs = app.get_subcommands();
    err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs[0]->help());
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen, gen_cc, gen_n, gen_out, gen_unpaired, out);
    if (gc->parsed()) return cmd_gradcheck(gc, gc_cc, out, err);
    if (tf.cmd->parsed())
      return cmd_train(tf.cmd, tf.cc, "flow", &train_flow_stage, tf.data, "", tf.ckpt_out,
                       tf.loss_csv, out);
    if (tg.cmd->parsed())
      return cmd_train(tg.cmd, tg.cc, "generator", &train_generator_stage, tg.data, tg.ckpt_in,
                       tg.ckpt_out, tg.loss_csv, out);
    if (ft.cmd->parsed())
      return cmd_train(ft.cmd, ft.cc, "finetune", &finetune_stage, ft.data, ft.ckpt_in,
                       ft.ckpt_out, ft.loss_csv, out);
    if (rp->parsed()) return cmd_repose(rp, rp_cc, rp_ckpt, rp_sample, rp_out, rp_debug, out);
    if (ev->parsed()) return cmd_eval(ev, ev_cc, ev_ckpt, ev_data, ev_csv, out);
    if (ds->parsed()) return cmd_describe(ds, ds_cc, ds_ckpt, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << "error: no command dispatched\n";
  return 1;
}

}  // namespace vgw
