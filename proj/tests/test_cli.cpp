#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "../tools/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vgwarp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = vgw::run_cli(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path fresh_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

const std::vector<std::string> kSmallNet = {"--image_size", "32", "--pyramid_levels", "2",
                                            "--base_channels", "4"};

std::vector<std::string> with_net(std::vector<std::string> args) {
  args.insert(args.end(), kSmallNet.begin(), kSmallNet.end());
  return args;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help lists every subcommand") {
  CliResult r = cli({"--help"});
  CHECK(r.code == 0);
  for (const char* sub : {"gen-data", "gradcheck", "train-flow", "train-generator", "finetune",
                          "repose", "eval", "describe"})
    CHECK(r.out.find(sub) != std::string::npos);
}

TEST_CASE("subcommand help exposes every config key as a flag") {
  CliResult r = cli({"train-flow", "--help"});
  CHECK(r.code == 0);
  for (const char* key :
       {"--config", "--data", "--out", "--loss_csv", "--batch_size", "--lr", "--adam_beta1",
        "--adam_beta2", "--adam_eps", "--steps", "--teacher_force_p", "--inpaint_p",
        "--unpaired_p", "--use_vismap", "--use_invisible_warp", "--use_source_keypoints",
        "--use_self_supervised", "--freeze_flow_in_finetune", "--seed", "--image_size",
        "--pyramid_levels", "--base_channels", "--vis_eps", "--beta1", "--beta2", "--beta3",
        "--beta4", "--alpha_rec", "--alpha_per", "--alpha_sty", "--alpha_adv", "--lambda_cce",
        "--lambda_ss"})
    CHECK(r.out.find(key) != std::string::npos);
}

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"no-such-command"}).code == 1);
  CliResult r = cli({"gen-data", "--bogus_flag", "1"});
  CHECK(r.code == 1);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK(cli({"gen-data", "--n", "2"}).code == 1);  // --out missing
  CHECK(cli({"repose", "--sample", "x"}).code == 1);  // --ckpt missing
}

TEST_CASE("gen-data writes a deterministic corpus") {
  fs::path a = fresh_dir("vgw_cli_gen_a"), b = fresh_dir("vgw_cli_gen_b");
  CliResult r = cli(with_net({"gen-data", "--n", "4", "--out", a.string(), "--seed", "77"}));
  CHECK(r.code == 0);
  CHECK(r.out.find("wrote 4 samples") != std::string::npos);
  CHECK(fs::exists(a / "000000" / "src.png"));
  CHECK(fs::exists(a / "000003" / "meta.json"));

  CHECK(cli(with_net({"gen-data", "--n", "4", "--out", b.string(), "--seed", "77"})).code == 0);
  CHECK(slurp(a / "000001" / "src.png") == slurp(b / "000001" / "src.png"));
  CHECK(slurp(a / "000002" / "kps.json") == slurp(b / "000002" / "kps.json"));

  fs::path c = fresh_dir("vgw_cli_gen_c");
  CHECK(cli(with_net({"gen-data", "--n", "4", "--out", c.string(), "--seed", "78"})).code == 0);
  CHECK(slurp(a / "000001" / "src.png") != slurp(c / "000001" / "src.png"));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("describe prints the parameter table and resolved config") {
  CliResult r = cli(with_net({"describe"}));
  CHECK(r.code == 0);
  CHECK(r.out.find("image_size=32") != std::string::npos);
  CHECK(r.out.find("base_channels=4") != std::string::npos);
  CHECK(r.out.find("total parameters:") != std::string::npos);
  CHECK(r.out.find("flow.") != std::string::npos);
  CHECK(r.out.find("dec.") != std::string::npos);
  CHECK(r.out.find("stage = ") != std::string::npos);
}

TEST_CASE("explicit flags override the config file") {
  fs::path cfg = fs::temp_directory_path() / "vgw_cli_prec.cfg";
  {
    std::ofstream out(cfg);
    out << "batch_size = 3\nteacher_force_p = 0.25\n";
  }
  CliResult file_only = cli(with_net({"describe", "--config", cfg.string()}));
  CHECK(file_only.code == 0);
  CHECK(file_only.out.find("batch_size = 3") != std::string::npos);
  CHECK(file_only.out.find("teacher_force_p = 0.25") != std::string::npos);

  CliResult flag_wins =
      cli(with_net({"describe", "--config", cfg.string(), "--batch_size", "2"}));
  CHECK(flag_wins.code == 0);
  CHECK(flag_wins.out.find("batch_size = 2") != std::string::npos);
  CHECK(flag_wins.out.find("teacher_force_p = 0.25") != std::string::npos);
  fs::remove(cfg);
}

TEST_CASE("training pipeline runs end to end") {
  fs::path root = fresh_dir("vgw_cli_pipe");
  fs::path data = root / "data", evaldata = root / "eval_data";
  fs::create_directories(root);

  REQUIRE(cli(with_net({"gen-data", "--n", "6", "--out", data.string(), "--seed", "5",
                        "--unpaired_fraction", "0.5"}))
              .code == 0);
  REQUIRE(cli(with_net({"gen-data", "--n", "2", "--out", evaldata.string(), "--seed", "11",
                        "--unpaired_fraction", "0"}))
              .code == 0);

  fs::path ck1 = root / "flow.vgwc", ck2 = root / "gen.vgwc", ck3 = root / "ft.vgwc";
  fs::path losses = root / "loss.csv";
  CliResult tf = cli(with_net({"train-flow", "--data", data.string(), "--out", ck1.string(),
                               "--steps", "2", "--batch_size", "2", "--seed", "9", "--loss_csv",
                               losses.string()}));
  CHECK(tf.code == 0);
  CHECK(tf.out.find("flow: ran 2 steps") != std::string::npos);
  CHECK(tf.out.find("saved checkpoint to " + ck1.string()) != std::string::npos);
  {
    std::string csv = slurp(losses);
    CHECK(csv.rfind("1,flow,", 0) == 0);
    CHECK(csv.find("total") != std::string::npos);
  }

  CliResult ds = cli({"describe", "--ckpt", ck1.string()});
  CHECK(ds.code == 0);
  CHECK(ds.out.find("image_size=32") != std::string::npos);  // dims come from the checkpoint

  CliResult tg = cli(with_net({"train-generator", "--data", data.string(), "--ckpt", ck1.string(),
                               "--out", ck2.string(), "--steps", "1", "--batch_size", "2",
                               "--seed", "9"}));
  CHECK(tg.code == 0);
  CHECK(tg.out.find("generator: ran 1 steps") != std::string::npos);

  CliResult ft = cli(with_net({"finetune", "--data", data.string(), "--ckpt", ck2.string(),
                               "--out", ck3.string(), "--steps", "1", "--batch_size", "2",
                               "--seed", "9"}));
  CHECK(ft.code == 0);
  CHECK(ft.out.find("finetune: ran 1 steps") != std::string::npos);
  CHECK(ft.out.find("paired") != std::string::npos);

  fs::path rdir = root / "repose";
  CliResult rp = cli({"repose", "--ckpt", ck3.string(), "--sample", (data / "000000").string(),
                      "--out", rdir.string(), "--debug"});
  CHECK(rp.code == 0);
  for (const char* img : {"i_gen.png", "vismap.png", "i_v.png", "i_i.png", "flow_v.png",
                          "flow_i.png", "warped_full.png"})
    CHECK(fs::exists(rdir / img));

  fs::path rplain = root / "repose_plain";
  CHECK(cli({"repose", "--ckpt", ck3.string(), "--sample", (data / "000001").string(), "--out",
             rplain.string()})
            .code == 0);
  CHECK(fs::exists(rplain / "i_gen.png"));
  CHECK(!fs::exists(rplain / "vismap.png"));

  fs::path csv = root / "eval.csv";
  CliResult ev = cli({"eval", "--ckpt", ck3.string(), "--data", evaldata.string(), "--out",
                      csv.string()});
  CHECK(ev.code == 0);
  CHECK(ev.out.find("evaluated 2 samples") != std::string::npos);
  CHECK(ev.out.find("mean ssim") != std::string::npos);
  {
    std::string text = slurp(csv);
    CHECK(text.rfind("sample_id,ssim,l1,l1_visible,gram_invisible,ssim_baseline,l1_baseline\n",
                     0) == 0);
  }

  // Checkpoint dims win silently; a pinned conflicting flag is an error.
  CliResult mism = cli({"repose", "--ckpt", ck3.string(), "--sample", (data / "000000").string(),
                        "--out", (root / "x").string(), "--image_size", "64"});
  CHECK(mism.code == 2);
  CHECK(mism.err.find("checkpoint/config mismatch") != std::string::npos);
  CHECK(mism.err.find("image_size") != std::string::npos);

  CliResult nock = cli({"repose", "--ckpt", (root / "missing.vgwc").string(), "--sample",
                        (data / "000000").string(), "--out", (root / "y").string()});
  CHECK(nock.code == 2);
  CHECK(nock.err.find("error:") != std::string::npos);

  fs::remove_all(root);
}

}  // TEST_SUITE
