#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "dbtanet/data/png_io.hpp"
#include "dbtanet/data/palette.hpp"
#include "dbtanet/predict.hpp"

namespace fs = std::filesystem;

namespace {

const char* kCli = DBTANET_CLI_PATH;

struct RunResult {
  int exit_code;
  std::string output;
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
  fs::path out = dir / "cli_out.txt";
  std::string cmd = std::string(kCli) + " " + args + " > " + out.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream f(out);
  std::stringstream ss;
  ss << f.rdbuf();
  r.output = ss.str();
  return r;
}

fs::path workdir() {
  fs::path dir = fs::temp_directory_path() / "dbtanet_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

const char* kMicroModel =
    "classes = 4\n"
    "shallow_channels = 8\n"
    "deep_channels = 16\n"
    "msa_channels = 16\n"
    "msa_branch_channels = 8\n"
    "decoder_channels = 8\n"
    "stage_depths = 1,1,1,1\n"
    "image_size = 32\n"
    "min_shapes = 2\n"
    "max_shapes = 4\n";

}  // namespace

TEST_CASE("cli synth writes a loadable dataset", "[cli]") {
  fs::path dir = workdir();
  write_file(dir / "spec.cfg", "image_size = 32\nclasses = 4\nseed = 5\nchange_ratio = 0.2\n");
  RunResult r = run_cli("synth --spec " + (dir / "spec.cfg").string() + " --out " +
                            (dir / "data").string() + " --count 3",
                        dir);
  REQUIRE(r.exit_code == 0);
  for (const char* sub : {"im1", "im2", "label1", "label2"}) {
    int n = 0;
    for (auto& e : fs::directory_iterator(dir / "data" / sub)) (void)e, ++n;
    REQUIRE(n == 3);
  }
  auto samples = dbtanet::load_dataset<float>((dir / "data").string(), 4);
  REQUIRE(samples.size() == 3);
}

TEST_CASE("cli train, evaluate, predict, ablate pipeline", "[cli]") {
  fs::path dir = workdir();
  std::string ckpt = (dir / "model.ckpt").string();
  write_file(dir / "train.cfg", std::string(kMicroModel) +
                                    "train_samples = 6\nval_samples = 3\nepochs = 1\n"
                                    "batch_size = 3\ncheckpoint = " + ckpt + "\n");
  RunResult tr = run_cli("train --config " + (dir / "train.cfg").string(), dir);
  INFO(tr.output);
  REQUIRE(tr.exit_code == 0);
  REQUIRE(fs::exists(ckpt));

  // dataset for evaluate
  write_file(dir / "spec.cfg", "image_size = 32\nclasses = 4\nseed = 77\nmin_shapes = 2\nmax_shapes = 4\n");
  REQUIRE(run_cli("synth --spec " + (dir / "spec.cfg").string() + " --out " +
                      (dir / "eval_data").string() + " --count 3",
                  dir)
              .exit_code == 0);
  RunResult ev = run_cli("evaluate --ckpt " + ckpt + " --data " + (dir / "eval_data").string(), dir);
  INFO(ev.output);
  REQUIRE(ev.exit_code == 0);
  auto j = nlohmann::json::parse(ev.output.substr(0, ev.output.find('\n')));
  REQUIRE(j.contains("oa"));
  REQUIRE(j.contains("miou"));
  REQUIRE(j.contains("sek"));
  REQUIRE(j.contains("f1"));

  // evaluate twice -> identical JSON
  RunResult ev2 = run_cli("evaluate --ckpt " + ckpt + " --data " + (dir / "eval_data").string(), dir);
  REQUIRE(ev.output == ev2.output);

  RunResult pr = run_cli("predict --ckpt " + ckpt + " --t1 " +
                             (dir / "eval_data/im1/00000.png").string() + " --t2 " +
                             (dir / "eval_data/im2/00000.png").string() + " --out " +
                             (dir / "pred").string(),
                         dir);
  INFO(pr.output);
  REQUIRE(pr.exit_code == 0);
  for (const char* f : {"sem1.png", "sem2.png", "change.png", "boundary.png", "composite.png"})
    REQUIRE(fs::exists(dir / "pred" / f));
  dbtanet::ImageU8 comp = dbtanet::read_png_rgb((dir / "pred/composite.png").string());
  REQUIRE(comp.w == 4 * 32 + 3 * dbtanet::kCompositeGutter);
  REQUIRE(comp.h == 32);
  REQUIRE(dbtanet::read_png_plte((dir / "pred/sem1.png").string()) == dbtanet::class_palette(4));

  write_file(dir / "ablate.cfg", std::string(kMicroModel) +
                                     "train_samples = 6\nval_samples = 3\nepochs = 1\n"
                                     "batch_size = 3\ncheckpoint = " + (dir / "ab.ckpt").string() +
                                     "\n");
  RunResult ab = run_cli("ablate --config " + (dir / "ablate.cfg").string() + " --out " +
                             (dir / "ablation").string(),
                         dir);
  INFO(ab.output);
  REQUIRE(ab.exit_code == 0);
  REQUIRE(fs::exists(dir / "ablation/ablation.md"));
  auto aj = nlohmann::json::parse(std::ifstream(dir / "ablation/ablation.json"));
  REQUIRE(aj.size() == 4);
  REQUIRE(aj[0]["flags"]["sam"] == false);
  REQUIRE(aj[3]["flags"]["btam"] == true);
  fs::remove_all(dir);
}

TEST_CASE("cli trains from an on-disk dataset", "[cli]") {
  fs::path dir = workdir();
  write_file(dir / "spec.cfg", "image_size = 32\nclasses = 4\nseed = 11\nmin_shapes = 2\nmax_shapes = 4\n");
  REQUIRE(run_cli("synth --spec " + (dir / "spec.cfg").string() + " --out " +
                      (dir / "train_data").string() + " --count 4",
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("synth --spec " + (dir / "spec.cfg").string() + " --out " +
                      (dir / "val_data").string() + " --count 2",
                  dir)
              .exit_code == 0);
  std::string ckpt = (dir / "disk.ckpt").string();
  write_file(dir / "train.cfg",
             std::string(kMicroModel) + "data_train = " + (dir / "train_data").string() +
                 "\ndata_val = " + (dir / "val_data").string() +
                 "\nepochs = 1\nbatch_size = 2\ncheckpoint = " + ckpt + "\n");
  RunResult tr = run_cli("train --config " + (dir / "train.cfg").string(), dir);
  INFO(tr.output);
  REQUIRE(tr.exit_code == 0);
  REQUIRE(fs::exists(ckpt));

  // data_train without data_val fails loud
  write_file(dir / "noval.cfg", std::string(kMicroModel) + "data_train = " +
                                    (dir / "train_data").string() + "\nepochs = 1\n");
  REQUIRE(run_cli("train --config " + (dir / "noval.cfg").string(), dir).exit_code == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli maps validation errors to exit 1", "[cli]") {
  fs::path dir = workdir();
  write_file(dir / "bad.cfg", "not_a_key = 3\n");
  REQUIRE(run_cli("train --config " + (dir / "bad.cfg").string(), dir).exit_code == 1);

  REQUIRE(run_cli("evaluate --ckpt " + (dir / "missing.ckpt").string() + " --data " +
                      dir.string(),
                  dir)
              .exit_code == 1);

  write_file(dir / "spec.cfg", "image_size = 30\n");  // not divisible by 16
  REQUIRE(run_cli("synth --spec " + (dir / "spec.cfg").string() + " --out " +
                      (dir / "d").string() + " --count 1",
                  dir)
              .exit_code == 1);

  // bad subcommand / missing required option
  REQUIRE(run_cli("train", dir).exit_code == 1);
  REQUIRE(run_cli("frobnicate", dir).exit_code == 1);
  fs::remove_all(dir);
}
