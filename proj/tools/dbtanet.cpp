// Command-line entry points for the change detection pipeline:
//   train     train a model from a config file
//   evaluate  score a checkpoint against a dataset directory
//   predict   render predictions for one image pair
//   ablate    train/evaluate the four module-flag combinations
//   synth     generate a synthetic dataset on disk
//
// Exit codes: 0 success, 1 invalid input, 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "dbtanet/config.hpp"
#include "dbtanet/predict.hpp"
#include "dbtanet/train.hpp"

namespace fs = std::filesystem;
using Real = float;

namespace {

int cmd_train(const std::string& config_path) {
  dbtanet::TrainConfig cfg = dbtanet::train_config_from_file(config_path);
  auto [model, outcome] = dbtanet::run_training<Real>(cfg, std::cout);
  std::cout << "best epoch " << outcome.best_epoch << ": "
            << dbtanet::scores_json(outcome.best_val) << "\n";
  if (!cfg.checkpoint_path.empty())
    std::cout << "checkpoint written to " << outcome.checkpoint_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_dir) {
  auto [model, cfg] = dbtanet::model_from_checkpoint<Real>(ckpt_path);
  auto samples = dbtanet::load_dataset<Real>(data_dir, cfg.model.classes);
  dbtanet::EvalResult r =
      dbtanet::evaluate_model(*model, samples, cfg.batch_size, cfg.change_threshold);
  std::cout << dbtanet::scores_json(r.scores) << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& t1, const std::string& t2,
                const std::string& out_dir) {
  auto [model, cfg] = dbtanet::model_from_checkpoint<Real>(ckpt_path);
  dbtanet::Tensor<Real> img1 = dbtanet::image_from_bytes<Real>(dbtanet::read_png_rgb(t1));
  dbtanet::Tensor<Real> img2 = dbtanet::image_from_bytes<Real>(dbtanet::read_png_rgb(t2));
  if (img1.dim(1) % 16 != 0 || img1.dim(2) % 16 != 0)
    throw dbtanet::ValidationError("predict: image size must be divisible by 16");
  dbtanet::PredictFiles files =
      dbtanet::predict_to_dir(*model, img1, img2, out_dir, cfg.change_threshold);
  std::cout << "wrote " << files.sem1 << ", " << files.sem2 << ", " << files.change << ", "
            << files.boundary << ", " << files.composite << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir) {
  dbtanet::TrainConfig cfg = dbtanet::train_config_from_file(config_path);
  auto rows = dbtanet::run_ablation<Real>(cfg, std::cout);
  std::string md = dbtanet::ablation_markdown(rows);
  std::cout << md;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream((fs::path(out_dir) / "ablation.md")) << md;
    std::ofstream((fs::path(out_dir) / "ablation.json"))
        << dbtanet::ablation_json(rows).dump(2) << "\n";
    std::cout << "wrote " << (fs::path(out_dir) / "ablation.md").string() << " and "
              << (fs::path(out_dir) / "ablation.json").string() << "\n";
  }
  return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, int count) {
  dbtanet::SceneSpec spec = dbtanet::scene_spec_from_file(spec_path);
  if (count < 1) throw dbtanet::ValidationError("synth: count must be >= 1");
  uint64_t base_seed = spec.seed;
  for (int i = 0; i < count; ++i) {
    spec.seed = base_seed + uint64_t(i);
    auto sample = dbtanet::generate_scene<Real>(spec);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "%05d", i);
    dbtanet::save_sample(out_dir, stem, sample);
  }
  std::cout << "wrote " << count << " sample pairs under " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-branch semantic change detection pipeline"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, data_dir, t1_path, t2_path, out_dir, spec_path;
  int count = 100;

  CLI::App* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "key = value config file")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
  evaluate->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  evaluate->add_option("--data", data_dir, "dataset root directory")->required();

  CLI::App* predict = app.add_subcommand("predict", "render predictions for an image pair");
  predict->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  predict->add_option("--t1", t1_path, "epoch-1 image (PNG)")->required();
  predict->add_option("--t2", t2_path, "epoch-2 image (PNG)")->required();
  predict->add_option("--out", out_dir, "output directory")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "run the four-row module ablation");
  ablate->add_option("--config", config_path, "key = value config file")->required();
  ablate->add_option("--out", out_dir, "directory for ablation.md / ablation.json");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--spec", spec_path, "scene spec file")->required();
  synth->add_option("--out", out_dir, "output dataset root")->required();
  synth->add_option("--count", count, "number of sample pairs")->required();

  try {
    app.parse(argc, argv);
    if (train->parsed()) return cmd_train(config_path);
    if (evaluate->parsed()) return cmd_evaluate(ckpt_path, data_dir);
    if (predict->parsed()) return cmd_predict(ckpt_path, t1_path, t2_path, out_dir);
    if (ablate->parsed()) return cmd_ablate(config_path, out_dir);
    if (synth->parsed()) return cmd_synth(spec_path, out_dir, count);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const dbtanet::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}
