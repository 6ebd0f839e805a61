// beltscan: synthetic NIR line-scan inspection pipeline for pork belly.
// Subcommands cover dataset generation, calibration, training, inference,
// evaluation, spectra plots, a micro throughput benchmark and the full
// end-to-end recipe. Logs go to stderr; data lands in files only.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "beltscan/commands.hpp"
#include "beltscan/error.hpp"

namespace {

using namespace beltscan;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("BELTSCAN_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw DataError("BELTSCAN_SEED is not an integer");
    }
  }
  return 0;
}

StitchMode parse_mode(const std::string& mode) {
  if (mode == "tile") return StitchMode::kTile;
  if (mode == "overlap") return StitchMode::kOverlap;
  throw CLI::ValidationError("--mode", "expected 'tile' or 'overlap'");
}

std::vector<Stage> parse_stages(const std::string& csv) {
  std::vector<Stage> stages;
  if (csv.empty() || csv == "none") return stages;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "rules") {
      stages.push_back(Stage::kRules);
    } else if (item == "erosion") {
      stages.push_back(Stage::kErosion);
    } else {
      throw CLI::ValidationError("--postprocess",
                                 "unknown stage '" + item + "'");
    }
  }
  return stages;
}

RunConfig load_config(const std::string& path) {
  return path.empty() ? RunConfig{} : RunConfig::parse_file(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beltscan: hyperspectral foreign-object inspection pipeline"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Render a synthetic scene dataset");
  commands::GenOptions gen_opts;
  std::string gen_seed;
  gen->add_option("--n", gen_opts.n, "Number of scenes")->required();
  gen->add_option("--out", gen_opts.out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Master seed (default $BELTSCAN_SEED)");
  gen->add_option("--contaminant-fraction", gen_opts.contaminant_fraction,
                  "Fraction of scenes carrying contaminants")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--drift-min", gen_opts.drift_gain_min, "Min drift gain");
  gen->add_option("--drift-max", gen_opts.drift_gain_max, "Max drift gain");
  gen->add_option("--height", gen_opts.height, "Scene height (lines)");
  gen->add_option("--width", gen_opts.width, "Scene width (samples)");

  // calibrate
  auto* calibrate =
      app.add_subcommand("calibrate", "Flat-field correct one cube");
  commands::CalibrateOptions cal_opts;
  bool cal_no_normalize = false;
  calibrate->add_option("--dark", cal_opts.dark, "Dark frame cube")->required();
  calibrate->add_option("--flat", cal_opts.flat, "Flat frame cube")->required();
  calibrate->add_option("--in", cal_opts.input, "Raw input cube")->required();
  calibrate->add_option("--out", cal_opts.output, "Corrected output cube")
      ->required();
  calibrate->add_flag("--no-normalize", cal_no_normalize,
                      "Skip per-pixel spectral normalization");

  // train
  auto* train = app.add_subcommand("train", "Train the patch transformer");
  std::string train_data, train_out, train_config, train_seed;
  int train_epochs = -1, train_batch = -1, train_threads = -1, train_cap = -1;
  bool train_determinism = false;
  std::optional<bool> train_normalize;
  train->add_option("--data", train_data, "Calibrated scene directory")
      ->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--config", train_config, "key=value config file");
  train->add_option("--seed", train_seed, "Seed (default $BELTSCAN_SEED)");
  train->add_option("--epochs", train_epochs, "Epoch count");
  train->add_option("--batch", train_batch, "Patches per batch");
  train->add_option("--threads", train_threads, "Worker threads");
  train->add_option("--max-patches-per-epoch", train_cap,
                    "Seeded per-epoch patch cap (0 = all tiles)");
  train->add_flag("--determinism", train_determinism,
                  "Reference deterministic mode");
  train->add_flag("--normalize,!--no-normalize", train_normalize,
                  "Spectral normalization of model inputs");

  // predict
  auto* predict = app.add_subcommand("predict", "Classify one corrected cube");
  commands::PredictOptions pred_opts;
  std::string pred_mode = "tile", pred_stages = "";
  std::optional<bool> pred_normalize;
  predict->add_option("--in", pred_opts.input, "Flat-field-corrected cube")
      ->required();
  predict->add_option("--checkpoint", pred_opts.checkpoint, "Model checkpoint")
      ->required();
  predict->add_option("--out-labels", pred_opts.out_labels, "Output label map")
      ->required();
  predict->add_option("--out-confidence", pred_opts.out_confidence,
                      "Output confidence raster");
  predict->add_option("--report", pred_opts.report, "Per-stage blob/pixel CSV");
  predict->add_option("--mode", pred_mode, "tile|overlap");
  predict->add_option("--postprocess", pred_stages,
                      "Ordered stages, e.g. rules,erosion");
  predict->add_option("--threads", pred_opts.threads, "Worker threads");
  predict->add_option("--patch-h", pred_opts.patch_h, "Patch height");
  predict->add_option("--patch-w", pred_opts.patch_w, "Patch width");
  predict->add_flag("--normalize,!--no-normalize", pred_normalize,
                    "Must match the checkpoint's normalization flag");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against truth");
  commands::EvalOptions eval_opts;
  eval_cmd->add_option("--pred-dir", eval_opts.pred_dir, "Prediction directory")
      ->required();
  eval_cmd->add_option("--gt-dir", eval_opts.gt_dir, "Ground-truth directory")
      ->required();
  eval_cmd->add_option("--report", eval_opts.report, "Metrics CSV")->required();

  // plot-spectra
  auto* plot = app.add_subcommand("plot-spectra", "Dump pixel spectra");
  commands::PlotSpectraOptions plot_opts;
  plot->add_option("--in", plot_opts.input, "Cube")->required();
  plot->add_option("--pixels", plot_opts.pixels, "Pixels as x,y;x,y")
      ->required();
  plot->add_option("--out", plot_opts.out_svg, "SVG output path")->required();
  plot->add_option("--out-csv", plot_opts.out_csv,
                   "CSV output path (default: SVG path with .csv)");

  // bench
  auto* bench = app.add_subcommand("bench", "Per-image throughput benchmark");
  commands::BenchOptions bench_opts;
  std::string bench_mode = "tile";
  bench->add_option("--in", bench_opts.input, "Raw cube")->required();
  bench->add_option("--dark", bench_opts.dark, "Dark frame")->required();
  bench->add_option("--flat", bench_opts.flat, "Flat frame")->required();
  bench->add_option("--checkpoint", bench_opts.checkpoint, "Model checkpoint")
      ->required();
  bench->add_option("--runs", bench_opts.runs, "Warm repetitions");
  bench->add_option("--mode", bench_mode, "tile|overlap");
  bench->add_option("--threads", bench_opts.threads, "Worker threads");

  // pipeline
  auto* pipeline =
      app.add_subcommand("pipeline", "Full gen->calibrate->train->predict->eval");
  std::string pipe_out, pipe_config, pipe_seed;
  int pipe_threads = 1;
  bool pipe_determinism = false;
  pipeline->add_option("--out", pipe_out, "Output directory")->required();
  pipeline->add_option("--config", pipe_config, "key=value config file");
  pipeline->add_option("--seed", pipe_seed, "Seed (default $BELTSCAN_SEED)");
  pipeline->add_option("--threads", pipe_threads, "Worker threads");
  pipeline->add_flag("--determinism", pipe_determinism,
                     "Reference deterministic mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      gen_opts.seed = gen_seed.empty() ? default_seed() : std::stoull(gen_seed);
      commands::run_gen(gen_opts);
    } else if (calibrate->parsed()) {
      cal_opts.normalize = !cal_no_normalize;
      commands::run_calibrate(cal_opts);
    } else if (train->parsed()) {
      commands::TrainOptions opts;
      RunConfig cfg = load_config(train_config);
      if (!train_seed.empty()) cfg.set("train.seed", train_seed);
      if (train_epochs >= 0) cfg.set("train.epochs", std::to_string(train_epochs));
      if (train_batch >= 0) {
        cfg.set("train.batch_patches", std::to_string(train_batch));
      }
      if (train_cap >= 0) {
        cfg.set("train.max_patches_per_epoch", std::to_string(train_cap));
      }
      if (train_normalize.has_value()) {
        cfg.set("train.normalize", *train_normalize ? "true" : "false");
      }
      opts.data = train_data;
      opts.out = train_out;
      commands::apply_config(opts, cfg);
      if (!cfg.has("train.seed")) opts.train.seed = default_seed();
      if (train_threads > 0) opts.train.threads = train_threads;
      opts.train.determinism = train_determinism;
      commands::run_train(opts);
    } else if (predict->parsed()) {
      pred_opts.mode = parse_mode(pred_mode);
      pred_opts.postprocess = parse_stages(pred_stages);
      pred_opts.normalize = pred_normalize;
      commands::run_predict(pred_opts);
    } else if (eval_cmd->parsed()) {
      commands::run_eval(eval_opts);
    } else if (plot->parsed()) {
      commands::run_plot_spectra(plot_opts);
    } else if (bench->parsed()) {
      bench_opts.mode = parse_mode(bench_mode);
      commands::run_bench(bench_opts);
    } else if (pipeline->parsed()) {
      commands::PipelineOptions opts;
      opts.out = pipe_out;
      opts.config = load_config(pipe_config);
      opts.seed = pipe_seed.empty() ? default_seed() : std::stoull(pipe_seed);
      opts.threads = pipe_threads;
      opts.determinism = pipe_determinism;
      commands::run_pipeline(opts);
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
