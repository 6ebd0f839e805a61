#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "beltscan/config.hpp"
#include "beltscan/eval.hpp"
#include "beltscan/postprocess.hpp"
#include "beltscan/segment.hpp"
#include "beltscan/synthscene.hpp"
#include "beltscan/train.hpp"

// Command drivers shared by the CLI binary and the acceptance suite.
namespace beltscan::commands {

struct GenOptions {
  std::filesystem::path out;
  int n = 10;
  int height = 160;
  int width = 128;
  double contaminant_fraction = 0.5;
  double drift_gain_min = 1.0;
  double drift_gain_max = 1.0;
  std::uint64_t seed = 0;
};
void run_gen(const GenOptions& opts);

struct CalibrateOptions {
  std::filesystem::path dark;
  std::filesystem::path flat;
  std::filesystem::path input;
  std::filesystem::path output;
  bool normalize = true;
};
void run_calibrate(const CalibrateOptions& opts);

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path out;
  PatchSpec patch;
  nn::ModelConfig model;
  TrainConfig train;
  LossConfig loss;
};
/// Fills patch/model/train/loss settings from dotted config keys
/// (model.depth, train.epochs, loss.smoothing, patch.h, ...).
void apply_config(TrainOptions& opts, const RunConfig& cfg);
TrainResult run_train(const TrainOptions& opts);

struct PredictOptions {
  std::filesystem::path input;  // flat-field-corrected, unnormalized cube
  std::filesystem::path checkpoint;
  std::filesystem::path out_labels;
  std::filesystem::path out_confidence;  // optional
  std::filesystem::path report;          // optional, per-stage CSV
  StitchMode mode = StitchMode::kTile;
  std::vector<Stage> postprocess;
  std::optional<bool> normalize;  // unset: follow the checkpoint
  int patch_h = 20;
  int patch_w = 16;
  int threads = 1;
};
void run_predict(const PredictOptions& opts);

struct EvalOptions {
  std::filesystem::path pred_dir;
  std::filesystem::path gt_dir;
  std::filesystem::path report;
};
EvalMetrics run_eval(const EvalOptions& opts);

struct PlotSpectraOptions {
  std::filesystem::path input;
  std::string pixels;  // "x,y;x,y"
  std::filesystem::path out_svg;
  std::filesystem::path out_csv;  // optional, derived from out_svg when empty
};
void run_plot_spectra(const PlotSpectraOptions& opts);

struct BenchOptions {
  std::filesystem::path input;  // raw cube
  std::filesystem::path dark;
  std::filesystem::path flat;
  std::filesystem::path checkpoint;
  StitchMode mode = StitchMode::kTile;
  int runs = 10;
  int threads = 1;
};
ThroughputReport run_bench(const BenchOptions& opts);

// End-to-end desk-scale recipe: gen -> calibrate -> train -> predict with
// post-processing -> eval, emitting a final metrics CSV.
struct PipelineOptions {
  std::filesystem::path out;
  std::uint64_t seed = 7;
  int threads = 1;
  bool determinism = false;
  RunConfig config;
};

struct PipelineResult {
  std::filesystem::path checkpoint;
  std::filesystem::path train_metrics_csv;
  std::filesystem::path metrics_csv;
  double val_miou = 0.0;
  EvalMetrics clean;
  EvalMetrics contaminated;
};
PipelineResult run_pipeline(const PipelineOptions& opts);

/// Applies the stored preprocessing and classifies one corrected cube,
/// then runs the requested post-processing stages.
std::pair<SegmentationResult, ContaminantReport> predict_postprocess(
    const HyperCube& cube_ffc, const nn::ModelParams& params,
    const PatchSpec& patch, StitchMode mode, std::span<const Stage> stages,
    int threads);

// Re-renders the recipe's test scenes at pinned drift gains and tallies FP/TP
// blobs per checkpoint; writes one CSV row per (gain, model).
struct DriftSweepOptions {
  std::filesystem::path out_csv;
  std::uint64_t seed = 7;
  std::vector<double> gains;
  std::vector<std::pair<std::string, std::filesystem::path>> models;
  RunConfig config;  // same geometry knobs as the pipeline
  int threads = 1;
};

struct DriftSweepRow {
  double gain = 0.0;
  std::string model;
  int fp_blobs = 0;
  int fp_images = 0;
  int tp_blobs = 0;
};
std::vector<DriftSweepRow> run_drift_sweep(const DriftSweepOptions& opts);

}  // namespace beltscan::commands
