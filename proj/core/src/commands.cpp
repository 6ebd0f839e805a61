#include "beltscan/commands.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "beltscan/calibration.hpp"
#include "beltscan/error.hpp"

namespace beltscan::commands {

namespace {

class StageLog {
 public:
  explicit StageLog(std::string name)
      : name_(std::move(name)), start_(std::chrono::steady_clock::now()) {
    std::cerr << "[" << name_ << "] started\n";
  }
  ~StageLog() {
    const double s = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start_)
                         .count();
    std::cerr << "[" << name_ << "] done in " << std::fixed
              << std::setprecision(1) << s << " s\n";
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory: " + dir.string());
}

std::vector<std::string> scene_ids(const std::filesystem::path& dir,
                                   const std::string& suffix) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("not a directory: " + dir.string());
  }
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Confidence raster stored as a single-band float ENVI pair.
void save_confidence(const std::vector<float>& confidence, int height, int width,
                     const std::filesystem::path& path) {
  HyperCube cube;
  cube.height = height;
  cube.width = width;
  cube.bands = 1;
  cube.grid.sensor_bands = 41;  // single retained band at 1012 nm
  cube.data = confidence;
  save_cube(cube, path);
}

HyperCube calibrate_cube(const HyperCube& raw, const CalibrationFrames& frames) {
  HyperCube image = raw;
  CalibrationFrames selected = frames;
  if (image.bands == image.grid.sensor_bands) {
    image = select_bands(image);
    selected.dark = select_bands(selected.dark);
    selected.flat = select_bands(selected.flat);
  }
  const GainMap gain = compute_gain(selected);
  return apply_ffc(image, selected, gain);
}

nn::ModelConfig model_config_from(const RunConfig& cfg) {
  nn::ModelConfig model;
  model.depth = static_cast<int>(cfg.get_int("model.depth", model.depth));
  model.heads = static_cast<int>(cfg.get_int("model.heads", model.heads));
  model.dim = static_cast<int>(cfg.get_int("model.dim", model.dim));
  model.mlp_hidden =
      static_cast<int>(cfg.get_int("model.mlp_hidden", model.mlp_hidden));
  model.classes = static_cast<int>(cfg.get_int("model.classes", model.classes));
  model.tokens = static_cast<int>(cfg.get_int("model.tokens", model.tokens));
  model.positional = cfg.get_bool("model.positional", model.positional);
  return model;
}

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig train;
  train.epochs = static_cast<int>(cfg.get_int("train.epochs", train.epochs));
  train.batch_patches =
      static_cast<int>(cfg.get_int("train.batch_patches", train.batch_patches));
  train.base_lr = cfg.get_double("train.base_lr", train.base_lr);
  train.weight_decay = cfg.get_double("train.weight_decay", train.weight_decay);
  train.warmup_epochs =
      static_cast<int>(cfg.get_int("train.warmup_epochs", train.warmup_epochs));
  train.poly_power = cfg.get_double("train.poly_power", train.poly_power);
  train.beta1 = cfg.get_double("train.beta1", train.beta1);
  train.beta2 = cfg.get_double("train.beta2", train.beta2);
  train.eps = cfg.get_double("train.eps", train.eps);
  train.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 0));
  train.val_fraction = cfg.get_double("train.val_fraction", train.val_fraction);
  train.overlap = cfg.get_double("train.overlap", train.overlap);
  train.max_patches_per_epoch = static_cast<int>(
      cfg.get_int("train.max_patches_per_epoch", train.max_patches_per_epoch));
  train.normalize = cfg.get_bool("train.normalize", train.normalize);
  return train;
}

LossConfig loss_config_from(const RunConfig& cfg) {
  LossConfig loss;
  loss.smoothing = cfg.get_double("loss.smoothing", loss.smoothing);
  loss.fp_penalty = cfg.get_double("loss.fp_penalty", loss.fp_penalty);
  const std::string weights = cfg.get_string("loss.class_weights", "");
  if (!weights.empty()) {
    std::istringstream in(weights);
    std::string item;
    int i = 0;
    while (std::getline(in, item, ',')) {
      if (i >= kNumClasses) break;
      try {
        loss.class_weight[i++] = std::stod(item);
      } catch (const std::exception&) {
        throw DataError("bad loss.class_weights entry: " + item);
      }
    }
    if (i != kNumClasses) {
      throw DataError("loss.class_weights must list 13 values");
    }
  }
  return loss;
}

PatchSpec patch_from(const RunConfig& cfg) {
  PatchSpec patch;
  patch.patch_h = static_cast<int>(cfg.get_int("patch.h", patch.patch_h));
  patch.patch_w = static_cast<int>(cfg.get_int("patch.w", patch.patch_w));
  return patch;
}

}  // namespace

void run_gen(const GenOptions& opts) {
  DatasetSpec spec;
  spec.n_scenes = opts.n;
  spec.height = opts.height;
  spec.width = opts.width;
  spec.contaminant_fraction = opts.contaminant_fraction;
  spec.drift_gain_min = static_cast<float>(opts.drift_gain_min);
  spec.drift_gain_max = static_cast<float>(opts.drift_gain_max);
  spec.seed = opts.seed;
  render_dataset(spec, opts.out);
}

void run_calibrate(const CalibrateOptions& opts) {
  const HyperCube raw = load_cube(opts.input);
  CalibrationFrames frames;
  frames.dark = load_cube(opts.dark);
  frames.flat = load_cube(opts.flat);
  HyperCube corrected = calibrate_cube(raw, frames);
  if (opts.normalize) corrected = normalize_spectra(corrected);
  save_cube(corrected, opts.output);
}

void apply_config(TrainOptions& opts, const RunConfig& cfg) {
  opts.patch = patch_from(cfg);
  opts.model = model_config_from(cfg);
  opts.train = train_config_from(cfg);
  opts.loss = loss_config_from(cfg);
}

TrainResult run_train(const TrainOptions& opts) {
  return train_model(opts.data, opts.patch, opts.model, opts.train, opts.loss,
                     opts.out);
}

std::pair<SegmentationResult, ContaminantReport> predict_postprocess(
    const HyperCube& cube_ffc, const nn::ModelParams& params,
    const PatchSpec& patch, StitchMode mode, std::span<const Stage> stages,
    int threads) {
  const HyperCube input =
      params.preproc.normalize ? normalize_spectra(cube_ffc) : cube_ffc;
  SegmentationResult seg = predict_cube(input, params, patch, mode, threads);
  return run_postprocess(seg, cube_ffc, stages);
}

void run_predict(const PredictOptions& opts) {
  const nn::ModelParams params = nn::load_params(opts.checkpoint);
  if (opts.normalize.has_value() &&
      *opts.normalize != params.preproc.normalize) {
    std::ostringstream msg;
    msg << "preprocessing mismatch: checkpoint was trained with normalization "
        << (params.preproc.normalize ? "on" : "off") << " but the run requests "
        << (*opts.normalize ? "on" : "off");
    throw DataError(msg.str());
  }
  PatchSpec patch;
  patch.patch_h = opts.patch_h;
  patch.patch_w = opts.patch_w;
  if (patch.tokens() != params.config.tokens) {
    throw DataError("patch size does not match the checkpoint token count");
  }

  const HyperCube cube_ffc = load_cube(opts.input);
  auto [seg, report] = predict_postprocess(cube_ffc, params, patch, opts.mode,
                                           opts.postprocess, opts.threads);
  save_labels(seg.labels, opts.out_labels);
  if (!opts.out_confidence.empty()) {
    save_confidence(seg.confidence, seg.labels.height, seg.labels.width,
                    opts.out_confidence);
  }
  if (!opts.report.empty()) {
    std::ofstream out(opts.report);
    if (!out) throw DataError("cannot write report: " + opts.report.string());
    out << "stage,blobs,pixels\n";
    for (const StageCount& stage : report.stages) {
      out << stage.stage << "," << stage.blobs << "," << stage.pixels << "\n";
    }
  }
}

EvalMetrics run_eval(const EvalOptions& opts) {
  const std::vector<std::string> ids = scene_ids(opts.pred_dir, "_pred.hdr");
  if (ids.empty()) {
    throw DataError("no predictions (*_pred.hdr) in " + opts.pred_dir.string());
  }
  EvalMetrics metrics;
  for (const std::string& id : ids) {
    const LabelMap pred = load_labels(opts.pred_dir / (id + "_pred.raw"));
    const LabelMap gt = load_labels(opts.gt_dir / (id + "_labels.raw"));

    accumulate_confusion(metrics.conf, confusion(pred, gt));
    ContaminantReport report;
    report.blobs = find_blobs(pred);
    const BlobTally tally = blob_match(report, gt);
    metrics.tp_blobs += tally.tp_blobs;
    metrics.fp_blobs += tally.fp_blobs;
    metrics.tp_pixels += tally.tp_pixels;
    metrics.fp_pixels += tally.fp_pixels;
    if (tally.fp_image) ++metrics.fp_images;
    const RecallTally recall = blob_recall(pred, gt);
    metrics.recall.gt_blobs += recall.gt_blobs;
    metrics.recall.detected_blobs += recall.detected_blobs;
    metrics.recall.gt_blobs_3x3 += recall.gt_blobs_3x3;
    metrics.recall.detected_blobs_3x3 += recall.detected_blobs_3x3;
    ++metrics.images;
  }
  metrics.iou = per_class_iou(metrics.conf);
  metrics.miou = miou(metrics.conf);
  if (!opts.report.empty()) emit_report(metrics, opts.report);
  return metrics;
}

void run_plot_spectra(const PlotSpectraOptions& opts) {
  std::vector<std::pair<int, int>> pixels;
  std::istringstream in(opts.pixels);
  std::string token;
  while (std::getline(in, token, ';')) {
    const std::size_t comma = token.find(',');
    if (comma == std::string::npos) {
      throw DataError("bad pixel '" + token + "', expected x,y");
    }
    try {
      const int x = std::stoi(token.substr(0, comma));
      const int y = std::stoi(token.substr(comma + 1));
      pixels.push_back({y, x});
    } catch (const std::exception&) {
      throw DataError("bad pixel '" + token + "', expected x,y");
    }
  }
  const HyperCube cube = load_cube(opts.input);
  std::filesystem::path csv = opts.out_csv;
  if (csv.empty()) {
    csv = opts.out_svg;
    csv.replace_extension(".csv");
  }
  emit_spectra(cube, pixels, csv, opts.out_svg);
}

ThroughputReport run_bench(const BenchOptions& opts) {
  const HyperCube raw = load_cube(opts.input);
  CalibrationFrames frames;
  frames.dark = load_cube(opts.dark);
  frames.flat = load_cube(opts.flat);
  const nn::ModelParams params = nn::load_params(opts.checkpoint);
  PatchSpec patch;
  const ThroughputReport report = throughput(raw, frames, params, patch,
                                             opts.mode, opts.runs, opts.threads);
  std::cerr << std::fixed << std::setprecision(2);
  std::cerr << "fps: " << report.fps << " over " << report.runs << " runs, "
            << report.patches_per_image << " patches/image\n";
  std::cerr << "stage means [ms]: calibrate " << report.mean_stage_ms.calibrate_ms
            << ", normalize " << report.mean_stage_ms.normalize_ms << ", model "
            << report.mean_stage_ms.model_ms << ", postprocess "
            << report.mean_stage_ms.postprocess_ms << "\n";
  return report;
}

namespace {

void calibrate_dataset(const std::filesystem::path& raw_dir,
                       const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const std::vector<std::string> ids = scene_ids(raw_dir, "_labels.hdr");
  if (ids.empty()) throw DataError("no scenes in " + raw_dir.string());
  for (const std::string& id : ids) {
    const HyperCube raw = load_cube(raw_dir / (id + "_raw.raw"));
    CalibrationFrames frames;
    frames.dark = load_cube(raw_dir / (id + "_dark.raw"));
    frames.flat = load_cube(raw_dir / (id + "_flat.raw"));
    save_cube(calibrate_cube(raw, frames), out_dir / (id + ".raw"));
    save_labels(load_labels(raw_dir / (id + "_labels.raw")),
                out_dir / (id + "_labels.raw"));
  }
}

void predict_dataset(const std::filesystem::path& ffc_dir,
                     const std::filesystem::path& pred_dir,
                     const nn::ModelParams& params, const PatchSpec& patch,
                     StitchMode mode, std::span<const Stage> stages, int threads) {
  ensure_dir(pred_dir);
  const std::vector<std::string> ids = scene_ids(ffc_dir, "_labels.hdr");
  for (const std::string& id : ids) {
    const HyperCube cube = load_cube(ffc_dir / (id + ".raw"));
    auto [seg, report] =
        predict_postprocess(cube, params, patch, mode, stages, threads);
    save_labels(seg.labels, pred_dir / (id + "_pred.raw"));
    save_confidence(seg.confidence, seg.labels.height, seg.labels.width,
                    pred_dir / (id + "_conf.raw"));
  }
}

}  // namespace

PipelineResult run_pipeline(const PipelineOptions& opts) {
  const RunConfig& cfg = opts.config;
  ensure_dir(opts.out);

  const int train_scenes =
      static_cast<int>(cfg.get_int("pipeline.train_scenes", 60));
  const int test_clean =
      static_cast<int>(cfg.get_int("pipeline.test_clean_scenes", 20));
  const int test_contam =
      static_cast<int>(cfg.get_int("pipeline.test_contam_scenes", 20));
  const int height = static_cast<int>(cfg.get_int("gen.height", 160));
  const int width = static_cast<int>(cfg.get_int("gen.width", 128));
  const double drift_min = cfg.get_double("gen.drift_gain_min", 0.8);
  const double drift_max = cfg.get_double("gen.drift_gain_max", 1.2);
  const double train_frac = cfg.get_double("gen.train_contaminant_fraction", 0.8);

  const auto data = opts.out / "data";
  const auto dirs_raw = std::array{data / "train_raw", data / "test_clean_raw",
                                   data / "test_contam_raw"};
  const auto dirs_ffc =
      std::array{data / "train", data / "test_clean", data / "test_contam"};

  {
    StageLog log("gen");
    const std::array<int, 3> counts{train_scenes, test_clean, test_contam};
    const std::array<double, 3> fractions{train_frac, 0.0, 1.0};
    for (int d = 0; d < 3; ++d) {
      GenOptions gen;
      gen.out = dirs_raw[d];
      gen.n = counts[d];
      gen.height = height;
      gen.width = width;
      gen.contaminant_fraction = fractions[d];
      gen.drift_gain_min = drift_min;
      gen.drift_gain_max = drift_max;
      gen.seed = mix_seed(opts.seed, 1 + d);
      try {
        run_gen(gen);
      } catch (const DataError& e) {
        throw DataError("stage gen failed: " + std::string(e.what()));
      }
    }
  }

  {
    StageLog log("calibrate");
    try {
      for (int d = 0; d < 3; ++d) calibrate_dataset(dirs_raw[d], dirs_ffc[d]);
    } catch (const DataError& e) {
      throw DataError("stage calibrate failed: " + std::string(e.what()));
    }
  }

  TrainResult trained;
  {
    StageLog log("train");
    TrainOptions topts;
    topts.data = dirs_ffc[0];
    topts.out = opts.out / "model";
    topts.patch = patch_from(cfg);
    topts.model = model_config_from(cfg);
    topts.train = train_config_from(cfg);
    if (!cfg.has("train.max_patches_per_epoch")) {
      topts.train.max_patches_per_epoch = 1024;  // desk-scale default
    }
    topts.train.seed = mix_seed(opts.seed, 4);
    topts.train.threads = opts.threads;
    topts.train.determinism = opts.determinism;
    topts.loss = loss_config_from(cfg);
    try {
      trained = run_train(topts);
    } catch (const DataError& e) {
      throw DataError("stage train failed: " + std::string(e.what()));
    }
  }

  const nn::ModelParams params = nn::load_params(trained.checkpoint);
  const PatchSpec patch = patch_from(cfg);
  const Stage stages[] = {Stage::kRules, Stage::kErosion};
  {
    StageLog log("predict");
    try {
      predict_dataset(dirs_ffc[1], opts.out / "pred" / "test_clean", params,
                      patch, StitchMode::kTile, stages, opts.threads);
      predict_dataset(dirs_ffc[2], opts.out / "pred" / "test_contam", params,
                      patch, StitchMode::kTile, stages, opts.threads);
    } catch (const DataError& e) {
      throw DataError("stage predict failed: " + std::string(e.what()));
    }
  }

  PipelineResult result;
  {
    StageLog log("eval");
    ensure_dir(opts.out / "eval");
    try {
      EvalOptions clean;
      clean.pred_dir = opts.out / "pred" / "test_clean";
      clean.gt_dir = dirs_ffc[1];
      clean.report = opts.out / "eval" / "clean_metrics.csv";
      result.clean = run_eval(clean);

      EvalOptions contam;
      contam.pred_dir = opts.out / "pred" / "test_contam";
      contam.gt_dir = dirs_ffc[2];
      contam.report = opts.out / "eval" / "contam_metrics.csv";
      result.contaminated = run_eval(contam);
    } catch (const DataError& e) {
      throw DataError("stage eval failed: " + std::string(e.what()));
    }

    result.checkpoint = trained.checkpoint;
    result.train_metrics_csv = opts.out / "model" / "train_metrics.csv";
    result.metrics_csv = opts.out / "eval" / "metrics.csv";
    result.val_miou = trained.best_val_miou;

    std::ofstream out(result.metrics_csv);
    if (!out) {
      throw DataError("cannot write metrics: " + result.metrics_csv.string());
    }
    out << "metric,value\n" << std::fixed << std::setprecision(6);
    out << "val_miou," << result.val_miou << "\n";
    out << "clean_miou," << result.clean.miou << "\n";
    out << "clean_fp_blobs," << result.clean.fp_blobs << "\n";
    out << "clean_fp_images," << result.clean.fp_images << "\n";
    out << "contam_miou," << result.contaminated.miou << "\n";
    out << "contam_tp_blobs," << result.contaminated.tp_blobs << "\n";
    out << "contam_fp_blobs," << result.contaminated.fp_blobs << "\n";
    out << "contam_gt_blobs_3x3," << result.contaminated.recall.gt_blobs_3x3
        << "\n";
    out << "contam_detected_blobs_3x3,"
        << result.contaminated.recall.detected_blobs_3x3 << "\n";
    out << "contam_recall_3x3,";
    if (result.contaminated.recall.gt_blobs_3x3 > 0) {
      out << static_cast<double>(result.contaminated.recall.detected_blobs_3x3) /
                 result.contaminated.recall.gt_blobs_3x3;
    } else {
      out << "absent";
    }
    out << "\n";
    if (!out) {
      throw DataError("short write to metrics: " + result.metrics_csv.string());
    }
  }
  return result;
}

std::vector<DriftSweepRow> run_drift_sweep(const DriftSweepOptions& opts) {
  const RunConfig& cfg = opts.config;
  const int test_clean =
      static_cast<int>(cfg.get_int("pipeline.test_clean_scenes", 20));
  const int test_contam =
      static_cast<int>(cfg.get_int("pipeline.test_contam_scenes", 20));
  const int height = static_cast<int>(cfg.get_int("gen.height", 160));
  const int width = static_cast<int>(cfg.get_int("gen.width", 128));
  const PatchSpec patch = patch_from(cfg);

  std::vector<std::pair<std::string, nn::ModelParams>> models;
  for (const auto& [name, path] : opts.models) {
    models.push_back({name, nn::load_params(path)});
  }
  const Stage stages[] = {Stage::kRules, Stage::kErosion};

  std::vector<DriftSweepRow> rows;
  for (double gain : opts.gains) {
    std::vector<DriftSweepRow> per_model(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
      per_model[m].gain = gain;
      per_model[m].model = models[m].first;
    }
    for (int d = 0; d < 2; ++d) {
      DatasetSpec dspec;
      dspec.n_scenes = d == 0 ? test_clean : test_contam;
      dspec.height = height;
      dspec.width = width;
      dspec.contaminant_fraction = d == 0 ? 0.0 : 1.0;
      dspec.drift_gain_min = static_cast<float>(gain);
      dspec.drift_gain_max = static_cast<float>(gain);
      dspec.seed = mix_seed(opts.seed, 2 + d);
      const std::vector<MaterialSpectrum> materials = dataset_materials(dspec);

      for (int i = 0; i < dspec.n_scenes; ++i) {
        auto [scene_spec, drift] = dataset_scene_spec(dspec, i);
        const RenderedScene scene =
            render_scene(scene_spec, materials, dataset_noise(dspec, drift));
        const HyperCube ffc = calibrate_cube(scene.raw, scene.frames);
        for (std::size_t m = 0; m < models.size(); ++m) {
          auto [seg, report] =
              predict_postprocess(ffc, models[m].second, patch,
                                  StitchMode::kTile, stages, opts.threads);
          const BlobTally tally = blob_match(report, scene.labels);
          per_model[m].fp_blobs += tally.fp_blobs;
          per_model[m].tp_blobs += tally.tp_blobs;
          if (tally.fp_image) ++per_model[m].fp_images;
        }
      }
    }
    rows.insert(rows.end(), per_model.begin(), per_model.end());
  }

  if (!opts.out_csv.empty()) {
    std::ofstream out(opts.out_csv);
    if (!out) throw DataError("cannot write CSV: " + opts.out_csv.string());
    out << "drift_gain,model,fp_blobs,fp_images,tp_blobs\n"
        << std::fixed << std::setprecision(3);
    for (const DriftSweepRow& row : rows) {
      out << row.gain << "," << row.model << "," << row.fp_blobs << ","
          << row.fp_images << "," << row.tp_blobs << "\n";
    }
  }
  return rows;
}

}  // namespace beltscan::commands
