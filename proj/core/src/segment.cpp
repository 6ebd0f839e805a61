#include "beltscan/segment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "beltscan/calibration.hpp"
#include "beltscan/error.hpp"
#include "beltscan/postprocess.hpp"

namespace beltscan {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                   t0)
      .count();
}

}  // namespace

SegmentationResult predict_cube(const HyperCube& cube, const nn::ModelParams& params,
                                const PatchSpec& patch, StitchMode mode,
                                int threads) {
  const nn::ModelConfig& cfg = params.config;
  if (cube.bands != cfg.dim) {
    throw DataError("cube band count does not match the model embedding width");
  }
  if (patch.tokens() != cfg.tokens) {
    throw DataError("patch size does not match the model token count");
  }
  PatchSpec spec = patch;
  spec.overlap_fraction = mode == StitchMode::kOverlap ? 0.5 : 0.0;
  const std::vector<PatchOrigin> origins =
      tile_origins(cube.height, cube.width, spec);

  const int height = cube.height;
  const int width = cube.width;
  const int classes = cfg.classes;
  const std::size_t pixel_count = static_cast<std::size_t>(height) * width;

  threads = std::max(1, threads);
  const int workers =
      static_cast<int>(std::min<std::size_t>(threads, origins.size()));

  // Per-worker accumulation, reduced in worker order: overlapping tiles sum
  // deterministically regardless of scheduling.
  std::vector<std::vector<float>> acc(workers);
  std::vector<std::vector<std::uint16_t>> cover(workers);

  auto run_worker = [&](int w) {
    acc[w].assign(pixel_count * classes, 0.0f);
    cover[w].assign(pixel_count, 0);
    nn::MatX<float> tokens(spec.tokens(), cube.bands);
    for (std::size_t i = w; i < origins.size(); i += workers) {
      const PatchOrigin origin = origins[i];
      extract_patch(cube, origin, spec, tokens.data());
      const nn::MatX<float> logits = nn::forward(tokens, params);
      for (int py = 0; py < spec.patch_h; ++py) {
        for (int px = 0; px < spec.patch_w; ++px) {
          const int token = py * spec.patch_w + px;
          const std::size_t pixel =
              static_cast<std::size_t>(origin.row + py) * width + origin.col + px;
          float* dst = acc[w].data() + pixel * classes;
          const float* src = logits.data() +
                             static_cast<std::size_t>(token) * classes;
          for (int c = 0; c < classes; ++c) dst[c] += src[c];
          ++cover[w][pixel];
        }
      }
    }
  };

  if (workers == 1) {
    run_worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(run_worker, w);
    for (auto& t : pool) t.join();
  }
  for (int w = 1; w < workers; ++w) {
    for (std::size_t i = 0; i < acc[0].size(); ++i) acc[0][i] += acc[w][i];
    for (std::size_t i = 0; i < cover[0].size(); ++i) cover[0][i] += cover[w][i];
  }

  SegmentationResult result;
  result.labels = make_labels(height, width);
  result.confidence.assign(pixel_count, 0.0f);
  result.logits.assign(pixel_count * classes, 0.0f);
  result.classes = classes;
  result.has_logits = true;

  std::vector<float> probs(classes);
  for (std::size_t pixel = 0; pixel < pixel_count; ++pixel) {
    const std::uint16_t n = cover[0][pixel];
    if (n == 0) throw DataError("tiling left a pixel uncovered");
    float* row = acc[0].data() + pixel * classes;
    float best = row[0] / n;
    int best_c = 0;
    for (int c = 0; c < classes; ++c) {
      row[c] /= n;
      if (row[c] > best) {
        best = row[c];
        best_c = c;
      }
    }
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) {
      probs[c] = std::exp(row[c] - best);
      denom += probs[c];
    }
    result.labels.labels[pixel] = static_cast<std::uint8_t>(best_c);
    result.confidence[pixel] = static_cast<float>(probs[best_c] / denom);
    std::copy(row, row + classes, result.logits.data() + pixel * classes);
  }
  return result;
}

ThroughputReport throughput(const HyperCube& raw, const CalibrationFrames& frames,
                            const nn::ModelParams& params, const PatchSpec& patch,
                            StitchMode mode, int runs, int threads) {
  if (runs < 1) throw DataError("throughput needs at least one run");

  ThroughputReport report;
  report.runs = runs;

  // One warm-up pass, not timed.
  {
    const GainMap gain = compute_gain(frames);
    HyperCube ffc = apply_ffc(raw, frames, gain);
    if (raw.bands == raw.grid.sensor_bands) ffc = select_bands(ffc);
    const HyperCube input =
        params.preproc.normalize ? normalize_spectra(ffc) : ffc;
    predict_cube(input, params, patch, mode, threads);
  }

  StageTiming sum;
  for (int run = 0; run < runs; ++run) {
    const auto t0 = std::chrono::steady_clock::now();
    const GainMap gain = compute_gain(frames);
    HyperCube ffc = apply_ffc(raw, frames, gain);
    if (raw.bands == raw.grid.sensor_bands) ffc = select_bands(ffc);
    const double t_cal = ms_since(t0);

    const auto t1 = std::chrono::steady_clock::now();
    const HyperCube input =
        params.preproc.normalize ? normalize_spectra(ffc) : ffc;
    const double t_norm = ms_since(t1);

    const auto t2 = std::chrono::steady_clock::now();
    SegmentationResult seg = predict_cube(input, params, patch, mode, threads);
    const double t_model = ms_since(t2);

    const auto t3 = std::chrono::steady_clock::now();
    const Stage stages[] = {Stage::kRules, Stage::kErosion};
    run_postprocess(seg, ffc, stages);
    const double t_post = ms_since(t3);

    sum.calibrate_ms += t_cal;
    sum.normalize_ms += t_norm;
    sum.model_ms += t_model;
    sum.postprocess_ms += t_post;
    sum.total_ms += ms_since(t0);
    report.per_run_model_ms.push_back(t_model);
  }

  report.mean_stage_ms.calibrate_ms = sum.calibrate_ms / runs;
  report.mean_stage_ms.normalize_ms = sum.normalize_ms / runs;
  report.mean_stage_ms.model_ms = sum.model_ms / runs;
  report.mean_stage_ms.postprocess_ms = sum.postprocess_ms / runs;
  report.mean_stage_ms.total_ms = sum.total_ms / runs;
  report.fps = 1000.0 / report.mean_stage_ms.total_ms;

  PatchSpec spec = patch;
  spec.overlap_fraction = mode == StitchMode::kOverlap ? 0.5 : 0.0;
  report.patches_per_image =
      static_cast<std::int64_t>(tile_origins(raw.height, raw.width, spec).size());
  return report;
}

}  // namespace beltscan
