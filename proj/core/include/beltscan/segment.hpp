#pragma once

#include <cstdint>
#include <vector>

#include "beltscan/hypercube.hpp"
#include "beltscan/nn.hpp"

namespace beltscan {

// Full-image classification output. Logits are kept (averaged where patches
// overlap) so post-processing can fall back on them.
struct SegmentationResult {
  LabelMap labels;
  std::vector<float> confidence;  // max softmax per pixel
  std::vector<float> logits;      // pixel-major, classes per pixel
  int classes = kNumClasses;
  bool has_logits = false;

  float logit(int y, int x, int c) const {
    return logits[(static_cast<std::size_t>(y) * labels.width + x) * classes + c];
  }
};

enum class StitchMode { kTile, kOverlap };

/// Classifies every pixel of a preprocessed cube. kTile uses flush
/// non-overlapping tiling; kOverlap averages per-pixel logits over all
/// covering half-stride patches before the argmax.
SegmentationResult predict_cube(const HyperCube& cube, const nn::ModelParams& params,
                                const PatchSpec& patch,
                                StitchMode mode = StitchMode::kTile,
                                int threads = 1);

struct StageTiming {
  double calibrate_ms = 0.0;
  double normalize_ms = 0.0;
  double model_ms = 0.0;
  double postprocess_ms = 0.0;
  double total_ms = 0.0;
};

struct ThroughputReport {
  double fps = 0.0;
  int runs = 0;
  std::int64_t patches_per_image = 0;
  StageTiming mean_stage_ms;
  std::vector<double> per_run_model_ms;
};

/// Wall-clock throughput of the full per-image pipeline (FFC, optional
/// normalization, model, post-processing) over `runs` warm repetitions.
ThroughputReport throughput(const HyperCube& raw, const struct CalibrationFrames& frames,
                            const nn::ModelParams& params, const PatchSpec& patch,
                            StitchMode mode, int runs = 10, int threads = 1);

}  // namespace beltscan
