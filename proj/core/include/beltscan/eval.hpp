#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "beltscan/hypercube.hpp"
#include "beltscan/postprocess.hpp"

namespace beltscan {

// confusion[gt][pred], pixel counts.
using Confusion =
    std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>;

Confusion confusion(const LabelMap& pred, const LabelMap& gt);
void accumulate_confusion(Confusion& into, const Confusion& add);

/// Mean IoU over classes present in ground truth or prediction.
double miou(const Confusion& matrix);
std::array<double, kNumClasses> per_class_iou(const Confusion& matrix);

// Blob-level detection accounting. A predicted contaminant blob is a true
// positive when at least one of its pixels overlaps any ground-truth
// contaminant pixel, regardless of class; detection, not identification.
struct BlobTally {
  int tp_blobs = 0;
  int fp_blobs = 0;
  std::int64_t tp_pixels = 0;
  std::int64_t fp_pixels = 0;
  bool fp_image = false;
};

BlobTally blob_match(const ContaminantReport& report, const LabelMap& gt);

// Ground-truth-side recall; the 3x3 subset counts only GT blobs that survive
// erosion by the 3x3 square (fine 1-2 px contaminants are excluded).
struct RecallTally {
  int gt_blobs = 0;
  int detected_blobs = 0;
  int gt_blobs_3x3 = 0;
  int detected_blobs_3x3 = 0;
};

RecallTally blob_recall(const LabelMap& pred, const LabelMap& gt);

struct EvalMetrics {
  Confusion conf{};
  std::array<double, kNumClasses> iou{};
  double miou = 0.0;
  int tp_blobs = 0;
  int fp_blobs = 0;
  std::int64_t tp_pixels = 0;
  std::int64_t fp_pixels = 0;
  int fp_images = 0;
  int images = 0;
  RecallTally recall;
  double fps = 0.0;
};

/// Deterministic metric,value CSV.
void emit_report(const EvalMetrics& metrics, const std::filesystem::path& path);
/// Inverse of emit_report for the scalar rows (confusion excluded).
std::map<std::string, double> parse_report(const std::filesystem::path& path);

/// Spectra of selected pixels as CSV (wavelength column plus one column per
/// pixel) and an SVG line plot with one polyline per pixel.
void emit_spectra(const HyperCube& cube,
                  const std::vector<std::pair<int, int>>& pixels,
                  const std::filesystem::path& csv_path,
                  const std::filesystem::path& svg_path);

}  // namespace beltscan
