#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "beltscan/hypercube.hpp"
#include "beltscan/segment.hpp"

namespace beltscan {

// Retained band indices of the wavelengths used by the spectral
// reclassification rules, resolved once against a grid.
struct RuleBands {
  int b1012, b1026, b1099_5, b1117, b1211_5, b1215, b1225_5, b1232_5, b1407_5,
      b1411;

  static RuleBands resolve(const WavelengthGrid& grid);
};

// The three pixel rules evaluate on flat-field-corrected, *unnormalized*
// spectra: the ratio clause of rule 1 is not shift-invariant.
// Rule 1: PEHD -> fat, rule 2: PEHD -> conveyor, rule 3: PA-PP -> meat.
bool rule_pehd_to_fat(std::span<const float> s, const RuleBands& b);
bool rule_pehd_to_conveyor(std::span<const float> s, const RuleBands& b);
bool rule_papp_to_meat(std::span<const float> s, const RuleBands& b);

struct MorphologyConfig {
  enum class Fallback { kBestNegativeLogit, kFat };
  Fallback fallback = Fallback::kBestNegativeLogit;
};

// Maximal 8-connected component of same-class contaminant pixels.
struct Blob {
  std::uint8_t cls = 0;
  std::vector<std::pair<int, int>> pixels;  // (y, x)
  int area = 0;
  int min_y = 0, min_x = 0, max_y = 0, max_x = 0;
  bool survived_erosion = true;
};

/// All contaminant blobs of a label map (8-connectivity, per class).
std::vector<Blob> find_blobs(const LabelMap& labels);

/// Applies rules 1..3 pixel-wise with first-match precedence. Only pixels
/// labeled PEHD or PA-PP can change; reassigned pixels get their stored logit
/// raised so labels and logits stay consistent.
SegmentationResult apply_rules(const SegmentationResult& result,
                               const HyperCube& cube_ffc);

/// Erodes the union contaminant mask with the 3x3 square. Pixels removed by
/// erosion revert to the fallback class; blobs with no surviving pixel are
/// wholly reclassified as fat. Returns the new result and the pre-erosion
/// blobs flagged with survival.
std::pair<SegmentationResult, std::vector<Blob>> erode_and_reclassify(
    const SegmentationResult& result, const MorphologyConfig& cfg = {});

enum class Stage { kRules, kErosion };

struct StageCount {
  std::string stage;
  int blobs = 0;
  std::int64_t pixels = 0;
};

struct ContaminantReport {
  std::vector<Blob> blobs;  // final contaminant blobs
  std::array<std::int64_t, kNumClasses> pixel_totals{};
  std::vector<StageCount> stages;  // counts after each stage, "model" first
};

/// Runs the requested stages in order and tallies blob/pixel counts per stage.
std::pair<SegmentationResult, ContaminantReport> run_postprocess(
    const SegmentationResult& result, const HyperCube& cube_ffc,
    std::span<const Stage> order, const MorphologyConfig& cfg = {});

}  // namespace beltscan
