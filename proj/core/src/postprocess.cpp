#include "beltscan/postprocess.hpp"

#include <algorithm>
#include <deque>

#include "beltscan/error.hpp"

namespace beltscan {

RuleBands RuleBands::resolve(const WavelengthGrid& grid) {
  RuleBands b{};
  b.b1012 = wavelength_to_band(1012.0, grid);
  b.b1026 = wavelength_to_band(1026.0, grid);
  b.b1099_5 = wavelength_to_band(1099.5, grid);
  b.b1117 = wavelength_to_band(1117.0, grid);
  b.b1211_5 = wavelength_to_band(1211.5, grid);
  b.b1215 = wavelength_to_band(1215.0, grid);
  b.b1225_5 = wavelength_to_band(1225.5, grid);
  b.b1232_5 = wavelength_to_band(1232.5, grid);
  b.b1407_5 = wavelength_to_band(1407.5, grid);
  b.b1411 = wavelength_to_band(1411.0, grid);
  return b;
}

bool rule_pehd_to_fat(std::span<const float> s, const RuleBands& b) {
  const bool slope_clause =
      s[b.b1225_5] - s[b.b1211_5] > s[b.b1026] - s[b.b1012];
  if (!slope_clause) return false;
  // Non-positive denominator makes the ratio clause false, not an error.
  if (s[b.b1407_5] <= 0.0f) return false;
  return s[b.b1411] / s[b.b1407_5] < 1.04f;
}

bool rule_pehd_to_conveyor(std::span<const float> s, const RuleBands& b) {
  return s[b.b1117] > s[b.b1099_5];
}

bool rule_papp_to_meat(std::span<const float> s, const RuleBands& b) {
  return s[b.b1225_5] - s[b.b1215] < s[b.b1232_5] - s[b.b1012];
}

std::vector<Blob> find_blobs(const LabelMap& labels) {
  const int height = labels.height;
  const int width = labels.width;
  std::vector<std::uint8_t> visited(static_cast<std::size_t>(height) * width, 0);
  std::vector<Blob> blobs;
  std::deque<std::pair<int, int>> queue;

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * width + x;
      if (visited[idx] || !is_contaminant(labels.at(y, x))) continue;
      const std::uint8_t cls = labels.at(y, x);
      Blob blob;
      blob.cls = cls;
      blob.min_y = blob.max_y = y;
      blob.min_x = blob.max_x = x;
      visited[idx] = 1;
      queue.push_back({y, x});
      while (!queue.empty()) {
        auto [cy, cx] = queue.front();
        queue.pop_front();
        blob.pixels.push_back({cy, cx});
        blob.min_y = std::min(blob.min_y, cy);
        blob.max_y = std::max(blob.max_y, cy);
        blob.min_x = std::min(blob.min_x, cx);
        blob.max_x = std::max(blob.max_x, cx);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int ny = cy + dy;
            const int nx = cx + dx;
            if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * width + nx;
            if (visited[nidx] || labels.at(ny, nx) != cls) continue;
            visited[nidx] = 1;
            queue.push_back({ny, nx});
          }
        }
      }
      blob.area = static_cast<int>(blob.pixels.size());
      blobs.push_back(std::move(blob));
    }
  }
  return blobs;
}

namespace {

// Keeps the stored-logit argmax consistent with a reassigned label.
void promote_logit(SegmentationResult& result, int y, int x, std::uint8_t cls) {
  if (!result.has_logits) return;
  float* row = result.logits.data() +
               (static_cast<std::size_t>(y) * result.labels.width + x) *
                   result.classes;
  const float top = *std::max_element(row, row + result.classes);
  row[cls] = top + 1.0f;
}

}  // namespace

SegmentationResult apply_rules(const SegmentationResult& result,
                               const HyperCube& cube_ffc) {
  if (cube_ffc.height != result.labels.height ||
      cube_ffc.width != result.labels.width) {
    throw DataError("rule cube does not match segmentation dimensions");
  }
  const RuleBands bands = RuleBands::resolve(cube_ffc.grid);
  SegmentationResult out = result;
  for (int y = 0; y < out.labels.height; ++y) {
    for (int x = 0; x < out.labels.width; ++x) {
      const std::uint8_t cls = out.labels.at(y, x);
      const auto spectrum = cube_ffc.spectrum(y, x);
      if (cls == static_cast<std::uint8_t>(MaterialId::kPehd)) {
        if (rule_pehd_to_fat(spectrum, bands)) {
          out.labels.at(y, x) = static_cast<std::uint8_t>(MaterialId::kFat);
          promote_logit(out, y, x, static_cast<std::uint8_t>(MaterialId::kFat));
        } else if (rule_pehd_to_conveyor(spectrum, bands)) {
          out.labels.at(y, x) = static_cast<std::uint8_t>(MaterialId::kConveyor);
          promote_logit(out, y, x,
                        static_cast<std::uint8_t>(MaterialId::kConveyor));
        }
      } else if (cls == static_cast<std::uint8_t>(MaterialId::kPaPp)) {
        if (rule_papp_to_meat(spectrum, bands)) {
          out.labels.at(y, x) = static_cast<std::uint8_t>(MaterialId::kMeat);
          promote_logit(out, y, x, static_cast<std::uint8_t>(MaterialId::kMeat));
        }
      }
    }
  }
  return out;
}

std::pair<SegmentationResult, std::vector<Blob>> erode_and_reclassify(
    const SegmentationResult& result, const MorphologyConfig& cfg) {
  const int height = result.labels.height;
  const int width = result.labels.width;

  std::vector<std::uint8_t> mask(static_cast<std::size_t>(height) * width, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      mask[static_cast<std::size_t>(y) * width + x] =
          is_contaminant(result.labels.at(y, x)) ? 1 : 0;
    }
  }

  // 3x3 square erosion of the union mask; pixels beyond the border count as
  // background.
  std::vector<std::uint8_t> eroded(mask.size(), 0);
  for (int y = 1; y + 1 < height; ++y) {
    for (int x = 1; x + 1 < width; ++x) {
      bool all = true;
      for (int dy = -1; dy <= 1 && all; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (!mask[static_cast<std::size_t>(y + dy) * width + (x + dx)]) {
            all = false;
            break;
          }
        }
      }
      eroded[static_cast<std::size_t>(y) * width + x] = all ? 1 : 0;
    }
  }

  std::vector<Blob> blobs = find_blobs(result.labels);
  SegmentationResult out = result;
  const auto fat = static_cast<std::uint8_t>(MaterialId::kFat);

  auto fallback_class = [&](int y, int x) -> std::uint8_t {
    if (cfg.fallback == MorphologyConfig::Fallback::kBestNegativeLogit &&
        result.has_logits) {
      std::uint8_t best = 0;
      float best_score = result.logit(y, x, 0);
      for (std::uint8_t c = 1; c < kNumNegativeClasses; ++c) {
        const float score = result.logit(y, x, c);
        if (score > best_score) {
          best_score = score;
          best = c;
        }
      }
      return best;
    }
    return fat;
  };

  for (Blob& blob : blobs) {
    blob.survived_erosion = std::any_of(
        blob.pixels.begin(), blob.pixels.end(), [&](const auto& px) {
          return eroded[static_cast<std::size_t>(px.first) * width + px.second] != 0;
        });
    for (const auto& [y, x] : blob.pixels) {
      if (eroded[static_cast<std::size_t>(y) * width + x]) continue;
      const std::uint8_t cls = blob.survived_erosion ? fallback_class(y, x) : fat;
      out.labels.at(y, x) = cls;
      promote_logit(out, y, x, cls);
    }
  }
  return {std::move(out), std::move(blobs)};
}

std::pair<SegmentationResult, ContaminantReport> run_postprocess(
    const SegmentationResult& result, const HyperCube& cube_ffc,
    std::span<const Stage> order, const MorphologyConfig& cfg) {
  ContaminantReport report;
  auto record = [&report](const std::string& name, const LabelMap& labels) {
    StageCount count;
    count.stage = name;
    const std::vector<Blob> blobs = find_blobs(labels);
    count.blobs = static_cast<int>(blobs.size());
    for (const Blob& blob : blobs) count.pixels += blob.area;
    report.stages.push_back(std::move(count));
  };

  SegmentationResult current = result;
  record("model", current.labels);
  for (Stage stage : order) {
    if (stage == Stage::kRules) {
      current = apply_rules(current, cube_ffc);
      record("rules", current.labels);
    } else {
      current = erode_and_reclassify(current, cfg).first;
      record("erosion", current.labels);
    }
  }

  report.blobs = find_blobs(current.labels);
  for (int y = 0; y < current.labels.height; ++y) {
    for (int x = 0; x < current.labels.width; ++x) {
      ++report.pixel_totals[current.labels.at(y, x)];
    }
  }
  return {std::move(current), std::move(report)};
}

}  // namespace beltscan
