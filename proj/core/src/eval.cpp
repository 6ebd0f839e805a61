#include "beltscan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "beltscan/error.hpp"

namespace beltscan {

Confusion confusion(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw DataError("confusion: prediction and ground truth dimensions differ");
  }
  Confusion m{};
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    ++m[gt.labels[i]][pred.labels[i]];
  }
  return m;
}

void accumulate_confusion(Confusion& into, const Confusion& add) {
  for (int g = 0; g < kNumClasses; ++g) {
    for (int p = 0; p < kNumClasses; ++p) into[g][p] += add[g][p];
  }
}

std::array<double, kNumClasses> per_class_iou(const Confusion& matrix) {
  std::array<double, kNumClasses> iou;
  iou.fill(std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < kNumClasses; ++c) {
    std::int64_t row = 0, col = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      row += matrix[c][k];
      col += matrix[k][c];
    }
    const std::int64_t diag = matrix[c][c];
    const std::int64_t uni = row + col - diag;
    if (uni > 0) iou[c] = static_cast<double>(diag) / static_cast<double>(uni);
  }
  return iou;
}

double miou(const Confusion& matrix) {
  const auto iou = per_class_iou(matrix);
  double sum = 0.0;
  int present = 0;
  for (double v : iou) {
    if (!std::isnan(v)) {
      sum += v;
      ++present;
    }
  }
  if (present == 0) throw DataError("mIoU of an empty confusion matrix");
  return sum / present;
}

BlobTally blob_match(const ContaminantReport& report, const LabelMap& gt) {
  BlobTally tally;
  for (const Blob& blob : report.blobs) {
    bool overlaps = false;
    for (const auto& [y, x] : blob.pixels) {
      if (y < 0 || y >= gt.height || x < 0 || x >= gt.width) {
        throw DataError("blob pixel outside ground truth raster");
      }
      if (is_contaminant(gt.at(y, x))) {
        overlaps = true;
        break;
      }
    }
    std::int64_t overlap_px = 0;
    for (const auto& [y, x] : blob.pixels) {
      if (is_contaminant(gt.at(y, x))) ++overlap_px;
    }
    if (overlaps) {
      ++tally.tp_blobs;
      tally.tp_pixels += overlap_px;
      tally.fp_pixels += blob.area - overlap_px;
    } else {
      ++tally.fp_blobs;
      tally.fp_pixels += blob.area;
    }
  }
  tally.fp_image = tally.fp_blobs > 0;
  return tally;
}

namespace {

// True when the blob contains at least one pixel whose full 3x3 neighborhood
// lies inside the blob (it would survive square erosion).
bool survives_3x3(const Blob& blob) {
  std::vector<std::pair<int, int>> px = blob.pixels;
  std::sort(px.begin(), px.end());
  auto contains = [&px](int y, int x) {
    return std::binary_search(px.begin(), px.end(), std::make_pair(y, x));
  };
  for (const auto& [y, x] : blob.pixels) {
    bool all = true;
    for (int dy = -1; dy <= 1 && all; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (!contains(y + dy, x + dx)) {
          all = false;
          break;
        }
      }
    }
    if (all) return true;
  }
  return false;
}

}  // namespace

RecallTally blob_recall(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw DataError("blob_recall: prediction and ground truth dimensions differ");
  }
  RecallTally tally;
  for (const Blob& blob : find_blobs(gt)) {
    const bool big = survives_3x3(blob);
    bool detected = false;
    for (const auto& [y, x] : blob.pixels) {
      if (is_contaminant(pred.at(y, x))) {
        detected = true;
        break;
      }
    }
    ++tally.gt_blobs;
    if (detected) ++tally.detected_blobs;
    if (big) {
      ++tally.gt_blobs_3x3;
      if (detected) ++tally.detected_blobs_3x3;
    }
  }
  return tally;
}

void emit_report(const EvalMetrics& metrics, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path.string());
  out << "metric,value\n";
  out << std::fixed << std::setprecision(6);
  out << "miou," << metrics.miou << "\n";
  for (int c = 0; c < kNumClasses; ++c) {
    out << "iou_" << class_name(static_cast<std::uint8_t>(c)) << ",";
    if (std::isnan(metrics.iou[c])) {
      out << "absent";
    } else {
      out << metrics.iou[c];
    }
    out << "\n";
  }
  out << "tp_blobs," << metrics.tp_blobs << "\n";
  out << "fp_blobs," << metrics.fp_blobs << "\n";
  out << "tp_pixels," << metrics.tp_pixels << "\n";
  out << "fp_pixels," << metrics.fp_pixels << "\n";
  out << "fp_images," << metrics.fp_images << "\n";
  out << "images," << metrics.images << "\n";
  out << "gt_blobs," << metrics.recall.gt_blobs << "\n";
  out << "detected_blobs," << metrics.recall.detected_blobs << "\n";
  out << "gt_blobs_3x3," << metrics.recall.gt_blobs_3x3 << "\n";
  out << "detected_blobs_3x3," << metrics.recall.detected_blobs_3x3 << "\n";
  out << "recall_3x3,";
  if (metrics.recall.gt_blobs_3x3 > 0) {
    out << static_cast<double>(metrics.recall.detected_blobs_3x3) /
               metrics.recall.gt_blobs_3x3;
  } else {
    out << "absent";
  }
  out << "\n";
  out << "fps," << metrics.fps << "\n";
  if (!out) throw DataError("short write to report: " + path.string());
}

std::map<std::string, double> parse_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report: " + path.string());
  std::map<std::string, double> values;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) continue;
    const std::string key = line.substr(0, comma);
    const std::string value = line.substr(comma + 1);
    if (value == "absent") continue;
    try {
      values[key] = std::stod(value);
    } catch (const std::exception&) {
      throw DataError("bad report value for '" + key + "': " + path.string());
    }
  }
  return values;
}

void emit_spectra(const HyperCube& cube,
                  const std::vector<std::pair<int, int>>& pixels,
                  const std::filesystem::path& csv_path,
                  const std::filesystem::path& svg_path) {
  if (pixels.empty()) throw DataError("no pixels requested");
  for (const auto& [y, x] : pixels) {
    if (y < 0 || y >= cube.height || x < 0 || x >= cube.width) {
      std::ostringstream msg;
      msg << "pixel (" << x << "," << y << ") outside cube";
      throw DataError(msg.str());
    }
  }

  {
    std::ofstream out(csv_path);
    if (!out) throw DataError("cannot write spectra CSV: " + csv_path.string());
    out << "wavelength_nm";
    for (const auto& [y, x] : pixels) out << ",pix_" << x << "_" << y;
    out << "\n";
    out << std::fixed << std::setprecision(6);
    for (int b = 0; b < cube.bands; ++b) {
      out << cube.grid.wavelength_nm(b);
      for (const auto& [y, x] : pixels) out << "," << cube.at(y, x, b);
      out << "\n";
    }
  }

  float lo = cube.at(pixels[0].first, pixels[0].second, 0);
  float hi = lo;
  for (const auto& [y, x] : pixels) {
    for (int b = 0; b < cube.bands; ++b) {
      lo = std::min(lo, cube.at(y, x, b));
      hi = std::max(hi, cube.at(y, x, b));
    }
  }
  if (hi <= lo) hi = lo + 1.0f;

  constexpr int kWidth = 860;
  constexpr int kHeight = 520;
  constexpr int kMargin = 50;
  const double wl0 = cube.grid.min_wavelength_nm();
  const double wl1 = cube.grid.max_wavelength_nm();
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::ofstream svg(svg_path);
  if (!svg) throw DataError("cannot write SVG: " + svg_path.string());
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\""
      << kWidth - kMargin << "\" y2=\"" << kHeight - kMargin
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin
      << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">wavelength [nm]</text>\n";

  svg << std::fixed << std::setprecision(2);
  int color = 0;
  for (const auto& [y, x] : pixels) {
    svg << "<polyline fill=\"none\" stroke=\""
        << kPalette[color++ % (sizeof(kPalette) / sizeof(kPalette[0]))]
        << "\" stroke-width=\"1.2\" points=\"";
    for (int b = 0; b < cube.bands; ++b) {
      const double wl = cube.grid.wavelength_nm(b);
      const double px =
          kMargin + (wl - wl0) / (wl1 - wl0) * (kWidth - 2 * kMargin);
      const double py = kHeight - kMargin -
                        (cube.at(y, x, b) - lo) / (hi - lo) *
                            (kHeight - 2 * kMargin);
      svg << px << "," << py << (b + 1 < cube.bands ? " " : "");
    }
    svg << "\"/>\n";
  }
  svg << "</svg>\n";
  if (!svg) throw DataError("short write to SVG: " + svg_path.string());
}

}  // namespace beltscan
