#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace beltscan {

// Spectral axis of the line-scan sensor: a uniform wavelength lattice where
// the noisy head and tail bands are dropped after acquisition. Retained band
// i sits at origin_nm + step_nm * (i + skip_head).
struct WavelengthGrid {
  double origin_nm = 942.0;
  double step_nm = 3.5;
  int sensor_bands = 224;
  int skip_head = 20;
  int skip_tail = 20;

  int retained_bands() const { return sensor_bands - skip_head - skip_tail; }
  double wavelength_nm(int retained_band) const {
    return origin_nm + step_nm * (retained_band + skip_head);
  }
  double min_wavelength_nm() const { return wavelength_nm(0); }
  double max_wavelength_nm() const { return wavelength_nm(retained_bands() - 1); }
};

/// Maps a wavelength to the nearest retained band index.
/// Throws DataError when the wavelength falls outside the retained span.
int wavelength_to_band(double lambda_nm, const WavelengthGrid& grid);

/// Inverse of wavelength_to_band on the lattice. Throws DataError on a bad index.
double band_to_wavelength(int retained_band, const WavelengthGrid& grid);

// H x W x B reflectance volume stored band-interleaved by pixel, so the
// spectrum of one pixel is contiguous in memory.
struct HyperCube {
  int height = 0;
  int width = 0;
  int bands = 0;
  WavelengthGrid grid;
  std::vector<float> data;

  std::int64_t pixel_count() const {
    return static_cast<std::int64_t>(height) * width;
  }
  std::int64_t value_count() const { return pixel_count() * bands; }

  float& at(int y, int x, int b) {
    return data[(static_cast<std::int64_t>(y) * width + x) * bands + b];
  }
  float at(int y, int x, int b) const {
    return data[(static_cast<std::int64_t>(y) * width + x) * bands + b];
  }
  std::span<float> spectrum(int y, int x) {
    return {data.data() + (static_cast<std::int64_t>(y) * width + x) * bands,
            static_cast<std::size_t>(bands)};
  }
  std::span<const float> spectrum(int y, int x) const {
    return {data.data() + (static_cast<std::int64_t>(y) * width + x) * bands,
            static_cast<std::size_t>(bands)};
  }
  bool all_finite() const;
};

HyperCube make_cube(int height, int width, int bands,
                    const WavelengthGrid& grid = WavelengthGrid{},
                    float fill = 0.0f);

// The 13 material classes. Codes 0..2 are the negative (non-contaminant)
// classes; codes 3..12 are contaminants.
enum class MaterialId : std::uint8_t {
  kMeat = 0,
  kFat = 1,
  kConveyor = 2,
  kPaPp = 3,
  kPu = 4,
  kMetal = 5,
  kPehd = 6,
  kTeflon = 7,
  kNitrile = 8,
  kWood = 9,
  kPaper = 10,
  kCardboard = 11,
  kWhiteConveyor = 12,
};

inline constexpr int kNumClasses = 13;
inline constexpr int kNumNegativeClasses = 3;

inline bool is_contaminant(std::uint8_t code) { return code >= kNumNegativeClasses; }
inline bool is_contaminant(MaterialId id) {
  return is_contaminant(static_cast<std::uint8_t>(id));
}

const char* class_name(MaterialId id);
const char* class_name(std::uint8_t code);
MaterialId class_from_name(const std::string& name);

// Per-pixel class raster matching a source cube.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t& at(int y, int x) {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int y, int x) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
};

LabelMap make_labels(int height, int width, std::uint8_t fill = 0);

// Patch geometry fed to the model: every pixel of a patch is one token.
struct PatchSpec {
  int patch_h = 20;
  int patch_w = 16;
  double overlap_fraction = 0.5;

  int tokens() const { return patch_h * patch_w; }
};

struct PatchOrigin {
  int row = 0;
  int col = 0;
  bool operator==(const PatchOrigin&) const = default;
};

/// Row-major tile origins with stride patch * (1 - overlap). When the image
/// size is not a multiple of the stride, the final tile on each axis is
/// shifted inward to end flush with the image edge, so every pixel is covered
/// and no tile leaves the image. Throws DataError if the image is smaller
/// than one patch.
std::vector<PatchOrigin> tile_origins(int height, int width, const PatchSpec& spec);

/// Copies the patch at `origin` into `out` as spec.tokens() rows of
/// cube.bands values (row-major over the patch).
void extract_patch(const HyperCube& cube, PatchOrigin origin,
                   const PatchSpec& spec, float* out);

/// Drops the skip_head leading and skip_tail trailing sensor bands.
/// The input must still carry all sensor bands.
HyperCube select_bands(const HyperCube& raw);

// ENVI-style storage: <stem>.hdr text header plus <stem>.raw binary payload,
// 32-bit little-endian floats in BIP order for cubes, 8-bit classes for
// label maps. `path` may name either file of the pair.
void save_cube(const HyperCube& cube, const std::filesystem::path& path);
HyperCube load_cube(const std::filesystem::path& path);
void save_labels(const LabelMap& labels, const std::filesystem::path& path);
LabelMap load_labels(const std::filesystem::path& path);

}  // namespace beltscan
