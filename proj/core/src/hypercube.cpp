#include "beltscan/hypercube.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "beltscan/error.hpp"

namespace beltscan {

namespace {

const char* const kClassNames[kNumClasses] = {
    "meat",    "fat",     "conveyor", "pa_pp", "pu",        "metal", "pehd",
    "teflon",  "nitrile", "wood",     "paper", "cardboard", "white_conveyor"};

}  // namespace

int wavelength_to_band(double lambda_nm, const WavelengthGrid& grid) {
  const int sensor_index =
      static_cast<int>(std::lround((lambda_nm - grid.origin_nm) / grid.step_nm));
  const int retained = sensor_index - grid.skip_head;
  if (retained < 0 || retained >= grid.retained_bands()) {
    std::ostringstream msg;
    msg << "wavelength " << lambda_nm << " nm is outside the retained span ["
        << grid.min_wavelength_nm() << ", " << grid.max_wavelength_nm() << "] nm";
    throw DataError(msg.str());
  }
  return retained;
}

double band_to_wavelength(int retained_band, const WavelengthGrid& grid) {
  if (retained_band < 0 || retained_band >= grid.retained_bands()) {
    std::ostringstream msg;
    msg << "band index " << retained_band << " is outside [0, "
        << grid.retained_bands() << ")";
    throw DataError(msg.str());
  }
  return grid.wavelength_nm(retained_band);
}

bool HyperCube::all_finite() const {
  return std::all_of(data.begin(), data.end(),
                     [](float v) { return std::isfinite(v); });
}

HyperCube make_cube(int height, int width, int bands, const WavelengthGrid& grid,
                    float fill) {
  if (height <= 0 || width <= 0 || bands <= 0) {
    throw DataError("cube dimensions must be positive");
  }
  HyperCube cube;
  cube.height = height;
  cube.width = width;
  cube.bands = bands;
  cube.grid = grid;
  cube.data.assign(static_cast<std::size_t>(cube.value_count()), fill);
  return cube;
}

const char* class_name(std::uint8_t code) {
  if (code >= kNumClasses) throw DataError("class code out of range");
  return kClassNames[code];
}

const char* class_name(MaterialId id) {
  return class_name(static_cast<std::uint8_t>(id));
}

MaterialId class_from_name(const std::string& name) {
  for (int c = 0; c < kNumClasses; ++c) {
    if (name == kClassNames[c]) return static_cast<MaterialId>(c);
  }
  throw DataError("unknown material class name: " + name);
}

LabelMap make_labels(int height, int width, std::uint8_t fill) {
  if (height <= 0 || width <= 0) {
    throw DataError("label map dimensions must be positive");
  }
  LabelMap map;
  map.height = height;
  map.width = width;
  map.labels.assign(static_cast<std::size_t>(height) * width, fill);
  return map;
}

namespace {

// Stride positions along one axis: 0, s, 2s, ... with a final position
// shifted to end flush at extent - size.
std::vector<int> axis_positions(int extent, int size, int stride) {
  std::vector<int> positions;
  const int last = extent - size;
  for (int p = 0; p <= last; p += stride) positions.push_back(p);
  if (positions.back() != last) positions.push_back(last);
  return positions;
}

}  // namespace

std::vector<PatchOrigin> tile_origins(int height, int width, const PatchSpec& spec) {
  if (spec.patch_h <= 0 || spec.patch_w <= 0) {
    throw DataError("patch dimensions must be positive");
  }
  if (spec.overlap_fraction < 0.0 || spec.overlap_fraction >= 1.0) {
    throw DataError("overlap fraction must lie in [0, 1)");
  }
  if (height < spec.patch_h || width < spec.patch_w) {
    std::ostringstream msg;
    msg << "image " << height << "x" << width << " is smaller than one "
        << spec.patch_h << "x" << spec.patch_w << " patch";
    throw DataError(msg.str());
  }
  const int stride_h = std::max(
      1, static_cast<int>(std::lround(spec.patch_h * (1.0 - spec.overlap_fraction))));
  const int stride_w = std::max(
      1, static_cast<int>(std::lround(spec.patch_w * (1.0 - spec.overlap_fraction))));

  const std::vector<int> rows = axis_positions(height, spec.patch_h, stride_h);
  const std::vector<int> cols = axis_positions(width, spec.patch_w, stride_w);

  std::vector<PatchOrigin> origins;
  origins.reserve(rows.size() * cols.size());
  for (int r : rows) {
    for (int c : cols) origins.push_back({r, c});
  }
  return origins;
}

void extract_patch(const HyperCube& cube, PatchOrigin origin, const PatchSpec& spec,
                   float* out) {
  if (origin.row < 0 || origin.col < 0 || origin.row + spec.patch_h > cube.height ||
      origin.col + spec.patch_w > cube.width) {
    throw DataError("patch origin out of bounds");
  }
  const std::size_t row_bytes =
      static_cast<std::size_t>(spec.patch_w) * cube.bands * sizeof(float);
  for (int py = 0; py < spec.patch_h; ++py) {
    const float* src = cube.data.data() +
                       (static_cast<std::int64_t>(origin.row + py) * cube.width +
                        origin.col) *
                           cube.bands;
    std::memcpy(out + static_cast<std::size_t>(py) * spec.patch_w * cube.bands, src,
                row_bytes);
  }
}

HyperCube select_bands(const HyperCube& raw) {
  const WavelengthGrid& g = raw.grid;
  if (raw.bands != g.sensor_bands) {
    std::ostringstream msg;
    msg << "band selection expects " << g.sensor_bands << " sensor bands, got "
        << raw.bands;
    throw DataError(msg.str());
  }
  HyperCube out = make_cube(raw.height, raw.width, g.retained_bands(), g);
  const std::int64_t pixels = raw.pixel_count();
  const int retained = g.retained_bands();
  for (std::int64_t p = 0; p < pixels; ++p) {
    const float* src = raw.data.data() + p * raw.bands + g.skip_head;
    std::copy(src, src + retained, out.data.data() + p * retained);
  }
  return out;
}

}  // namespace beltscan
