#include "beltscan/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "beltscan/error.hpp"

namespace beltscan {

namespace {

void check_same_shape(const HyperCube& a, const HyperCube& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.bands != b.bands) {
    std::ostringstream msg;
    msg << what << ": shape mismatch (" << a.height << "x" << a.width << "x"
        << a.bands << " vs " << b.height << "x" << b.width << "x" << b.bands << ")";
    throw DataError(msg.str());
  }
}

}  // namespace

GainMap compute_gain(const CalibrationFrames& frames, double epsilon_live) {
  check_same_shape(frames.dark, frames.flat, "calibration frames");
  const HyperCube& dark = frames.dark;
  const HyperCube& flat = frames.flat;
  const std::int64_t pixels = dark.pixel_count();
  const int bands = dark.bands;

  GainMap map;
  map.height = dark.height;
  map.width = dark.width;
  map.bands = bands;
  map.gain.assign(static_cast<std::size_t>(dark.value_count()), 0.0f);
  map.dead.assign(static_cast<std::size_t>(dark.value_count()), 0);
  map.per_band_mean.assign(bands, 0.0f);

  if (epsilon_live <= 0.0) {
    double max_response = 0.0;
    for (std::int64_t i = 0; i < dark.value_count(); ++i) {
      max_response = std::max(
          max_response, static_cast<double>(flat.data[i]) - dark.data[i]);
    }
    epsilon_live = 1e-6 * max_response;
  }
  if (epsilon_live <= 0.0) {
    throw DataError("calibration impossible: flat frame never exceeds dark frame");
  }

  std::vector<double> sum(bands, 0.0);
  std::vector<std::int64_t> live(bands, 0);
  for (std::int64_t p = 0; p < pixels; ++p) {
    for (int b = 0; b < bands; ++b) {
      const std::int64_t i = p * bands + b;
      const double response =
          static_cast<double>(flat.data[i]) - dark.data[i];
      if (response > epsilon_live) {
        sum[b] += response;
        ++live[b];
      } else {
        map.dead[i] = 1;
      }
    }
  }
  for (int b = 0; b < bands; ++b) {
    if (live[b] == 0) {
      std::ostringstream msg;
      msg << "calibration impossible: every pixel of band " << b
          << " is dead (flat - dark <= " << epsilon_live << ")";
      throw DataError(msg.str());
    }
    map.per_band_mean[b] = static_cast<float>(sum[b] / live[b]);
  }
  for (std::int64_t p = 0; p < pixels; ++p) {
    for (int b = 0; b < bands; ++b) {
      const std::int64_t i = p * bands + b;
      if (map.dead[i]) continue;
      const double response =
          static_cast<double>(flat.data[i]) - dark.data[i];
      map.gain[i] = static_cast<float>(map.per_band_mean[b] / response);
    }
  }
  return map;
}

HyperCube apply_ffc(const HyperCube& image, const CalibrationFrames& frames,
                    const GainMap& gain) {
  check_same_shape(image, frames.dark, "flat-field correction");
  if (image.height != gain.height || image.width != gain.width ||
      image.bands != gain.bands) {
    throw DataError("flat-field correction: gain map shape mismatch");
  }
  const int height = image.height;
  const int width = image.width;
  const int bands = image.bands;

  HyperCube out = make_cube(height, width, bands, image.grid);
  for (std::int64_t i = 0; i < image.value_count(); ++i) {
    if (gain.dead[i]) continue;
    out.data[i] = (image.data[i] - frames.dark.data[i]) * gain.gain[i];
  }
  // Dead pixels take the mean of their live 4-neighbors in the same band.
  constexpr int kDy[4] = {-1, 1, 0, 0};
  constexpr int kDx[4] = {0, 0, -1, 1};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int b = 0; b < bands; ++b) {
        const std::int64_t i =
            (static_cast<std::int64_t>(y) * width + x) * bands + b;
        if (!gain.dead[i]) continue;
        double sum = 0.0;
        int n = 0;
        for (int k = 0; k < 4; ++k) {
          const int ny = y + kDy[k];
          const int nx = x + kDx[k];
          if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
          const std::int64_t j =
              (static_cast<std::int64_t>(ny) * width + nx) * bands + b;
          if (gain.dead[j]) continue;
          sum += out.data[j];
          ++n;
        }
        out.data[i] = n > 0 ? static_cast<float>(sum / n) : 0.0f;
      }
    }
  }
  if (!out.all_finite()) {
    throw DataError("flat-field correction produced non-finite values");
  }
  return out;
}

void normalize_spectrum(const double* in, double* out, int bands) {
  double lo = in[0];
  double hi = in[0];
  for (int b = 1; b < bands; ++b) {
    lo = std::min(lo, in[b]);
    hi = std::max(hi, in[b]);
  }
  const double range = hi - lo;
  if (range <= 0.0) {
    std::fill(out, out + bands, 0.0);
    return;
  }
  const double inv = 1.0 / range;
  for (int b = 0; b < bands; ++b) out[b] = (in[b] - lo) * inv;
}

HyperCube normalize_spectra(const HyperCube& cube) {
  if (cube.bands < 2) {
    throw DataError("spectral normalization needs at least two bands");
  }
  HyperCube out = make_cube(cube.height, cube.width, cube.bands, cube.grid);
  const std::int64_t pixels = cube.pixel_count();
  const int bands = cube.bands;
  std::vector<double> spectrum(bands);
  std::vector<double> normalized(bands);
  for (std::int64_t p = 0; p < pixels; ++p) {
    const float* src = cube.data.data() + p * bands;
    for (int b = 0; b < bands; ++b) spectrum[b] = src[b];
    normalize_spectrum(spectrum.data(), normalized.data(), bands);
    float* dst = out.data.data() + p * bands;
    for (int b = 0; b < bands; ++b) dst[b] = static_cast<float>(normalized[b]);
  }
  return out;
}

}  // namespace beltscan
