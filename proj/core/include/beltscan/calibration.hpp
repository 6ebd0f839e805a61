#pragma once

#include <cstdint>
#include <vector>

#include "beltscan/hypercube.hpp"

namespace beltscan {

// Reference frames for flat-field correction: a dark frame captured with the
// shutter closed and a flat frame captured from a homogeneous bright surface.
struct CalibrationFrames {
  HyperCube dark;
  HyperCube flat;
};

// Per-pixel, per-band gain derived from the frames: gain = m / (flat - dark)
// with m the per-band mean of (flat - dark) over live pixels. Pixels whose
// flat - dark response is at or below epsilon_live are flagged dead.
struct GainMap {
  int height = 0;
  int width = 0;
  int bands = 0;
  std::vector<float> gain;           // cube layout
  std::vector<float> per_band_mean;  // m, length bands
  std::vector<std::uint8_t> dead;    // cube layout, 1 = dead

  bool is_dead(int y, int x, int b) const {
    return dead[(static_cast<std::int64_t>(y) * width + x) * bands + b] != 0;
  }
};

/// Computes the gain map. epsilon_live <= 0 selects the default threshold
/// 1e-6 * max(flat - dark). Throws DataError when the frames disagree in
/// shape or when every pixel of some band is dead.
GainMap compute_gain(const CalibrationFrames& frames, double epsilon_live = 0.0);

/// Flat-field correction C = (I - D) * G. Dead pixels are filled with the
/// mean of their live 4-neighbors in the same band (zero when none).
HyperCube apply_ffc(const HyperCube& image, const CalibrationFrames& frames,
                    const GainMap& gain);

/// Per-pixel spectral normalization: s' = (s - min s) / (max s - min s).
/// Constant spectra map to all zeros.
HyperCube normalize_spectra(const HyperCube& cube);

/// Core of normalize_spectra for one spectrum, in double precision.
void normalize_spectrum(const double* in, double* out, int bands);

}  // namespace beltscan
