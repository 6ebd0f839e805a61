#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "beltscan/calibration.hpp"
#include "beltscan/hypercube.hpp"

namespace beltscan {

// Smooth reflectance curve for one material over the retained bands, with a
// per-band jitter sigma and a declared smoothness bound on adjacent-band
// differences.
struct MaterialSpectrum {
  MaterialId id = MaterialId::kMeat;
  std::vector<float> mean;     // retained_bands values in (0, 1]
  std::vector<float> std_dev;  // per-band jitter sigma
  float smoothness = 0.05f;    // max |mean[i+1] - mean[i]|
};

enum class ContaminantShape { kRectangle, kEllipse, kLine, kSpiral };

struct ContaminantSpec {
  MaterialId material = MaterialId::kPehd;
  ContaminantShape shape = ContaminantShape::kRectangle;
  int size_px = 6;  // nominal extent of the footprint
};

enum class Orientation { kFatUp, kMeatUp };

// Geometry of one line-scan capture. All randomness derives from `seed`.
struct SceneSpec {
  int height = 160;
  int width = 128;
  Orientation orientation = Orientation::kFatUp;
  std::vector<ContaminantSpec> contaminants;
  std::uint64_t seed = 0;
  int streaks = 3;             // marbling patches of the opposite pork material
  float blend_px = 1.0f;       // boundary blend width (0 disables)
};

// Global gain/offset pair standing in for sensor-temperature and exposure
// drift between acquisitions.
struct DriftSetting {
  float gain = 1.0f;
  float offset = 0.0f;
};

// Raw-domain noise injected by the virtual sensor. With identity() the raw
// cube equals the ideal radiance plus dark level and shot noise.
struct NoiseModel {
  float stripe_sigma = 0.05f;   // log-gain sigma of per-column/per-band stripes
  std::uint64_t stripe_seed = 0;
  float dark_level = 0.06f;
  float shot_sigma = 0.004f;
  float shading_amp = 0.06f;    // smooth multiplicative shading field
  DriftSetting drift;

  static NoiseModel identity() {
    NoiseModel m;
    m.stripe_sigma = 0.0f;
    m.dark_level = 0.0f;
    m.shot_sigma = 0.0f;
    m.shading_amp = 0.0f;
    return m;
  }
};

// Fixed optics of the virtual line-scan camera.
struct CameraMeta {
  float line_rate_hz = 527.0f;
  float pixel_pitch_mm = 0.47f;
  float fov_width_mm = 300.0f;
  float standoff_mm = 400.0f;
  int sensor_pixels = 640;
};

/// The 13 material curves, lightly perturbed by `seed`. Construction
/// guarantees the spectral reclassification rules keep true positives and
/// recover mislabeled negatives; violations throw.
std::vector<MaterialSpectrum> default_materials(
    std::uint64_t seed, const WavelengthGrid& grid = WavelengthGrid{});

struct RenderedScene {
  HyperCube raw;  // all sensor bands, noise applied
  LabelMap labels;
  CalibrationFrames frames;  // dark/flat captured at the scene's drift
};

/// Renders one scene. Deterministic in (spec, materials, noise).
RenderedScene render_scene(const SceneSpec& spec,
                           const std::vector<MaterialSpectrum>& materials,
                           const NoiseModel& noise);

struct DatasetSpec {
  int n_scenes = 10;
  int height = 160;
  int width = 128;
  double contaminant_fraction = 0.5;
  float drift_gain_min = 1.0f;
  float drift_gain_max = 1.0f;
  std::uint64_t seed = 0;
};

/// Scene spec and drift for scene `index` of a dataset; exposed so callers
/// can re-render individual scenes at a pinned drift.
std::pair<SceneSpec, DriftSetting> dataset_scene_spec(const DatasetSpec& spec,
                                                      int index);

/// Builds the noise model used for dataset scenes (shared stripe field).
NoiseModel dataset_noise(const DatasetSpec& spec, DriftSetting drift);

/// Material curves used by render_dataset for this spec.
std::vector<MaterialSpectrum> dataset_materials(const DatasetSpec& spec);

/// Renders the whole dataset into `out_dir`: per scene the raw cube, dark and
/// flat frames and label map, plus a manifest.csv. Returns the manifest rows.
std::vector<std::string> render_dataset(const DatasetSpec& spec,
                                        const std::filesystem::path& out_dir);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace beltscan
