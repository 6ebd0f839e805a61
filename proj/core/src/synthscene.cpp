// Seeded synthetic line-scan scenes. Material curves are Gaussian-mixture
// bumps shaped so that (a) fat and PEHD differ only near 1222 nm, (b) the
// spectral reclassification rules never fire on correctly labeled pixels and
// (c) they do fire on the negative materials the rules are meant to recover.

#include "beltscan/synthscene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "beltscan/error.hpp"
#include "beltscan/postprocess.hpp"

namespace beltscan {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 over the xor of seed and salt.
  std::uint64_t z = seed ^ (salt + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

struct Bump {
  double center_nm;
  double sigma_nm;
  double amp;
};

struct Ramp {
  double from_nm;
  double to_nm;
  double amp;
};

struct CurveRecipe {
  double base;
  std::vector<Bump> bumps;
  std::vector<Ramp> ramps;
};

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double eval_recipe(const CurveRecipe& recipe, double lambda_nm) {
  double v = recipe.base;
  for (const Bump& b : recipe.bumps) {
    const double d = (lambda_nm - b.center_nm) / b.sigma_nm;
    v += b.amp * std::exp(-0.5 * d * d);
  }
  for (const Ramp& r : recipe.ramps) {
    v += r.amp * smoothstep((lambda_nm - r.from_nm) / (r.to_nm - r.from_nm));
  }
  return v;
}

// Canonical recipes indexed by MaterialId code. Fat and PEHD share a pork
// base and differ only by one local feature near 1222 nm.
std::vector<CurveRecipe> canonical_recipes() {
  const CurveRecipe porkbase{0.54,
                             {{1440, 45, -0.16}, {1330, 60, 0.04}},
                             {{1080, 1150, -0.07}, {1500, 1650, -0.03}}};
  std::vector<CurveRecipe> recipes(kNumClasses);

  // meat: broad rise into 1240 so rule 3 recovers meat mislabeled as PA-PP.
  recipes[0] = {0.27,
                {{1450, 42, -0.14}, {1590, 55, 0.05}},
                {{1040, 1240, 0.14}}};
  // fat: pork base plus a shoulder at 1232 (rule 1 fires on fat spectra).
  recipes[1] = porkbase;
  recipes[1].bumps.push_back({1232, 13, 0.09});
  // conveyor: rises through the 1100s (rule 2) and has a sharp step at 1415
  // so rule 1's ratio clause cannot fire.
  recipes[2] = {0.17,
                {{1415, 4, 0.08}, {1560, 50, 0.03}, {1230, 40, -0.02}},
                {{1080, 1150, 0.07}}};
  // pa_pp: narrow dip before 1222 plus a short-wavelength shoulder; rule 3
  // stays quiet on true PA-PP.
  recipes[3] = {0.40, {{1045, 28, 0.07}, {1208, 8, -0.07}, {1480, 60, 0.05}}, {}};
  recipes[4] = {0.36, {{1150, 35, 0.10}, {1380, 30, -0.09}, {1600, 60, 0.05}}, {}};
  recipes[5] = {0.14, {{1120, 50, 0.06}, {1520, 70, 0.05}}, {}};
  // pehd: pork base minus a local absorption at 1222 (rules 1 and 2 stay
  // quiet on true PEHD).
  recipes[6] = porkbase;
  recipes[6].bumps.push_back({1222, 12, -0.13});
  recipes[7] = {0.88, {{1440, 55, -0.06}, {1180, 80, 0.02}}, {}};
  recipes[8] = {0.46, {{1340, 26, 0.11}, {1530, 40, -0.07}}, {}};
  recipes[9] = {0.50, {{1195, 55, -0.10}, {1472, 42, -0.13}, {1600, 60, 0.04}}, {}};
  recipes[10] = {0.63, {{1285, 120, 0.07}, {1490, 38, -0.09}}, {}};
  recipes[11] = {0.52, {{1160, 45, -0.05}, {1370, 55, 0.06}, {1510, 45, -0.06}}, {}};
  recipes[12] = {0.73, {{1075, 30, 0.06}, {1460, 60, -0.11}, {1250, 90, 0.03}}, {}};
  return recipes;
}

void verify_materials(const std::vector<MaterialSpectrum>& materials,
                      const WavelengthGrid& grid) {
  const RuleBands bands = RuleBands::resolve(grid);
  auto spectrum = [&](MaterialId id) -> std::span<const float> {
    return materials[static_cast<int>(id)].mean;
  };
  // Rules must never erase true positives...
  if (rule_pehd_to_fat(spectrum(MaterialId::kPehd), bands) ||
      rule_pehd_to_conveyor(spectrum(MaterialId::kPehd), bands)) {
    throw DataError("material construction broken: rules fire on true PEHD");
  }
  if (rule_papp_to_meat(spectrum(MaterialId::kPaPp), bands)) {
    throw DataError("material construction broken: rule 3 fires on true PA-PP");
  }
  // ...and must recover mislabeled negatives.
  if (!rule_pehd_to_fat(spectrum(MaterialId::kFat), bands)) {
    throw DataError("material construction broken: rule 1 misses fat");
  }
  if (rule_pehd_to_fat(spectrum(MaterialId::kConveyor), bands) ||
      !rule_pehd_to_conveyor(spectrum(MaterialId::kConveyor), bands)) {
    throw DataError("material construction broken: conveyor routing");
  }
  if (!rule_papp_to_meat(spectrum(MaterialId::kMeat), bands)) {
    throw DataError("material construction broken: rule 3 misses meat");
  }
  for (const MaterialSpectrum& m : materials) {
    float prev = m.mean[0];
    for (float v : m.mean) {
      if (v <= 0.0f || v > 1.0f) {
        throw DataError("material curve left (0, 1]");
      }
      if (std::abs(v - prev) > m.smoothness) {
        throw DataError("material curve exceeds its smoothness bound");
      }
      prev = v;
    }
  }
  for (std::size_t a = 0; a < materials.size(); ++a) {
    for (std::size_t b = a + 1; b < materials.size(); ++b) {
      float max_diff = 0.0f;
      for (int i = 0; i < static_cast<int>(materials[a].mean.size()); ++i) {
        max_diff = std::max(max_diff,
                            std::abs(materials[a].mean[i] - materials[b].mean[i]));
      }
      if (max_diff <= 0.0f) throw DataError("two material curves coincide");
    }
  }
}

}  // namespace

std::vector<MaterialSpectrum> default_materials(std::uint64_t seed,
                                                const WavelengthGrid& grid) {
  std::vector<CurveRecipe> recipes = canonical_recipes();
  std::mt19937_64 rng(mix_seed(seed, 0x6d617431ULL));
  std::uniform_real_distribution<double> base_jitter(-0.008, 0.008);
  std::uniform_real_distribution<double> amp_jitter(0.97, 1.03);
  std::uniform_real_distribution<double> center_jitter(-1.2, 1.2);

  const int bands = grid.retained_bands();
  std::vector<MaterialSpectrum> materials(kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) {
    CurveRecipe& recipe = recipes[c];
    recipe.base += base_jitter(rng);
    for (Bump& bump : recipe.bumps) {
      bump.amp *= amp_jitter(rng);
      bump.center_nm += center_jitter(rng);
    }
    MaterialSpectrum& m = materials[c];
    m.id = static_cast<MaterialId>(c);
    m.smoothness = 0.05f;
    m.mean.resize(bands);
    m.std_dev.assign(bands, 0.004f);
    for (int b = 0; b < bands; ++b) {
      const double v = eval_recipe(recipe, grid.wavelength_nm(b));
      m.mean[b] = static_cast<float>(std::clamp(v, 0.04, 1.0));
    }
  }
  verify_materials(materials, grid);
  return materials;
}

namespace {

struct SceneLayout {
  LabelMap labels;
  // Blend weights toward neighbor materials, resolved per pixel later.
};

bool inside_superellipse(double y, double x, double cy, double cx, double ry,
                         double rx, double n) {
  const double u = std::abs((x - cx) / rx);
  const double v = std::abs((y - cy) / ry);
  return std::pow(u, n) + std::pow(v, n) <= 1.0;
}

// Rasterizes one contaminant footprint centered at (cy, cx); returns pixels.
std::vector<std::pair<int, int>> contaminant_pixels(const ContaminantSpec& spec,
                                                    int cy, int cx,
                                                    std::mt19937_64& rng) {
  std::vector<std::pair<int, int>> px;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (spec.shape) {
    case ContaminantShape::kRectangle: {
      const int h = std::max(2, spec.size_px);
      const int w = std::max(2, static_cast<int>(std::lround(
                                    spec.size_px * (0.6 + 0.4 * unit(rng)))));
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) px.push_back({cy - h / 2 + y, cx - w / 2 + x});
      }
      break;
    }
    case ContaminantShape::kEllipse: {
      const double a = std::max(1.0, spec.size_px / 2.0);
      const double b = std::max(1.0, a * (0.55 + 0.45 * unit(rng)));
      const int ra = static_cast<int>(a) + 1;
      const int rb = static_cast<int>(b) + 1;
      for (int y = -rb; y <= rb; ++y) {
        for (int x = -ra; x <= ra; ++x) {
          const double u = x / a;
          const double v = y / b;
          if (u * u + v * v <= 1.0) px.push_back({cy + y, cx + x});
        }
      }
      break;
    }
    case ContaminantShape::kLine: {
      // Angle kept away from horizontal so the footprint spans >= 2 scan lines.
      const double angle =
          (25.0 + 130.0 * unit(rng)) * std::numbers::pi / 180.0;
      const int thickness = unit(rng) < 0.5 ? 1 : 2;
      const double dy = std::sin(angle);
      const double dx = std::cos(angle);
      for (double t = -spec.size_px / 2.0; t <= spec.size_px / 2.0; t += 0.4) {
        for (int k = 0; k < thickness; ++k) {
          const int y = static_cast<int>(std::lround(cy + t * dy - k * dx));
          const int x = static_cast<int>(std::lround(cx + t * dx + k * dy));
          px.push_back({y, x});
        }
      }
      break;
    }
    case ContaminantShape::kSpiral: {
      const double turns = 1.5 + 0.8 * unit(rng);
      const double r_max = std::max(3.0, spec.size_px / 2.0);
      const double theta_max = 2.0 * std::numbers::pi * turns;
      const double growth = (r_max - 1.0) / theta_max;
      const int thickness = unit(rng) < 0.5 ? 1 : 2;
      for (double theta = 0.0; theta <= theta_max; theta += 0.05) {
        const double r = 1.0 + growth * theta;
        for (int k = 0; k < thickness; ++k) {
          const int y = static_cast<int>(std::lround(cy + (r + 0.5 * k) * std::sin(theta)));
          const int x = static_cast<int>(std::lround(cx + (r + 0.5 * k) * std::cos(theta)));
          px.push_back({y, x});
        }
      }
      break;
    }
  }
  std::sort(px.begin(), px.end());
  px.erase(std::unique(px.begin(), px.end()), px.end());
  return px;
}

LabelMap build_layout(const SceneSpec& spec, std::mt19937_64& rng) {
  LabelMap labels = make_labels(spec.height, spec.width,
                                static_cast<std::uint8_t>(MaterialId::kConveyor));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto surface = spec.orientation == Orientation::kFatUp
                           ? MaterialId::kFat
                           : MaterialId::kMeat;
  const auto streak = spec.orientation == Orientation::kFatUp
                          ? MaterialId::kMeat
                          : MaterialId::kFat;

  const double cy = spec.height / 2.0 + (unit(rng) - 0.5) * 10.0;
  const double cx = spec.width / 2.0 + (unit(rng) - 0.5) * 8.0;
  const double ry = 0.43 * spec.height * (0.92 + 0.13 * unit(rng));
  const double rx = 0.40 * spec.width * (0.92 + 0.13 * unit(rng));
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      if (inside_superellipse(y, x, cy, cx, ry, rx, 2.6)) {
        labels.at(y, x) = static_cast<std::uint8_t>(surface);
      }
    }
  }

  // Marbling: elongated patches of the opposite pork material.
  for (int s = 0; s < spec.streaks; ++s) {
    const double sy = cy + (unit(rng) - 0.5) * ry * 1.2;
    const double sx = cx + (unit(rng) - 0.5) * rx * 1.2;
    const double a = 2.5 + 4.0 * unit(rng);
    const double b = 8.0 + 14.0 * unit(rng);
    const double theta = unit(rng) * std::numbers::pi;
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    const int reach = static_cast<int>(b) + 2;
    for (int y = static_cast<int>(sy) - reach; y <= static_cast<int>(sy) + reach;
         ++y) {
      for (int x = static_cast<int>(sx) - reach; x <= static_cast<int>(sx) + reach;
           ++x) {
        if (y < 0 || y >= spec.height || x < 0 || x >= spec.width) continue;
        const double u = (x - sx) * ct + (y - sy) * st;
        const double v = -(x - sx) * st + (y - sy) * ct;
        if ((u / a) * (u / a) + (v / b) * (v / b) > 1.0) continue;
        if (labels.at(y, x) == static_cast<std::uint8_t>(surface)) {
          labels.at(y, x) = static_cast<std::uint8_t>(streak);
        }
      }
    }
  }

  // Contaminants sit on the pork, never touching another contaminant.
  for (const ContaminantSpec& cont : spec.contaminants) {
    bool placed = false;
    for (int attempt = 0; attempt < 80 && !placed; ++attempt) {
      const int py = static_cast<int>(cy + (unit(rng) - 0.5) * 1.5 * ry);
      const int px_center = static_cast<int>(cx + (unit(rng) - 0.5) * 1.5 * rx);
      auto pixels = contaminant_pixels(cont, py, px_center, rng);
      bool ok = !pixels.empty();
      int top = spec.height, bottom = -1;
      for (const auto& [y, x] : pixels) {
        if (y < 1 || y >= spec.height - 1 || x < 1 || x >= spec.width - 1) {
          ok = false;
          break;
        }
        const std::uint8_t lbl = labels.at(y, x);
        if (lbl != static_cast<std::uint8_t>(MaterialId::kFat) &&
            lbl != static_cast<std::uint8_t>(MaterialId::kMeat)) {
          ok = false;
          break;
        }
        // Keep one pixel of separation from other contaminants.
        for (int dy = -1; dy <= 1 && ok; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (is_contaminant(labels.at(y + dy, x + dx))) {
              ok = false;
              break;
            }
          }
        }
        if (!ok) break;
        top = std::min(top, y);
        bottom = std::max(bottom, y);
      }
      if (!ok || bottom - top + 1 < 2) continue;
      for (const auto& [y, x] : pixels) {
        labels.at(y, x) = static_cast<std::uint8_t>(cont.material);
      }
      placed = true;
    }
    if (!placed) {
      std::ostringstream msg;
      msg << "contaminant (" << class_name(cont.material)
          << ") does not fit inside the scene";
      throw DataError(msg.str());
    }
  }
  return labels;
}

float head_tail_rolloff(int sensor_band, const WavelengthGrid& grid) {
  if (sensor_band < grid.skip_head) {
    return 0.3f + 0.7f * static_cast<float>(sensor_band) / grid.skip_head;
  }
  const int tail_start = grid.sensor_bands - grid.skip_tail;
  if (sensor_band >= tail_start) {
    return 0.3f +
           0.7f * static_cast<float>(grid.sensor_bands - 1 - sensor_band) /
               grid.skip_tail;
  }
  return 1.0f;
}

}  // namespace

RenderedScene render_scene(const SceneSpec& spec,
                           const std::vector<MaterialSpectrum>& materials,
                           const NoiseModel& noise) {
  if (materials.size() != kNumClasses) {
    throw DataError("render_scene expects all 13 material spectra");
  }
  const WavelengthGrid grid;
  const int retained = grid.retained_bands();
  const int sensor = grid.sensor_bands;
  const int height = spec.height;
  const int width = spec.width;

  std::mt19937_64 rng_layout(mix_seed(spec.seed, 0x6c61796fULL));

  // Separate engine + distribution pairs keep the noise streams independent
  // (normal_distribution caches a spare draw).
  struct Gauss {
    std::mt19937_64 rng;
    std::normal_distribution<float> dist{0.0f, 1.0f};
    explicit Gauss(std::uint64_t seed) : rng(seed) {}
    float operator()(float sigma) {
      return sigma > 0.0f ? sigma * dist(rng) : 0.0f;
    }
  };
  Gauss jitter(mix_seed(spec.seed, 0x6a697474ULL));
  Gauss frame_noise(mix_seed(spec.seed, 0x6672616dULL));

  RenderedScene scene;
  scene.labels = build_layout(spec, rng_layout);

  // Smooth multiplicative shading field (illumination only; the flat frame is
  // captured separately under uniform light).
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double ph1 = unit(rng_layout) * 2.0 * std::numbers::pi;
  const double ph2 = unit(rng_layout) * 2.0 * std::numbers::pi;
  const double fy = 0.5 + unit(rng_layout);
  const double fx = 0.5 + unit(rng_layout);
  auto shading = [&](int y, int x) -> float {
    if (noise.shading_amp <= 0.0f) return 1.0f;
    const double s =
        0.5 + 0.25 * std::sin(2.0 * std::numbers::pi * fy * y / height + ph1) +
        0.25 * std::cos(2.0 * std::numbers::pi * fx * x / width + ph2);
    return static_cast<float>(1.0 - noise.shading_amp * s);
  };

  // Per-column, per-band multiplicative stripe field (the camera's fixed
  // pattern, shared by image and flat frame).
  std::vector<float> stripes(static_cast<std::size_t>(width) * sensor, 1.0f);
  if (noise.stripe_sigma > 0.0f) {
    Gauss stripe_noise(mix_seed(noise.stripe_seed, 0x73747269ULL));
    for (auto& g : stripes) g = std::exp(stripe_noise(noise.stripe_sigma));
  }

  scene.raw = make_cube(height, width, sensor, grid);
  scene.frames.dark = make_cube(height, width, sensor, grid);
  scene.frames.flat = make_cube(height, width, sensor, grid);

  const std::vector<float>& teflon =
      materials[static_cast<int>(MaterialId::kTeflon)].mean;
  std::vector<float> ideal(retained);
  std::vector<float> blended(retained);
  constexpr int kDy[4] = {-1, 1, 0, 0};
  constexpr int kDx[4] = {0, 0, -1, 1};

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::uint8_t own = scene.labels.at(y, x);
      const MaterialSpectrum& mat = materials[own];

      // 1-px boundary blend: spectra mix at material borders, labels do not.
      const float* curve = mat.mean.data();
      if (spec.blend_px > 0.0f) {
        int n_other = 0;
        std::fill(blended.begin(), blended.end(), 0.0f);
        for (int k = 0; k < 4; ++k) {
          const int ny = y + kDy[k];
          const int nx = x + kDx[k];
          if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
          const std::uint8_t other = scene.labels.at(ny, nx);
          if (other == own) continue;
          const std::vector<float>& oc = materials[other].mean;
          for (int b = 0; b < retained; ++b) blended[b] += oc[b];
          ++n_other;
        }
        if (n_other > 0) {
          for (int b = 0; b < retained; ++b) {
            blended[b] = 0.5f * mat.mean[b] + 0.5f * blended[b] / n_other;
          }
          curve = blended.data();
        }
      }

      for (int b = 0; b < retained; ++b) {
        ideal[b] = curve[b] + jitter(mat.std_dev[b]);
      }

      const float shade = shading(y, x);
      float* raw_px = scene.raw.data.data() +
                      (static_cast<std::int64_t>(y) * width + x) * sensor;
      float* dark_px = scene.frames.dark.data.data() +
                       (static_cast<std::int64_t>(y) * width + x) * sensor;
      float* flat_px = scene.frames.flat.data.data() +
                       (static_cast<std::int64_t>(y) * width + x) * sensor;
      for (int b = 0; b < sensor; ++b) {
        const int r = std::clamp(b - grid.skip_head, 0, retained - 1);
        const float rolloff = head_tail_rolloff(b, grid);
        const float noise_mult = rolloff < 1.0f ? 3.0f : 1.0f;
        const float stripe = stripes[static_cast<std::size_t>(x) * sensor + b];
        raw_px[b] = noise.drift.gain * stripe * shade * rolloff * ideal[r] +
                    noise.dark_level + noise.drift.offset +
                    jitter(noise.shot_sigma * noise_mult);
        dark_px[b] = noise.dark_level + noise.drift.offset +
                     frame_noise(noise.shot_sigma * 0.5f);
        flat_px[b] = noise.drift.gain * stripe * rolloff * teflon[r] +
                     noise.dark_level + noise.drift.offset +
                     frame_noise(noise.shot_sigma * noise_mult);
      }
    }
  }
  return scene;
}

std::pair<SceneSpec, DriftSetting> dataset_scene_spec(const DatasetSpec& spec,
                                                      int index) {
  std::mt19937_64 rng(mix_seed(spec.seed, 0x7363656eULL + index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  DriftSetting drift;
  drift.gain = spec.drift_gain_min +
               static_cast<float>(unit(rng)) *
                   (spec.drift_gain_max - spec.drift_gain_min);
  drift.offset = static_cast<float>((unit(rng) - 0.5) * 0.04);

  SceneSpec scene;
  scene.height = spec.height;
  scene.width = spec.width;
  scene.orientation = index % 2 == 0 ? Orientation::kFatUp : Orientation::kMeatUp;
  scene.seed = mix_seed(spec.seed, 0x10000ULL + index);

  if (unit(rng) < spec.contaminant_fraction) {
    const int blobs = 1 + static_cast<int>(unit(rng) * 3.0);
    for (int k = 0; k < blobs; ++k) {
      ContaminantSpec cont;
      cont.material =
          static_cast<MaterialId>(3 + static_cast<int>(unit(rng) * 10.0) % 10);
      const double shape_draw = unit(rng);
      if (shape_draw < 0.40) {
        cont.shape = ContaminantShape::kRectangle;
        cont.size_px = 4 + static_cast<int>(unit(rng) * 8.0);
      } else if (shape_draw < 0.70) {
        cont.shape = ContaminantShape::kEllipse;
        cont.size_px = 5 + static_cast<int>(unit(rng) * 7.0);
      } else if (shape_draw < 0.85) {
        cont.shape = ContaminantShape::kLine;
        cont.size_px = 8 + static_cast<int>(unit(rng) * 10.0);
      } else {
        cont.shape = ContaminantShape::kSpiral;
        cont.size_px = 8 + static_cast<int>(unit(rng) * 6.0);
      }
      scene.contaminants.push_back(cont);
    }
  }
  return {scene, drift};
}

NoiseModel dataset_noise(const DatasetSpec& spec, DriftSetting drift) {
  NoiseModel noise;
  noise.stripe_seed = mix_seed(spec.seed, 0x73747270ULL);
  noise.drift = drift;
  return noise;
}

std::vector<MaterialSpectrum> dataset_materials(const DatasetSpec& spec) {
  return default_materials(mix_seed(spec.seed, 0x6d617473ULL));
}

std::vector<std::string> render_dataset(const DatasetSpec& spec,
                                        const std::filesystem::path& out_dir) {
  if (spec.n_scenes <= 0) throw DataError("dataset needs at least one scene");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory: " + out_dir.string());

  const std::vector<MaterialSpectrum> materials = dataset_materials(spec);

  std::vector<std::string> rows;
  for (int i = 0; i < spec.n_scenes; ++i) {
    auto [scene_spec, drift] = dataset_scene_spec(spec, i);
    const NoiseModel noise = dataset_noise(spec, drift);
    RenderedScene scene = render_scene(scene_spec, materials, noise);

    std::ostringstream id;
    id << "scene_" << std::setw(4) << std::setfill('0') << i;
    save_cube(scene.raw, out_dir / (id.str() + "_raw.raw"));
    save_cube(scene.frames.dark, out_dir / (id.str() + "_dark.raw"));
    save_cube(scene.frames.flat, out_dir / (id.str() + "_flat.raw"));
    save_labels(scene.labels, out_dir / (id.str() + "_labels.raw"));

    std::array<bool, kNumClasses> present{};
    for (std::uint8_t lbl : scene.labels.labels) present[lbl] = true;
    std::string classes;
    for (int c = kNumNegativeClasses; c < kNumClasses; ++c) {
      if (!present[c]) continue;
      if (!classes.empty()) classes += ';';
      classes += class_name(static_cast<std::uint8_t>(c));
    }
    if (classes.empty()) classes = "none";

    std::ostringstream row;
    row << id.str() << ','
        << (scene_spec.orientation == Orientation::kFatUp ? "fat_up" : "meat_up")
        << ',' << std::fixed << std::setprecision(6) << drift.gain << ','
        << drift.offset << ',' << classes;
    rows.push_back(row.str());
  }

  std::ofstream manifest(out_dir / "manifest.csv");
  if (!manifest) {
    throw DataError("cannot write manifest: " + (out_dir / "manifest.csv").string());
  }
  manifest << "scene,orientation,drift_gain,drift_offset,contaminants\n";
  for (const std::string& row : rows) manifest << row << "\n";
  return rows;
}

}  // namespace beltscan
