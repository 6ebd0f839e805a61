#include "beltscan/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include "beltscan/calibration.hpp"
#include "beltscan/error.hpp"
#include "beltscan/eval.hpp"
#include "beltscan/segment.hpp"
#include "beltscan/synthscene.hpp"

namespace beltscan {

void LossConfig::validate() const {
  if (smoothing < 0.0 || smoothing >= 1.0) {
    throw DataError("label smoothing must lie in [0, 1)");
  }
  for (double w : class_weight) {
    if (w <= 0.0) throw DataError("class weights must be positive");
  }
  if (fp_penalty < 0.0) throw DataError("fp penalty must be non-negative");
}

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_patches <= 0) {
    throw DataError("epochs and batch size must be positive");
  }
  if (warmup_epochs < 0 || warmup_epochs >= epochs) {
    throw DataError("warmup must be shorter than the training run");
  }
  if (base_lr <= 0.0) throw DataError("learning rate must be positive");
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw DataError("validation fraction must lie in [0, 1)");
  }
  if (overlap < 0.0 || overlap >= 1.0) {
    throw DataError("training overlap must lie in [0, 1)");
  }
  if (threads < 1) throw DataError("thread count must be at least 1");
  if (max_patches_per_epoch < 0) {
    throw DataError("patch cap must be non-negative");
  }
}

template <typename T>
T smoothed_ce_loss(const nn::MatX<T>& logits, std::span<const std::uint8_t> targets,
                   const LossConfig& cfg, nn::MatX<T>* dlogits) {
  const int n = static_cast<int>(logits.rows());
  const int classes = static_cast<int>(logits.cols());
  if (static_cast<int>(targets.size()) != n) {
    throw DataError("loss: target count does not match logit rows");
  }
  if (!logits.allFinite()) throw DataError("loss: non-finite logits");
  if (dlogits) dlogits->setZero(n, classes);

  const T eps = static_cast<T>(cfg.smoothing);
  const T off_target = eps / classes;
  const T on_target = (T(1) - eps) + off_target;
  const T beta = static_cast<T>(cfg.fp_penalty);
  const T inv_n = T(1) / n;

  std::vector<T> p(classes);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::uint8_t y = targets[i];
    if (y >= classes) throw DataError("loss: target class out of range");
    const T w = static_cast<T>(cfg.class_weight[y]);

    const T mx = logits.row(i).maxCoeff();
    T denom = T(0);
    for (int c = 0; c < classes; ++c) {
      p[c] = std::exp(logits(i, c) - mx);
      denom += p[c];
    }
    const T log_denom = std::log(denom);
    T ce = T(0);
    for (int c = 0; c < classes; ++c) {
      p[c] /= denom;
      const T t = c == y ? on_target : off_target;
      ce -= t * (logits(i, c) - mx - log_denom);
    }

    T token_loss = w * ce;
    const bool penalized =
        beta > T(0) && (y == static_cast<std::uint8_t>(MaterialId::kMeat) ||
                        y == static_cast<std::uint8_t>(MaterialId::kFat));
    T contaminant_mass = T(0);
    if (penalized) {
      for (int c = kNumNegativeClasses; c < classes; ++c) contaminant_mass += p[c];
      token_loss += beta * contaminant_mass;
    }
    total += static_cast<double>(token_loss);

    if (dlogits) {
      for (int c = 0; c < classes; ++c) {
        const T t = c == y ? on_target : off_target;
        T g = w * (p[c] - t);
        if (penalized) {
          const T indicator = c >= kNumNegativeClasses ? T(1) : T(0);
          g += beta * p[c] * (indicator - contaminant_mass);
        }
        (*dlogits)(i, c) = g * inv_n;
      }
    }
  }
  return static_cast<T>(total / n);
}

template float smoothed_ce_loss(const nn::MatX<float>&,
                                std::span<const std::uint8_t>, const LossConfig&,
                                nn::MatX<float>*);
template double smoothed_ce_loss(const nn::MatX<double>&,
                                 std::span<const std::uint8_t>, const LossConfig&,
                                 nn::MatX<double>*);

double lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps,
             double base_lr, double poly_power) {
  if (total_steps <= 0) return 0.0;
  step = std::clamp<std::int64_t>(step, 0, total_steps - 1);
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const std::int64_t decay_span = total_steps - 1 - warmup_steps;
  if (decay_span <= 0) return 0.0;
  const double frac =
      static_cast<double>(step - warmup_steps) / static_cast<double>(decay_span);
  return base_lr * std::pow(1.0 - frac, poly_power);
}

void adamw_step(nn::ModelParams& params, const nn::ModelParams& grads,
                OptimState& state, double lr, const TrainConfig& cfg) {
  auto views = nn::param_views(params);
  auto gviews = nn::param_views(const_cast<nn::ModelParams&>(grads));
  if (views.size() != gviews.size()) {
    throw DataError("optimizer: parameter/gradient tensor mismatch");
  }
  for (const auto& gv : gviews) {
    for (std::int64_t j = 0; j < gv.size; ++j) {
      if (!std::isfinite(gv.data[j])) {
        throw DataError("optimizer: non-finite gradient in " + gv.name +
                        ", step aborted");
      }
    }
  }
  if (state.m.empty()) {
    state.m.resize(views.size());
    state.v.resize(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
      state.m[i].assign(static_cast<std::size_t>(views[i].size), 0.0f);
      state.v[i].assign(static_cast<std::size_t>(views[i].size), 0.0f);
    }
  }

  ++state.step;
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < views.size(); ++i) {
    float* theta = views[i].data;
    const float* g = gviews[i].data;
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    const double wd = views[i].decay ? cfg.weight_decay : 0.0;
    for (std::int64_t j = 0; j < views[i].size; ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      theta[j] = static_cast<float>(
          theta[j] - lr * (mhat / (std::sqrt(vhat) + cfg.eps) + wd * theta[j]));
    }
  }
}

namespace {

struct SceneData {
  std::string id;
  HyperCube cube;
  LabelMap labels;
};

std::vector<SceneData> load_scenes(const std::filesystem::path& dir,
                                   bool normalize) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("dataset directory does not exist: " + dir.string());
  }
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    constexpr std::string_view kSuffix = "_labels.hdr";
    if (name.size() > kSuffix.size() &&
        name.ends_with(kSuffix)) {
      ids.push_back(name.substr(0, name.size() - kSuffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) {
    throw DataError("dataset directory holds no scenes: " + dir.string());
  }

  std::vector<SceneData> scenes;
  scenes.reserve(ids.size());
  for (const std::string& id : ids) {
    SceneData scene;
    scene.id = id;
    scene.cube = load_cube(dir / (id + ".raw"));
    scene.labels = load_labels(dir / (id + "_labels.raw"));
    if (scene.cube.height != scene.labels.height ||
        scene.cube.width != scene.labels.width) {
      throw DataError("cube and label dimensions differ for scene " + id);
    }
    if (normalize) scene.cube = normalize_spectra(scene.cube);
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

struct PatchRef {
  int scene = 0;
  PatchOrigin origin;
};

void extract_targets(const LabelMap& labels, PatchOrigin origin,
                     const PatchSpec& spec, std::uint8_t* out) {
  for (int py = 0; py < spec.patch_h; ++py) {
    const std::uint8_t* src =
        labels.labels.data() +
        static_cast<std::size_t>(origin.row + py) * labels.width + origin.col;
    std::copy(src, src + spec.patch_w, out + static_cast<std::size_t>(py) * spec.patch_w);
  }
}

}  // namespace

TrainResult train_model(const std::filesystem::path& data_dir,
                        const PatchSpec& patch, const nn::ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, const LossConfig& loss_cfg,
                        const std::filesystem::path& out_dir) {
  model_cfg.validate();
  train_cfg.validate();
  loss_cfg.validate();
  if (patch.tokens() != model_cfg.tokens) {
    throw DataError("patch size does not match model token count");
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory: " + out_dir.string());

  const std::vector<SceneData> scenes = load_scenes(data_dir, train_cfg.normalize);
  for (const SceneData& scene : scenes) {
    if (scene.cube.bands != model_cfg.dim) {
      throw DataError("scene " + scene.id + " band count does not match model");
    }
  }

  // Seeded validation split.
  std::vector<int> order(scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 split_rng(mix_seed(train_cfg.seed, 0x73706c74ULL));
  std::shuffle(order.begin(), order.end(), split_rng);
  const int n_val =
      scenes.size() >= 2
          ? std::max<int>(1, static_cast<int>(std::lround(
                                 train_cfg.val_fraction * scenes.size())))
          : 0;
  std::vector<int> val_scenes(order.begin(), order.begin() + n_val);
  std::vector<int> train_scenes(order.begin() + n_val, order.end());
  std::sort(val_scenes.begin(), val_scenes.end());
  std::sort(train_scenes.begin(), train_scenes.end());
  if (train_scenes.empty()) throw DataError("no training scenes after split");

  PatchSpec train_patch = patch;
  train_patch.overlap_fraction = train_cfg.overlap;
  std::vector<PatchRef> all_patches;
  for (int s : train_scenes) {
    for (PatchOrigin origin : tile_origins(scenes[s].cube.height,
                                           scenes[s].cube.width, train_patch)) {
      all_patches.push_back({s, origin});
    }
  }

  const std::int64_t per_epoch =
      train_cfg.max_patches_per_epoch > 0
          ? std::min<std::int64_t>(train_cfg.max_patches_per_epoch,
                                   all_patches.size())
          : static_cast<std::int64_t>(all_patches.size());
  const std::int64_t steps_per_epoch =
      (per_epoch + train_cfg.batch_patches - 1) / train_cfg.batch_patches;
  const std::int64_t total_steps = steps_per_epoch * train_cfg.epochs;
  const std::int64_t warmup_steps = steps_per_epoch * train_cfg.warmup_epochs;

  nn::ModelParams params =
      nn::init_params(model_cfg, mix_seed(train_cfg.seed, 0x696e6974ULL));
  params.preproc.ffc = true;
  params.preproc.normalize = train_cfg.normalize;

  const int threads = train_cfg.threads;
  std::vector<nn::ModelParams> worker_grads;
  for (int w = 0; w < threads; ++w) worker_grads.push_back(nn::zeros_like(params));
  nn::ModelParams grads = nn::zeros_like(params);
  OptimState state;

  const std::filesystem::path checkpoint_path = out_dir / "checkpoint.bsc";
  const std::filesystem::path metrics_path = out_dir / "train_metrics.csv";
  std::ofstream metrics(metrics_path);
  if (!metrics) {
    throw DataError("cannot write metrics: " + metrics_path.string());
  }
  metrics << "epoch,loss,val_miou,lr\n" << std::fixed << std::setprecision(6);

  TrainResult result;
  result.checkpoint = checkpoint_path;
  double best_miou = -1.0;
  std::vector<PatchRef> epoch_patches;

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    epoch_patches = all_patches;
    std::mt19937_64 epoch_rng(mix_seed(train_cfg.seed, 0x65706f00ULL + epoch));
    std::shuffle(epoch_patches.begin(), epoch_patches.end(), epoch_rng);
    epoch_patches.resize(per_epoch);

    double epoch_loss = 0.0;
    std::int64_t batches = 0;
    double last_lr = 0.0;

    for (std::int64_t start = 0; start < per_epoch;
         start += train_cfg.batch_patches) {
      const int batch_n = static_cast<int>(
          std::min<std::int64_t>(train_cfg.batch_patches, per_epoch - start));
      const int workers = std::min(threads, batch_n);
      std::vector<double> worker_loss(workers, 0.0);

      auto run_worker = [&](int w) {
        auto& gw = worker_grads[w];
        for (auto& view : nn::param_views(gw)) {
          std::fill(view.data, view.data + view.size, 0.0f);
        }
        nn::MatX<float> tokens(patch.tokens(), model_cfg.dim);
        nn::MatX<float> dlogits;
        nn::ForwardCache cache;
        std::vector<std::uint8_t> targets(patch.tokens());
        for (int b = w; b < batch_n; b += workers) {
          const PatchRef& ref = epoch_patches[start + b];
          const SceneData& scene = scenes[ref.scene];
          extract_patch(scene.cube, ref.origin, patch, tokens.data());
          extract_targets(scene.labels, ref.origin, patch, targets.data());
          const nn::MatX<float> logits = nn::forward(tokens, params, &cache);
          const float loss =
              smoothed_ce_loss(logits, std::span<const std::uint8_t>(targets),
                               loss_cfg, &dlogits);
          dlogits *= 1.0f / batch_n;
          nn::backward(dlogits, cache, params, gw);
          worker_loss[w] += static_cast<double>(loss) / batch_n;
        }
      };

      if (workers == 1) {
        run_worker(0);
      } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(run_worker, w);
        for (auto& t : pool) t.join();
      }

      auto gmain = nn::param_views(grads);
      for (auto& view : gmain) std::fill(view.data, view.data + view.size, 0.0f);
      for (int w = 0; w < workers; ++w) {
        auto gsub = nn::param_views(worker_grads[w]);
        for (std::size_t i = 0; i < gmain.size(); ++i) {
          for (std::int64_t j = 0; j < gmain[i].size; ++j) {
            gmain[i].data[j] += gsub[i].data[j];
          }
        }
      }

      const double lr = lr_at(state.step, total_steps, warmup_steps,
                              train_cfg.base_lr, train_cfg.poly_power);
      adamw_step(params, grads, state, lr, train_cfg);
      last_lr = lr;

      double batch_loss = 0.0;
      for (int w = 0; w < workers; ++w) batch_loss += worker_loss[w];
      epoch_loss += batch_loss;
      ++batches;
    }
    epoch_loss /= std::max<std::int64_t>(1, batches);

    double val_miou = 0.0;
    if (!val_scenes.empty()) {
      Confusion pooled{};
      for (int s : val_scenes) {
        const SegmentationResult seg = predict_cube(
            scenes[s].cube, params, patch, StitchMode::kTile, threads);
        accumulate_confusion(pooled, confusion(seg.labels, scenes[s].labels));
      }
      val_miou = miou(pooled);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss;
    stats.val_miou = val_miou;
    stats.lr = last_lr;
    result.epochs.push_back(stats);
    metrics << epoch << "," << epoch_loss << "," << val_miou << "," << last_lr
            << "\n";

    if (val_scenes.empty() || val_miou > best_miou) {
      best_miou = val_miou;
      nn::save_params(params, checkpoint_path);
    }
  }
  result.best_val_miou = std::max(best_miou, 0.0);
  if (!metrics) throw DataError("short write to metrics: " + metrics_path.string());
  return result;
}

}  // namespace beltscan
