#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "beltscan/nn.hpp"

namespace beltscan {

// Smoothed weighted cross-entropy with an extra differentiable penalty on
// contaminant probability mass assigned to meat/fat tokens.
struct LossConfig {
  double smoothing = 0.3;
  std::array<double, kNumClasses> class_weight = {2.0, 2.0, 0.5, 1.0, 1.0, 1.0, 1.0,
                                                  1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  double fp_penalty = 1.0;

  void validate() const;
};

struct TrainConfig {
  int epochs = 24;
  int batch_patches = 64;  // paper-scale 520 available by flag
  double base_lr = 1e-3;
  double weight_decay = 2e-4;
  int warmup_epochs = 3;
  double poly_power = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  double overlap = 0.5;
  // 0 = use every tile; otherwise a seeded per-epoch subsample, for desk-scale
  // runtime control.
  int max_patches_per_epoch = 0;
  bool normalize = true;
  int threads = 1;
  bool determinism = false;

  void validate() const;
};

// AdamW moment accumulators, index-aligned with nn::param_views order.
struct OptimState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t step = 0;
};

/// Mean over tokens of w(y) * CE(smoothed target, softmax) plus
/// fp_penalty * (contaminant probability mass) on meat/fat tokens.
/// When `dlogits` is given it receives the gradient of the returned mean.
template <typename T>
T smoothed_ce_loss(const nn::MatX<T>& logits, std::span<const std::uint8_t> targets,
                   const LossConfig& cfg, nn::MatX<T>* dlogits = nullptr);

/// Linear warmup from zero over `warmup_steps`, then polynomial decay to zero
/// at the final step. `step` counts from zero.
double lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps,
             double base_lr, double poly_power);

/// One decoupled-weight-decay Adam step. Aborts (throws DataError) on
/// non-finite gradients without touching the parameters.
void adamw_step(nn::ModelParams& params, const nn::ModelParams& grads,
                OptimState& state, double lr, const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_miou = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<EpochStats> epochs;
  double best_val_miou = 0.0;
};

/// Trains on a directory of calibrated scene cubes (<id>.hdr/.raw with
/// <id>_labels alongside). Writes the best-mIoU checkpoint and a metrics CSV
/// (epoch, loss, val_miou, lr) into out_dir.
TrainResult train_model(const std::filesystem::path& data_dir,
                        const PatchSpec& patch, const nn::ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, const LossConfig& loss_cfg,
                        const std::filesystem::path& out_dir);

}  // namespace beltscan
