#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "beltscan/hypercube.hpp"

namespace beltscan::nn {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Architecture constants. The embedding width equals the spectral band count
// and stays fixed through every block.
struct ModelConfig {
  int depth = 4;
  int heads = 8;
  int dim = 184;
  int mlp_hidden = 368;
  int classes = kNumClasses;
  int tokens = 320;
  bool positional = true;

  int head_dim() const { return dim / heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Preprocessing the checkpoint was trained with; inference refuses inputs
// prepared differently.
struct PreprocFlags {
  bool ffc = true;
  bool normalize = true;
  bool operator==(const PreprocFlags&) const = default;
};

template <typename T>
struct BlockParamsT {
  VecX<T> ln1_scale, ln1_shift;
  MatX<T> wq, wk, wv, wo;  // dim x dim
  VecX<T> bq, bk, bv, bo;
  VecX<T> ln2_scale, ln2_shift;
  MatX<T> w1;  // dim x mlp_hidden
  VecX<T> b1;
  MatX<T> w2;  // mlp_hidden x dim
  VecX<T> b2;
};

template <typename T>
struct ModelParamsT {
  ModelConfig config;
  PreprocFlags preproc;
  MatX<T> pos;  // tokens x dim; empty when positional is off
  std::vector<BlockParamsT<T>> blocks;
  MatX<T> wc;  // dim x classes
  VecX<T> bc;
};

using ModelParams = ModelParamsT<float>;

// Flat view of one parameter tensor, used by the optimizer, serialization
// and the gradient checker. `decay` marks tensors subject to weight decay
// (layer-norm and bias tensors are exempt).
template <typename T>
struct ParamView {
  std::string name;
  T* data = nullptr;
  std::int64_t size = 0;
  std::vector<int> shape;
  bool decay = false;
};

/// Every parameter tensor in a fixed, documented order.
template <typename T>
std::vector<ParamView<T>> param_views(ModelParamsT<T>& params);

template <typename T>
std::int64_t param_count(const ModelParamsT<T>& params);

/// Weights ~ truncated normal(0, 0.02) clipped at two sigma, biases zero,
/// layer-norm scale one / shift zero, positional table ~ normal(0, 0.02).
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

template <typename T>
ModelParamsT<T> zeros_like(const ModelParamsT<T>& params);

template <typename T, typename U>
ModelParamsT<T> cast_params(const ModelParamsT<U>& params);

// Activations recorded by the forward pass for backpropagation.
template <typename T>
struct BlockCacheT {
  MatX<T> x_in;
  MatX<T> ln1_xhat;
  VecX<T> ln1_inv_std;
  MatX<T> ln1_out;
  MatX<T> q, k, v;
  std::vector<MatX<T>> probs;  // per head, tokens x tokens
  MatX<T> attn_concat;
  MatX<T> x_mid;
  MatX<T> ln2_xhat;
  VecX<T> ln2_inv_std;
  MatX<T> ln2_out;
  MatX<T> mlp_pre;
  MatX<T> mlp_act;
};

template <typename T>
struct ForwardCacheT {
  MatX<T> x0;
  std::vector<BlockCacheT<T>> blocks;
  MatX<T> x_final;
};

using ForwardCache = ForwardCacheT<float>;

/// Forward pass over `tokens` (n_tokens x dim, one pixel spectrum per row).
/// Returns logits (n_tokens x classes). Pass a cache to enable backward().
template <typename T>
MatX<T> forward(const MatX<T>& tokens, const ModelParamsT<T>& params,
                ForwardCacheT<T>* cache = nullptr);

/// Accumulates parameter gradients for the upstream logit gradient into
/// `grads` (summing across calls) and optionally returns the input gradient.
template <typename T>
void backward(const MatX<T>& dlogits, const ForwardCacheT<T>& cache,
              const ModelParamsT<T>& params, ModelParamsT<T>& grads,
              MatX<T>* dtokens = nullptr);

// Checkpoint storage: magic/version header, config and preprocessing flags,
// then every tensor in param_views order as little-endian 32-bit floats.
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);
/// Loads and additionally refuses a checkpoint whose config differs.
ModelParams load_params(const std::filesystem::path& path,
                        const ModelConfig& expected);

}  // namespace beltscan::nn
