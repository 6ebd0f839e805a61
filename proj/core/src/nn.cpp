#include "beltscan/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "beltscan/error.hpp"

namespace beltscan::nn {

namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
void layer_norm_forward(const MatX<T>& x, const VecX<T>& scale,
                        const VecX<T>& shift, MatX<T>& xhat, VecX<T>& inv_std,
                        MatX<T>& out) {
  const int rows = static_cast<int>(x.rows());
  const int cols = static_cast<int>(x.cols());
  xhat.resize(rows, cols);
  inv_std.resize(rows);
  out.resize(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().mean();
    const T is = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
    inv_std[i] = is;
    xhat.row(i) = ((x.row(i).array() - mean) * is).matrix();
    out.row(i) = (xhat.row(i).array() * scale.transpose().array() +
                  shift.transpose().array())
                     .matrix();
  }
}

// Returns dx; accumulates dscale/dshift.
template <typename T>
MatX<T> layer_norm_backward(const MatX<T>& dy, const MatX<T>& xhat,
                            const VecX<T>& inv_std, const VecX<T>& scale,
                            VecX<T>& dscale, VecX<T>& dshift) {
  const int rows = static_cast<int>(dy.rows());
  const int cols = static_cast<int>(dy.cols());
  MatX<T> dx(rows, cols);
  for (int i = 0; i < rows; ++i) {
    auto dyr = dy.row(i).array();
    auto xh = xhat.row(i).array();
    dscale.transpose().array() += dyr * xh;
    dshift.transpose().array() += dyr;
    auto dxhat = (dyr * scale.transpose().array()).eval();
    const T m1 = dxhat.mean();
    const T m2 = (dxhat * xh).mean();
    dx.row(i) = (inv_std[i] * (dxhat - m1 - xh * m2)).matrix();
  }
  return dx;
}

template <typename T>
void softmax_rows(MatX<T>& m) {
  for (int i = 0; i < m.rows(); ++i) {
    const T mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
  const T phi_cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
  const T phi_pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
  return phi_cdf + x * phi_pdf;
}

template <typename T>
MatX<T> linear(const MatX<T>& x, const MatX<T>& w, const VecX<T>& b) {
  MatX<T> y = x * w;
  y.rowwise() += b.transpose();
  return y;
}

}  // namespace

void ModelConfig::validate() const {
  if (depth <= 0 || heads <= 0 || dim <= 0 || mlp_hidden <= 0 || classes <= 0 ||
      tokens <= 0) {
    throw DataError("model config fields must be positive");
  }
  if (dim % heads != 0) {
    std::ostringstream msg;
    msg << "embedding width " << dim << " is not divisible by " << heads
        << " heads";
    throw DataError(msg.str());
  }
}

template <typename T>
std::vector<ParamView<T>> param_views(ModelParamsT<T>& params) {
  std::vector<ParamView<T>> views;
  auto add_mat = [&views](const std::string& name, MatX<T>& m, bool decay) {
    views.push_back({name, m.data(), m.size(),
                     {static_cast<int>(m.rows()), static_cast<int>(m.cols())},
                     decay});
  };
  auto add_vec = [&views](const std::string& name, VecX<T>& v) {
    views.push_back({name, v.data(), v.size(), {static_cast<int>(v.size())}, false});
  };
  if (params.config.positional) add_mat("pos_embed", params.pos, true);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    auto& blk = params.blocks[b];
    const std::string p = "block" + std::to_string(b) + ".";
    add_vec(p + "ln1.scale", blk.ln1_scale);
    add_vec(p + "ln1.shift", blk.ln1_shift);
    add_mat(p + "attn.wq", blk.wq, true);
    add_vec(p + "attn.bq", blk.bq);
    add_mat(p + "attn.wk", blk.wk, true);
    add_vec(p + "attn.bk", blk.bk);
    add_mat(p + "attn.wv", blk.wv, true);
    add_vec(p + "attn.bv", blk.bv);
    add_mat(p + "attn.wo", blk.wo, true);
    add_vec(p + "attn.bo", blk.bo);
    add_vec(p + "ln2.scale", blk.ln2_scale);
    add_vec(p + "ln2.shift", blk.ln2_shift);
    add_mat(p + "mlp.w1", blk.w1, true);
    add_vec(p + "mlp.b1", blk.b1);
    add_mat(p + "mlp.w2", blk.w2, true);
    add_vec(p + "mlp.b2", blk.b2);
  }
  add_mat("classifier.w", params.wc, true);
  add_vec("classifier.b", params.bc);
  return views;
}

template <typename T>
std::int64_t param_count(const ModelParamsT<T>& params) {
  std::int64_t n = 0;
  auto views = param_views(const_cast<ModelParamsT<T>&>(params));
  for (const auto& v : views) n += v.size;
  return n;
}

namespace {

template <typename T>
void allocate_params(ModelParamsT<T>& p) {
  const ModelConfig& c = p.config;
  p.pos = c.positional ? MatX<T>::Zero(c.tokens, c.dim) : MatX<T>();
  p.blocks.resize(c.depth);
  for (auto& blk : p.blocks) {
    blk.ln1_scale = VecX<T>::Ones(c.dim);
    blk.ln1_shift = VecX<T>::Zero(c.dim);
    blk.wq = MatX<T>::Zero(c.dim, c.dim);
    blk.wk = MatX<T>::Zero(c.dim, c.dim);
    blk.wv = MatX<T>::Zero(c.dim, c.dim);
    blk.wo = MatX<T>::Zero(c.dim, c.dim);
    blk.bq = VecX<T>::Zero(c.dim);
    blk.bk = VecX<T>::Zero(c.dim);
    blk.bv = VecX<T>::Zero(c.dim);
    blk.bo = VecX<T>::Zero(c.dim);
    blk.ln2_scale = VecX<T>::Ones(c.dim);
    blk.ln2_shift = VecX<T>::Zero(c.dim);
    blk.w1 = MatX<T>::Zero(c.dim, c.mlp_hidden);
    blk.b1 = VecX<T>::Zero(c.mlp_hidden);
    blk.w2 = MatX<T>::Zero(c.mlp_hidden, c.dim);
    blk.b2 = VecX<T>::Zero(c.dim);
  }
  p.wc = MatX<T>::Zero(c.dim, c.classes);
  p.bc = VecX<T>::Zero(c.classes);
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  allocate_params(p);

  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  auto trunc_normal = [&rng, &normal]() {
    float v;
    do {
      v = normal(rng);
    } while (std::abs(v) > 0.04f);
    return v;
  };
  auto fill_trunc = [&trunc_normal](MatX<float>& m) {
    for (std::int64_t i = 0; i < m.size(); ++i) m.data()[i] = trunc_normal();
  };

  if (config.positional) {
    for (std::int64_t i = 0; i < p.pos.size(); ++i) p.pos.data()[i] = normal(rng);
  }
  for (auto& blk : p.blocks) {
    fill_trunc(blk.wq);
    fill_trunc(blk.wk);
    fill_trunc(blk.wv);
    fill_trunc(blk.wo);
    fill_trunc(blk.w1);
    fill_trunc(blk.w2);
  }
  fill_trunc(p.wc);
  return p;
}

template <typename T>
ModelParamsT<T> zeros_like(const ModelParamsT<T>& params) {
  ModelParamsT<T> z;
  z.config = params.config;
  z.preproc = params.preproc;
  allocate_params(z);
  for (auto& blk : z.blocks) {
    blk.ln1_scale.setZero();
    blk.ln2_scale.setZero();
  }
  return z;
}

template <typename T, typename U>
ModelParamsT<T> cast_params(const ModelParamsT<U>& params) {
  ModelParamsT<T> out;
  out.config = params.config;
  out.preproc = params.preproc;
  allocate_params(out);
  auto src = param_views(const_cast<ModelParamsT<U>&>(params));
  auto dst = param_views(out);
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (std::int64_t j = 0; j < src[i].size; ++j) {
      dst[i].data[j] = static_cast<T>(src[i].data[j]);
    }
  }
  return out;
}

template <typename T>
MatX<T> forward(const MatX<T>& tokens, const ModelParamsT<T>& params,
                ForwardCacheT<T>* cache) {
  const ModelConfig& c = params.config;
  if (tokens.cols() != c.dim) {
    std::ostringstream msg;
    msg << "token width " << tokens.cols() << " does not match embedding width "
        << c.dim;
    throw DataError(msg.str());
  }
  if (c.positional && tokens.rows() != c.tokens) {
    std::ostringstream msg;
    msg << "token count " << tokens.rows() << " does not match positional table ("
        << c.tokens << ")";
    throw DataError(msg.str());
  }
  if (!tokens.allFinite()) throw DataError("non-finite model input");

  const int n = static_cast<int>(tokens.rows());
  const int dh = c.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  MatX<T> x = tokens;
  if (c.positional) x += params.pos;
  if (cache) {
    cache->x0 = x;
    cache->blocks.resize(c.depth);
  }

  MatX<T> ln_xhat, ln_out, scores;
  VecX<T> ln_inv_std;
  for (int b = 0; b < c.depth; ++b) {
    const auto& blk = params.blocks[b];
    BlockCacheT<T>* bc = cache ? &cache->blocks[b] : nullptr;
    if (bc) bc->x_in = x;

    layer_norm_forward(x, blk.ln1_scale, blk.ln1_shift, ln_xhat, ln_inv_std,
                       ln_out);
    if (bc) {
      bc->ln1_xhat = ln_xhat;
      bc->ln1_inv_std = ln_inv_std;
      bc->ln1_out = ln_out;
    }

    MatX<T> q = linear(ln_out, blk.wq, blk.bq);
    MatX<T> k = linear(ln_out, blk.wk, blk.bk);
    MatX<T> v = linear(ln_out, blk.wv, blk.bv);

    MatX<T> concat(n, c.dim);
    if (bc) bc->probs.resize(c.heads);
    for (int h = 0; h < c.heads; ++h) {
      auto qh = q.middleCols(h * dh, dh);
      auto kh = k.middleCols(h * dh, dh);
      auto vh = v.middleCols(h * dh, dh);
      scores.noalias() = qh * kh.transpose();
      scores *= scale;
      softmax_rows(scores);
      concat.middleCols(h * dh, dh).noalias() = scores * vh;
      if (bc) bc->probs[h] = scores;
    }
    if (bc) {
      bc->q = std::move(q);
      bc->k = std::move(k);
      bc->v = std::move(v);
      bc->attn_concat = concat;
    }

    x += linear(concat, blk.wo, blk.bo);
    if (bc) bc->x_mid = x;

    layer_norm_forward(x, blk.ln2_scale, blk.ln2_shift, ln_xhat, ln_inv_std,
                       ln_out);
    if (bc) {
      bc->ln2_xhat = ln_xhat;
      bc->ln2_inv_std = ln_inv_std;
      bc->ln2_out = ln_out;
    }

    MatX<T> pre = linear(ln_out, blk.w1, blk.b1);
    MatX<T> act = pre.unaryExpr([](T u) { return gelu(u); });
    if (bc) {
      bc->mlp_pre = pre;
      bc->mlp_act = act;
    }
    x += linear(act, blk.w2, blk.b2);
  }

  if (cache) cache->x_final = x;
  return linear(x, params.wc, params.bc);
}

template <typename T>
void backward(const MatX<T>& dlogits, const ForwardCacheT<T>& cache,
              const ModelParamsT<T>& params, ModelParamsT<T>& grads,
              MatX<T>* dtokens) {
  const ModelConfig& c = params.config;
  if (cache.blocks.size() != static_cast<std::size_t>(c.depth)) {
    throw DataError("backward called without a matching forward cache");
  }
  const int n = static_cast<int>(dlogits.rows());
  const int dh = c.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  grads.wc.noalias() += cache.x_final.transpose() * dlogits;
  grads.bc += dlogits.colwise().sum().transpose();
  MatX<T> dx = dlogits * params.wc.transpose();

  MatX<T> dq(n, c.dim), dk(n, c.dim), dv(n, c.dim), dscores;
  for (int b = c.depth - 1; b >= 0; --b) {
    const auto& blk = params.blocks[b];
    const auto& bc = cache.blocks[b];
    auto& gblk = grads.blocks[b];

    // x_out = x_mid + mlp(ln2(x_mid))
    MatX<T> dact = dx * blk.w2.transpose();
    gblk.w2.noalias() += bc.mlp_act.transpose() * dx;
    gblk.b2 += dx.colwise().sum().transpose();
    MatX<T> dpre =
        (dact.array() *
         bc.mlp_pre.unaryExpr([](T u) { return gelu_grad(u); }).array())
            .matrix();
    gblk.w1.noalias() += bc.ln2_out.transpose() * dpre;
    gblk.b1 += dpre.colwise().sum().transpose();
    MatX<T> dln2_out = dpre * blk.w1.transpose();
    MatX<T> dx_mid =
        dx + layer_norm_backward(dln2_out, bc.ln2_xhat, bc.ln2_inv_std,
                                 blk.ln2_scale, gblk.ln2_scale, gblk.ln2_shift);

    // x_mid = x_in + wo(attention(ln1(x_in)))
    gblk.wo.noalias() += bc.attn_concat.transpose() * dx_mid;
    gblk.bo += dx_mid.colwise().sum().transpose();
    MatX<T> dconcat = dx_mid * blk.wo.transpose();

    for (int h = 0; h < c.heads; ++h) {
      auto qh = bc.q.middleCols(h * dh, dh);
      auto kh = bc.k.middleCols(h * dh, dh);
      auto vh = bc.v.middleCols(h * dh, dh);
      auto doh = dconcat.middleCols(h * dh, dh);
      const MatX<T>& probs = bc.probs[h];

      dv.middleCols(h * dh, dh).noalias() = probs.transpose() * doh;
      MatX<T> dprobs = doh * vh.transpose();
      dscores.resize(n, n);
      for (int i = 0; i < n; ++i) {
        auto p = probs.row(i).array();
        auto dp = dprobs.row(i).array();
        const T dot = (dp * p).sum();
        dscores.row(i) = (p * (dp - dot)).matrix();
      }
      dq.middleCols(h * dh, dh).noalias() = scale * (dscores * kh);
      dk.middleCols(h * dh, dh).noalias() = scale * (dscores.transpose() * qh);
    }

    gblk.wq.noalias() += bc.ln1_out.transpose() * dq;
    gblk.bq += dq.colwise().sum().transpose();
    gblk.wk.noalias() += bc.ln1_out.transpose() * dk;
    gblk.bk += dk.colwise().sum().transpose();
    gblk.wv.noalias() += bc.ln1_out.transpose() * dv;
    gblk.bv += dv.colwise().sum().transpose();

    MatX<T> dln1_out = dq * blk.wq.transpose();
    dln1_out.noalias() += dk * blk.wk.transpose();
    dln1_out.noalias() += dv * blk.wv.transpose();
    dx = dx_mid + layer_norm_backward(dln1_out, bc.ln1_xhat, bc.ln1_inv_std,
                                      blk.ln1_scale, gblk.ln1_scale,
                                      gblk.ln1_shift);
  }

  if (c.positional) grads.pos += dx;
  if (dtokens) *dtokens = dx;
}

namespace {

constexpr char kMagic[4] = {'B', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::filesystem::path& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("corrupt checkpoint (truncated): " + path.string());
  return v;
}

}  // namespace

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  const ModelConfig& c = params.config;
  for (int v : {c.depth, c.heads, c.dim, c.mlp_hidden, c.classes, c.tokens}) {
    write_pod(out, static_cast<std::int32_t>(v));
  }
  write_pod(out, static_cast<std::uint8_t>(c.positional));
  write_pod(out, static_cast<std::uint8_t>(params.preproc.ffc));
  write_pod(out, static_cast<std::uint8_t>(params.preproc.normalize));
  write_pod(out, static_cast<std::uint8_t>(0));

  auto views = param_views(const_cast<ModelParams&>(params));
  write_pod(out, static_cast<std::uint32_t>(views.size()));
  for (const auto& view : views) {
    write_pod(out, static_cast<std::uint32_t>(view.name.size()));
    out.write(view.name.data(), static_cast<std::streamsize>(view.name.size()));
    write_pod(out, static_cast<std::uint32_t>(view.shape.size()));
    for (int d : view.shape) write_pod(out, static_cast<std::int32_t>(d));
    out.write(reinterpret_cast<const char*>(view.data),
              static_cast<std::streamsize>(view.size * sizeof(float)));
  }
  if (!out) throw DataError("short write to checkpoint: " + path.string());
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("corrupt checkpoint (bad magic): " + path.string());
  }
  if (read_pod<std::uint32_t>(in, path) != kVersion) {
    throw DataError("unsupported checkpoint version: " + path.string());
  }
  ModelConfig c;
  c.depth = read_pod<std::int32_t>(in, path);
  c.heads = read_pod<std::int32_t>(in, path);
  c.dim = read_pod<std::int32_t>(in, path);
  c.mlp_hidden = read_pod<std::int32_t>(in, path);
  c.classes = read_pod<std::int32_t>(in, path);
  c.tokens = read_pod<std::int32_t>(in, path);
  c.positional = read_pod<std::uint8_t>(in, path) != 0;
  c.validate();

  ModelParams params;
  params.config = c;
  params.preproc.ffc = read_pod<std::uint8_t>(in, path) != 0;
  params.preproc.normalize = read_pod<std::uint8_t>(in, path) != 0;
  read_pod<std::uint8_t>(in, path);
  allocate_params(params);

  auto views = param_views(params);
  const std::uint32_t n_tensors = read_pod<std::uint32_t>(in, path);
  if (n_tensors != views.size()) {
    throw DataError("corrupt checkpoint (tensor count mismatch): " + path.string());
  }
  for (auto& view : views) {
    const std::uint32_t name_len = read_pod<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in || name != view.name) {
      throw DataError("corrupt checkpoint (tensor order): " + path.string());
    }
    const std::uint32_t ndim = read_pod<std::uint32_t>(in, path);
    if (ndim != view.shape.size()) {
      throw DataError("corrupt checkpoint (tensor rank): " + path.string());
    }
    for (int expected : view.shape) {
      if (read_pod<std::int32_t>(in, path) != expected) {
        throw DataError("corrupt checkpoint (tensor shape): " + path.string());
      }
    }
    in.read(reinterpret_cast<char*>(view.data),
            static_cast<std::streamsize>(view.size * sizeof(float)));
    if (!in) throw DataError("corrupt checkpoint (truncated): " + path.string());
  }
  in.peek();
  if (!in.eof()) {
    throw DataError("corrupt checkpoint (trailing bytes): " + path.string());
  }
  return params;
}

ModelParams load_params(const std::filesystem::path& path,
                        const ModelConfig& expected) {
  ModelParams params = load_params(path);
  if (!(params.config == expected)) {
    throw DataError("checkpoint config mismatch: " + path.string());
  }
  return params;
}

template std::vector<ParamView<float>> param_views(ModelParamsT<float>&);
template std::vector<ParamView<double>> param_views(ModelParamsT<double>&);
template std::int64_t param_count(const ModelParamsT<float>&);
template std::int64_t param_count(const ModelParamsT<double>&);
template ModelParamsT<float> zeros_like(const ModelParamsT<float>&);
template ModelParamsT<double> zeros_like(const ModelParamsT<double>&);
template ModelParamsT<double> cast_params<double, float>(const ModelParamsT<float>&);
template ModelParamsT<float> cast_params<float, double>(const ModelParamsT<double>&);
template MatX<float> forward(const MatX<float>&, const ModelParamsT<float>&,
                             ForwardCacheT<float>*);
template MatX<double> forward(const MatX<double>&, const ModelParamsT<double>&,
                              ForwardCacheT<double>*);
template void backward(const MatX<float>&, const ForwardCacheT<float>&,
                       const ModelParamsT<float>&, ModelParamsT<float>&,
                       MatX<float>*);
template void backward(const MatX<double>&, const ForwardCacheT<double>&,
                       const ModelParamsT<double>&, ModelParamsT<double>&,
                       MatX<double>*);

}  // namespace beltscan::nn
