#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "minnow/error.hpp"
#include "minnow/rng.hpp"
#include "minnow/tensor.hpp"

namespace minnow {

/// Architecture of the from-scratch autoregressive LM: pre-norm transformer
/// blocks, rotary positions on query/key, tied input/output embeddings, no
/// dropout.
struct ModelConfig {
  int n_layers = 2;
  int d_model = 128;
  int n_heads = 4;
  int d_ff = 512;
  int vocab_size = 0;
  int max_seq_len = 256;
  bool tie_embeddings = true;  // fixed: output projection is embed^T
  double rope_base = 10000.0;
  double ln_eps = 1e-5;

  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1) {
      raise(errc::bad_config, "model dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
      raise(errc::bad_config, "d_model must be divisible by n_heads");
    }
    if (vocab_size < 3) {
      raise(errc::bad_config, "vocab_size must cover the 3 special tokens");
    }
    if (max_seq_len < 1) raise(errc::bad_config, "max_seq_len must be >= 1");
    if (!tie_embeddings) raise(errc::bad_config, "embeddings are always tied");
  }
};

enum class ParamKind { weight, gain, bias };

struct TensorInfo {
  std::string name;
  ParamKind kind = ParamKind::weight;
  bool residual_proj = false;  // init scaled by 1/sqrt(2 * n_layers)
  int rows = 0;
  int cols = 0;
};

template <typename T>
struct Parameters {
  struct Layer {
    Mat<T> ln1_g, ln1_b;
    Mat<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Mat<T> ln2_g, ln2_b;
    Mat<T> w1, b1, w2, b2;
  };

  ModelConfig cfg;
  Mat<T> embed;  // vocab x d_model; also the output projection (tied)
  std::vector<Layer> layers;
  Mat<T> lnf_g, lnf_b;
};

/// Tensor metadata in checkpoint order. The order here is the declared
/// serialization order for checkpoints, initialization draws, and moment
/// buffers.
inline std::vector<TensorInfo> tensor_infos(const ModelConfig& cfg) {
  std::vector<TensorInfo> infos;
  const int d = cfg.d_model;
  auto push = [&](std::string name, ParamKind kind, int r, int c,
                  bool resid = false) {
    infos.push_back(TensorInfo{std::move(name), kind, resid, r, c});
  };
  push("embed", ParamKind::weight, cfg.vocab_size, d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    push(p + "ln1_g", ParamKind::gain, 1, d);
    push(p + "ln1_b", ParamKind::bias, 1, d);
    push(p + "wq", ParamKind::weight, d, d);
    push(p + "bq", ParamKind::bias, 1, d);
    push(p + "wk", ParamKind::weight, d, d);
    push(p + "bk", ParamKind::bias, 1, d);
    push(p + "wv", ParamKind::weight, d, d);
    push(p + "bv", ParamKind::bias, 1, d);
    push(p + "wo", ParamKind::weight, d, d, true);
    push(p + "bo", ParamKind::bias, 1, d);
    push(p + "ln2_g", ParamKind::gain, 1, d);
    push(p + "ln2_b", ParamKind::bias, 1, d);
    push(p + "w1", ParamKind::weight, d, cfg.d_ff);
    push(p + "b1", ParamKind::bias, 1, cfg.d_ff);
    push(p + "w2", ParamKind::weight, cfg.d_ff, d, true);
    push(p + "b2", ParamKind::bias, 1, d);
  }
  push("lnf_g", ParamKind::gain, 1, d);
  push("lnf_b", ParamKind::bias, 1, d);
  return infos;
}

template <typename T>
std::vector<Mat<T>*> tensor_list(Parameters<T>& p) {
  std::vector<Mat<T>*> out;
  out.push_back(&p.embed);
  for (auto& L : p.layers) {
    for (Mat<T>* m :
         {&L.ln1_g, &L.ln1_b, &L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo,
          &L.bo, &L.ln2_g, &L.ln2_b, &L.w1, &L.b1, &L.w2, &L.b2}) {
      out.push_back(m);
    }
  }
  out.push_back(&p.lnf_g);
  out.push_back(&p.lnf_b);
  return out;
}

template <typename T>
Parameters<T> zeros_like_params(const ModelConfig& cfg) {
  Parameters<T> p;
  p.cfg = cfg;
  p.layers.resize(static_cast<size_t>(cfg.n_layers));
  const auto infos = tensor_infos(cfg);
  auto mats = tensor_list(p);
  for (size_t i = 0; i < mats.size(); ++i) {
    *mats[i] = Mat<T>(infos[i].rows, infos[i].cols);
  }
  return p;
}

/// Seed-deterministic initialization: weights ~ N(0, sigma^2) with residual
/// output projections scaled by 1/sqrt(2 * n_layers), gains 1, biases 0.
/// sigma = 0 is a test hook that zeroes every non-gain weight.
template <typename T>
Parameters<T> init_model(const ModelConfig& cfg, uint64_t seed,
                         double sigma = 0.02) {
  cfg.validate();
  Parameters<T> p = zeros_like_params<T>(cfg);
  Pcg32 rng = derive_stream(seed, "init");
  const double resid_scale = 1.0 / std::sqrt(2.0 * cfg.n_layers);
  const auto infos = tensor_infos(cfg);
  auto mats = tensor_list(p);
  for (size_t i = 0; i < mats.size(); ++i) {
    Mat<T>& m = *mats[i];
    switch (infos[i].kind) {
      case ParamKind::gain:
        m.fill(T(1));
        break;
      case ParamKind::bias:
        m.fill(T(0));
        break;
      case ParamKind::weight: {
        const double s = infos[i].residual_proj ? sigma * resid_scale : sigma;
        for (auto& v : m.a) v = static_cast<T>(rng.normal(0.0, s));
        break;
      }
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// forward

template <typename T>
struct LayerCache {
  Mat<T> ln1_y;
  std::vector<T> ln1_mean, ln1_rstd;
  Mat<T> q, k, v;              // q,k post-rotation
  std::vector<Mat<T>> att_w;   // per head, len x len, rows softmaxed over j<=i
  Mat<T> att_mix;              // per-head weighted value sums, packed
  Mat<T> resid1;
  Mat<T> ln2_y;
  std::vector<T> ln2_mean, ln2_rstd;
  Mat<T> ff1, ff1_act;
  Mat<T> resid2;
};

template <typename T>
struct ForwardCache {
  std::vector<int> ids;
  Mat<T> x0;
  std::vector<LayerCache<T>> layers;
  Mat<T> lnf_y;
  std::vector<T> lnf_mean, lnf_rstd;
  Mat<T> logits;
};

namespace detail {

template <typename T>
void layer_norm(const Mat<T>& x, const Mat<T>& g, const Mat<T>& b, double eps,
                Mat<T>& y, std::vector<T>& means, std::vector<T>& rstds) {
  const int n = x.rows, d = x.cols;
  y = Mat<T>(n, d);
  means.assign(static_cast<size_t>(n), T(0));
  rstds.assign(static_cast<size_t>(n), T(0));
  for (int i = 0; i < n; ++i) {
    const T* xr = x.row(i);
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += static_cast<double>(xr[j]);
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = static_cast<double>(xr[j]) - mean;
      var += c * c;
    }
    var /= d;
    const double rstd = 1.0 / std::sqrt(var + eps);
    means[static_cast<size_t>(i)] = static_cast<T>(mean);
    rstds[static_cast<size_t>(i)] = static_cast<T>(rstd);
    T* yr = y.row(i);
    const T* gr = g.row(0);
    const T* br = b.row(0);
    for (int j = 0; j < d; ++j) {
      const T xhat = static_cast<T>((static_cast<double>(xr[j]) - mean) * rstd);
      yr[j] = gr[j] * xhat + br[j];
    }
  }
}

template <typename T>
void layer_norm_backward(const Mat<T>& dy, const Mat<T>& x, const Mat<T>& g,
                         const std::vector<T>& means, const std::vector<T>& rstds,
                         Mat<T>& dx, Mat<T>& dg, Mat<T>& db) {
  const int n = x.rows, d = x.cols;
  for (int i = 0; i < n; ++i) {
    const T* xr = x.row(i);
    const T* dyr = dy.row(i);
    const T* gr = g.row(0);
    const double mean = static_cast<double>(means[static_cast<size_t>(i)]);
    const double rstd = static_cast<double>(rstds[static_cast<size_t>(i)]);
    double m1 = 0.0, m2 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double xhat = (static_cast<double>(xr[j]) - mean) * rstd;
      const double dxhat = static_cast<double>(dyr[j]) * static_cast<double>(gr[j]);
      m1 += dxhat;
      m2 += dxhat * xhat;
    }
    m1 /= d;
    m2 /= d;
    T* dxr = dx.row(i);
    T* dgr = dg.row(0);
    T* dbr = db.row(0);
    for (int j = 0; j < d; ++j) {
      const double xhat = (static_cast<double>(xr[j]) - mean) * rstd;
      const double dxhat = static_cast<double>(dyr[j]) * static_cast<double>(gr[j]);
      dxr[j] += static_cast<T>((dxhat - m1 - xhat * m2) * rstd);
      dgr[j] += static_cast<T>(static_cast<double>(dyr[j]) * xhat);
      dbr[j] += dyr[j];
    }
  }
}

// Rotary rotation of adjacent pairs within each head; pos is the absolute
// position, angle_i = pos * base^(-2i/head_dim).
template <typename T>
void rope_rotate(Mat<T>& x, int n_heads, double base, bool inverse) {
  const int d = x.cols;
  const int hd = d / n_heads;
  for (int pos = 0; pos < x.rows; ++pos) {
    T* xr = x.row(pos);
    for (int h = 0; h < n_heads; ++h) {
      T* head = xr + h * hd;
      for (int i = 0; i * 2 + 1 < hd; ++i) {
        const double theta =
            pos * std::pow(base, -2.0 * i / static_cast<double>(hd));
        const double c = std::cos(theta);
        const double s = inverse ? -std::sin(theta) : std::sin(theta);
        const double a = static_cast<double>(head[2 * i]);
        const double b = static_cast<double>(head[2 * i + 1]);
        head[2 * i] = static_cast<T>(a * c - b * s);
        head[2 * i + 1] = static_cast<T>(a * s + b * c);
      }
    }
  }
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476));
}

inline double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return 0.5 * (1.0 + std::erf(x * 0.7071067811865476)) +
         x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

}  // namespace detail

/// Full forward pass over one sequence, retaining every activation needed by
/// backward(). Position t's logits depend only on ids[0..t]; attention rows
/// never read past their own position.
template <typename T>
void forward(const Parameters<T>& params, const std::vector<int>& ids,
             ForwardCache<T>& cache) {
  const ModelConfig& cfg = params.cfg;
  const int len = static_cast<int>(ids.size());
  if (len > cfg.max_seq_len) {
    raise(errc::sequence_too_long, std::to_string(len) + " tokens exceeds max_seq_len " +
                                       std::to_string(cfg.max_seq_len));
  }
  for (const int id : ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      raise(errc::unknown_id, "token id " + std::to_string(id) +
                                  " outside vocabulary of size " +
                                  std::to_string(cfg.vocab_size));
    }
  }
  const int d = cfg.d_model;
  const int nh = cfg.n_heads;
  const int hd = cfg.head_dim();
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  cache.ids = ids;
  cache.x0 = Mat<T>(len, d);
  for (int t = 0; t < len; ++t) {
    const T* erow = params.embed.row(ids[static_cast<size_t>(t)]);
    T* xr = cache.x0.row(t);
    for (int j = 0; j < d; ++j) xr[j] = erow[j];
  }

  cache.layers.assign(static_cast<size_t>(cfg.n_layers), LayerCache<T>{});
  const Mat<T>* x = &cache.x0;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& L = params.layers[static_cast<size_t>(l)];
    auto& C = cache.layers[static_cast<size_t>(l)];

    detail::layer_norm(*x, L.ln1_g, L.ln1_b, cfg.ln_eps, C.ln1_y, C.ln1_mean,
                       C.ln1_rstd);

    C.q = Mat<T>(len, d);
    C.k = Mat<T>(len, d);
    C.v = Mat<T>(len, d);
    matmul(C.ln1_y, L.wq, C.q);
    add_row_bias(C.q, L.bq);
    matmul(C.ln1_y, L.wk, C.k);
    add_row_bias(C.k, L.bk);
    matmul(C.ln1_y, L.wv, C.v);
    add_row_bias(C.v, L.bv);
    detail::rope_rotate(C.q, nh, cfg.rope_base, false);
    detail::rope_rotate(C.k, nh, cfg.rope_base, false);

    C.att_w.assign(static_cast<size_t>(nh), Mat<T>(len, len));
    C.att_mix = Mat<T>(len, d);
    for (int h = 0; h < nh; ++h) {
      Mat<T>& w = C.att_w[static_cast<size_t>(h)];
      for (int i = 0; i < len; ++i) {
        // causal scores over j <= i
        double max_score = -std::numeric_limits<double>::infinity();
        std::vector<double> scores(static_cast<size_t>(i) + 1);
        const T* qi = C.q.row(i) + h * hd;
        for (int j = 0; j <= i; ++j) {
          const T* kj = C.k.row(j) + h * hd;
          const double s = static_cast<double>(dot(qi, kj, hd)) * inv_sqrt_hd;
          scores[static_cast<size_t>(j)] = s;
          if (s > max_score) max_score = s;
        }
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
          const double e = std::exp(scores[static_cast<size_t>(j)] - max_score);
          scores[static_cast<size_t>(j)] = e;
          z += e;
        }
        T* wrow = w.row(i);
        for (int j = 0; j <= i; ++j) {
          wrow[j] = static_cast<T>(scores[static_cast<size_t>(j)] / z);
        }
        T* mix = C.att_mix.row(i) + h * hd;
        for (int j = 0; j <= i; ++j) {
          const T wij = wrow[j];
          const T* vj = C.v.row(j) + h * hd;
          for (int u = 0; u < hd; ++u) mix[u] += wij * vj[u];
        }
      }
    }

    C.resid1 = Mat<T>(len, d);
    matmul(C.att_mix, L.wo, C.resid1);
    add_row_bias(C.resid1, L.bo);
    for (int i = 0; i < len; ++i) {
      const T* xr = x->row(i);
      T* rr = C.resid1.row(i);
      for (int j = 0; j < d; ++j) rr[j] += xr[j];
    }

    detail::layer_norm(C.resid1, L.ln2_g, L.ln2_b, cfg.ln_eps, C.ln2_y,
                       C.ln2_mean, C.ln2_rstd);
    C.ff1 = Mat<T>(len, cfg.d_ff);
    matmul(C.ln2_y, L.w1, C.ff1);
    add_row_bias(C.ff1, L.b1);
    C.ff1_act = Mat<T>(len, cfg.d_ff);
    for (size_t i = 0; i < C.ff1.a.size(); ++i) {
      C.ff1_act.a[i] = static_cast<T>(detail::gelu(static_cast<double>(C.ff1.a[i])));
    }
    C.resid2 = Mat<T>(len, d);
    matmul(C.ff1_act, L.w2, C.resid2);
    add_row_bias(C.resid2, L.b2);
    for (int i = 0; i < len; ++i) {
      const T* rr1 = C.resid1.row(i);
      T* rr2 = C.resid2.row(i);
      for (int j = 0; j < d; ++j) rr2[j] += rr1[j];
    }
    x = &C.resid2;
  }

  detail::layer_norm(*x, params.lnf_g, params.lnf_b, cfg.ln_eps, cache.lnf_y,
                     cache.lnf_mean, cache.lnf_rstd);
  cache.logits = Mat<T>(len, cfg.vocab_size);
  matmul_a_bt_acc(cache.lnf_y, params.embed, cache.logits);
}

/// Logits for every position of `ids` (|ids| x vocab_size).
template <typename T>
Mat<T> forward_logits(const Parameters<T>& params, const std::vector<int>& ids) {
  ForwardCache<T> cache;
  if (ids.empty()) return Mat<T>(0, params.cfg.vocab_size);
  forward(params, ids, cache);
  return std::move(cache.logits);
}

// ---------------------------------------------------------------------------
// loss

/// Numerically stable per-row softmax; the normalizer is accumulated in
/// double so each row sums to 1 well within 1e-6.
template <typename T>
std::vector<T> softmax_row(const T* logits, int n) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    max_logit = std::max(max_logit, static_cast<double>(logits[j]));
  }
  std::vector<double> exps(static_cast<size_t>(n));
  double z = 0.0;
  for (int j = 0; j < n; ++j) {
    const double e = std::exp(static_cast<double>(logits[j]) - max_logit);
    exps[static_cast<size_t>(j)] = e;
    z += e;
  }
  std::vector<T> probs(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    probs[static_cast<size_t>(j)] = static_cast<T>(exps[static_cast<size_t>(j)] / z);
  }
  return probs;
}

template <typename T>
double log_softmax_at(const T* logits, int n, int target) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    max_logit = std::max(max_logit, static_cast<double>(logits[j]));
  }
  double z = 0.0;
  for (int j = 0; j < n; ++j) {
    z += std::exp(static_cast<double>(logits[j]) - max_logit);
  }
  return static_cast<double>(logits[target]) - max_logit - std::log(z);
}

/// Mean over unmasked positions of -log softmax(logits)[target].
template <typename T>
double nll_loss(const Mat<T>& logits, const std::vector<int>& targets,
                const std::vector<uint8_t>& mask) {
  if (static_cast<size_t>(logits.rows) != targets.size() ||
      targets.size() != mask.size()) {
    raise(errc::bad_config, "nll_loss shape mismatch");
  }
  double sum = 0.0;
  long count = 0;
  for (int i = 0; i < logits.rows; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    sum -= log_softmax_at(logits.row(i), logits.cols, targets[static_cast<size_t>(i)]);
    ++count;
  }
  if (count == 0) raise(errc::empty_mask, "no position contributes to the loss");
  return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// backward

/// One training example: inputs[t] predicts targets[t]; mask[t] == 0 excludes
/// the position from the loss (padding).
struct SeqExample {
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<uint8_t> mask;
};

namespace detail {

// Reverse pass for one sequence given d(loss)/d(logits); accumulates into
// grads. Mirrors forward() exactly.
template <typename T>
void backward_sequence(const Parameters<T>& params, const ForwardCache<T>& cache,
                       const Mat<T>& dlogits, Parameters<T>& grads) {
  const ModelConfig& cfg = params.cfg;
  const int len = static_cast<int>(cache.ids.size());
  const int d = cfg.d_model;
  const int nh = cfg.n_heads;
  const int hd = cfg.head_dim();
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  // logits = lnf_y * embed^T
  Mat<T> d_lnf_y(len, d);
  matmul_acc(dlogits, params.embed, d_lnf_y);
  matmul_at_b_acc(dlogits, cache.lnf_y, grads.embed);

  const Mat<T>& last_x = cfg.n_layers == 0
                             ? cache.x0
                             : cache.layers.back().resid2;
  Mat<T> dx(len, d);
  detail::layer_norm_backward(d_lnf_y, last_x, params.lnf_g, cache.lnf_mean,
                              cache.lnf_rstd, dx, grads.lnf_g, grads.lnf_b);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& L = params.layers[static_cast<size_t>(l)];
    auto& G = grads.layers[static_cast<size_t>(l)];
    const auto& C = cache.layers[static_cast<size_t>(l)];
    const Mat<T>& x_in =
        l == 0 ? cache.x0 : cache.layers[static_cast<size_t>(l - 1)].resid2;

    // dx currently holds d(resid2). resid2 = resid1 + ff2(ln2(resid1)).
    Mat<T>& d_resid2 = dx;
    Mat<T> d_ff1_act(len, cfg.d_ff);
    matmul_a_bt_acc(d_resid2, L.w2, d_ff1_act);
    matmul_at_b_acc(C.ff1_act, d_resid2, G.w2);
    add_col_sums(d_resid2, G.b2);

    Mat<T> d_ff1(len, cfg.d_ff);
    for (size_t i = 0; i < d_ff1.a.size(); ++i) {
      d_ff1.a[i] = static_cast<T>(
          static_cast<double>(d_ff1_act.a[i]) *
          detail::gelu_grad(static_cast<double>(C.ff1.a[i])));
    }
    Mat<T> d_ln2_y(len, d);
    matmul_a_bt_acc(d_ff1, L.w1, d_ln2_y);
    matmul_at_b_acc(C.ln2_y, d_ff1, G.w1);
    add_col_sums(d_ff1, G.b1);

    Mat<T> d_resid1(len, d);
    detail::layer_norm_backward(d_ln2_y, C.resid1, L.ln2_g, C.ln2_mean,
                                C.ln2_rstd, d_resid1, G.ln2_g, G.ln2_b);
    for (size_t i = 0; i < d_resid1.a.size(); ++i) {
      d_resid1.a[i] += d_resid2.a[i];  // residual branch
    }

    // resid1 = x_in + wo(att_mix) + bo
    Mat<T> d_att_mix(len, d);
    matmul_a_bt_acc(d_resid1, L.wo, d_att_mix);
    matmul_at_b_acc(C.att_mix, d_resid1, G.wo);
    add_col_sums(d_resid1, G.bo);

    Mat<T> dq(len, d), dk(len, d), dv(len, d);
    for (int h = 0; h < nh; ++h) {
      const Mat<T>& w = C.att_w[static_cast<size_t>(h)];
      for (int i = 0; i < len; ++i) {
        const T* dmix = d_att_mix.row(i) + h * hd;
        const T* wrow = w.row(i);
        // dv and dw
        std::vector<double> dw(static_cast<size_t>(i) + 1);
        for (int j = 0; j <= i; ++j) {
          const T* vj = C.v.row(j) + h * hd;
          T* dvj = dv.row(j) + h * hd;
          const T wij = wrow[j];
          double acc = 0.0;
          for (int u = 0; u < hd; ++u) {
            dvj[u] += wij * dmix[u];
            acc += static_cast<double>(dmix[u]) * static_cast<double>(vj[u]);
          }
          dw[static_cast<size_t>(j)] = acc;
        }
        // softmax backward
        double inner = 0.0;
        for (int j = 0; j <= i; ++j) {
          inner += static_cast<double>(wrow[j]) * dw[static_cast<size_t>(j)];
        }
        const T* qi = C.q.row(i) + h * hd;
        T* dqi = dq.row(i) + h * hd;
        for (int j = 0; j <= i; ++j) {
          const double ds =
              static_cast<double>(wrow[j]) * (dw[static_cast<size_t>(j)] - inner) *
              inv_sqrt_hd;
          const T* kj = C.k.row(j) + h * hd;
          T* dkj = dk.row(j) + h * hd;
          for (int u = 0; u < hd; ++u) {
            dqi[u] += static_cast<T>(ds * static_cast<double>(kj[u]));
            dkj[u] += static_cast<T>(ds * static_cast<double>(qi[u]));
          }
        }
      }
    }

    detail::rope_rotate(dq, nh, cfg.rope_base, true);
    detail::rope_rotate(dk, nh, cfg.rope_base, true);

    Mat<T> d_ln1_y(len, d);
    matmul_a_bt_acc(dq, L.wq, d_ln1_y);
    matmul_at_b_acc(C.ln1_y, dq, G.wq);
    add_col_sums(dq, G.bq);
    matmul_a_bt_acc(dk, L.wk, d_ln1_y);
    matmul_at_b_acc(C.ln1_y, dk, G.wk);
    add_col_sums(dk, G.bk);
    matmul_a_bt_acc(dv, L.wv, d_ln1_y);
    matmul_at_b_acc(C.ln1_y, dv, G.wv);
    add_col_sums(dv, G.bv);

    Mat<T> dx_in(len, d);
    detail::layer_norm_backward(d_ln1_y, x_in, L.ln1_g, C.ln1_mean, C.ln1_rstd,
                                dx_in, G.ln1_g, G.ln1_b);
    for (size_t i = 0; i < dx_in.a.size(); ++i) {
      dx_in.a[i] += d_resid1.a[i];  // residual branch
    }
    dx = std::move(dx_in);
  }

  // embedding gather backward
  for (int t = 0; t < len; ++t) {
    T* grow = grads.embed.row(cache.ids[static_cast<size_t>(t)]);
    const T* dxr = dx.row(t);
    for (int j = 0; j < d; ++j) grow[j] += dxr[j];
  }
}

}  // namespace detail

template <typename T>
struct BackwardResult {
  double loss = 0.0;
  long n_positions = 0;
  Parameters<T> grads;
};

/// Exact reverse-mode gradients of the per-token mean NLL over a batch.
/// Each sequence's gradient is computed into its own buffer and the buffers
/// are reduced in batch order (a fixed tree), so reordering two sequences
/// only swaps the operands of commutative additions.
template <typename T>
BackwardResult<T> backward(const Parameters<T>& params,
                           const std::vector<SeqExample>& batch) {
  BackwardResult<T> result;
  result.grads = zeros_like_params<T>(params.cfg);

  std::vector<ForwardCache<T>> caches(batch.size());
  long total = 0;
  for (size_t s = 0; s < batch.size(); ++s) {
    if (batch[s].inputs.size() != batch[s].targets.size() ||
        batch[s].inputs.size() != batch[s].mask.size()) {
      raise(errc::bad_config, "batch example shape mismatch");
    }
    forward(params, batch[s].inputs, caches[s]);
    for (const uint8_t m : batch[s].mask) total += m ? 1 : 0;
  }
  if (total == 0) raise(errc::empty_mask, "batch has no unmasked position");
  const double inv_total = 1.0 / static_cast<double>(total);

  Parameters<T> scratch = zeros_like_params<T>(params.cfg);
  const auto total_mats = tensor_list(result.grads);
  const auto scratch_mats = tensor_list(scratch);

  double loss_sum = 0.0;
  for (size_t s = 0; s < batch.size(); ++s) {
    const auto& ex = batch[s];
    const auto& cache = caches[s];
    const int len = static_cast<int>(ex.inputs.size());
    Mat<T> dlogits(len, params.cfg.vocab_size);
    double seq_loss = 0.0;
    for (int t = 0; t < len; ++t) {
      if (!ex.mask[static_cast<size_t>(t)]) continue;
      const int target = ex.targets[static_cast<size_t>(t)];
      seq_loss -= log_softmax_at(cache.logits.row(t), params.cfg.vocab_size, target);
      const auto probs = softmax_row(cache.logits.row(t), params.cfg.vocab_size);
      T* drow = dlogits.row(t);
      for (int j = 0; j < params.cfg.vocab_size; ++j) {
        drow[j] = static_cast<T>(static_cast<double>(probs[static_cast<size_t>(j)]) *
                                 inv_total);
      }
      drow[target] -= static_cast<T>(inv_total);
    }
    for (auto* m : scratch_mats) m->zero();
    detail::backward_sequence(params, cache, dlogits, scratch);
    for (size_t m = 0; m < total_mats.size(); ++m) {
      T* dst = total_mats[m]->a.data();
      const T* src = scratch_mats[m]->a.data();
      const size_t n = total_mats[m]->a.size();
      for (size_t i = 0; i < n; ++i) dst[i] += src[i];
    }
    loss_sum += seq_loss;
  }
  result.loss = loss_sum * inv_total;
  result.n_positions = total;
  return result;
}

/// log p(continuation | context): the sum over continuation positions of the
/// conditional log-probability under the model. An empty context makes the
/// first continuation token unconditioned; it is scored against a uniform
/// prior 1/vocab_size so the factorization identity
/// logprob(0, ab) = logprob(0, a) + logprob(a, b) holds exactly. In the
/// pipeline contexts always start with SEP, so the prior never applies there.
template <typename T>
double sequence_logprob(const Parameters<T>& params,
                        const std::vector<int>& context,
                        const std::vector<int>& continuation) {
  const ModelConfig& cfg = params.cfg;
  if (context.size() + continuation.size() >
      static_cast<size_t>(cfg.max_seq_len)) {
    raise(errc::sequence_too_long,
          "context + continuation exceeds max_seq_len " +
              std::to_string(cfg.max_seq_len));
  }
  if (continuation.empty()) return 0.0;

  std::vector<int> full = context;
  full.insert(full.end(), continuation.begin(), continuation.end());
  std::vector<int> inputs(full.begin(), full.end() - 1);

  double logprob = 0.0;
  size_t start = 0;
  if (context.empty()) {
    logprob += -std::log(static_cast<double>(cfg.vocab_size));
    start = 1;
    if (continuation.size() == 1) return logprob;
  }
  const Mat<T> logits = forward_logits(params, inputs);
  for (size_t i = start; i < continuation.size(); ++i) {
    const size_t pos = context.size() + i;  // absolute position in `full`
    logprob += log_softmax_at(logits.row(static_cast<int>(pos - 1)),
                              cfg.vocab_size, continuation[i]);
  }
  return logprob;
}

}  // namespace minnow
