#pragma once

// Minimal double-precision transformer building blocks with explicit
// forward/backward passes. No autograd graph: every block caches what its
// backward needs, and gradients accumulate into Param::g.

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "seqcsg/common.hpp"

namespace seqcsg {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Rng {
  std::mt19937_64 gen;

  explicit Rng(std::uint64_t seed = 0) : gen(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> dist(mean, stddev);
    return dist(gen);
  }
  double uniform() {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    return dist(gen);
  }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(gen);
  }
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct Param {
  Mat v;  // value
  Mat g;  // accumulated gradient, same shape
  bool trainable = true;
  bool weight_decay = true;  // off for biases and layer-norm parameters

  void init_normal(int rows, int cols, Rng& rng, double stddev) {
    v.resize(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) v(i, j) = rng.normal(0.0, stddev);
    g = Mat::Zero(rows, cols);
  }
  void init_constant(int rows, int cols, double value) {
    v = Mat::Constant(rows, cols, value);
    g = Mat::Zero(rows, cols);
  }
  void init_identity(int size) {
    v = Mat::Identity(size, size);
    g = Mat::Zero(size, size);
  }
  void zero_grad() { g.setZero(); }
  std::size_t count() const { return static_cast<std::size_t>(v.size()); }
};

struct ParamRef {
  std::string name;
  Param* p = nullptr;
};

// ---------------------------------------------------------------------------
// Activations and softmax
// ---------------------------------------------------------------------------

inline double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}
inline double gelu_grad_scalar(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
         x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline Mat gelu(const Mat& x) { return x.unaryExpr(&gelu_scalar); }
inline Mat gelu_backward(const Mat& x, const Mat& dy) {
  return dy.cwiseProduct(x.unaryExpr(&gelu_grad_scalar));
}

// Numerically stable row-wise softmax.
inline Mat row_softmax(const Mat& a) {
  Mat p(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double m = a.row(i).maxCoeff();
    Eigen::RowVectorXd e = (a.row(i).array() - m).exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

// d(softmax)/d(logits) applied to upstream gradient, row-wise.
inline Mat row_softmax_backward(const Mat& p, const Mat& dp) {
  Mat da(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double dot = p.row(i).dot(dp.row(i));
    da.row(i) = p.row(i).cwiseProduct((dp.row(i).array() - dot).matrix());
  }
  return da;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

struct Linear {
  Param w;  // in x out
  Param b;  // 1 x out

  void init(int in, int out, Rng& rng, double stddev = 0.02) {
    w.init_normal(in, out, rng, stddev);
    b.init_constant(1, out, 0.0);
    b.weight_decay = false;
  }
  // Identity map with zero bias; used for the frozen feature pass-through.
  void init_identity(int size) {
    w.init_identity(size);
    b.init_constant(1, size, 0.0);
    b.weight_decay = false;
  }

  Mat forward(const Mat& x) const {
    return (x * w.v).rowwise() + b.v.row(0);
  }
  Mat backward(const Mat& x, const Mat& dy) {
    w.g.noalias() += x.transpose() * dy;
    b.g.row(0) += dy.colwise().sum();
    return dy * w.v.transpose();
  }
  void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
  }
};

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

struct LayerNorm {
  Param gamma;  // 1 x d
  Param beta;   // 1 x d
  double eps = 1e-5;

  void init(int d) {
    gamma.init_constant(1, d, 1.0);
    beta.init_constant(1, d, 0.0);
    gamma.weight_decay = false;
    beta.weight_decay = false;
  }

  struct Cache {
    Mat xhat;
    Vec inv_std;
  };

  Mat forward(const Mat& x, Cache* cache) const {
    const Eigen::Index n = x.rows(), d = x.cols();
    Mat xhat(n, d);
    Vec inv_std(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double mean = x.row(i).mean();
      Eigen::RowVectorXd centered = x.row(i).array() - mean;
      double var = centered.squaredNorm() / static_cast<double>(d);
      double istd = 1.0 / std::sqrt(var + eps);
      xhat.row(i) = centered * istd;
      inv_std(i) = istd;
    }
    Mat y = (xhat.array().rowwise() * gamma.v.row(0).array()).rowwise() +
            beta.v.row(0).array();
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return y;
  }

  Mat backward(const Cache& cache, const Mat& dy) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    gamma.g.row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
    beta.g.row(0) += dy.colwise().sum();
    Mat dxhat = dy.array().rowwise() * gamma.v.row(0).array();
    Mat dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      double m1 = dxhat.row(i).mean();
      double m2 = dxhat.row(i).cwiseProduct(cache.xhat.row(i)).mean();
      dx.row(i) = cache.inv_std(i) *
                  (dxhat.row(i).array() - m1 - cache.xhat.row(i).array() * m2);
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".gamma", &gamma});
    out.push_back({prefix + ".beta", &beta});
  }
};

// ---------------------------------------------------------------------------
// Masked multi-head attention
// ---------------------------------------------------------------------------

// Scores are computed per head as
//   A_ij = mask_ij * (q_i . k_j) / sqrt(d_head) + (1 - mask_ij) * delta
// so an invisible pair's logit is the constant `delta` and its softmax
// weight underflows to zero. A mask of all ones recovers plain attention.
struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int n_heads = 1;
  int d = 0;
  double delta = -1e9;

  void init(int dim, int heads, double mask_delta, Rng& rng,
            double stddev = 0.02) {
    if (heads <= 0 || dim % heads != 0)
      throw ConfigError("hidden size must be divisible by head count");
    d = dim;
    n_heads = heads;
    delta = mask_delta;
    wq.init(d, d, rng, stddev);
    wk.init(d, d, rng, stddev);
    wv.init(d, d, rng, stddev);
    wo.init(d, d, rng, stddev);
  }

  int head_dim() const { return d / n_heads; }

  struct Cache {
    Mat q_in, kv_in;          // inputs
    Mat q, k, v;              // projected
    Mat mask;                 // n_q x n_k, entries 0/1
    std::vector<Mat> probs;   // per head, n_q x n_k
    Mat concat;               // n_q x d
  };

  static void check_mask(const Mat& mask) {
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
      for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        double v = mask(i, j);
        if (v != 0.0 && v != 1.0)
          throw ContractViolation("attention mask must be binary");
      }
  }

  Mat forward(const Mat& q_in, const Mat& kv_in, const Mat& mask,
              Cache* cache) const {
    if (mask.rows() != q_in.rows() || mask.cols() != kv_in.rows())
      throw ContractViolation("attention mask shape mismatch");
    check_mask(mask);
    const int dk = head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    Mat q = wq.forward(q_in);
    Mat k = wk.forward(kv_in);
    Mat v = wv.forward(kv_in);

    Mat concat(q_in.rows(), d);
    std::vector<Mat> probs(n_heads);
    for (int h = 0; h < n_heads; ++h) {
      auto qh = q.middleCols(h * dk, dk);
      auto kh = k.middleCols(h * dk, dk);
      auto vh = v.middleCols(h * dk, dk);
      Mat scores = scale * (qh * kh.transpose());
      Mat logits = mask.cwiseProduct(scores) +
                   (Mat::Ones(mask.rows(), mask.cols()) - mask) * delta;
      probs[h] = row_softmax(logits);
      concat.middleCols(h * dk, dk) = probs[h] * vh;
    }
    Mat out = wo.forward(concat);
    if (cache) {
      cache->q_in = q_in;
      cache->kv_in = kv_in;
      cache->q = std::move(q);
      cache->k = std::move(k);
      cache->v = std::move(v);
      cache->mask = mask;
      cache->probs = std::move(probs);
      cache->concat = std::move(concat);
    }
    return out;
  }

  // Returns (d_q_in, d_kv_in); for self-attention the caller adds both.
  std::pair<Mat, Mat> backward(const Cache& cache, const Mat& dout) {
    const int dk = head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    Mat dconcat = wo.backward(cache.concat, dout);
    Mat dq = Mat::Zero(cache.q.rows(), d);
    Mat dkm = Mat::Zero(cache.k.rows(), d);
    Mat dv = Mat::Zero(cache.v.rows(), d);
    for (int h = 0; h < n_heads; ++h) {
      auto qh = cache.q.middleCols(h * dk, dk);
      auto kh = cache.k.middleCols(h * dk, dk);
      auto vh = cache.v.middleCols(h * dk, dk);
      const Mat& ph = cache.probs[h];
      Mat doh = dconcat.middleCols(h * dk, dk);
      Mat dph = doh * vh.transpose();
      dv.middleCols(h * dk, dk) = ph.transpose() * doh;
      Mat da = row_softmax_backward(ph, dph);
      Mat ds = cache.mask.cwiseProduct(da);  // masked logits are constants
      dq.middleCols(h * dk, dk) = scale * (ds * kh);
      dkm.middleCols(h * dk, dk) = scale * (ds.transpose() * qh);
    }
    Mat d_q_in = wq.backward(cache.q_in, dq);
    Mat d_kv_in = wk.backward(cache.kv_in, dkm);
    d_kv_in += wv.backward(cache.kv_in, dv);
    return {std::move(d_q_in), std::move(d_kv_in)};
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
  }
};

// ---------------------------------------------------------------------------
// Position-wise feed-forward
// ---------------------------------------------------------------------------

struct FeedForward {
  Linear fc1, fc2;

  void init(int d, int d_hidden, Rng& rng, double stddev = 0.02) {
    fc1.init(d, d_hidden, rng, stddev);
    fc2.init(d_hidden, d, rng, stddev);
  }

  struct Cache {
    Mat x;
    Mat pre_act;
    Mat act;
  };

  Mat forward(const Mat& x, Cache* cache) const {
    Mat pre = fc1.forward(x);
    Mat act = gelu(pre);
    Mat out = fc2.forward(act);
    if (cache) {
      cache->x = x;
      cache->pre_act = std::move(pre);
      cache->act = std::move(act);
    }
    return out;
  }

  Mat backward(const Cache& cache, const Mat& dy) {
    Mat dact = fc2.backward(cache.act, dy);
    Mat dpre = gelu_backward(cache.pre_act, dact);
    return fc1.backward(cache.x, dpre);
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
  }
};

// ---------------------------------------------------------------------------
// Transformer layers (post-norm residual blocks)
// ---------------------------------------------------------------------------

struct EncoderLayer {
  MultiHeadAttention attn;
  LayerNorm ln_attn, ln_ff;
  FeedForward ff;

  void init(int d, int heads, double delta, Rng& rng) {
    attn.init(d, heads, delta, rng);
    ln_attn.init(d);
    ln_ff.init(d);
    ff.init(d, 4 * d, rng);
  }

  struct Cache {
    MultiHeadAttention::Cache attn;
    LayerNorm::Cache ln_attn, ln_ff;
    FeedForward::Cache ff;
    Mat mid;  // post first residual norm
  };

  Mat forward(const Mat& x, const Mat& mask, Cache* cache) const {
    Cache local;
    Cache* c = cache ? cache : &local;
    Mat a = attn.forward(x, x, mask, &c->attn);
    Mat mid = ln_attn.forward(x + a, &c->ln_attn);
    Mat f = ff.forward(mid, &c->ff);
    Mat out = ln_ff.forward(mid + f, &c->ln_ff);
    if (cache) cache->mid = std::move(mid);
    return out;
  }

  Mat backward(const Cache& cache, const Mat& dy) {
    Mat d_res2 = ln_ff.backward(cache.ln_ff, dy);
    Mat d_mid = d_res2 + ff.backward(cache.ff, d_res2);
    Mat d_res1 = ln_attn.backward(cache.ln_attn, d_mid);
    auto [dq, dkv] = attn.backward(cache.attn, d_res1);
    return d_res1 + dq + dkv;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    attn.collect(prefix + ".attn", out);
    ln_attn.collect(prefix + ".ln_attn", out);
    ff.collect(prefix + ".ff", out);
    ln_ff.collect(prefix + ".ln_ff", out);
  }
};

struct DecoderLayer {
  MultiHeadAttention self_attn, cross_attn;
  LayerNorm ln_self, ln_cross, ln_ff;
  FeedForward ff;

  void init(int d, int heads, double delta, Rng& rng) {
    self_attn.init(d, heads, delta, rng);
    cross_attn.init(d, heads, delta, rng);
    ln_self.init(d);
    ln_cross.init(d);
    ln_ff.init(d);
    ff.init(d, 4 * d, rng);
  }

  struct Cache {
    MultiHeadAttention::Cache self_attn, cross_attn;
    LayerNorm::Cache ln_self, ln_cross, ln_ff;
    FeedForward::Cache ff;
    Mat after_self, after_cross;
  };

  // `self_mask` is causal (optionally with padding columns removed);
  // `cross_mask` exposes real encoder positions only.
  Mat forward(const Mat& x, const Mat& enc, const Mat& self_mask,
              const Mat& cross_mask, Cache* cache) const {
    Cache local;
    Cache* c = cache ? cache : &local;
    Mat a = self_attn.forward(x, x, self_mask, &c->self_attn);
    Mat h1 = ln_self.forward(x + a, &c->ln_self);
    Mat cr = cross_attn.forward(h1, enc, cross_mask, &c->cross_attn);
    Mat h2 = ln_cross.forward(h1 + cr, &c->ln_cross);
    Mat f = ff.forward(h2, &c->ff);
    Mat out = ln_ff.forward(h2 + f, &c->ln_ff);
    if (cache) {
      cache->after_self = std::move(h1);
      cache->after_cross = std::move(h2);
    }
    return out;
  }

  // Returns dx; adds the encoder-side gradient into d_enc.
  Mat backward(const Cache& cache, const Mat& dy, Mat& d_enc) {
    Mat d_res3 = ln_ff.backward(cache.ln_ff, dy);
    Mat d_h2 = d_res3 + ff.backward(cache.ff, d_res3);
    Mat d_res2 = ln_cross.backward(cache.ln_cross, d_h2);
    auto [d_h1_cross, d_enc_part] = cross_attn.backward(cache.cross_attn, d_res2);
    Mat d_h1 = d_res2 + d_h1_cross;
    d_enc += d_enc_part;
    Mat d_res1 = ln_self.backward(cache.ln_self, d_h1);
    auto [dq, dkv] = self_attn.backward(cache.self_attn, d_res1);
    return d_res1 + dq + dkv;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    self_attn.collect(prefix + ".self_attn", out);
    cross_attn.collect(prefix + ".cross_attn", out);
    ln_self.collect(prefix + ".ln_self", out);
    ln_cross.collect(prefix + ".ln_cross", out);
    ff.collect(prefix + ".ff", out);
    ln_ff.collect(prefix + ".ln_ff", out);
  }
};

// All-ones attention mask.
inline Mat full_mask(Eigen::Index rows, Eigen::Index cols) {
  return Mat::Ones(rows, cols);
}

// Lower-triangular causal mask (row i sees columns <= i).
inline Mat causal_mask(Eigen::Index n) {
  Mat m = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) m(i, j) = 1.0;
  return m;
}

// ---------------------------------------------------------------------------
// Dropout (inverted scaling; identity at evaluation time)
// ---------------------------------------------------------------------------

struct Dropout {
  double p = 0.0;

  Mat forward(const Mat& x, bool training, Rng* rng, Mat* mask_out) const {
    if (!training || p <= 0.0) {
      if (mask_out) *mask_out = Mat::Ones(x.rows(), x.cols());
      return x;
    }
    if (!rng) throw ContractViolation("dropout in training mode needs an rng");
    Mat mask(x.rows(), x.cols());
    const double keep = 1.0 - p;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        mask(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
    if (mask_out) *mask_out = mask;
    return x.cwiseProduct(mask);
  }

  static Mat backward(const Mat& mask, const Mat& dy) {
    return dy.cwiseProduct(mask);
  }
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

// Decoupled weight decay Adam. Moments live here, keyed by parameter order,
// so the parameter list must be stable across steps.
struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::int64_t t = 0;
  std::vector<Mat> m, v;

  void reset(const std::vector<ParamRef>& params) {
    t = 0;
    m.clear();
    v.clear();
    for (const auto& ref : params) {
      m.push_back(Mat::Zero(ref.p->v.rows(), ref.p->v.cols()));
      v.push_back(Mat::Zero(ref.p->v.rows(), ref.p->v.cols()));
    }
  }

  void step(const std::vector<ParamRef>& params, double lr) {
    if (m.size() != params.size()) reset(params);
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param& p = *params[i].p;
      if (!p.trainable) continue;
      m[i] = beta1 * m[i] + (1.0 - beta1) * p.g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * p.g.cwiseProduct(p.g);
      Mat mhat = m[i] / bc1;
      Mat vhat = v[i] / bc2;
      Mat update = mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps).matrix());
      if (p.weight_decay && weight_decay > 0.0) update += weight_decay * p.v;
      p.v -= lr * update;
    }
  }
};

inline void zero_grads(const std::vector<ParamRef>& params) {
  for (const auto& ref : params) ref.p->zero_grad();
}

// Scales gradients so their global L2 norm is at most `max_norm`.
// Returns the pre-clip norm.
inline double clip_global_norm(const std::vector<ParamRef>& params,
                               double max_norm) {
  double sq = 0.0;
  for (const auto& ref : params)
    if (ref.p->trainable) sq += ref.p->g.squaredNorm();
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    double scale = max_norm / norm;
    for (const auto& ref : params)
      if (ref.p->trainable) ref.p->g *= scale;
  }
  return norm;
}

// Linear warmup to `base_lr`, then linear decay to zero at `total_steps`.
inline double warmup_linear_lr(double base_lr, std::int64_t step,
                               std::int64_t total_steps,
                               double warmup_fraction) {
  if (total_steps <= 0) return base_lr;
  auto warmup_steps =
      static_cast<std::int64_t>(warmup_fraction * static_cast<double>(total_steps));
  if (warmup_steps > 0 && step < warmup_steps)
    return base_lr * (static_cast<double>(step) + 1.0) /
           static_cast<double>(warmup_steps);
  if (total_steps == warmup_steps) return base_lr;
  double progress = static_cast<double>(step - warmup_steps) /
                    static_cast<double>(total_steps - warmup_steps);
  return base_lr * std::max(0.0, 1.0 - progress);
}

}  // namespace seqcsg
