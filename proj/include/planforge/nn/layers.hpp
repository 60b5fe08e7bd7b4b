#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "planforge/errors.hpp"

namespace planforge::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Every layer exposes `visit(prefix, fn)` calling fn(name, matrix, decay)
/// for each parameter in a fixed order. A zero-initialized copy of a layer
/// doubles as its gradient accumulator.
template <typename Scalar>
void init_normal(Matrix<Scalar>& m, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
struct Linear {
  Matrix<Scalar> weight;  // in x out
  Matrix<Scalar> bias;    // 1 x out

  Linear() = default;
  Linear(int in, int out) : weight(Matrix<Scalar>::Zero(in, out)), bias(Matrix<Scalar>::Zero(1, out)) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    Matrix<Scalar> y(x.rows(), weight.cols());
    y.noalias() = x * weight;
    y.rowwise() += bias.row(0);
    return y;
  }

  /// Accumulates parameter gradients into `grad`, returns d loss / d x.
  Matrix<Scalar> backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy, Linear& grad) const {
    grad.weight.noalias() += x.transpose() * dy;
    grad.bias += dy.colwise().sum();
    Matrix<Scalar> dx(dy.rows(), weight.rows());
    dx.noalias() = dy * weight.transpose();
    return dx;
  }

  template <class Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight, true);
    fn(prefix + ".bias", bias, false);
  }
};

template <typename Scalar>
struct LayerNorm {
  static constexpr double kEps = 1e-5;
  Matrix<Scalar> gamma;  // 1 x d
  Matrix<Scalar> beta;   // 1 x d

  struct Cache {
    Matrix<Scalar> normalized;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rstd;
  };

  LayerNorm() = default;
  explicit LayerNorm(int d) : gamma(Matrix<Scalar>::Ones(1, d)), beta(Matrix<Scalar>::Zero(1, d)) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    const auto d = static_cast<Scalar>(x.cols());
    cache.normalized.resize(x.rows(), x.cols());
    cache.rstd.resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Scalar mean = x.row(r).sum() / d;
      const Scalar var = (x.row(r).array() - mean).square().sum() / d;
      cache.rstd(r) = Scalar(1) / std::sqrt(var + Scalar(kEps));
      cache.normalized.row(r) = (x.row(r).array() - mean) * cache.rstd(r);
    }
    Matrix<Scalar> y = cache.normalized.array().rowwise() * gamma.row(0).array();
    y.rowwise() += beta.row(0);
    return y;
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy, LayerNorm& grad) const {
    grad.gamma += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
    grad.beta += dy.colwise().sum();
    const Matrix<Scalar> dn = dy.array().rowwise() * gamma.row(0).array();
    const auto d = static_cast<Scalar>(dy.cols());
    Matrix<Scalar> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const Scalar meanDn = dn.row(r).sum() / d;
      const Scalar meanDnN = dn.row(r).dot(cache.normalized.row(r)) / d;
      dx.row(r) = cache.rstd(r) *
                  (dn.row(r).array() - meanDn - cache.normalized.row(r).array() * meanDnN);
    }
    return dx;
  }

  template <class Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".gamma", gamma, false);
    fn(prefix + ".beta", beta, false);
  }
};

/// tanh approximation of GELU.
template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x) {
  const Scalar c = Scalar(0.7978845608028654);
  return (Scalar(0.5) * x.array() *
          (Scalar(1) + (c * (x.array() + Scalar(0.044715) * x.array().cube())).tanh()))
      .matrix();
}

template <typename Scalar>
Matrix<Scalar> gelu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
  const Scalar c = Scalar(0.7978845608028654);
  const auto u = c * (x.array() + Scalar(0.044715) * x.array().cube());
  const auto th = u.tanh();
  const auto du = c * (Scalar(1) + Scalar(3 * 0.044715) * x.array().square());
  return (dy.array() * (Scalar(0.5) * (Scalar(1) + th) +
                        Scalar(0.5) * x.array() * (Scalar(1) - th.square()) * du))
      .matrix();
}

/// Multi-head self-attention; `causal` hides keys after the query position.
template <typename Scalar>
struct SelfAttention {
  Linear<Scalar> qkv;   // d -> 3d
  Linear<Scalar> proj;  // d -> d
  int heads = 1;

  struct Cache {
    Matrix<Scalar> x, packed, context;
    std::vector<Matrix<Scalar>> probs;
  };

  SelfAttention() = default;
  SelfAttention(int d, int h) : qkv(d, 3 * d), proj(d, d), heads(h) {
    if (d % h != 0) throw ConfigError("model dimension must be divisible by head count");
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, bool causal, Cache& c) const {
    const Eigen::Index t = x.rows(), d = x.cols(), dh = d / heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    c.x = x;
    c.packed = qkv.forward(x);
    c.context.resize(t, d);
    c.probs.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto q = c.packed.middleCols(h * dh, dh);
      const auto k = c.packed.middleCols(d + h * dh, dh);
      const auto v = c.packed.middleCols(2 * d + h * dh, dh);
      Matrix<Scalar>& p = c.probs[static_cast<std::size_t>(h)];
      p.resize(t, t);
      p.noalias() = q * k.transpose();
      p *= scale;
      for (Eigen::Index i = 0; i < t; ++i) {
        const Eigen::Index visible = causal ? i + 1 : t;
        auto row = p.row(i).head(visible);
        const Scalar peak = row.maxCoeff();
        row = (row.array() - peak).exp().matrix();
        row /= row.sum();
        if (visible < t) p.row(i).tail(t - visible).setZero();
      }
      c.context.middleCols(h * dh, dh).noalias() = p * v;
    }
    return proj.forward(c.context);
  }

  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& dy, SelfAttention& g) const {
    const Eigen::Index t = c.x.rows(), d = c.x.cols(), dh = d / heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    const Matrix<Scalar> dContext = proj.backward(c.context, dy, g.proj);
    Matrix<Scalar> dPacked(t, 3 * d);
    Matrix<Scalar> dp(t, t);
    for (int h = 0; h < heads; ++h) {
      const auto q = c.packed.middleCols(h * dh, dh);
      const auto k = c.packed.middleCols(d + h * dh, dh);
      const auto v = c.packed.middleCols(2 * d + h * dh, dh);
      const Matrix<Scalar>& p = c.probs[static_cast<std::size_t>(h)];
      const auto dOut = dContext.middleCols(h * dh, dh);
      dPacked.middleCols(2 * d + h * dh, dh).noalias() = p.transpose() * dOut;
      dp.noalias() = dOut * v.transpose();
      // softmax backward: ds = p * (dp - rowsum(dp * p))
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = (dp.array() * p.array()).rowwise().sum();
      dp = (p.array() * (dp.array().colwise() - dots.array())).matrix();
      dp *= scale;
      dPacked.middleCols(h * dh, dh).noalias() = dp * k;
      dPacked.middleCols(d + h * dh, dh).noalias() = dp.transpose() * q;
    }
    return qkv.backward(c.x, dPacked, g.qkv);
  }

  /// Keys and values of the positions decoded so far.
  struct KeyValues {
    Matrix<Scalar> keys, values;
    Eigen::Index size = 0;
  };

  /// Causal attention of one new row over the cached positions plus itself.
  Matrix<Scalar> step(const Matrix<Scalar>& x, KeyValues& kv) const {
    const Eigen::Index d = x.cols(), dh = d / heads;
    const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    const Matrix<Scalar> packed = qkv.forward(x);
    if (kv.keys.rows() <= kv.size) {
      const Eigen::Index capacity = std::max<Eigen::Index>(16, 2 * kv.keys.rows());
      kv.keys.conservativeResize(capacity, d);
      kv.values.conservativeResize(capacity, d);
    }
    kv.keys.row(kv.size) = packed.middleCols(d, d);
    kv.values.row(kv.size) = packed.middleCols(2 * d, d);
    const Eigen::Index t = ++kv.size;
    Matrix<Scalar> context(1, d);
    for (int h = 0; h < heads; ++h) {
      const auto k = kv.keys.topRows(t).middleCols(h * dh, dh);
      const auto v = kv.values.topRows(t).middleCols(h * dh, dh);
      Matrix<Scalar> p(1, t);
      p.noalias() = packed.middleCols(h * dh, dh) * k.transpose();
      p *= scale;
      const Scalar peak = p.maxCoeff();
      p = (p.array() - peak).exp().matrix();
      p /= p.sum();
      context.middleCols(h * dh, dh).noalias() = p * v;
    }
    return proj.forward(context);
  }

  template <class Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    qkv.visit(prefix + ".qkv", fn);
    proj.visit(prefix + ".proj", fn);
  }
};

/// Pre-norm transformer block: x + attn(ln(x)), then h + mlp(ln(h)).
template <typename Scalar>
struct TransformerBlock {
  LayerNorm<Scalar> ln1, ln2;
  SelfAttention<Scalar> attn;
  Linear<Scalar> fc1, fc2;

  struct Cache {
    typename LayerNorm<Scalar>::Cache ln1, ln2;
    typename SelfAttention<Scalar>::Cache attn;
    Matrix<Scalar> normed1, normed2, hidden, activated;
  };

  TransformerBlock() = default;
  TransformerBlock(int d, int heads, int ffn)
      : ln1(d), ln2(d), attn(d, heads), fc1(d, ffn), fc2(ffn, d) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& x, bool causal, Cache& c) const {
    c.normed1 = ln1.forward(x, c.ln1);
    Matrix<Scalar> h = x + attn.forward(c.normed1, causal, c.attn);
    c.normed2 = ln2.forward(h, c.ln2);
    c.hidden = fc1.forward(c.normed2);
    c.activated = gelu(c.hidden);
    h += fc2.forward(c.activated);
    return h;
  }

  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& dy, TransformerBlock& g) const {
    Matrix<Scalar> dAct = fc2.backward(c.activated, dy, g.fc2);
    Matrix<Scalar> dHidden = gelu_backward(c.hidden, dAct);
    Matrix<Scalar> dNormed2 = fc1.backward(c.normed2, dHidden, g.fc1);
    Matrix<Scalar> dh = dy + ln2.backward(c.ln2, dNormed2, g.ln2);
    Matrix<Scalar> dNormed1 = attn.backward(c.attn, dh, g.attn);
    return dh + ln1.backward(c.ln1, dNormed1, g.ln1);
  }

  /// Incremental causal forward of one row.
  Matrix<Scalar> step(const Matrix<Scalar>& x, typename SelfAttention<Scalar>::KeyValues& kv) const {
    typename LayerNorm<Scalar>::Cache scratch;
    Matrix<Scalar> h = x + attn.step(ln1.forward(x, scratch), kv);
    h += fc2.forward(gelu(fc1.forward(ln2.forward(h, scratch))));
    return h;
  }

  template <class Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    ln1.visit(prefix + ".ln1", fn);
    attn.visit(prefix + ".attn", fn);
    ln2.visit(prefix + ".ln2", fn);
    fc1.visit(prefix + ".fc1", fn);
    fc2.visit(prefix + ".fc2", fn);
  }
};

/// Stack of blocks followed by a final layer norm.
template <typename Scalar>
struct Transformer {
  std::vector<TransformerBlock<Scalar>> blocks;
  LayerNorm<Scalar> lnFinal;

  struct Cache {
    std::vector<typename TransformerBlock<Scalar>::Cache> blocks;
    typename LayerNorm<Scalar>::Cache lnFinal;
  };

  Transformer() = default;
  Transformer(int d, int layers, int heads, int ffn) : lnFinal(d) {
    for (int l = 0; l < layers; ++l) blocks.emplace_back(d, heads, ffn);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, bool causal, Cache& c) const {
    c.blocks.resize(blocks.size());
    Matrix<Scalar> h = x;
    for (std::size_t l = 0; l < blocks.size(); ++l) h = blocks[l].forward(h, causal, c.blocks[l]);
    return lnFinal.forward(h, c.lnFinal);
  }

  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& dy, Transformer& g) const {
    Matrix<Scalar> dh = lnFinal.backward(c.lnFinal, dy, g.lnFinal);
    for (std::size_t l = blocks.size(); l-- > 0;) dh = blocks[l].backward(c.blocks[l], dh, g.blocks[l]);
    return dh;
  }

  using KeyValues = std::vector<typename SelfAttention<Scalar>::KeyValues>;

  /// Causal forward of the next row given the cached earlier rows; equals
  /// the matching row of forward(x, true).
  Matrix<Scalar> step(const Matrix<Scalar>& x, KeyValues& kv) const {
    kv.resize(blocks.size());
    Matrix<Scalar> h = x;
    for (std::size_t l = 0; l < blocks.size(); ++l) h = blocks[l].step(h, kv[l]);
    typename LayerNorm<Scalar>::Cache scratch;
    return lnFinal.forward(h, scratch);
  }

  template <class Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].visit(prefix + ".block" + std::to_string(l), fn);
    lnFinal.visit(prefix + ".ln_final", fn);
  }
};

/// Row lookup table.
template <typename Scalar>
struct Embedding {
  Matrix<Scalar> table;  // rows x d

  Embedding() = default;
  Embedding(int rows, int d) : table(Matrix<Scalar>::Zero(rows, d)) {}

  Matrix<Scalar> forward(const std::vector<int>& ids) const {
    Matrix<Scalar> out(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= table.rows())
        throw ShapeError("embedding id " + std::to_string(ids[i]) + " outside table of " +
                         std::to_string(table.rows()) + " rows");
      out.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
    }
    return out;
  }

  void backward(const std::vector<int>& ids, const Matrix<Scalar>& dy, Embedding& g) const {
    for (std::size_t i = 0; i < ids.size(); ++i) g.table.row(ids[i]) += dy.row(static_cast<Eigen::Index>(i));
  }

  template <class Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".table", table, false);
  }
};

}  // namespace planforge::nn
