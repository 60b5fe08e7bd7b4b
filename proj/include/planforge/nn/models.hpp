#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "planforge/floorplan.hpp"
#include "planforge/nn/graph_conv.hpp"
#include "planforge/nn/layers.hpp"

namespace planforge::nn {

struct ModelConfig {
  int dim = 128;
  int layers = 6;
  int heads = 8;
  int ffnMultiplier = 4;
  int gcnLayers = 1;
  int maxElements = 32;
  int numCategories = 11;
  /// Refiner reuses the draft transformer weights (ablation).
  bool shareTransformer = false;

  int vocab_size() const { return kCoordBins + numCategories + 3; }
  int max_length() const { return 4 * maxElements + 2; }
  bool operator==(const ModelConfig&) const = default;
};

/// Token-level inputs to the draft network.
struct SequenceInput {
  std::vector<int> tokens;
  std::vector<int> categories;
  std::vector<int> positions;

  static SequenceInput from(const TokenSequence& s) { return {s.tokens, s.categories, s.positions}; }
  std::size_t length() const { return tokens.size(); }
  SequenceInput prefix(std::size_t t) const {
    return {{tokens.begin(), tokens.begin() + t},
            {categories.begin(), categories.begin() + t},
            {positions.begin(), positions.begin() + t}};
  }
};

/// Stage one: shared token table (geometry and category), positional table,
/// graph convolution over the geometric stream, causal transformer and a
/// 256-way coordinate head. Row t of the logits predicts token t + 1.
template <typename Scalar>
struct DraftModel {
  Embedding<Scalar> tokens;
  Embedding<Scalar> positions;
  std::vector<GraphConv<Scalar>> gcn;
  Transformer<Scalar> transformer;
  Linear<Scalar> head;

  struct Cache {
    SequenceInput input;
    Matrix<Scalar> adjacency;
    std::vector<typename GraphConv<Scalar>::Cache> gcn;
    typename Transformer<Scalar>::Cache transformer;
    Matrix<Scalar> hidden;
  };

  DraftModel() = default;
  explicit DraftModel(const ModelConfig& c)
      : tokens(c.vocab_size(), c.dim),
        positions(c.max_length(), c.dim),
        gcn(static_cast<std::size_t>(c.gcnLayers), GraphConv<Scalar>(c.dim)),
        transformer(c.dim, c.layers, c.heads, c.ffnMultiplier * c.dim),
        head(c.dim, kCoordBins) {}

  /// `adjacency` is the causal propagation schedule for the sequence.
  Matrix<Scalar> forward(const SequenceInput& in, const Matrix<Scalar>& adjacency, Cache& c) const {
    const std::size_t t = in.length();
    if (in.categories.size() != t || in.positions.size() != t)
      throw ShapeError("draft forward: token, category and position streams differ in length");
    if (t == 0) throw ShapeError("draft forward: empty sequence");
    c.input = in;
    c.adjacency = adjacency;
    c.gcn.resize(gcn.size());
    Matrix<Scalar> geometric = tokens.forward(in.tokens);
    for (std::size_t l = 0; l < gcn.size(); ++l) geometric = gcn[l].forward(geometric, adjacency, c.gcn[l]);
    Matrix<Scalar> x = geometric + tokens.forward(in.categories) + positions.forward(in.positions);
    c.hidden = transformer.forward(x, /*causal=*/true, c.transformer);
    return head.forward(c.hidden);
  }

  void backward(const Cache& c, const Matrix<Scalar>& dLogits, DraftModel& g) const {
    Matrix<Scalar> dx = transformer.backward(c.transformer, head.backward(c.hidden, dLogits, g.head), g.transformer);
    tokens.backward(c.input.categories, dx, g.tokens);
    positions.backward(c.input.positions, dx, g.positions);
    for (std::size_t l = gcn.size(); l-- > 0;) dx = gcn[l].backward(c.gcn[l], c.adjacency, dx, g.gcn[l]);
    tokens.backward(c.input.tokens, dx, g.tokens);
  }

  /// Running state of an incremental decode: attention keys and values, and
  /// the input rows of every graph convolution layer.
  struct DecodeState {
    typename Transformer<Scalar>::KeyValues attention;
    std::vector<Matrix<Scalar>> gcnInputs;
    Eigen::Index length = 0;
  };

  /// Feeds token `length` and returns its logits row. `scheduleRow` is the
  /// matching row of the causal propagation schedule; only its first
  /// length + 1 entries are read. Equals row `length` of forward().
  template <typename Row>
  Matrix<Scalar> step(DecodeState& s, int token, int category, int position, const Row& scheduleRow) const {
    const Eigen::Index t = s.length;
    if (scheduleRow.size() <= t) throw ShapeError("draft step: schedule row shorter than the prefix");
    s.gcnInputs.resize(gcn.size());
    Matrix<Scalar> geometric = tokens.forward({token});
    for (std::size_t l = 0; l < gcn.size(); ++l) {
      Matrix<Scalar>& rows = s.gcnInputs[l];
      if (rows.rows() <= t) rows.conservativeResize(std::max<Eigen::Index>(16, 2 * rows.rows()), geometric.cols());
      rows.row(t) = geometric;
      Matrix<Scalar> mixed = Matrix<Scalar>::Zero(1, geometric.cols());
      for (Eigen::Index j = 0; j <= t; ++j) {
        const auto w = static_cast<Scalar>(scheduleRow(j));
        if (w != Scalar(0)) mixed += w * rows.row(j);
      }
      geometric.noalias() = mixed * gcn[l].weight;
    }
    ++s.length;
    const Matrix<Scalar> x = geometric + tokens.forward({category}) + positions.forward({position});
    return head.forward(transformer.step(x, s.attention));
  }

  template <class Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    tokens.visit(prefix + ".tokens", fn);
    positions.visit(prefix + ".positions", fn);
    for (std::size_t l = 0; l < gcn.size(); ++l) gcn[l].visit(prefix + ".gcn" + std::to_string(l), fn);
    transformer.visit(prefix + ".transformer", fn);
    head.visit(prefix + ".head", fn);
  }
};

/// Stage two: own coordinate embedding and graph convolution, bidirectional
/// transformer, 256-way head predicting every coordinate in place. Category
/// and positional embeddings are supplied by the caller from the draft tables.
template <typename Scalar>
struct RefinerModel {
  Embedding<Scalar> coords;
  std::vector<GraphConv<Scalar>> gcn;
  Transformer<Scalar> transformer;
  Linear<Scalar> head;

  struct Cache {
    std::vector<int> coords;
    Matrix<Scalar> adjacency;
    std::vector<typename GraphConv<Scalar>::Cache> gcn;
    typename Transformer<Scalar>::Cache transformer;
    Matrix<Scalar> hidden;
  };

  RefinerModel() = default;
  RefinerModel(const ModelConfig& c, bool ownTransformer)
      : coords(kCoordBins, c.dim),
        gcn(static_cast<std::size_t>(c.gcnLayers), GraphConv<Scalar>(c.dim)),
        head(c.dim, kCoordBins) {
    if (ownTransformer) transformer = Transformer<Scalar>(c.dim, c.layers, c.heads, c.ffnMultiplier * c.dim);
  }

  /// `context` is X_c + X_p for the element tokens; `adjacency` the full
  /// normalized A_S over element tokens; `tf` the transformer to run.
  Matrix<Scalar> forward(const std::vector<int>& in, const Matrix<Scalar>& context,
                         const Matrix<Scalar>& adjacency, const Transformer<Scalar>& tf, Cache& c) const {
    if (in.size() % 4 != 0)
      throw ShapeError("refiner: sequence length " + std::to_string(in.size()) + " is not divisible by 4");
    if (static_cast<std::size_t>(context.rows()) != in.size())
      throw ShapeError("refiner: context rows do not match sequence length");
    c.coords = in;
    c.adjacency = adjacency;
    c.gcn.resize(gcn.size());
    Matrix<Scalar> geometric = coords.forward(in);
    for (std::size_t l = 0; l < gcn.size(); ++l) geometric = gcn[l].forward(geometric, adjacency, c.gcn[l]);
    c.hidden = tf.forward(geometric + context, /*causal=*/false, c.transformer);
    return head.forward(c.hidden);
  }

  /// Returns d loss / d context.
  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& dLogits, const Transformer<Scalar>& tf,
                          RefinerModel& g, Transformer<Scalar>& gTf) const {
    const Matrix<Scalar> dx = tf.backward(c.transformer, head.backward(c.hidden, dLogits, g.head), gTf);
    Matrix<Scalar> dg = dx;
    for (std::size_t l = gcn.size(); l-- > 0;) dg = gcn[l].backward(c.gcn[l], c.adjacency, dg, g.gcn[l]);
    coords.backward(c.coords, dg, g.coords);
    return dx;
  }

  template <class Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    coords.visit(prefix + ".coords", fn);
    for (std::size_t l = 0; l < gcn.size(); ++l) gcn[l].visit(prefix + ".gcn" + std::to_string(l), fn);
    if (!transformer.blocks.empty()) transformer.visit(prefix + ".transformer", fn);
    head.visit(prefix + ".head", fn);
  }
};

/// Draft and refinement networks with their shared embedding tables.
template <typename Scalar>
struct PlanModel {
  ModelConfig config;
  DraftModel<Scalar> draft;
  RefinerModel<Scalar> refiner;

  PlanModel() = default;
  explicit PlanModel(const ModelConfig& c)
      : config(c), draft(c), refiner(c, !c.shareTransformer) {}

  /// Parameters drawn from N(0, 0.02), biases zero, layer norms identity.
  static PlanModel initialized(const ModelConfig& c, std::uint64_t seed) {
    PlanModel m(c);
    std::mt19937_64 rng(seed);
    m.visit([&](const std::string& name, Matrix<Scalar>& p, bool) {
      const bool isBias = name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
      const bool isNorm = name.find(".ln") != std::string::npos;
      if (!isBias && !isNorm) init_normal(p, rng, 0.02);
    });
    return m;
  }

  /// Same shapes, all zeros: a gradient accumulator.
  static PlanModel zeros_like(const PlanModel& other) {
    PlanModel g(other.config);
    g.visit([](const std::string&, Matrix<Scalar>& p, bool) { p.setZero(); });
    return g;
  }

  const Transformer<Scalar>& refiner_transformer() const {
    return config.shareTransformer ? draft.transformer : refiner.transformer;
  }
  Transformer<Scalar>& refiner_transformer() {
    return config.shareTransformer ? draft.transformer : refiner.transformer;
  }

  /// X_c + X_p for the element tokens (positions 1..4N) of a draft sequence.
  Matrix<Scalar> refiner_context(const SequenceInput& in) const {
    const std::size_t n = in.length() - 2;
    const std::vector<int> cats(in.categories.begin() + 1, in.categories.begin() + 1 + n);
    const std::vector<int> pos(in.positions.begin() + 1, in.positions.begin() + 1 + n);
    return draft.tokens.forward(cats) + draft.positions.forward(pos);
  }

  /// Routes d loss / d context back into the draft embedding tables.
  void backward_context(const SequenceInput& in, const Matrix<Scalar>& dContext, PlanModel& g) const {
    const std::size_t n = in.length() - 2;
    const std::vector<int> cats(in.categories.begin() + 1, in.categories.begin() + 1 + n);
    const std::vector<int> pos(in.positions.begin() + 1, in.positions.begin() + 1 + n);
    draft.tokens.backward(cats, dContext, g.draft.tokens);
    draft.positions.backward(pos, dContext, g.draft.positions);
  }

  template <class Fn>
  void visit(Fn&& fn) {
    draft.visit("draft", fn);
    refiner.visit("refiner", fn);
  }

  template <typename Other>
  PlanModel<Other> cast() const {
    PlanModel<Other> out(config);
    std::vector<const Matrix<Scalar>*> src;
    const_cast<PlanModel*>(this)->visit([&](const std::string&, Matrix<Scalar>& p, bool) { src.push_back(&p); });
    std::size_t k = 0;
    out.visit([&](const std::string&, Matrix<Other>& p, bool) { p = src[k++]->template cast<Other>(); });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    const_cast<PlanModel*>(this)->visit([&](const std::string&, Matrix<Scalar>& p, bool) { n += static_cast<std::size_t>(p.size()); });
    return n;
  }

  /// FNV-1a digest over configuration and parameter bytes.
  std::string fingerprint() const;
};

template <typename Scalar>
std::string PlanModel<Scalar>::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  const int cfg[] = {config.dim, config.layers, config.heads, config.ffnMultiplier, config.gcnLayers,
                     config.maxElements, config.numCategories, config.shareTransformer ? 1 : 0};
  mix(cfg, sizeof cfg);
  const_cast<PlanModel*>(this)->visit([&](const std::string& name, Matrix<Scalar>& p, bool) {
    mix(name.data(), name.size());
    mix(p.data(), sizeof(Scalar) * static_cast<std::size_t>(p.size()));
  });
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
  return out;
}

}  // namespace planforge::nn
