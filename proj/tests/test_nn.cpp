#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "planforge/connectivity.hpp"
#include "planforge/nn/adamw.hpp"
#include "planforge/nn/models.hpp"

using namespace planforge;
using namespace planforge::nn;

namespace {

using M = Matrix<double>;

M random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double s = 1.0) {
  M m(r, c);
  std::normal_distribution<double> g(0.0, s);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.ffnMultiplier = 2;
  c.maxElements = 4;
  return c;
}

struct Problem {
  SequenceInput input;
  M schedule;
  M interior;
  M weightsDraft;    // random projection making the loss a scalar
  M weightsRefine;
};

Problem make_problem(const ModelConfig& cfg, int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coord(0, 255), cat(0, cfg.numCategories - 1);
  std::bernoulli_distribution edge(0.5);
  TokenSequence s;
  s.tokens.push_back(kCoordBins + cfg.numCategories);
  s.categories.push_back(kCoordBins + cfg.numCategories + 2);
  for (int e = 0; e < n; ++e) {
    const int c = cat(rng);
    for (int k = 0; k < 4; ++k) {
      s.tokens.push_back(coord(rng));
      s.categories.push_back(kCoordBins + c);
    }
  }
  s.tokens.push_back(kCoordBins + cfg.numCategories + 1);
  s.categories.push_back(kCoordBins + cfg.numCategories + 2);
  for (std::size_t i = 0; i < s.tokens.size(); ++i) s.positions.push_back(static_cast<int>(i));

  BinaryMatrix a = BinaryMatrix::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) a(i, j) = a(j, i) = edge(rng);
  const auto seq = build_sequence_connectivity(a, n);
  Problem p;
  p.input = SequenceInput::from(s);
  p.schedule = causal_schedule<double>(seq);
  p.interior = normalize_adjacency<double>(seq).block(1, 1, 4 * n, 4 * n);
  p.weightsDraft = random_matrix(4 * n + 2, kCoordBins, rng);
  p.weightsRefine = random_matrix(4 * n, kCoordBins, rng);
  return p;
}

/// Scalar objective touching both networks and the shared embedding tables.
double objective(const PlanModel<double>& m, const Problem& p) {
  typename DraftModel<double>::Cache dc;
  typename RefinerModel<double>::Cache rc;
  const M d = m.draft.forward(p.input, p.schedule, dc);
  const std::vector<int> coords(p.input.tokens.begin() + 1, p.input.tokens.end() - 1);
  const M r = m.refiner.forward(coords, m.refiner_context(p.input), p.interior, m.refiner_transformer(), rc);
  return d.cwiseProduct(p.weightsDraft).sum() + r.cwiseProduct(p.weightsRefine).sum();
}

PlanModel<double> analytic_gradient(const PlanModel<double>& m, const Problem& p) {
  typename DraftModel<double>::Cache dc;
  typename RefinerModel<double>::Cache rc;
  m.draft.forward(p.input, p.schedule, dc);
  const std::vector<int> coords(p.input.tokens.begin() + 1, p.input.tokens.end() - 1);
  m.refiner.forward(coords, m.refiner_context(p.input), p.interior, m.refiner_transformer(), rc);
  auto g = PlanModel<double>::zeros_like(m);
  m.draft.backward(dc, p.weightsDraft, g.draft);
  const M dContext = m.refiner.backward(rc, p.weightsRefine, m.refiner_transformer(), g.refiner, g.refiner_transformer());
  m.backward_context(p.input, dContext, g);
  return g;
}

std::vector<std::pair<std::string, M*>> parameters(PlanModel<double>& m) {
  std::vector<std::pair<std::string, M*>> out;
  m.visit([&](const std::string& name, M& p, bool) { out.emplace_back(name, &p); });
  return out;
}

}  // namespace

TEST_CASE("gcn_forward examples") {
  std::mt19937_64 rng(1);
  const M x = random_matrix(5, 4, rng);
  CHECK(gcn_forward(x, M::Identity(5, 5), M::Identity(4, 4)).isApprox(x));
  M a(2, 2);
  a << 0.5, 0.5, 0.5, 0.5;
  M uv(2, 3);
  uv << 1, 2, 3, 5, 7, 11;
  const M out = gcn_forward(uv, a, M::Identity(3, 3));
  CHECK(out.row(0).isApprox((uv.row(0) + uv.row(1)) / 2));
  CHECK(out.row(1).isApprox((uv.row(0) + uv.row(1)) / 2));
  CHECK_THROWS_AS(gcn_forward(uv, M::Identity(3, 3), M::Identity(3, 3)), ShapeError);

  // Linearity in the features.
  const M y = random_matrix(5, 4, rng), w = random_matrix(4, 4, rng), adj = random_matrix(5, 5, rng);
  CHECK(gcn_forward((2.0 * x + 3.0 * y).eval(), adj, w).isApprox(2.0 * gcn_forward(x, adj, w) + 3.0 * gcn_forward(y, adj, w)));
}

TEST_CASE("graph conv weight gradient matches central differences") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    GraphConv<double> layer(6), grad(6);
    layer.weight = random_matrix(6, 6, rng);
    grad.weight.setZero();
    const M x = random_matrix(7, 6, rng), adj = random_matrix(7, 7, rng), r = random_matrix(7, 6, rng);
    typename GraphConv<double>::Cache c;
    layer.forward(x, adj, c);
    layer.backward(c, adj, r, grad);
    std::vector<double> flat(layer.weight.data(), layer.weight.data() + 36);
    auto f = [&](const std::vector<double>& v) {
      return gcn_forward(x, adj, Eigen::Map<const M>(v.data(), 6, 6)).cwiseProduct(r).sum();
    };
    for (std::size_t k = 0; k < 36; k += 5)
      CHECK(oracle::relative_error(grad.weight.data()[k], oracle::central_difference(f, flat, k, 1e-5)) < 1e-4);
  }
}

TEST_CASE("full model gradient matches central differences") {
  std::mt19937_64 rng(3);
  for (bool shared : {false, true}) {
    auto cfg = tiny_config();
    cfg.shareTransformer = shared;
    auto model = PlanModel<double>::initialized(cfg, 17);
    // Larger weights than the default init exercise the nonlinearities.
    model.visit([&](const std::string& name, M& p, bool) {
      if (name.find(".ln") == std::string::npos) p = random_matrix(p.rows(), p.cols(), rng, 0.3);
    });
    const Problem prob = make_problem(cfg, 3, rng);
    auto grad = analytic_gradient(model, prob);
    auto params = parameters(model);
    auto gparams = parameters(grad);
    REQUIRE(params.size() == gparams.size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int checked = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      M& p = *params[k].second;
      for (int probe = 0; probe < 3; ++probe) {
        const auto idx = static_cast<Eigen::Index>(u(rng) * static_cast<double>(p.size()));
        const double analytic = gparams[k].second->data()[idx];
        const double x0 = p.data()[idx];
        const double h = 1e-5;
        p.data()[idx] = x0 + h;
        const double up = objective(model, prob);
        p.data()[idx] = x0 - h;
        const double down = objective(model, prob);
        p.data()[idx] = x0;
        const double numeric = (up - down) / (2 * h);
        INFO(params[k].first << "[" << idx << "] analytic " << analytic << " numeric " << numeric);
        // Sums over hundreds of logits: absolute differencing noise is ~1e-9.
        CHECK(oracle::relative_error(analytic, numeric, 1e-5) < 1e-4);
        ++checked;
      }
    }
    CHECK(checked > 50);
  }
}

TEST_CASE("every parameter receives gradient") {
  std::mt19937_64 rng(4);
  auto cfg = tiny_config();
  cfg.maxElements = 3;  // every positional row is in use
  auto model = PlanModel<double>::initialized(cfg, 5);
  const Problem prob = make_problem(cfg, 3, rng);
  auto grad = analytic_gradient(model, prob);
  grad.visit([&](const std::string& name, M& g, bool) {
    INFO(name);
    CHECK(g.cwiseAbs().maxCoeff() > 0.0);
  });
}

TEST_CASE("draft is strictly causal and the refiner is not") {
  std::mt19937_64 rng(6);
  auto cfg = tiny_config();
  auto model = PlanModel<double>::initialized(cfg, 9);
  Problem prob = make_problem(cfg, 3, rng);
  typename DraftModel<double>::Cache c;
  const M base = model.draft.forward(prob.input, prob.schedule, c);
  for (std::size_t t = 0; t + 1 < prob.input.length(); ++t) {
    Problem changed = prob;
    changed.input.tokens[t + 1] = (changed.input.tokens[t + 1] + 101) % 256;
    const M out = model.draft.forward(changed.input, changed.schedule, c);
    CHECK(out.topRows(static_cast<Eigen::Index>(t + 1)) == base.topRows(static_cast<Eigen::Index>(t + 1)));
    CHECK(out.row(static_cast<Eigen::Index>(t + 1)) != base.row(static_cast<Eigen::Index>(t + 1)));
  }

  std::vector<int> coords(prob.input.tokens.begin() + 1, prob.input.tokens.end() - 1);
  typename RefinerModel<double>::Cache rc;
  const M context = model.refiner_context(prob.input);
  const M r0 = model.refiner.forward(coords, context, prob.interior, model.refiner_transformer(), rc);
  coords.back() = (coords.back() + 77) % 256;
  const M r1 = model.refiner.forward(coords, context, prob.interior, model.refiner_transformer(), rc);
  CHECK(r0.row(0) != r1.row(0));
  CHECK(r0.rows() == 12);
  CHECK(r0.cols() == 256);
  coords.push_back(1);
  CHECK_THROWS_AS(model.refiner.forward(coords, context, prob.interior, model.refiner_transformer(), rc), ShapeError);
}

TEST_CASE("embedding arithmetic") {
  auto cfg = tiny_config();
  PlanModel<double> zero(cfg);
  std::mt19937_64 rng(7);
  Problem prob = make_problem(cfg, 2, rng);
  // With zero tables the transformer input is zero.
  const M xg = zero.draft.tokens.forward(prob.input.tokens);
  CHECK(xg.isZero());

  auto model = PlanModel<double>::initialized(cfg, 3);
  SequenceInput twice{{5, 5}, {260, 260}, {0, 1}};
  const M tok = model.draft.tokens.forward(twice.tokens) + model.draft.tokens.forward(twice.categories);
  const M withPos = tok + model.draft.positions.forward(twice.positions);
  CHECK((withPos.row(1) - withPos.row(0)).isApprox(model.draft.positions.table.row(1) - model.draft.positions.table.row(0)));
  CHECK_THROWS_AS(model.draft.tokens.forward({cfg.vocab_size()}), ShapeError);
}

TEST_CASE("float and double forward agree") {
  std::mt19937_64 rng(8);
  auto cfg = tiny_config();
  auto md = PlanModel<double>::initialized(cfg, 21);
  auto mf = md.cast<float>();
  Problem prob = make_problem(cfg, 3, rng);
  typename DraftModel<double>::Cache cd;
  typename DraftModel<float>::Cache cf;
  const M ld = md.draft.forward(prob.input, prob.schedule, cd);
  const Matrix<float> lf = mf.draft.forward(prob.input, prob.schedule.cast<float>(), cf);
  CHECK((ld.cast<float>() - lf).cwiseAbs().maxCoeff() < 1e-4f);
  CHECK(md.fingerprint() != mf.fingerprint());
  CHECK(md.fingerprint() == md.cast<double>().fingerprint());
}

TEST_CASE("AdamW reduces a simple objective") {
  std::mt19937_64 rng(9);
  auto cfg = tiny_config();
  auto model = PlanModel<double>::initialized(cfg, 4);
  AdamWConfig oc;
  oc.learningRate = 1e-2;
  AdamW<double> opt(model, oc);
  Problem prob = make_problem(cfg, 2, rng);
  const double start = objective(model, prob);
  for (int s = 0; s < 30; ++s) {
    auto g = analytic_gradient(model, prob);
    opt.step(model, g);
  }
  CHECK(objective(model, prob) < start);
  CHECK(opt.steps() == 30);
}

TEST_CASE("incremental draft decoding reproduces the teacher-forced rows") {
  std::mt19937_64 rng(10);
  for (int gcnLayers : {1, 2}) {
    auto cfg = tiny_config();
    cfg.gcnLayers = gcnLayers;
    auto model = PlanModel<double>::initialized(cfg, 30 + gcnLayers);
    model.visit([&](const std::string& name, M& p, bool) {
      if (name.find(".ln") == std::string::npos) p = random_matrix(p.rows(), p.cols(), rng, 0.3);
    });
    const Problem prob = make_problem(cfg, 4, rng);
    typename DraftModel<double>::Cache c;
    const M full = model.draft.forward(prob.input, prob.schedule, c);
    typename DraftModel<double>::DecodeState state;
    for (std::size_t t = 0; t < prob.input.length(); ++t) {
      const M row = model.draft.step(state, prob.input.tokens[t], prob.input.categories[t],
                                     prob.input.positions[t], prob.schedule.row(static_cast<Eigen::Index>(t)));
      CHECK((row - full.row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}
