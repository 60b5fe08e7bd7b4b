#include <doctest.h>

#include <numeric>
#include <random>
#include <set>

#include "planforge/data.hpp"
#include "planforge/errors.hpp"
#include "planforge/inference.hpp"
#include "test_support.hpp"

using namespace planforge;

namespace {

const Vocabulary& vocab() { return Vocabulary::residential(); }

nn::ModelConfig small_config() {
  nn::ModelConfig c;
  c.dim = 16;
  c.layers = 2;
  c.heads = 2;
  c.ffnMultiplier = 2;
  return c;
}

/// Random weights with a larger spread than the training init so that the
/// sampled coordinates vary.
ModelBundle random_bundle(std::uint64_t seed) {
  ModelBundle b;
  b.model = nn::PlanModel<float>::initialized(small_config(), seed);
  std::mt19937_64 rng(seed);
  b.model.visit([&](const std::string& name, nn::Matrix<float>& p, bool) {
    if (name.find(".ln") == std::string::npos) nn::init_normal(p, rng, 0.5);
  });
  std::vector<Floorplan> plans;
  for (const auto& s : synth_corpus(30, {}, 1, vocab())) plans.push_back(s.plan);
  b.stats = compute_category_stats(plans);
  return b;
}

std::vector<BubbleDiagram> diagrams(int n, std::uint64_t seed) {
  std::vector<BubbleDiagram> out;
  for (const auto& s : synth_corpus(n, {}, seed, vocab())) out.push_back(s.diagram);
  return out;
}

std::multiset<int> categories(const Floorplan& fp) {
  std::multiset<int> out;
  for (const auto& e : fp.elements) out.insert(e.category);
  return out;
}

std::multiset<int> categories(const BubbleDiagram& bd) {
  std::multiset<int> out;
  for (const auto& n : bd.nodes) out.insert(n.category);
  return out;
}

Eigen::RowVectorXf random_logits(std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 2.0f);
  Eigen::RowVectorXf v(kCoordBins);
  for (int j = 0; j < kCoordBins; ++j) v(j) = g(rng);
  return v;
}

}  // namespace

TEST_CASE("top-k distribution") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto logits = random_logits(rng);
    const auto full = top_k_distribution(logits, 256);
    const Eigen::ArrayXd soft = (logits.cast<double>().array() - logits.maxCoeff()).exp();
    for (int j = 0; j < kCoordBins; ++j) CHECK(full[static_cast<std::size_t>(j)] == doctest::Approx(soft(j) / soft.sum()).epsilon(1e-9));
    for (int k : {1, 3, 5, 40}) {
      const auto p = top_k_distribution(logits, k);
      CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-6);
      CHECK(std::count_if(p.begin(), p.end(), [](double x) { return x > 0; }) == k);
      // Every kept bin outranks every dropped bin.
      double minKept = 1, maxDropped = 0;
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j] > 0) minKept = std::min(minKept, full[j]);
        else maxDropped = std::max(maxDropped, full[j]);
      }
      CHECK(minKept >= maxDropped);
    }
    Eigen::Index best;
    logits.maxCoeff(&best);
    CHECK(top_k_distribution(logits, 1)[static_cast<std::size_t>(best)] == 1.0);
  }
  const Eigen::RowVectorXf flat = Eigen::RowVectorXf::Zero(kCoordBins);
  const auto one = top_k_distribution(flat, 1);
  CHECK(one[0] == 1.0);
  const auto two = top_k_distribution(flat, 2);
  CHECK(two[0] == 0.5);
  CHECK(two[1] == 0.5);
  CHECK_THROWS_AS(top_k_distribution(flat, 0), ConfigError);
  CHECK_THROWS_AS(top_k_distribution(flat, 257), ConfigError);
  Eigen::RowVectorXf bad = flat;
  bad(17) = std::numeric_limits<float>::quiet_NaN();
  try {
    top_k_distribution(bad, 5);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.position() == 17);
  }
}

TEST_CASE("sample_index follows the distribution") {
  std::mt19937_64 rng(2);
  std::vector<double> p(4, 0.0);
  p[1] = 0.25;
  p[3] = 0.75;
  int counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < 20000; ++i) ++counts[sample_index(p, rng)];
  CHECK(counts[0] == 0);
  CHECK(counts[2] == 0);
  CHECK(counts[1] / 20000.0 == doctest::Approx(0.25).epsilon(0.05));
  CHECK_THROWS_AS(sample_index(std::vector<double>(3, 0.0), rng), NumericError);
}

TEST_CASE("decode_greedy") {
  LogitMatrix<float> logits = LogitMatrix<float>::Zero(3, kCoordBins);
  logits(0, 42) = 10;
  logits(2, 7) = 1;
  logits(2, 9) = 1;
  CHECK(decode_greedy(logits) == std::vector<int>{42, 0, 7});
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    LogitMatrix<float> r(4, kCoordBins);
    for (int i = 0; i < 4; ++i) r.row(i) = random_logits(rng);
    LogitMatrix<float> shifted = r.array() + 3.0f;
    CHECK(decode_greedy(r) == decode_greedy(shifted));
  }
  logits(1, 100) = std::numeric_limits<float>::infinity() - std::numeric_limits<float>::infinity();
  try {
    decode_greedy(logits);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.position() == 1);
  }
}

TEST_CASE("step_decode agrees with the incremental sampler's distributions") {
  const auto b = random_bundle(4);
  const auto d = prepare_diagram(diagrams(1, 5)[0], vocab(), b.stats, b.model.config.maxElements);
  nn::SequenceInput prefix = d.skeleton.prefix(1);
  CHECK_THROWS_AS(step_decode(b.model, d.skeleton.prefix(0), d.graph.causal, vocab()), ShapeError);
  nn::SequenceInput noBos = prefix;
  noBos.tokens[0] = 3;
  CHECK_THROWS_AS(step_decode(b.model, noBos, d.graph.causal, vocab()), ShapeError);

  std::mt19937_64 rng(6);
  const auto coords = sample_draft(b.model, d, 5, rng);
  for (std::size_t t = 0; t < coords.size(); ++t) {
    nn::SequenceInput p = d.skeleton.prefix(t + 1);
    std::copy(coords.begin(), coords.begin() + static_cast<long>(t), p.tokens.begin() + 1);
    const auto dist = step_decode(b.model, p, d.graph.causal, vocab(), 5);
    // The sampled bin is inside the top-5 support of the full-forward distribution.
    CHECK(dist[static_cast<std::size_t>(coords[t])] > 0.0);
  }
}

TEST_CASE("prepare_diagram and plan conversion") {
  const auto b = random_bundle(7);
  const auto bd = diagrams(1, 8)[0];
  const auto d = prepare_diagram(bd, vocab(), b.stats, 32);
  const int n = d.num_elements();
  CHECK(n == static_cast<int>(bd.nodes.size()));
  CHECK(d.skeleton.length() == static_cast<std::size_t>(4 * n + 2));
  CHECK(d.causal.rows() == 4 * n + 2);
  CHECK(d.interior.rows() == 4 * n);
  for (int k = 0; k < n; ++k) CHECK(d.element_of(bd.nodes[static_cast<std::size_t>(d.graph.parsed.order[static_cast<std::size_t>(k)])].id) == k);
  CHECK(d.element_of("missing") == -1);
  std::vector<int> coords(static_cast<std::size_t>(4 * n));
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<int>(i % 200);
  const auto fp = plan_from_coords(d, coords, vocab());
  CHECK(coords_from_plan(fp) == coords);
  CHECK(categories(fp) == categories(bd));
  CHECK_THROWS_AS(prepare_diagram(bd, vocab(), b.stats, n - 1), ValidationError);
}

TEST_CASE("refine_loop") {
  const auto b = random_bundle(9);
  const auto bd = diagrams(1, 10)[0];
  const auto d = prepare_diagram(bd, vocab(), b.stats, 32);
  std::mt19937_64 rng(11);
  const auto draft = sample_draft(b.model, d, 5, rng);
  CHECK_THROWS_AS(refine_loop(b.model, d, draft, 0, vocab()), ConfigError);
  const auto one = refine_loop(b.model, d, draft, 1, vocab());
  REQUIRE(one.steps.size() == 2);
  CHECK(one.steps[0].coords == draft);
  const auto five = refine_loop(b.model, d, draft, 5, vocab());
  REQUIRE(five.steps.size() == 6);
  CHECK(five.steps[1].coords == one.steps[1].coords);
  CHECK(refine_loop(b.model, d, draft, 5, vocab()).final().coords == five.final().coords);
  for (const auto& s : five.steps) {
    CHECK(s.plan.size() == bd.nodes.size());
    CHECK(categories(s.plan) == categories(bd));
  }

  SUBCASE("reference losses are finite") {
    std::vector<Box> truth;
    for (int k = 0; k < d.num_elements(); ++k) truth.push_back({k, k, k + 20, k + 30});
    const auto t = refine_loop(b.model, d, draft, 3, vocab(), {}, &truth);
    CHECK_FALSE(t.steps[0].crossEntropy.has_value());
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      CHECK(std::isfinite(*t.steps[i].geometric));
      if (i > 0) CHECK(std::isfinite(*t.steps[i].crossEntropy));
    }
  }
  SUBCASE("a fixed point repeats") {
    // A head that ignores its input reaches a fixed point after one round.
    auto m = b.model;
    m.refiner.head.weight.setZero();
    m.refiner.head.bias.setZero();
    m.refiner.head.bias(0, 77) = 5;
    const auto t = refine_loop(m, d, draft, 4, vocab());
    for (std::size_t i = 2; i < t.steps.size(); ++i) CHECK(t.steps[i].coords == t.steps[1].coords);
    CHECK(t.steps[1].coords == std::vector<int>(draft.size(), 77));
  }
}

TEST_CASE("generate is deterministic and seeds candidates as seed + i") {
  const auto b = random_bundle(12);
  GenerationRequest req;
  req.diagram = diagrams(1, 13)[0];
  req.numCandidates = 3;
  req.seed = 40;
  const auto r1 = generate(req, b);
  const auto r2 = generate(req, b);
  CHECK(to_json(r1, vocab()) == to_json(r2, vocab()));
  REQUIRE(r1.candidates.size() == 3);
  for (int i = 0; i < 3; ++i) {
    GenerationRequest single = req;
    single.numCandidates = 1;
    single.seed = req.seed + static_cast<std::uint64_t>(i);
    const auto s = generate(single, b);
    CHECK(s.candidates[0].plan == r1.candidates[static_cast<std::size_t>(i)].plan);
    CHECK(r1.candidates[static_cast<std::size_t>(i)].seed == single.seed);
  }
  for (const auto& c : r1.candidates) {
    CHECK(categories(c.plan) == categories(req.diagram));
    CHECK_NOTHROW(validate(c.plan, vocab()));
    CHECK(c.trace.steps.size() == 6);
    CHECK(c.compatibility.distance >= 0);
  }
  CHECK(r1.modelHash == b.model_hash());

  GenerationRequest drafts = req;
  drafts.refineIters = 0;
  const auto rd = generate(drafts, b);
  for (std::size_t i = 0; i < 3; ++i) CHECK(rd.candidates[i].plan == r1.candidates[i].trace.steps[0].plan);
}

TEST_CASE("generate validates before any model work") {
  const auto b = random_bundle(14);
  GenerationRequest req;
  req.diagram = diagrams(1, 15)[0];
  auto bad = req;
  bad.topK = 0;
  CHECK_THROWS_AS(generate(bad, b), ValidationError);
  bad = req;
  bad.locks["nope"] = {0, 0, 10, 10};
  CHECK_THROWS_AS(generate(bad, b), ValidationError);
  bad = req;
  bad.locks[req.diagram.nodes[0].id] = {20, 0, 10, 10};
  CHECK_THROWS_AS(generate(bad, b), ValidationError);
  bad = req;
  bad.diagram.edges.push_back(bad.diagram.edges.front());
  CHECK_THROWS_AS(generate(bad, b), ValidationError);
  auto mismatched = b;
  mismatched.model.config.numCategories = 5;
  CHECK_THROWS_AS(generate(req, mismatched), ConfigError);
}

TEST_CASE("locked rooms are bit-equal in every step") {
  const auto b = random_bundle(16);
  std::mt19937_64 rng(17);
  const auto bds = diagrams(10, 18);
  for (int trial = 0; trial < 20; ++trial) {
    GenerationRequest req;
    req.diagram = bds[static_cast<std::size_t>(trial % 10)];
    req.seed = static_cast<std::uint64_t>(trial);
    req.numCandidates = 2;
    req.refineIters = 3;
    std::bernoulli_distribution pick(0.3);
    for (const auto& node : req.diagram.nodes)
      if (pick(rng)) req.locks[node.id] = testing::random_box(rng);
    const auto res = generate(req, b);
    for (const auto& c : res.candidates)
      for (const auto& step : c.trace.steps)
        for (const auto& e : step.plan.elements) {
          const auto& id = req.diagram.nodes[static_cast<std::size_t>(e.roomIndex)].id;
          if (req.locks.count(id)) CHECK(e.box == req.locks.at(id));
        }
  }
  SUBCASE("all rooms locked") {
    GenerationRequest req;
    req.diagram = bds[0];
    for (const auto& node : req.diagram.nodes) req.locks[node.id] = testing::random_box(rng);
    const auto res = generate(req, b);
    for (const auto& e : res.candidates[0].plan.elements)
      CHECK(e.box == req.locks.at(req.diagram.nodes[static_cast<std::size_t>(e.roomIndex)].id));
  }
  SUBCASE("empty locks equal plain generation") {
    GenerationRequest req;
    req.diagram = bds[1];
    req.seed = 3;
    const auto plain = generate(req, b);
    req.locks.clear();
    CHECK(to_json(generate(req, b), vocab()) == to_json(plain, vocab()));
  }
}

TEST_CASE("edit_and_refine") {
  const auto b = random_bundle(19);
  GenerationRequest req;
  req.diagram = diagrams(1, 20)[0];
  req.seed = 5;
  const auto fp = generate(req, b).candidates[0].plan;
  const auto same = edit_and_refine(fp, {}, req.diagram, 0, b);
  REQUIRE(same.steps.size() == 1);
  CHECK(same.final().plan == fp);

  const std::string id = req.diagram.nodes[0].id;
  const Box edited{30, 40, 90, 120};
  const auto t = edit_and_refine(fp, {{id, edited}}, req.diagram, 4, b);
  CHECK(t.steps.size() == 5);
  for (const auto& s : t.steps) {
    CHECK(categories(s.plan) == categories(fp));
    for (const auto& e : s.plan.elements)
      if (e.roomIndex == 0) CHECK(e.box == edited);
  }
  CHECK_THROWS_AS(edit_and_refine(fp, {{id, Box{50, 0, 10, 10}}}, req.diagram, 2, b), ValidationError);
  CHECK_THROWS_AS(edit_and_refine(fp, {{"ghost", edited}}, req.diagram, 2, b), ValidationError);
  Floorplan shorter = fp;
  shorter.elements.pop_back();
  CHECK_THROWS_AS(edit_and_refine(shorter, {}, req.diagram, 1, b), ValidationError);
}

TEST_CASE("generation request JSON") {
  const auto bd = diagrams(1, 21)[0];
  const Json body = {{"numCandidates", 4}, {"seed", 11}, {"topK", 3}, {"locks", {{bd.nodes[0].id, {1, 2, 30, 40}}}}};
  const auto req = generation_request_from_json(body, bd);
  CHECK(req.numCandidates == 4);
  CHECK(req.seed == 11);
  CHECK(req.topK == 3);
  CHECK(req.refineIters == kDefaultRefineIters);
  CHECK(req.locks.at(bd.nodes[0].id) == Box{1, 2, 30, 40});
  CHECK(generation_request_from_json(to_json(req, vocab()), bd).locks == req.locks);
  CHECK_THROWS_AS(generation_request_from_json({{"topK", "five"}}, bd), ValidationError);
  CHECK_THROWS_AS(generation_request_from_json({{"locks", {{"a", {1, 2}}}}}, bd), ValidationError);
  CHECK_THROWS_AS(generation_request_from_json({{"seed", -1}}, bd), ValidationError);
}
