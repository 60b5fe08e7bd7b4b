#include <doctest.h>

#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "planforge/connectivity.hpp"
#include "planforge/errors.hpp"
#include "planforge/serialization.hpp"

using namespace planforge;

namespace {

const Vocabulary& vocab() { return Vocabulary::residential(); }

oracle::IntGrid to_grid(const BinaryMatrix& m) {
  oracle::IntGrid g(static_cast<std::size_t>(m.rows()), std::vector<int>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

BinaryMatrix random_rooms(int n, std::mt19937_64& rng, double density = 0.4) {
  std::bernoulli_distribution edge(density);
  BinaryMatrix a = BinaryMatrix::Identity(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) a(i, j) = a(j, i) = edge(rng);
  return a;
}

double max_diff(const DenseMatrix<double>& m, const oracle::RealGrid& g) {
  double d = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) d = std::max(d, std::abs(m(i, j) - g[i][j]));
  return d;
}

BubbleDiagram diagram(std::vector<std::pair<std::string, std::string>> nodes,
                      std::vector<std::pair<int, int>> edges) {
  BubbleDiagram bd;
  for (auto& [id, cat] : nodes) bd.nodes.push_back({id, *vocab().find(cat)});
  bd.edges = std::move(edges);
  return bd;
}

}  // namespace

TEST_CASE("parse: two rooms sharing a door") {
  auto bd = diagram({{"r1", "bedroom"}, {"r2", "kitchen"}, {"d", "interior_door"}}, {{0, 2}, {1, 2}});
  const auto p = parse_bubble_diagram(bd, vocab());
  // Without stats categories rank by id: kitchen(1), bedroom(2), door.
  CHECK(p.order == std::vector<int>{1, 0, 2});
  BinaryMatrix expected(3, 3);
  expected << 1, 1, 1, 1, 1, 1, 1, 1, 1;
  CHECK(p.rooms == expected);

  const auto single = parse_bubble_diagram(diagram({{"r", "bedroom"}}, {}), vocab());
  CHECK(single.rooms == BinaryMatrix::Ones(1, 1));

  const auto pair = parse_bubble_diagram(diagram({{"a", "bedroom"}, {"b", "bedroom"}}, {}), vocab());
  CHECK(pair.rooms == BinaryMatrix::Identity(2, 2));
}

TEST_CASE("parse orders by category statistics, doors last") {
  CategoryPositionStats stats;
  for (const auto& c : vocab().categories()) stats.mean[c.id] = {0.5, 0.5};
  stats.mean[*vocab().find("bedroom")] = {0.5, 0.1};
  auto bd = diagram({{"d", "front_door"}, {"k", "kitchen"}, {"i", "interior_door"}, {"b", "bedroom"}},
                    {{0, 1}, {2, 1}, {2, 3}});
  const auto p = parse_bubble_diagram(bd, vocab(), &stats);
  CHECK(p.order == std::vector<int>{3, 1, 2, 0});
  CHECK(p.categories.back() == vocab().front_door());
}

TEST_CASE("diagram validation") {
  auto orphan = diagram({{"r", "bedroom"}, {"door7", "interior_door"}}, {});
  try {
    validate(orphan, vocab());
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    REQUIRE(e.errors().size() == 1);
    CHECK(e.errors()[0].message.find("door7") != std::string::npos);
  }
  CHECK_THROWS_AS(validate(diagram({{"a", "bedroom"}, {"d", "interior_door"}}, {{0, 1}, {1, 0}}), vocab()),
                  ValidationError);
  CHECK_THROWS_AS(validate(diagram({{"a", "bedroom"}}, {{0, 0}}), vocab()), ValidationError);
  CHECK_THROWS_AS(validate(diagram({{"a", "bedroom"}, {"b", "kitchen"}}, {{0, 1}}), vocab()), ValidationError);
  CHECK_THROWS_AS(validate(BubbleDiagram{}, vocab()), ValidationError);

  const Json bad = Json::parse(R"({"nodes": [{"id": "a", "category": "garage"}], "edges": [["a", "zz"]]})");
  try {
    diagram_from_json(bad, vocab());
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.errors().size() == 2);
  }
}

TEST_CASE("diagram JSON round trip") {
  auto bd = diagram({{"r1", "bedroom"}, {"r2", "kitchen"}, {"d", "interior_door"}}, {{0, 2}, {1, 2}});
  const auto back = diagram_from_json(to_json(bd, vocab()), vocab());
  REQUIRE(back.nodes.size() == 3);
  CHECK(back.nodes[2].category == vocab().interior_door());
  CHECK(back.edges == bd.edges);
}

TEST_CASE("sequence connectivity examples") {
  const auto one = build_sequence_connectivity(BinaryMatrix::Ones(1, 1), 1);
  CHECK(one.rows() == 6);
  CHECK(one.block(1, 1, 4, 4) == BinaryMatrix::Ones(4, 4));
  CHECK(one.row(0).sum() == 0);
  CHECK(one.row(5).sum() == 0);
  CHECK(one.col(0).sum() == 0);

  const auto two = build_sequence_connectivity(BinaryMatrix::Identity(2, 2), 2);
  CHECK(two.block(1, 1, 4, 4) == BinaryMatrix::Ones(4, 4));
  CHECK(two.block(5, 5, 4, 4) == BinaryMatrix::Ones(4, 4));
  CHECK(two.block(1, 5, 4, 4).sum() == 0);
  CHECK_THROWS_AS(build_sequence_connectivity(BinaryMatrix::Ones(2, 2), 3), ShapeError);
}

TEST_CASE("normalize_adjacency examples") {
  BinaryMatrix s(2, 2);
  s << 0, 1, 1, 0;
  const auto a = normalize_adjacency<double>(s);
  CHECK(a.isApprox(DenseMatrix<double>::Constant(2, 2, 0.5)));
  CHECK(normalize_adjacency<double>(BinaryMatrix::Zero(5, 5)).isApprox(DenseMatrix<double>::Identity(5, 5)));
  CHECK_THROWS_AS(normalize_adjacency<double>(BinaryMatrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("expansion and normalization match the dense oracle on every graph up to 4 rooms") {
  for (int n = 1; n <= 4; ++n) {
    const int pairs = n * (n - 1) / 2;
    for (int mask = 0; mask < (1 << pairs); ++mask) {
      BinaryMatrix a = BinaryMatrix::Identity(n, n);
      int bit = 0;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++bit) a(i, j) = a(j, i) = (mask >> bit) & 1;
      const auto seq = build_sequence_connectivity(a, n);
      const auto expected = oracle::expand(to_grid(a));
      REQUIRE(to_grid(seq) == expected);
      const auto norm = normalize_adjacency<double>(seq);
      CHECK(max_diff(norm, oracle::normalize(expected)) < 1e-12);
      CHECK((norm - norm.transpose()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(norm.minCoeff() >= 0.0);
      CHECK(norm.maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("causal mask recomputes normalization on the leading block") {
  std::mt19937_64 rng(3);
  BinaryMatrix a(2, 2);
  a << 1, 0, 0, 1;
  const auto seq = build_sequence_connectivity(a, 2);
  CHECK(causal_mask_adjacency<double>(seq, seq.rows()).isApprox(normalize_adjacency<double>(seq)));
  CHECK(causal_mask_adjacency<double>(seq, 1) == DenseMatrix<double>::Ones(1, 1));
  CHECK(max_diff(causal_mask_adjacency<double>(seq, 9), oracle::normalize(oracle::leading(to_grid(seq), 9))) < 1e-12);
  CHECK_THROWS_AS(causal_mask_adjacency<double>(seq, 0), std::out_of_range);
  CHECK_THROWS_AS(causal_mask_adjacency<double>(seq, 11), std::out_of_range);

  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 6;
    const auto s = build_sequence_connectivity(random_rooms(n, rng), n);
    for (Eigen::Index t = 1; t <= s.rows(); ++t) {
      const auto m = causal_mask_adjacency<double>(s, t);
      // Entries beyond t never matter.
      BinaryMatrix scrambled = s;
      for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.rows(); ++j)
          if (i >= t || j >= t) scrambled(i, j) = 1 - scrambled(i, j);
      CHECK(causal_mask_adjacency<double>(scrambled, t) == m);
    }
  }
}

TEST_CASE("causal schedule row i equals the prefix normalization's row i") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + trial % 7;
    const auto s = build_sequence_connectivity(random_rooms(n, rng), n);
    const auto schedule = causal_schedule<double>(s);
    CHECK(schedule.isLowerTriangular());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const auto prefix = oracle::normalize(oracle::leading(to_grid(s), static_cast<std::size_t>(i + 1)));
      for (Eigen::Index j = 0; j <= i; ++j) CHECK(std::abs(schedule(i, j) - prefix[i][j]) < 1e-12);
    }
  }
}

TEST_CASE("room relabeling permutes A_S and its normalization") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + trial % 6;
    const BinaryMatrix a = random_rooms(n, rng);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    BinaryMatrix b(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) b(perm[i], perm[j]) = a(i, j);
    const auto sa = build_sequence_connectivity(a, n), sb = build_sequence_connectivity(b, n);
    const auto na = normalize_adjacency<double>(sa), nb = normalize_adjacency<double>(sb);
    auto token = [&](int k) { return k == 0 || k == 4 * n + 1 ? k : 1 + 4 * perm[(k - 1) / 4] + (k - 1) % 4; };
    for (int i = 0; i < 4 * n + 2; ++i)
      for (int j = 0; j < 4 * n + 2; ++j) {
        CHECK(sb(token(i), token(j)) == sa(i, j));
        CHECK(std::abs(nb(token(i), token(j)) - na(i, j)) < 1e-12);
      }
  }
}

TEST_CASE("normalized adjacency spectrum lies in [-1, 1]") {
  std::mt19937_64 rng(9);
  std::bernoulli_distribution edge(0.5);
  for (int trial = 0; trial < 100; ++trial) {
    const int size = 1 + trial % 20;
    BinaryMatrix s = BinaryMatrix::Zero(size, size);
    for (int i = 0; i < size; ++i)
      for (int j = i; j < size; ++j) s(i, j) = s(j, i) = edge(rng);
    Eigen::SelfAdjointEigenSolver<DenseMatrix<double>> eig(normalize_adjacency<double>(s));
    CHECK(eig.eigenvalues().minCoeff() >= -1 - 1e-12);
    CHECK(eig.eigenvalues().maxCoeff() <= 1 + 1e-12);
  }
}

TEST_CASE("graph context shapes") {
  auto bd = diagram({{"r1", "bedroom"}, {"r2", "kitchen"}, {"d", "interior_door"}}, {{0, 2}, {1, 2}});
  const auto ctx = make_graph_context(parse_bubble_diagram(bd, vocab()));
  CHECK(ctx.sequence.rows() == 14);
  CHECK(ctx.causal.rows() == 14);
  CHECK(ctx.interior.rows() == 12);
  CHECK(ctx.interior.isApprox(normalize_adjacency<double>(ctx.sequence).block(1, 1, 12, 12)));
}
