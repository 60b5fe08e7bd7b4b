#include <doctest.h>

#include <cmath>
#include <random>

#include "planforge/errors.hpp"
#include "planforge/floorplan.hpp"
#include "planforge/serialization.hpp"
#include "test_support.hpp"

using namespace planforge;

namespace {

// Nearest bin center by exhaustive scan; exact ties go to the upper bin.
int nearest_bin_scan(double x) {
  int best = 0;
  double bestDist = 1e300;
  for (int k = 0; k < 256; ++k) {
    const double dist = std::abs(x * 255.0 - k);
    if (dist <= bestDist) {
      best = k;
      bestDist = dist;
    }
  }
  return best;
}

const Vocabulary& vocab() { return Vocabulary::residential(); }

}  // namespace

TEST_CASE("vocabulary layout") {
  const auto& v = vocab();
  CHECK(v.num_categories() == 11);
  CHECK(v.interior_door() == 9);
  CHECK(v.front_door() == 10);
  CHECK(v.category(v.interior_door()).name == "interior_door");
  CHECK(v.category(v.front_door()).name == "front_door");
  for (const auto& c : v.categories()) CHECK(c.token() == 256 + c.id);
  CHECK(v.bos() == 256 + 11);
  CHECK(v.eos() == 256 + 12);
  CHECK(v.pad() == 256 + 13);
  auto names = v.names();
  names.resize(names.size() - 2);
  CHECK(v.hash() == Vocabulary(names, v.version()).hash());
  CHECK(v.hash() != Vocabulary(names, "other").hash());
  CHECK_THROWS_AS(Vocabulary({"a", "interior_door"}, "x"), ConfigError);
}

TEST_CASE("quantize bounds and midpoint") {
  CHECK(quantize(0.0) == 0);
  CHECK(quantize(1.0) == 255);
  CHECK(quantize(0.5) == 128);
  CHECK(nearest_bin_scan(0.5) == 128);
  CHECK_THROWS_AS(quantize(-0.01), DomainError);
  CHECK_THROWS_AS(quantize(1.5), DomainError);
  CHECK_THROWS_AS(quantize(std::nan("")), DomainError);
  try {
    quantize(1.5);
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("1.5") != std::string::npos);
  }
}

TEST_CASE("quantize matches nearest-bin scan, is monotone and inverse-stable") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> xs;
  for (int k = 0; k < 256; ++k) xs.push_back(k / 255.0);
  for (int k = 0; k < 255; ++k) xs.push_back((k + 0.5) / 255.0);
  for (int i = 0; i < 5000; ++i) xs.push_back(u(rng));
  std::sort(xs.begin(), xs.end());
  int prev = -1;
  for (double x : xs) {
    const int q = quantize(x);
    CHECK(q == nearest_bin_scan(x));
    CHECK(q >= prev);
    CHECK(std::abs(dequantize(q) - x) <= 1.0 / 255.0);
    prev = q;
  }
}

TEST_CASE("flatten examples") {
  Floorplan empty{vocab().version(), {}};
  const auto s0 = flatten(empty, vocab());
  CHECK(s0.tokens == std::vector<int>{vocab().bos(), vocab().eos()});
  CHECK(s0.categories == std::vector<int>{vocab().pad(), vocab().pad()});

  Floorplan one{vocab().version(), {{0, 0, {3, 4, 5, 6}}}};
  const auto s1 = flatten(one, vocab());
  CHECK(s1.tokens == std::vector<int>{vocab().bos(), 3, 4, 5, 6, vocab().eos()});
  CHECK(s1.categories == std::vector<int>{vocab().pad(), 256, 256, 256, 256, vocab().pad()});
  CHECK(s1.positions == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("flatten rejects unordered and invalid plans") {
  const int door = vocab().interior_door();
  Floorplan doorFirst{vocab().version(), {{0, door, {1, 1, 2, 2}}, {1, 0, {0, 0, 9, 9}}}};
  CHECK_THROWS_AS(flatten(doorFirst, vocab()), OrderingError);
  Floorplan split{vocab().version(), {{0, 1, {1, 1, 2, 2}}, {1, 2, {0, 0, 9, 9}}, {2, 1, {0, 0, 3, 3}}}};
  CHECK_THROWS_AS(flatten(split, vocab()), OrderingError);
  Floorplan inverted{vocab().version(), {{0, 1, {5, 1, 2, 2}}}};
  CHECK_THROWS_AS(flatten(inverted, vocab()), ValidationError);
  Floorplan dup{vocab().version(), {{0, 1, {1, 1, 2, 2}}, {0, 2, {1, 1, 2, 2}}}};
  CHECK_THROWS_AS(flatten(dup, vocab()), ValidationError);
}

TEST_CASE("unflatten examples and errors") {
  const int b = vocab().bos(), e = vocab().eos(), p = vocab().pad();
  TokenSequence s{{b, 3, 4, 5, 6, e}, {p, 256, 256, 256, 256, p}, {0, 1, 2, 3, 4, 5}};
  auto r = unflatten(s, vocab());
  REQUIRE(r.plan.size() == 1);
  CHECK(r.plan.elements[0].box == Box{3, 4, 5, 6});
  CHECK(r.plan.elements[0].category == 0);
  CHECK(r.repaired.empty());

  TokenSequence empty{{b, e}, {p, p}, {0, 1}};
  CHECK(unflatten(empty, vocab()).plan.size() == 0);

  TokenSequence swapped{{b, 5, 4, 3, 6, e}, {p, 256, 256, 256, 256, p}, {0, 1, 2, 3, 4, 5}};
  auto rs = unflatten(swapped, vocab());
  CHECK(rs.plan.elements[0].box == Box{3, 4, 5, 6});
  CHECK(rs.repaired == std::vector<int>{0});

  TokenSequence badLength{{b, 1, 2, e}, {p, 256, 256, p}, {0, 1, 2, 3}};
  CHECK_THROWS_AS(unflatten(badLength, vocab()), ParseError);
  TokenSequence noBos{{1, 3, 4, 5, 6, e}, {p, 256, 256, 256, 256, p}, {0, 1, 2, 3, 4, 5}};
  try {
    unflatten(noBos, vocab());
    FAIL("expected ParseError");
  } catch (const ParseError& err) {
    CHECK(err.position() == 0);
  }
  TokenSequence noEos{{b, 3, 4, 5, 6, b}, {p, 256, 256, 256, 256, p}, {0, 1, 2, 3, 4, 5}};
  CHECK_THROWS_AS(unflatten(noEos, vocab()), ParseError);
}

TEST_CASE("flatten/unflatten round trip on random plans") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> count(0, 20);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto stats = testing::random_stats(vocab(), rng);
    const auto fp = hybrid_sort(testing::random_floorplan(vocab(), rng, count(rng)), stats, vocab());
    const auto seq = flatten(fp, vocab());
    REQUIRE(seq.length() == 4 * fp.size() + 2);
    const auto back = unflatten(seq, vocab(), room_indices_of(fp));
    CHECK(back.repaired.empty());
    CHECK(back.plan == fp);
  }
}

TEST_CASE("hybrid_sort examples") {
  CategoryPositionStats stats;
  stats.mean[0] = {0.8, 0.9};  // A listed first but lower on the page
  stats.mean[1] = {0.2, 0.1};
  Floorplan fp{vocab().version(), {{0, 0, {0, 0, 1, 1}}, {1, 1, {0, 0, 1, 1}}}};
  auto sorted = hybrid_sort(fp, stats, vocab());
  CHECK(sorted.elements[0].category == 1);
  CHECK(sorted.elements[1].category == 0);

  Floorplan single{vocab().version(), {{3, 2, {4, 4, 9, 9}}}};
  stats.mean[2] = {1, 1};
  CHECK(hybrid_sort(single, stats, vocab()) == single);

  Floorplan missing{vocab().version(), {{0, 5, {0, 0, 1, 1}}}};
  CHECK_THROWS_AS(hybrid_sort(missing, stats, vocab()), ConfigError);
}

TEST_CASE("hybrid_sort is an idempotent permutation with doors last") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(1, 24);
  for (int trial = 0; trial < 500; ++trial) {
    const auto stats = testing::random_stats(vocab(), rng);
    const auto fp = testing::random_floorplan(vocab(), rng, count(rng));
    const auto once = hybrid_sort(fp, stats, vocab());
    CHECK(hybrid_sort(once, stats, vocab()) == once);
    auto key = [](const Element& e) { return std::make_tuple(e.roomIndex, e.category, e.box.xL, e.box.yT, e.box.xR, e.box.yB); };
    auto a = fp.elements, b = once.elements;
    std::sort(a.begin(), a.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
    std::sort(b.begin(), b.end(), [&](auto& x, auto& y) { return key(x) < key(y); });
    CHECK(a == b);
    bool seenDoor = false, seenFront = false;
    for (const auto& e : once.elements) {
      const bool door = vocab().is_door(e.category);
      if (seenDoor) CHECK(door);
      if (seenFront) CHECK(e.category == vocab().front_door());
      seenDoor |= door;
      seenFront |= e.category == vocab().front_door();
    }
    CHECK(is_codec_ordered(once, vocab()));
  }
}

TEST_CASE("within-category order uses yT, xL, room index") {
  CategoryPositionStats stats;
  stats.mean[2] = {0, 0};
  Floorplan fp{vocab().version(), {{0, 2, {50, 10, 60, 20}}, {1, 2, {10, 10, 20, 20}}, {2, 2, {0, 5, 9, 9}}, {3, 2, {10, 10, 30, 30}}}};
  const auto s = hybrid_sort(fp, stats, vocab());
  CHECK(room_indices_of(s) == std::vector<int>{2, 1, 3, 0});
}

TEST_CASE("compute_category_stats") {
  Floorplan one{vocab().version(), {{0, 0, {0, 0, 10, 10}}}};
  auto s = compute_category_stats({one});
  CHECK(s.mean.at(0).x() == 5.0);
  CHECK(s.mean.at(0).y() == 5.0);

  Floorplan two{vocab().version(), {{0, 0, {3, 3, 5, 5}}, {1, 0, {5, 5, 7, 7}}}};
  s = compute_category_stats({two});
  CHECK(s.mean.at(0) == Eigen::Vector2d(5, 5));
  CHECK_THROWS_AS(compute_category_stats({}), ConfigError);

  std::mt19937_64 rng(5);
  std::vector<Floorplan> corpus;
  for (int i = 0; i < 60; ++i) corpus.push_back(testing::random_floorplan(vocab(), rng, 9));
  const auto ref = compute_category_stats(corpus);
  for (int p = 0; p < 10; ++p) {
    std::shuffle(corpus.begin(), corpus.end(), rng);
    const auto perm = compute_category_stats(corpus);
    CHECK(perm.mean == ref.mean);
  }
}

TEST_CASE("floorplan and stats JSON") {
  Floorplan fp{vocab().version(), {{2, 0, {1, 2, 3, 4}}, {0, vocab().front_door(), {9, 9, 9, 12}}}};
  const auto j = to_json(fp, vocab());
  CHECK(j["elements"][0]["category"] == "living_room");
  CHECK(j["elements"][1]["box"] == Json::array({9, 9, 9, 12}));
  CHECK(floorplan_from_json(j, vocab()) == fp);

  Json bad = j;
  bad["elements"][0]["box"] = {5, 2, 3, 4};
  bad["elements"][1]["category"] = "garage";
  try {
    floorplan_from_json(bad, vocab());
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.errors().size() == 2);
  }

  CategoryPositionStats stats;
  stats.mean[0] = {5, 2.25};
  stats.mean[2] = {1.0 / 3.0, 100};
  const std::string text = stats_to_json(stats, vocab());
  CHECK(text == R"({"living_room": [5.000000, 2.250000], "bedroom": [0.333333, 100.000000]})");
  const auto back = stats_from_json(Json::parse(text), vocab());
  CHECK(back.mean.at(0) == stats.mean.at(0));
  CHECK(to_json(flatten(Floorplan{vocab().version(), {{0, 0, {1, 2, 3, 4}}}}, vocab())) ==
        Json::array({vocab().bos(), 1, 2, 3, 4, vocab().eos()}));
}
