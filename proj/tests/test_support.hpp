#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "planforge/floorplan.hpp"

namespace planforge::testing {

/// Stats giving every category of `vocab` a distinct random mean center.
inline CategoryPositionStats random_stats(const Vocabulary& vocab, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 255.0);
  CategoryPositionStats s;
  for (const auto& c : vocab.categories()) s.mean[c.id] = Eigen::Vector2d(u(rng), u(rng));
  return s;
}

inline Box random_box(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coord(0, 255);
  int a = coord(rng), b = coord(rng), c = coord(rng), d = coord(rng);
  return {std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
}

/// Random valid floorplan with `n` elements in arbitrary order.
inline Floorplan random_floorplan(const Vocabulary& vocab, std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> cat(0, vocab.num_categories() - 1);
  Floorplan fp;
  fp.vocabVersion = vocab.version();
  for (int k = 0; k < n; ++k) fp.elements.push_back({k, cat(rng), random_box(rng)});
  std::shuffle(fp.elements.begin(), fp.elements.end(), rng);
  return fp;
}

}  // namespace planforge::testing
