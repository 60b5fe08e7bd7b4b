#include "planforge/floorplan.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <tuple>

#include "planforge/errors.hpp"

namespace planforge {

int quantize(double x) {
  if (!(x >= 0.0 && x <= 1.0))
    throw DomainError("quantize: value " + std::to_string(x) + " is outside [0, 1]");
  const int bin = static_cast<int>(std::floor(x * (kCoordBins - 1) + 0.5));
  return std::clamp(bin, 0, kCoordBins - 1);
}

double dequantize(int bin) { return static_cast<double>(bin) / (kCoordBins - 1); }

void validate(const Floorplan& fp, const Vocabulary& vocab) {
  std::vector<FieldError> errors;
  std::set<int> seen;
  for (std::size_t k = 0; k < fp.elements.size(); ++k) {
    const auto& e = fp.elements[k];
    const std::string field = "elements[" + std::to_string(k) + "]";
    if (e.category < 0 || e.category >= vocab.num_categories())
      errors.push_back({field + ".category", "category id out of range"});
    if (!e.box.in_range()) errors.push_back({field + ".box", "coordinate outside [0, 255]"});
    else if (!e.box.canonical()) errors.push_back({field + ".box", "box has xL > xR or yT > yB"});
    if (!seen.insert(e.roomIndex).second)
      errors.push_back({field + ".room_index", "duplicate room index " + std::to_string(e.roomIndex)});
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

bool is_codec_ordered(const Floorplan& fp, const Vocabulary& vocab) {
  // 0 = room, 1 = interior door, 2 = front door.
  auto group = [&](int category) {
    if (category == vocab.front_door()) return 2;
    if (category == vocab.interior_door()) return 1;
    return 0;
  };
  std::set<int> closed;
  for (std::size_t k = 0; k < fp.elements.size(); ++k) {
    const int c = fp.elements[k].category;
    if (k > 0) {
      const int prev = fp.elements[k - 1].category;
      if (group(c) < group(prev)) return false;
      if (c != prev) {
        closed.insert(prev);
        if (closed.count(c)) return false;
      }
    }
  }
  return true;
}

TokenSequence flatten(const Floorplan& fp, const Vocabulary& vocab) {
  validate(fp, vocab);
  if (!is_codec_ordered(fp, vocab))
    throw OrderingError("flatten: elements are not in hybrid order (category blocks, doors last)");

  TokenSequence seq;
  const std::size_t length = 4 * fp.size() + 2;
  seq.tokens.reserve(length);
  seq.categories.reserve(length);
  seq.tokens.push_back(vocab.bos());
  seq.categories.push_back(vocab.pad());
  for (const auto& e : fp.elements) {
    const int categoryToken = vocab.category(e.category).token();
    for (int v : {e.box.xL, e.box.yT, e.box.xR, e.box.yB}) {
      seq.tokens.push_back(v);
      seq.categories.push_back(categoryToken);
    }
  }
  seq.tokens.push_back(vocab.eos());
  seq.categories.push_back(vocab.pad());
  seq.positions.resize(length);
  for (std::size_t t = 0; t < length; ++t) seq.positions[t] = static_cast<int>(t);
  return seq;
}

UnflattenResult unflatten(const TokenSequence& seq, const Vocabulary& vocab,
                          const std::vector<int>& roomIndices) {
  const auto& tok = seq.tokens;
  if (tok.size() < 2 || tok.size() % 4 != 2)
    throw ParseError("unflatten: sequence length " + std::to_string(tok.size()) +
                         " is not of the form 4N+2",
                     static_cast<long>(tok.size()));
  if (seq.categories.size() != tok.size())
    throw ParseError("unflatten: category stream length differs from token stream", 0);
  if (tok.front() != vocab.bos()) throw ParseError("unflatten: missing BoS", 0);
  if (tok.back() != vocab.eos())
    throw ParseError("unflatten: missing EoS", static_cast<long>(tok.size() - 1));

  const std::size_t n = (tok.size() - 2) / 4;
  if (!roomIndices.empty() && roomIndices.size() != n)
    throw ParseError("unflatten: room index list has wrong length", -1);

  UnflattenResult out;
  out.plan.vocabVersion = vocab.version();
  out.plan.elements.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t base = 1 + 4 * k;
    for (std::size_t j = base; j < base + 4; ++j) {
      if (tok[j] < 0 || tok[j] >= kCoordBins)
        throw ParseError("unflatten: token " + std::to_string(tok[j]) + " is not a coordinate",
                         static_cast<long>(j));
      if (seq.categories[j] != seq.categories[base] || !vocab.is_category_token(seq.categories[j]))
        throw ParseError("unflatten: inconsistent category stream", static_cast<long>(j));
    }
    Element e;
    e.roomIndex = roomIndices.empty() ? static_cast<int>(k) : roomIndices[k];
    e.category = vocab.category_of_token(seq.categories[base]);
    e.box = {tok[base], tok[base + 1], tok[base + 2], tok[base + 3]};
    if (!e.box.canonical()) {
      if (e.box.xL > e.box.xR) std::swap(e.box.xL, e.box.xR);
      if (e.box.yT > e.box.yB) std::swap(e.box.yT, e.box.yB);
      out.repaired.push_back(static_cast<int>(k));
    }
    out.plan.elements.push_back(e);
  }
  return out;
}

std::vector<int> category_rank_order(const CategoryPositionStats& stats, const Vocabulary& vocab,
                                     const std::vector<int>& presentRooms) {
  std::vector<int> cats;
  for (int c : presentRooms) {
    if (vocab.is_door(c)) continue;
    if (!stats.mean.count(c))
      throw ConfigError("hybrid_sort: no position statistics for category '" +
                        vocab.category(c).name + "'");
    if (std::find(cats.begin(), cats.end(), c) == cats.end()) cats.push_back(c);
  }
  std::sort(cats.begin(), cats.end(), [&](int a, int b) {
    const auto& ma = stats.mean.at(a);
    const auto& mb = stats.mean.at(b);
    return std::make_tuple(ma.y(), ma.x(), a) < std::make_tuple(mb.y(), mb.x(), b);
  });
  return cats;
}

Floorplan hybrid_sort(const Floorplan& fp, const CategoryPositionStats& stats,
                      const Vocabulary& vocab) {
  std::vector<int> present;
  for (const auto& e : fp.elements) present.push_back(e.category);
  const auto order = category_rank_order(stats, vocab, present);

  auto rank = [&](int category) {
    if (category == vocab.interior_door()) return static_cast<int>(order.size());
    if (category == vocab.front_door()) return static_cast<int>(order.size()) + 1;
    return static_cast<int>(std::find(order.begin(), order.end(), category) - order.begin());
  };

  Floorplan out = fp;
  std::stable_sort(out.elements.begin(), out.elements.end(),
                   [&](const Element& a, const Element& b) {
                     return std::make_tuple(rank(a.category), a.box.yT, a.box.xL, a.roomIndex) <
                            std::make_tuple(rank(b.category), b.box.yT, b.box.xL, b.roomIndex);
                   });
  return out;
}

CategoryPositionStats compute_category_stats(const std::vector<Floorplan>& corpus) {
  if (corpus.empty()) throw ConfigError("compute_category_stats: empty corpus");
  // Centers are half-integers, so these sums are exact and order independent.
  std::map<int, Eigen::Vector2d> sum;
  CategoryPositionStats stats;
  for (const auto& fp : corpus) {
    for (const auto& e : fp.elements) {
      auto [it, inserted] = sum.try_emplace(e.category, Eigen::Vector2d::Zero());
      it->second += Eigen::Vector2d(e.box.center_x(), e.box.center_y());
      ++stats.count[e.category];
    }
  }
  for (const auto& [c, s] : sum) stats.mean[c] = s / static_cast<double>(stats.count[c]);
  return stats;
}

std::vector<Box> boxes_of(const Floorplan& fp) {
  std::vector<Box> out;
  out.reserve(fp.size());
  for (const auto& e : fp.elements) out.push_back(e.box);
  return out;
}

std::vector<int> room_indices_of(const Floorplan& fp) {
  std::vector<int> out;
  out.reserve(fp.size());
  for (const auto& e : fp.elements) out.push_back(e.roomIndex);
  return out;
}

}  // namespace planforge
