#pragma once

#include <map>
#include <vector>

#include <Eigen/Core>

#include "planforge/vocabulary.hpp"

namespace planforge {

/// Axis-aligned box in quantized coordinates, corners inclusive.
struct Box {
  int xL = 0, yT = 0, xR = 0, yB = 0;

  bool in_range() const {
    auto ok = [](int v) { return v >= 0 && v < kCoordBins; };
    return ok(xL) && ok(yT) && ok(xR) && ok(yB);
  }
  bool canonical() const { return xL <= xR && yT <= yB; }
  bool valid() const { return in_range() && canonical(); }
  double center_x() const { return 0.5 * (xL + xR); }
  double center_y() const { return 0.5 * (yT + yB); }
  int width() const { return xR - xL; }
  int height() const { return yB - yT; }
  long area() const { return static_cast<long>(width()) * height(); }

  bool operator==(const Box&) const = default;
};

struct Element {
  int roomIndex = 0;
  int category = 0;
  Box box;

  bool operator==(const Element&) const = default;
};

/// Ordered list of category-tagged boxes.
struct Floorplan {
  std::string vocabVersion;
  std::vector<Element> elements;

  std::size_t size() const { return elements.size(); }
  bool operator==(const Floorplan&) const = default;
};

/// Flattened model I/O: [BoS, xL1, yT1, xR1, yB1, ..., EoS] with a parallel
/// category stream (pad for BoS/EoS) and token positions.
struct TokenSequence {
  std::vector<int> tokens;
  std::vector<int> categories;
  std::vector<int> positions;

  std::size_t length() const { return tokens.size(); }
  std::size_t num_elements() const { return tokens.size() < 2 ? 0 : (tokens.size() - 2) / 4; }
  bool operator==(const TokenSequence&) const = default;
};

/// Per-category mean box center over a corpus, keyed by category id.
struct CategoryPositionStats {
  std::map<int, Eigen::Vector2d> mean;
  std::map<int, long> count;
};

/// Maps x in [0, 1] to round(x * 255) with halves rounded up.
int quantize(double x);
double dequantize(int bin);

/// Throws ValidationError if any box is out of range or inverted or if room
/// indexes repeat.
void validate(const Floorplan& fp, const Vocabulary& vocab);

/// Ordering contract checked by flatten(): every category forms one
/// contiguous block, rooms precede doors and interior doors precede the front
/// door. Geometry-dependent within-category order is not checked so that
/// generated plans can be re-encoded.
bool is_codec_ordered(const Floorplan& fp, const Vocabulary& vocab);

TokenSequence flatten(const Floorplan& fp, const Vocabulary& vocab);

struct UnflattenResult {
  Floorplan plan;
  /// Element positions whose box was inverted and repaired by swapping.
  std::vector<int> repaired;
};

/// Inverse of flatten(). Room indexes default to element order; pass
/// `roomIndices` to restore the original identities.
UnflattenResult unflatten(const TokenSequence& seq, const Vocabulary& vocab,
                          const std::vector<int>& roomIndices = {});

/// Category rank used by hybrid sorting: room categories in reading order of
/// their mean centers (y, then x, then id); doors are not ranked here.
std::vector<int> category_rank_order(const CategoryPositionStats& stats, const Vocabulary& vocab,
                                     const std::vector<int>& presentRooms);

/// Ranks room categories by mean position, doors last (interior, then front).
/// Within a category elements are ordered by (yT, xL, roomIndex).
Floorplan hybrid_sort(const Floorplan& fp, const CategoryPositionStats& stats,
                      const Vocabulary& vocab);

CategoryPositionStats compute_category_stats(const std::vector<Floorplan>& corpus);

/// Box of each element, in order.
std::vector<Box> boxes_of(const Floorplan& fp);
std::vector<int> room_indices_of(const Floorplan& fp);

}  // namespace planforge
