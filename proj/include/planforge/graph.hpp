#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "planforge/connectivity.hpp"
#include "planforge/floorplan.hpp"

namespace planforge {

/// Node-labeled simple undirected graph, at most 64 nodes. Labels are
/// category ids; `outside_label(vocab)` marks the virtual exterior node.
class LabeledGraph {
 public:
  static constexpr int kMaxNodes = 64;

  LabeledGraph() = default;
  explicit LabeledGraph(std::vector<int> labels);

  int size() const { return static_cast<int>(labels_.size()); }
  int label(int i) const { return labels_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& labels() const { return labels_; }
  int add_node(int label);

  void connect(int a, int b);
  bool adjacent(int a, int b) const { return (rows_[static_cast<std::size_t>(a)] >> b) & 1u; }
  std::uint64_t neighbours(int a) const { return rows_[static_cast<std::size_t>(a)]; }
  int degree(int a) const;
  int edge_count() const;

  bool operator==(const LabeledGraph&) const = default;

 private:
  std::vector<int> labels_;
  std::vector<std::uint64_t> rows_;
};

inline int outside_label(const Vocabulary& vocab) { return vocab.num_categories(); }

/// Graph view of a bubble diagram: the diagram nodes in order, then an
/// outside node when a front door exists. Every door joins its sides (rooms,
/// plus outside for front doors) pairwise and to itself.
LabeledGraph diagram_graph(const BubbleDiagram& bd, const Vocabulary& vocab);

struct ReconstructedGraph {
  LabeledGraph graph;
  /// Floorplan element index of each node; -1 for the outside node.
  std::vector<int> element;
};

/// Door d touches room r when their boxes, with d dilated by `epsilon`,
/// intersect. A front door within `epsilon` of the boundary of the rooms'
/// bounding hull also touches the outside node.
ReconstructedGraph reconstruct_graph(const Floorplan& fp, const Vocabulary& vocab, int epsilon = 2);

/// Bubble diagram implied by a floorplan's geometry (node ids "e<roomIndex>").
BubbleDiagram derive_diagram(const Floorplan& fp, const Vocabulary& vocab, int epsilon = 2);

struct EditDistance {
  int distance = 0;
  /// False when the search budget ran out; `distance` is then an upper bound.
  bool exact = true;
  long expansions = 0;
};

/// Graph edit distance with unit node and edge insertion/deletion costs and
/// free substitution between equal labels. Depth-first branch and bound
/// seeded with a greedy matching.
EditDistance graph_edit_distance(const LabeledGraph& a, const LabeledGraph& b, long maxExpansions = 2'000'000);

/// Isomorphism-invariant digest: label multiset, refined colour classes and
/// the minimal adjacency string over colour-respecting orderings. Falls back
/// to the refined colour digest when the orderings exceed `maxOrderings`, which
/// can merge non-isomorphic graphs but never separates isomorphic ones.
std::string canonical_hash(const LabeledGraph& g, long maxOrderings = 200'000);

}  // namespace planforge
