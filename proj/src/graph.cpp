#include "planforge/graph.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <map>
#include <numeric>

#include "planforge/errors.hpp"

namespace planforge {

LabeledGraph::LabeledGraph(std::vector<int> labels) : labels_(std::move(labels)), rows_(labels_.size(), 0) {
  if (labels_.size() > static_cast<std::size_t>(kMaxNodes))
    throw ShapeError("LabeledGraph: more than 64 nodes");
}

int LabeledGraph::add_node(int label) {
  if (size() >= kMaxNodes) throw ShapeError("LabeledGraph: more than 64 nodes");
  labels_.push_back(label);
  rows_.push_back(0);
  return size() - 1;
}

void LabeledGraph::connect(int a, int b) {
  if (a == b) return;
  rows_[static_cast<std::size_t>(a)] |= std::uint64_t{1} << b;
  rows_[static_cast<std::size_t>(b)] |= std::uint64_t{1} << a;
}

int LabeledGraph::degree(int a) const { return std::popcount(neighbours(a)); }

int LabeledGraph::edge_count() const {
  int twice = 0;
  for (int i = 0; i < size(); ++i) twice += degree(i);
  return twice / 2;
}

namespace {

// A door plus everything on either side of it becomes a clique.
void join_sides(LabeledGraph& g, int door, const std::vector<int>& sides) {
  for (std::size_t i = 0; i < sides.size(); ++i) {
    g.connect(door, sides[i]);
    for (std::size_t j = i + 1; j < sides.size(); ++j) g.connect(sides[i], sides[j]);
  }
}

bool touches(const Box& door, const Box& room, int eps) {
  return door.xL - eps <= room.xR && door.xR + eps >= room.xL && door.yT - eps <= room.yB &&
         door.yB + eps >= room.yT;
}

}  // namespace

LabeledGraph diagram_graph(const BubbleDiagram& bd, const Vocabulary& vocab) {
  std::vector<int> labels;
  for (const auto& n : bd.nodes) labels.push_back(n.category);
  LabeledGraph g(labels);
  bool anyFront = false;
  for (const auto& n : bd.nodes) anyFront = anyFront || n.category == vocab.front_door();
  const int outside = anyFront ? g.add_node(outside_label(vocab)) : -1;

  std::vector<std::vector<int>> sides(bd.nodes.size());
  for (const auto& [a, b] : bd.edges) {
    const bool aDoor = vocab.is_door(bd.nodes[static_cast<std::size_t>(a)].category);
    const int door = aDoor ? a : b;
    sides[static_cast<std::size_t>(door)].push_back(aDoor ? b : a);
  }
  for (std::size_t d = 0; d < bd.nodes.size(); ++d) {
    const int cat = bd.nodes[d].category;
    if (!vocab.is_door(cat)) continue;
    if (cat == vocab.front_door()) sides[d].push_back(outside);
    join_sides(g, static_cast<int>(d), sides[d]);
  }
  return g;
}

ReconstructedGraph reconstruct_graph(const Floorplan& fp, const Vocabulary& vocab, int epsilon) {
  ReconstructedGraph out;
  std::vector<int> labels;
  for (std::size_t i = 0; i < fp.size(); ++i) {
    labels.push_back(fp.elements[i].category);
    out.element.push_back(static_cast<int>(i));
  }
  out.graph = LabeledGraph(labels);

  std::vector<int> rooms;
  for (std::size_t i = 0; i < fp.size(); ++i)
    if (!vocab.is_door(fp.elements[i].category)) rooms.push_back(static_cast<int>(i));

  Box hull{kCoordBins, kCoordBins, -1, -1};
  for (int r : rooms) {
    const Box& b = fp.elements[static_cast<std::size_t>(r)].box;
    hull = {std::min(hull.xL, b.xL), std::min(hull.yT, b.yT), std::max(hull.xR, b.xR), std::max(hull.yB, b.yB)};
  }
  auto onBoundary = [&](const Box& d) {
    if (rooms.empty() || !touches(d, hull, epsilon)) return false;
    const bool deepInside = d.xL - epsilon > hull.xL && d.xR + epsilon < hull.xR && d.yT - epsilon > hull.yT &&
                            d.yB + epsilon < hull.yB;
    return !deepInside;
  };

  int outside = -1;
  for (std::size_t d = 0; d < fp.size(); ++d) {
    const auto& e = fp.elements[d];
    if (!vocab.is_door(e.category)) continue;
    std::vector<int> sides;
    for (int r : rooms)
      if (touches(e.box, fp.elements[static_cast<std::size_t>(r)].box, epsilon)) sides.push_back(r);
    if (e.category == vocab.front_door() && onBoundary(e.box)) {
      if (outside < 0) {
        outside = out.graph.add_node(outside_label(vocab));
        out.element.push_back(-1);
      }
      sides.push_back(outside);
    }
    join_sides(out.graph, static_cast<int>(d), sides);
  }
  return out;
}

BubbleDiagram derive_diagram(const Floorplan& fp, const Vocabulary& vocab, int epsilon) {
  BubbleDiagram bd;
  for (const auto& e : fp.elements) bd.nodes.push_back({"e" + std::to_string(e.roomIndex), e.category});
  const auto rec = reconstruct_graph(fp, vocab, epsilon);
  for (int d = 0; d < static_cast<int>(fp.size()); ++d) {
    if (!vocab.is_door(fp.elements[static_cast<std::size_t>(d)].category)) continue;
    for (int r = 0; r < static_cast<int>(fp.size()); ++r)
      if (r != d && !vocab.is_door(fp.elements[static_cast<std::size_t>(r)].category) && rec.graph.adjacent(d, r))
        bd.edges.emplace_back(r, d);
  }
  return bd;
}

namespace {

class EditSearch {
 public:
  EditSearch(const LabeledGraph& a, const LabeledGraph& b, long budget) : a_(a), b_(b), budget_(budget) {
    // Most constrained nodes first: rare labels, then high degree.
    order_.resize(static_cast<std::size_t>(a.size()));
    std::iota(order_.begin(), order_.end(), 0);
    std::map<int, int> freq;
    for (int l : b.labels()) ++freq[l];
    std::stable_sort(order_.begin(), order_.end(), [&](int x, int y) {
      const int fx = freq[a.label(x)], fy = freq[a.label(y)];
      if (fx != fy) return fx < fy;
      return a.degree(x) > a.degree(y);
    });
    map_.assign(static_cast<std::size_t>(a.size()), -1);
    for (int l : a.labels()) ++remainA_[l];
    for (int l : b.labels()) ++remainB_[l];
  }

  EditDistance run() {
    best_ = greedy();
    dfs(0, 0, 0);
    return {best_, expansions_ <= budget_, expansions_};
  }

 private:
  int total_cost_of(const std::vector<int>& map) const {
    int cost = 0, matched = 0, kept = 0;
    for (int i = 0; i < a_.size(); ++i) matched += map[static_cast<std::size_t>(i)] >= 0;
    for (int i = 0; i < a_.size(); ++i)
      for (int j = i + 1; j < a_.size(); ++j) {
        const int mi = map[static_cast<std::size_t>(i)], mj = map[static_cast<std::size_t>(j)];
        if (a_.adjacent(i, j) && mi >= 0 && mj >= 0 && b_.adjacent(mi, mj)) ++kept;
      }
    cost = (a_.size() - matched) + (b_.size() - matched) + (a_.edge_count() - kept) + (b_.edge_count() - kept);
    return cost;
  }

  // Assign in search order to the unused same-label node that keeps the most
  // edges with earlier assignments.
  int greedy() const {
    std::vector<int> map(static_cast<std::size_t>(a_.size()), -1);
    std::uint64_t used = 0;
    for (int i : order_) {
      int bestJ = -1, bestKept = -1;
      for (int j = 0; j < b_.size(); ++j) {
        if ((used >> j) & 1u || b_.label(j) != a_.label(i)) continue;
        int kept = 0;
        for (int p = 0; p < a_.size(); ++p) {
          const int mp = map[static_cast<std::size_t>(p)];
          if (mp >= 0) kept += (a_.adjacent(i, p) == b_.adjacent(j, mp)) ? 1 : -1;
        }
        if (kept > bestKept) bestKept = kept, bestJ = j;
      }
      if (bestJ >= 0) {
        map[static_cast<std::size_t>(i)] = bestJ;
        used |= std::uint64_t{1} << bestJ;
      }
    }
    return total_cost_of(map);
  }

  // Lower bound on the cost still to come: label surplus on either side plus
  // the imbalance between edges that are not yet settled.
  int bound(int depth, std::uint64_t usedB) const {
    int nodes = 0;
    for (const auto& [label, na] : remainA_) {
      auto it = remainB_.find(label);
      nodes += std::abs(na - (it == remainB_.end() ? 0 : it->second));
    }
    for (const auto& [label, nb] : remainB_)
      if (!remainA_.count(label)) nodes += nb;
    int openA = 0;
    for (std::size_t k = static_cast<std::size_t>(depth); k < order_.size(); ++k) {
      const int i = order_[k];
      for (int j = 0; j < a_.size(); ++j)
        if (a_.adjacent(i, j) && (position(j) >= depth ? j > i : true)) ++openA;
    }
    int openB = 0;
    for (int i = 0; i < b_.size(); ++i) {
      if ((usedB >> i) & 1u) continue;
      for (int j = 0; j < b_.size(); ++j)
        if (b_.adjacent(i, j) && (((usedB >> j) & 1u) || j > i)) ++openB;
    }
    return nodes + std::abs(openA - openB);
  }

  int position(int node) const {
    if (positionOf_.empty()) {
      positionOf_.assign(order_.size(), 0);
      for (std::size_t k = 0; k < order_.size(); ++k) positionOf_[static_cast<std::size_t>(order_[k])] = static_cast<int>(k);
    }
    return positionOf_[static_cast<std::size_t>(node)];
  }

  void dfs(int depth, int cost, std::uint64_t usedB) {
    if (++expansions_ > budget_) return;
    if (cost + bound(depth, usedB) >= best_) return;
    if (depth == a_.size()) {
      // Remaining B nodes are inserted along with every edge touching them.
      int extra = 0;
      for (int i = 0; i < b_.size(); ++i) {
        if ((usedB >> i) & 1u) continue;
        ++extra;
        for (int j = 0; j < b_.size(); ++j)
          if (b_.adjacent(i, j) && (((usedB >> j) & 1u) || j > i)) ++extra;
      }
      best_ = std::min(best_, cost + extra);
      return;
    }
    const int i = order_[static_cast<std::size_t>(depth)];
    const int label = a_.label(i);
    --remainA_[label];
    for (int j = 0; j < b_.size(); ++j) {
      if ((usedB >> j) & 1u || b_.label(j) != label) continue;
      int step = 0;
      for (int k = 0; k < depth; ++k) {
        const int p = order_[static_cast<std::size_t>(k)];
        const int mp = map_[static_cast<std::size_t>(p)];
        const bool ea = a_.adjacent(i, p);
        const bool eb = mp >= 0 && b_.adjacent(j, mp);
        step += ea != eb;
      }
      map_[static_cast<std::size_t>(i)] = j;
      --remainB_[label];
      dfs(depth + 1, cost + step, usedB | (std::uint64_t{1} << j));
      ++remainB_[label];
      map_[static_cast<std::size_t>(i)] = -1;
    }
    // Delete node i together with its edges to already processed nodes.
    int step = 1;
    for (int k = 0; k < depth; ++k) step += a_.adjacent(i, order_[static_cast<std::size_t>(k)]);
    dfs(depth + 1, cost + step, usedB);
    ++remainA_[label];
  }

  const LabeledGraph& a_;
  const LabeledGraph& b_;
  long budget_;
  long expansions_ = 0;
  int best_ = 0;
  std::vector<int> order_;
  mutable std::vector<int> positionOf_;
  std::vector<int> map_;
  std::map<int, int> remainA_, remainB_;
};

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

// Colour refinement until the partition is stable. Colours are dense ranks of
// (previous colour, sorted neighbour colours), so they are canonical.
std::vector<int> refine_colours(const LabeledGraph& g) {
  const int n = g.size();
  std::vector<int> colour(g.labels());
  {
    std::vector<int> uniq(colour);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (int& c : colour) c = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), c) - uniq.begin());
  }
  for (int round = 0; round < n; ++round) {
    std::vector<std::vector<int>> sig(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      auto& s = sig[static_cast<std::size_t>(i)];
      s.push_back(colour[static_cast<std::size_t>(i)]);
      std::vector<int> nb;
      for (int j = 0; j < n; ++j)
        if (g.adjacent(i, j)) nb.push_back(colour[static_cast<std::size_t>(j)]);
      std::sort(nb.begin(), nb.end());
      s.insert(s.end(), nb.begin(), nb.end());
    }
    std::vector<std::vector<int>> uniq(sig);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::vector<int> next(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      next[static_cast<std::size_t>(i)] = static_cast<int>(
          std::lower_bound(uniq.begin(), uniq.end(), sig[static_cast<std::size_t>(i)]) - uniq.begin());
    const bool stable = static_cast<int>(uniq.size()) ==
                        *std::max_element(colour.begin(), colour.end()) + 1;
    colour = std::move(next);
    if (stable) break;
  }
  return colour;
}

}  // namespace

EditDistance graph_edit_distance(const LabeledGraph& a, const LabeledGraph& b, long maxExpansions) {
  return EditSearch(a, b, maxExpansions).run();
}

std::string canonical_hash(const LabeledGraph& g, long maxOrderings) {
  const int n = g.size();
  const std::vector<int> colour = refine_colours(g);

  std::uint64_t h = mix(0, static_cast<std::uint64_t>(n));
  std::vector<int> labelsSorted(g.labels());
  std::sort(labelsSorted.begin(), labelsSorted.end());
  for (int l : labelsSorted) h = mix(h, static_cast<std::uint64_t>(l));
  std::vector<std::pair<int, int>> classes;  // (colour, label) multiset
  for (int i = 0; i < n; ++i) classes.emplace_back(colour[static_cast<std::size_t>(i)], g.label(i));
  std::sort(classes.begin(), classes.end());
  for (const auto& [c, l] : classes) h = mix(mix(h, static_cast<std::uint64_t>(c)), static_cast<std::uint64_t>(l));

  // Nodes grouped by colour; every ordering permutes only within a group.
  std::vector<int> nodes(static_cast<std::size_t>(n));
  std::iota(nodes.begin(), nodes.end(), 0);
  std::sort(nodes.begin(), nodes.end(), [&](int x, int y) {
    return colour[static_cast<std::size_t>(x)] < colour[static_cast<std::size_t>(y)];
  });
  std::vector<std::pair<int, int>> groups;  // [begin, end)
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && colour[static_cast<std::size_t>(nodes[static_cast<std::size_t>(j)])] ==
                        colour[static_cast<std::size_t>(nodes[static_cast<std::size_t>(i)])])
      ++j;
    groups.emplace_back(i, j);
    i = j;
  }
  double orderings = 1;
  for (const auto& [b, e] : groups)
    for (int k = 2; k <= e - b; ++k) orderings *= k;

  char buf[32];
  if (orderings > static_cast<double>(maxOrderings)) {
    std::snprintf(buf, sizeof buf, "wl-%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  auto encode = [&](const std::vector<int>& perm) {
    std::vector<std::uint64_t> rows(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (g.adjacent(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]))
          rows[static_cast<std::size_t>(i)] |= std::uint64_t{1} << j;
    return rows;
  };
  std::vector<int> perm(nodes);
  for (const auto& [b, e] : groups) std::sort(perm.begin() + b, perm.begin() + e);
  std::vector<std::uint64_t> best = encode(perm);
  // Odometer over per-group permutations.
  while (true) {
    std::size_t gi = 0;
    for (; gi < groups.size(); ++gi) {
      const auto [b, e] = groups[gi];
      if (std::next_permutation(perm.begin() + b, perm.begin() + e)) break;
    }
    if (gi == groups.size()) break;
    best = std::min(best, encode(perm));
  }
  for (std::uint64_t r : best) h = mix(h, r);
  std::snprintf(buf, sizeof buf, "cf-%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace planforge
