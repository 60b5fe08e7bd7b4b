#include "planforge/connectivity.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace planforge {

int BubbleDiagram::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

void validate(const BubbleDiagram& bd, const Vocabulary& vocab) {
  std::vector<FieldError> errors;
  const int n = static_cast<int>(bd.nodes.size());
  if (n == 0) errors.push_back({"nodes", "diagram has no nodes"});

  std::set<std::string> ids;
  for (int i = 0; i < n; ++i) {
    const auto& node = bd.nodes[static_cast<std::size_t>(i)];
    const std::string field = "nodes[" + std::to_string(i) + "]";
    if (node.id.empty()) errors.push_back({field + ".id", "empty node id"});
    if (!ids.insert(node.id).second) errors.push_back({field + ".id", "duplicate node id '" + node.id + "'"});
    if (node.category < 0 || node.category >= vocab.num_categories())
      errors.push_back({field + ".category", "unknown category"});
  }

  std::vector<int> doorDegree(static_cast<std::size_t>(n), 0);
  std::set<std::pair<int, int>> seen;
  for (std::size_t k = 0; k < bd.edges.size(); ++k) {
    auto [a, b] = bd.edges[k];
    const std::string field = "edges[" + std::to_string(k) + "]";
    if (a < 0 || b < 0 || a >= n || b >= n) {
      errors.push_back({field, "edge references an unknown node"});
      continue;
    }
    if (a == b) {
      errors.push_back({field, "self edge on '" + bd.nodes[a].id + "'"});
      continue;
    }
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second) {
      errors.push_back({field, "duplicate edge '" + bd.nodes[a].id + "'-'" + bd.nodes[b].id + "'"});
      continue;
    }
    const bool doorA = vocab.is_door(bd.nodes[a].category);
    const bool doorB = vocab.is_door(bd.nodes[b].category);
    if (doorA == doorB) {
      errors.push_back({field, doorA ? "door-door edge '" + bd.nodes[a].id + "'-'" + bd.nodes[b].id + "'"
                                     : "rooms must connect through a door node: '" +
                                           bd.nodes[a].id + "'-'" + bd.nodes[b].id + "'"});
      continue;
    }
    ++doorDegree[static_cast<std::size_t>(doorA ? a : b)];
  }
  for (int i = 0; i < n; ++i) {
    const auto& node = bd.nodes[static_cast<std::size_t>(i)];
    if (node.category >= 0 && node.category < vocab.num_categories() && vocab.is_door(node.category) &&
        doorDegree[static_cast<std::size_t>(i)] == 0)
      errors.push_back({"nodes[" + std::to_string(i) + "]", "door '" + node.id + "' has no incident room"});
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

BinaryMatrix room_connectivity(int n, const std::vector<std::pair<int, int>>& edges,
                               const std::vector<int>& categories, const Vocabulary& vocab) {
  BinaryMatrix a = BinaryMatrix::Identity(n, n);
  std::vector<std::vector<int>> roomsOfDoor(static_cast<std::size_t>(n));
  for (auto [i, j] : edges) {
    a(i, j) = a(j, i) = 1;
    if (vocab.is_door(categories[i]) && !vocab.is_door(categories[j])) roomsOfDoor[i].push_back(j);
    if (vocab.is_door(categories[j]) && !vocab.is_door(categories[i])) roomsOfDoor[j].push_back(i);
  }
  for (const auto& rooms : roomsOfDoor)
    for (std::size_t p = 0; p < rooms.size(); ++p)
      for (std::size_t q = p + 1; q < rooms.size(); ++q) a(rooms[p], rooms[q]) = a(rooms[q], rooms[p]) = 1;
  return a;
}

ParsedDiagram parse_bubble_diagram(const BubbleDiagram& bd, const Vocabulary& vocab,
                                   const CategoryPositionStats* stats) {
  validate(bd, vocab);
  const int n = static_cast<int>(bd.nodes.size());

  std::vector<int> roomOrder;
  if (stats) {
    // Categories without statistics rank after the known ones, by id.
    std::vector<int> present, unseen;
    for (const auto& node : bd.nodes) {
      if (vocab.is_door(node.category)) continue;
      (stats->mean.count(node.category) ? present : unseen).push_back(node.category);
    }
    roomOrder = category_rank_order(*stats, vocab, present);
    std::sort(unseen.begin(), unseen.end());
    unseen.erase(std::unique(unseen.begin(), unseen.end()), unseen.end());
    roomOrder.insert(roomOrder.end(), unseen.begin(), unseen.end());
  } else {
    for (int c = 0; c < vocab.interior_door(); ++c) roomOrder.push_back(c);
  }
  auto rank = [&](int c) {
    if (c == vocab.interior_door()) return static_cast<int>(roomOrder.size());
    if (c == vocab.front_door()) return static_cast<int>(roomOrder.size()) + 1;
    return static_cast<int>(std::find(roomOrder.begin(), roomOrder.end(), c) - roomOrder.begin());
  };

  ParsedDiagram out;
  out.order.resize(static_cast<std::size_t>(n));
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](int a, int b) { return rank(bd.nodes[a].category) < rank(bd.nodes[b].category); });

  std::vector<int> position(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    position[static_cast<std::size_t>(out.order[k])] = k;
    out.categories.push_back(bd.nodes[static_cast<std::size_t>(out.order[k])].category);
  }
  std::vector<std::pair<int, int>> edges;
  for (auto [a, b] : bd.edges) edges.emplace_back(position[a], position[b]);
  out.rooms = room_connectivity(n, edges, out.categories, vocab);
  return out;
}

BinaryMatrix build_sequence_connectivity(const BinaryMatrix& rooms, int n) {
  if (rooms.rows() != n || rooms.cols() != n)
    throw ShapeError("build_sequence_connectivity: A is " + std::to_string(rooms.rows()) + "x" +
                     std::to_string(rooms.cols()) + ", expected " + std::to_string(n) + "x" +
                     std::to_string(n));
  const int length = 4 * n + 2;
  BinaryMatrix seq = BinaryMatrix::Zero(length, length);
  for (int i = 1; i <= 4 * n; ++i)
    for (int j = 1; j <= 4 * n; ++j) seq(i, j) = rooms((i - 1) / 4, (j - 1) / 4);
  return seq;
}

GraphContext make_graph_context(ParsedDiagram parsed) {
  GraphContext ctx;
  const int n = static_cast<int>(parsed.categories.size());
  ctx.sequence = build_sequence_connectivity(parsed.rooms, n);
  ctx.causal = causal_schedule<double>(ctx.sequence);
  ctx.interior = normalize_adjacency<double>(ctx.sequence).block(1, 1, 4 * n, 4 * n);
  ctx.parsed = std::move(parsed);
  return ctx;
}

}  // namespace planforge
