#include "planforge/serialization.hpp"

#include <cstdio>

#include "planforge/errors.hpp"

namespace planforge {

Json to_json(const Box& b) { return Json::array({b.xL, b.yT, b.xR, b.yB}); }

Box box_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 4)
    throw ValidationError(field, "box must be an array of four integers");
  int v[4];
  for (int k = 0; k < 4; ++k) {
    if (!j[k].is_number_integer()) throw ValidationError(field, "box coordinates must be integers");
    v[k] = j[k].get<int>();
  }
  Box b{v[0], v[1], v[2], v[3]};
  if (!b.in_range()) throw ValidationError(field, "box coordinate outside [0, 255]");
  if (!b.canonical()) throw ValidationError(field, "box has xL > xR or yT > yB");
  return b;
}

Json to_json(const Floorplan& fp, const Vocabulary& vocab) {
  Json elements = Json::array();
  for (const auto& e : fp.elements)
    elements.push_back({{"room_index", e.roomIndex},
                        {"category", vocab.category(e.category).name},
                        {"box", to_json(e.box)}});
  return {{"vocab_version", fp.vocabVersion.empty() ? vocab.version() : fp.vocabVersion},
          {"elements", std::move(elements)}};
}

Floorplan floorplan_from_json(const Json& j, const Vocabulary& vocab) {
  if (!j.is_object()) throw ValidationError("$", "floorplan must be an object");
  Floorplan fp;
  if (j.contains("vocab_version")) {
    if (!j["vocab_version"].is_string()) throw ValidationError("vocab_version", "must be a string");
    fp.vocabVersion = j["vocab_version"].get<std::string>();
    if (fp.vocabVersion != vocab.version())
      throw ValidationError("vocab_version", "expected '" + vocab.version() + "', got '" + fp.vocabVersion + "'");
  } else {
    fp.vocabVersion = vocab.version();
  }
  if (!j.contains("elements") || !j["elements"].is_array())
    throw ValidationError("elements", "missing element array");
  std::vector<FieldError> errors;
  for (std::size_t k = 0; k < j["elements"].size(); ++k) {
    const auto& e = j["elements"][k];
    const std::string field = "elements[" + std::to_string(k) + "]";
    try {
      if (!e.is_object()) throw ValidationError(field, "element must be an object");
      if (!e.contains("room_index") || !e["room_index"].is_number_integer())
        throw ValidationError(field + ".room_index", "missing integer room_index");
      if (!e.contains("category") || !e["category"].is_string())
        throw ValidationError(field + ".category", "missing category name");
      Element el;
      el.roomIndex = e["room_index"].get<int>();
      el.category = vocab.require(e["category"].get<std::string>(), field + ".category");
      el.box = box_from_json(e.value("box", Json()), field + ".box");
      fp.elements.push_back(el);
    } catch (const ValidationError& err) {
      errors.insert(errors.end(), err.errors().begin(), err.errors().end());
    }
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  validate(fp, vocab);
  return fp;
}

Json to_json(const TokenSequence& seq) { return seq.tokens; }

std::string stats_to_json(const CategoryPositionStats& stats, const Vocabulary& vocab) {
  std::string out = "{";
  bool first = true;
  for (const auto& [c, m] : stats.mean) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "[%.6f, %.6f]", m.x(), m.y());
    out += (first ? "" : ", ") + Json(vocab.category(c).name).dump() + ": " + buf;
    first = false;
  }
  return out + "}";
}

CategoryPositionStats stats_from_json(const Json& j, const Vocabulary& vocab) {
  if (!j.is_object()) throw ParseError("category stats must be an object");
  CategoryPositionStats stats;
  for (const auto& [name, v] : j.items()) {
    const int c = vocab.require(name, "stats." + name);
    if (!v.is_array() || v.size() != 2) throw ParseError("stats entry for '" + name + "' must be [x, y]");
    stats.mean[c] = Eigen::Vector2d(v[0].get<double>(), v[1].get<double>());
  }
  return stats;
}

Json to_json(const BubbleDiagram& bd, const Vocabulary& vocab) {
  Json nodes = Json::array(), edges = Json::array();
  for (const auto& n : bd.nodes) nodes.push_back({{"id", n.id}, {"category", vocab.category(n.category).name}});
  for (auto [a, b] : bd.edges) edges.push_back({bd.nodes[a].id, bd.nodes[b].id});
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

BubbleDiagram diagram_from_json(const Json& j, const Vocabulary& vocab) {
  if (!j.is_object()) throw ValidationError("$", "diagram must be an object");
  std::vector<FieldError> errors;
  BubbleDiagram bd;
  if (!j.contains("nodes") || !j["nodes"].is_array()) {
    throw ValidationError("nodes", "missing node array");
  }
  for (std::size_t k = 0; k < j["nodes"].size(); ++k) {
    const auto& n = j["nodes"][k];
    const std::string field = "nodes[" + std::to_string(k) + "]";
    if (!n.is_object() || !n.contains("id") || !n["id"].is_string()) {
      errors.push_back({field + ".id", "node id must be a string"});
      continue;
    }
    if (!n.contains("category") || !n["category"].is_string()) {
      errors.push_back({field + ".category", "node category must be a string"});
      continue;
    }
    auto c = vocab.find(n["category"].get<std::string>());
    if (!c) {
      errors.push_back({field + ".category", "unknown category '" + n["category"].get<std::string>() + "'"});
      continue;
    }
    bd.nodes.push_back({n["id"].get<std::string>(), *c});
  }
  if (j.contains("edges")) {
    if (!j["edges"].is_array()) errors.push_back({"edges", "edges must be an array"});
    else
      for (std::size_t k = 0; k < j["edges"].size(); ++k) {
        const auto& e = j["edges"][k];
        const std::string field = "edges[" + std::to_string(k) + "]";
        if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
          errors.push_back({field, "edge must be a pair of node ids"});
          continue;
        }
        const int a = bd.index_of(e[0].get<std::string>());
        const int b = bd.index_of(e[1].get<std::string>());
        if (a < 0 || b < 0) {
          errors.push_back({field, "edge references unknown node '" +
                                       (a < 0 ? e[0].get<std::string>() : e[1].get<std::string>()) + "'"});
          continue;
        }
        bd.edges.emplace_back(a, b);
      }
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return bd;
}

}  // namespace planforge
