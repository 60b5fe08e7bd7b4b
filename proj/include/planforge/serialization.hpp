#pragma once

#include <string>

#include <json.hpp>

#include "planforge/connectivity.hpp"
#include "planforge/floorplan.hpp"

namespace planforge {

using Json = nlohmann::json;

/// {"vocab_version", "elements": [{"room_index", "category", "box": [xL,yT,xR,yB]}]}
Json to_json(const Floorplan& fp, const Vocabulary& vocab);
/// Parses and validates; ValidationError lists offending fields.
Floorplan floorplan_from_json(const Json& j, const Vocabulary& vocab);

/// Flat integer array.
Json to_json(const TokenSequence& seq);

/// {"category": [mean_x, mean_y]} with six fixed decimals.
std::string stats_to_json(const CategoryPositionStats& stats, const Vocabulary& vocab);
CategoryPositionStats stats_from_json(const Json& j, const Vocabulary& vocab);

/// {"nodes": [{"id", "category"}], "edges": [["id", "id"]]}
Json to_json(const BubbleDiagram& bd, const Vocabulary& vocab);
/// Schema and reference checks only; semantic checks live in validate().
BubbleDiagram diagram_from_json(const Json& j, const Vocabulary& vocab);

/// {"shape": [rows, cols], "data": [...]} in row-major order.
template <typename Derived>
Json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
  Json data = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(static_cast<double>(m(r, c)));
  return {{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

Box box_from_json(const Json& j, const std::string& field);
Json to_json(const Box& b);

}  // namespace planforge
