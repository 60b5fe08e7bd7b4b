#pragma once

#include <string>

#include "planforge/floorplan.hpp"
#include "planforge/nn/models.hpp"
#include "planforge/serialization.hpp"

namespace planforge {

/// Everything inference needs: weights, vocabulary, and the corpus category
/// statistics that fix the hybrid element order.
struct ModelBundle {
  nn::PlanModel<float> model;
  Vocabulary vocab = Vocabulary::residential();
  CategoryPositionStats stats;
  Json meta = Json::object();

  std::string model_hash() const { return model.fingerprint(); }
};

/// Binary container:
///   "PFCKPT\0\0" | u32 version | u32 header bytes | JSON header
///   | u32 block count | blocks: u32 name bytes, name, u32 rows, u32 cols, f32 data
/// All integers and floats little endian. The header carries the model
/// configuration, vocabulary (with hash) and category statistics.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::string& path);

Json config_to_json(const nn::ModelConfig& c);
nn::ModelConfig config_from_json(const Json& j);

}  // namespace planforge
