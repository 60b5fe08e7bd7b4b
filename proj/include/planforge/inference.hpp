#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "planforge/checkpoint.hpp"
#include "planforge/connectivity.hpp"
#include "planforge/graph.hpp"
#include "planforge/nn/models.hpp"
#include "planforge/objectives.hpp"

namespace planforge {

inline constexpr int kDefaultTopK = 5;
inline constexpr int kDefaultRefineIters = 5;

/// Softmax over the 256 bins keeping only the k most probable (ties toward
/// the lower bin), renormalized. Throws NumericError on non-finite logits.
std::vector<double> top_k_distribution(const Eigen::Ref<const Eigen::RowVectorXf>& logits, int k);

/// Next-coordinate distribution after a prefix that starts with BoS.
/// `schedule` is the causal propagation schedule covering the prefix.
std::vector<double> step_decode(const nn::PlanModel<float>& model, const nn::SequenceInput& prefix,
                                const DenseMatrix<double>& schedule, const Vocabulary& vocab, int topK = kDefaultTopK);

/// Index drawn from `dist` with one 53-bit uniform from `rng`.
int sample_index(const std::vector<double>& dist, std::mt19937_64& rng);

/// Per-row argmax, ties toward the lower bin. NaN or infinite logits raise
/// NumericError carrying the row.
std::vector<int> decode_greedy(const LogitMatrix<float>& logits);

/// Diagram elements in hybrid order with their token skeleton and graphs.
struct PreparedDiagram {
  BubbleDiagram diagram;
  GraphContext graph;
  /// Categories, positions and BoS/EoS filled in; coordinate slots hold 0.
  nn::SequenceInput skeleton;
  Eigen::MatrixXf causal;    // draft schedule, (4N+2)^2
  Eigen::MatrixXf interior;  // refiner adjacency, (4N)^2

  int num_elements() const { return static_cast<int>(graph.parsed.order.size()); }
  /// Element position of a diagram node id, or -1.
  int element_of(const std::string& nodeId) const;
};

/// Validates the diagram and orders it with `stats`. Throws ValidationError.
PreparedDiagram prepare_diagram(const BubbleDiagram& bd, const Vocabulary& vocab,
                                const CategoryPositionStats& stats, int maxElements);

/// Coordinate tokens (4N, no specials) into a floorplan whose room indexes
/// are the diagram node indexes. Inverted boxes are repaired by swapping.
Floorplan plan_from_coords(const PreparedDiagram& d, const std::vector<int>& coords, const Vocabulary& vocab);
std::vector<int> coords_from_plan(const Floorplan& fp);

struct RefinementStep {
  int iteration = 0;  // 0 is the draft
  Floorplan plan;
  std::vector<int> coords;
  /// Against the reference boxes, when given: mean CE of the logits that
  /// produced this step, and the IoU-matrix discrepancy of its boxes.
  std::optional<double> crossEntropy;
  std::optional<double> geometric;
};

struct RefinementTrace {
  std::vector<RefinementStep> steps;
  const RefinementStep& final() const { return steps.back(); }
};

/// Token value per coordinate slot, -1 where free.
using LockMask = std::vector<int>;

/// Runs `iterations` refinement rounds from `draft`: refine, greedy decode,
/// substitute locked slots, repeat. Records the draft and every round.
/// Throws ConfigError when iterations < 1.
RefinementTrace refine_loop(const nn::PlanModel<float>& model, const PreparedDiagram& d,
                            const std::vector<int>& draft, int iterations, const Vocabulary& vocab,
                            const LockMask& locks = {}, const std::vector<Box>* reference = nullptr);

/// Student-forced draft: samples 4N coordinates from BoS with top-k
/// truncation, teacher-forcing locked slots.
std::vector<int> sample_draft(const nn::PlanModel<float>& model, const PreparedDiagram& d, int topK,
                              std::mt19937_64& rng, const LockMask& locks = {});

struct GenerationRequest {
  BubbleDiagram diagram;
  int numCandidates = 1;
  std::uint64_t seed = 0;
  int topK = kDefaultTopK;
  int refineIters = kDefaultRefineIters;
  /// Diagram node id -> fixed box.
  std::map<std::string, Box> locks;
};

struct Candidate {
  std::uint64_t seed = 0;
  Floorplan plan;
  RefinementTrace trace;
  EditDistance compatibility;
};

struct GenerationResult {
  GenerationRequest request;
  std::vector<Candidate> candidates;
  std::string modelHash;
  std::string vocabHash;
};

/// Checks candidate count, topK in [1, 256], refineIters >= 0 and that every
/// lock names a diagram node and is a valid box. Throws ValidationError.
void validate(const GenerationRequest& req, const Vocabulary& vocab);

/// Candidate i uses seed + i. refineIters = 0 returns the drafts. With locks
/// the locked boxes are forced during sampling and after every refinement.
GenerationResult generate(const GenerationRequest& req, const ModelBundle& bundle);

/// Applies `edits` (diagram node id -> box) to `fp` and refines with the
/// edited rooms held fixed. iters = 0 returns the edited plan.
RefinementTrace edit_and_refine(const Floorplan& fp, const std::map<std::string, Box>& edits,
                                const BubbleDiagram& diagram, int iters, const ModelBundle& bundle);

Json to_json(const RefinementTrace& trace, const Vocabulary& vocab);
Json to_json(const GenerationRequest& req, const Vocabulary& vocab);
GenerationRequest generation_request_from_json(const Json& j, const BubbleDiagram& diagram);
Json to_json(const GenerationResult& result, const Vocabulary& vocab);

}  // namespace planforge
