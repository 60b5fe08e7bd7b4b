#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "planforge/checkpoint.hpp"
#include "planforge/evaluation.hpp"
#include "planforge/inference.hpp"

namespace planforge {

/// Per-iteration means over held-out plans, each regenerated from the
/// diagram derived from its own geometry. Index 0 is the draft.
struct RefinementEvaluation {
  int plans = 0;
  std::vector<double> meanGed;       // compatibility against the input diagram
  std::vector<double> meanGeometric; // IoU-matrix discrepancy against the plan
  int inexactGed = 0;                // distances reported as upper bounds
};

/// One candidate per plan with seed + i, top-k sampling and `refineIters`
/// refinement rounds.
RefinementEvaluation evaluate_refinement(const ModelBundle& bundle, const std::vector<Floorplan>& plans,
                                         int refineIters, int topK, std::uint64_t seed);

struct MetricSummary {
  std::vector<double> rounds;
  double mean = 0, stddev = 0;
};

struct EvalOptions {
  bool ged = true;
  bool fid = true;
  int rounds = 5;
  int refineIters = kDefaultRefineIters;
  int topK = kDefaultTopK;
  std::uint64_t seed = 0;
  int epsilon = 2;
};

struct EvalReport {
  int plans = 0;
  EvalOptions options;
  MetricSummary ged;
  MetricSummary fid;
  std::string extractor;
  std::string modelHash;
};

/// Generates one layout per plan's diagram in each round and scores mean
/// compatibility and FID against the plans themselves. Round r uses seeds
/// seed + r * plans + i. FID needs at least two plans.
EvalReport evaluate_model(const ModelBundle& bundle, const std::vector<Floorplan>& plans, const EvalOptions& opt);

Json to_json(const EvalReport& r);

}  // namespace planforge
