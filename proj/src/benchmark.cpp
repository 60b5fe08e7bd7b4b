#include "planforge/benchmark.hpp"

#include <cmath>

#include "planforge/graph.hpp"

namespace planforge {

namespace {

MetricSummary summarize(std::vector<double> rounds) {
  MetricSummary s;
  s.rounds = std::move(rounds);
  if (s.rounds.empty()) return s;
  for (double v : s.rounds) s.mean += v;
  s.mean /= static_cast<double>(s.rounds.size());
  double sq = 0;
  for (double v : s.rounds) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(s.rounds.size()));
  return s;
}

Json to_json(const MetricSummary& s) { return {{"rounds", s.rounds}, {"mean", s.mean}, {"std", s.stddev}}; }

}  // namespace

RefinementEvaluation evaluate_refinement(const ModelBundle& bundle, const std::vector<Floorplan>& plans,
                                         int refineIters, int topK, std::uint64_t seed) {
  RefinementEvaluation out;
  out.meanGed.assign(static_cast<std::size_t>(refineIters) + 1, 0.0);
  out.meanGeometric.assign(out.meanGed.size(), 0.0);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const Floorplan& truth = plans[i];
    GenerationRequest req;
    req.diagram = derive_diagram(truth, bundle.vocab);
    req.seed = seed + i;
    req.topK = topK;
    req.refineIters = refineIters;
    const auto result = generate(req, bundle);
    const auto& steps = result.candidates.front().trace.steps;
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const auto ged = compatibility(req.diagram, steps[k].plan, bundle.vocab);
      out.inexactGed += !ged.exact;
      out.meanGed[k] += ged.distance;
      // Generated room indexes are diagram node indexes, i.e. truth positions.
      std::vector<Box> reference;
      for (const auto& e : steps[k].plan.elements) reference.push_back(truth.elements[static_cast<std::size_t>(e.roomIndex)].box);
      out.meanGeometric[k] += iou_discrepancy(iou_matrix(boxes_of(steps[k].plan)), iou_matrix(reference));
    }
    ++out.plans;
  }
  if (out.plans > 0)
    for (std::size_t k = 0; k < out.meanGed.size(); ++k) {
      out.meanGed[k] /= out.plans;
      out.meanGeometric[k] /= out.plans;
    }
  return out;
}

EvalReport evaluate_model(const ModelBundle& bundle, const std::vector<Floorplan>& plans, const EvalOptions& opt) {
  if (plans.empty()) throw ConfigError("evaluation: no plans");
  if (opt.rounds < 1) throw ConfigError("evaluation: rounds must be at least 1");
  if (opt.fid && plans.size() < 2) throw ConfigError("evaluation: FID needs at least two plans");
  EvalReport report;
  report.plans = static_cast<int>(plans.size());
  report.options = opt;
  report.modelHash = bundle.model_hash();
  const RandomConvFeatures extractor(bundle.vocab.num_categories());
  report.extractor = extractor.name();

  std::vector<BubbleDiagram> diagrams;
  std::vector<Raster> reference;
  for (const auto& fp : plans) {
    diagrams.push_back(derive_diagram(fp, bundle.vocab, opt.epsilon));
    if (opt.fid) reference.push_back(rasterize(fp, bundle.vocab));
  }
  std::vector<double> ged, fid;
  for (int r = 0; r < opt.rounds; ++r) {
    double gedSum = 0;
    std::vector<Raster> generated;
    for (std::size_t i = 0; i < plans.size(); ++i) {
      GenerationRequest req;
      req.diagram = diagrams[i];
      req.seed = opt.seed + static_cast<std::uint64_t>(r) * plans.size() + i;
      req.topK = opt.topK;
      req.refineIters = opt.refineIters;
      const auto result = generate(req, bundle);
      const Floorplan& fp = result.candidates.front().plan;
      if (opt.ged) gedSum += compatibility(req.diagram, fp, bundle.vocab, opt.epsilon).distance;
      if (opt.fid) generated.push_back(rasterize(fp, bundle.vocab));
    }
    if (opt.ged) ged.push_back(gedSum / static_cast<double>(plans.size()));
    if (opt.fid) fid.push_back(fid_diversity(generated, reference, extractor));
  }
  report.ged = summarize(ged);
  report.fid = summarize(fid);
  return report;
}

Json to_json(const EvalReport& r) {
  Json metrics = Json::object();
  if (r.options.ged) metrics["ged"] = to_json(r.ged);
  if (r.options.fid) metrics["fid"] = to_json(r.fid);
  return {{"plans", r.plans},
          {"rounds", r.options.rounds},
          {"refine_iters", r.options.refineIters},
          {"top_k", r.options.topK},
          {"seed", r.options.seed},
          {"epsilon", r.options.epsilon},
          {"feature_extractor", r.extractor},
          {"model_hash", r.modelHash},
          {"metrics", std::move(metrics)}};
}

}  // namespace planforge
