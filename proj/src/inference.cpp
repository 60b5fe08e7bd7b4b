#include "planforge/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "planforge/evaluation.hpp"

namespace planforge {

namespace {

constexpr int kMaxCandidates = 64;
constexpr int kMaxRefineIters = 50;

void apply_locks(std::vector<int>& coords, const LockMask& locks) {
  for (std::size_t k = 0; k < locks.size() && k < coords.size(); ++k)
    if (locks[k] >= 0) coords[k] = locks[k];
}

std::vector<int> reference_coords(const std::vector<Box>& boxes) {
  std::vector<int> out;
  out.reserve(4 * boxes.size());
  for (const auto& b : boxes) out.insert(out.end(), {b.xL, b.yT, b.xR, b.yB});
  return out;
}

LockMask lock_mask(const PreparedDiagram& d, const std::map<std::string, Box>& boxes) {
  if (boxes.empty()) return {};
  LockMask mask(static_cast<std::size_t>(4 * d.num_elements()), -1);
  for (const auto& [id, b] : boxes) {
    const int k = d.element_of(id);
    if (k < 0) throw ValidationError("locks." + id, "unknown room");
    const int v[4] = {b.xL, b.yT, b.xR, b.yB};
    for (int c = 0; c < 4; ++c) mask[static_cast<std::size_t>(4 * k + c)] = v[c];
  }
  return mask;
}

void require_model_matches(const ModelBundle& bundle) {
  if (bundle.model.config.numCategories != bundle.vocab.num_categories())
    throw ConfigError("model expects " + std::to_string(bundle.model.config.numCategories) +
                      " categories, vocabulary has " + std::to_string(bundle.vocab.num_categories()));
}

}  // namespace

std::vector<double> top_k_distribution(const Eigen::Ref<const Eigen::RowVectorXf>& logits, int k) {
  const auto bins = static_cast<int>(logits.size());
  if (k < 1 || k > bins) throw ConfigError("top-k must lie in [1, " + std::to_string(bins) + "], got " + std::to_string(k));
  for (int j = 0; j < bins; ++j)
    if (!std::isfinite(logits(j))) throw NumericError("non-finite logit at bin " + std::to_string(j), j);
  const double peak = static_cast<double>(logits.maxCoeff());
  std::vector<double> p(static_cast<std::size_t>(bins));
  for (int j = 0; j < bins; ++j) p[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(logits(j)) - peak);
  std::vector<int> idx(static_cast<std::size_t>(bins));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    const double pa = p[static_cast<std::size_t>(a)], pb = p[static_cast<std::size_t>(b)];
    return pa != pb ? pa > pb : a < b;
  });
  std::vector<double> out(static_cast<std::size_t>(bins), 0.0);
  double total = 0;
  for (int r = 0; r < k; ++r) total += p[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])];
  for (int r = 0; r < k; ++r) {
    const auto j = static_cast<std::size_t>(idx[static_cast<std::size_t>(r)]);
    out[j] = p[j] / total;
  }
  return out;
}

std::vector<double> step_decode(const nn::PlanModel<float>& model, const nn::SequenceInput& prefix,
                                const DenseMatrix<double>& schedule, const Vocabulary& vocab, int topK) {
  const auto t = static_cast<Eigen::Index>(prefix.length());
  if (t == 0) throw ShapeError("step_decode: empty prefix");
  if (prefix.tokens.front() != vocab.bos()) throw ShapeError("step_decode: prefix must start with BoS");
  if (schedule.rows() < t || schedule.cols() < t) throw ShapeError("step_decode: schedule shorter than the prefix");
  typename nn::DraftModel<float>::Cache cache;
  const nn::Matrix<float> logits =
      model.draft.forward(prefix, schedule.topLeftCorner(t, t).cast<float>(), cache);
  return top_k_distribution(logits.row(t - 1), topK);
}

int sample_index(const std::vector<double>& dist, std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double acc = 0;
  int last = -1;
  for (std::size_t j = 0; j < dist.size(); ++j) {
    if (dist[j] <= 0) continue;
    last = static_cast<int>(j);
    acc += dist[j];
    if (u < acc) return last;
  }
  if (last < 0) throw NumericError("sample_index: empty distribution");
  return last;
}

std::vector<int> decode_greedy(const LogitMatrix<float>& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      if (!std::isfinite(logits(r, c)))
        throw NumericError("decode_greedy: non-finite logit at position " + std::to_string(r), static_cast<long>(r));
      if (logits(r, c) > logits(r, best)) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

int PreparedDiagram::element_of(const std::string& nodeId) const {
  const int node = diagram.index_of(nodeId);
  if (node < 0) return -1;
  const auto& order = graph.parsed.order;
  return static_cast<int>(std::find(order.begin(), order.end(), node) - order.begin());
}

PreparedDiagram prepare_diagram(const BubbleDiagram& bd, const Vocabulary& vocab,
                                const CategoryPositionStats& stats, int maxElements) {
  if (bd.nodes.empty()) throw ValidationError("nodes", "diagram has no nodes");
  if (static_cast<int>(bd.nodes.size()) > maxElements)
    throw ValidationError("nodes", "diagram has " + std::to_string(bd.nodes.size()) +
                                       " nodes; the model supports at most " + std::to_string(maxElements));
  PreparedDiagram d;
  d.diagram = bd;
  d.graph = make_graph_context(parse_bubble_diagram(bd, vocab, &stats));
  const int n = d.num_elements();
  auto& s = d.skeleton;
  s.tokens.assign(static_cast<std::size_t>(4 * n + 2), 0);
  s.tokens.front() = vocab.bos();
  s.tokens.back() = vocab.eos();
  s.categories.assign(s.tokens.size(), vocab.pad());
  for (int k = 0; k < n; ++k)
    for (int c = 0; c < 4; ++c)
      s.categories[static_cast<std::size_t>(1 + 4 * k + c)] = kCoordBins + d.graph.parsed.categories[static_cast<std::size_t>(k)];
  s.positions.resize(s.tokens.size());
  std::iota(s.positions.begin(), s.positions.end(), 0);
  d.causal = d.graph.causal.cast<float>();
  d.interior = d.graph.interior.cast<float>();
  return d;
}

Floorplan plan_from_coords(const PreparedDiagram& d, const std::vector<int>& coords, const Vocabulary& vocab) {
  if (coords.size() != d.skeleton.length() - 2)
    throw ShapeError("plan_from_coords: expected " + std::to_string(d.skeleton.length() - 2) + " coordinates, got " +
                     std::to_string(coords.size()));
  TokenSequence seq{d.skeleton.tokens, d.skeleton.categories, d.skeleton.positions};
  std::copy(coords.begin(), coords.end(), seq.tokens.begin() + 1);
  return unflatten(seq, vocab, d.graph.parsed.order).plan;
}

std::vector<int> coords_from_plan(const Floorplan& fp) { return reference_coords(boxes_of(fp)); }

RefinementTrace refine_loop(const nn::PlanModel<float>& model, const PreparedDiagram& d,
                            const std::vector<int>& draft, int iterations, const Vocabulary& vocab,
                            const LockMask& locks, const std::vector<Box>* reference) {
  if (iterations < 1) throw ConfigError("refinement iterations must be at least 1, got " + std::to_string(iterations));
  const std::size_t length = d.skeleton.length() - 2;
  if (draft.size() != length) throw ShapeError("refine_loop: draft length does not match the diagram");
  if (!locks.empty() && locks.size() != length) throw ShapeError("refine_loop: lock mask length does not match");
  if (reference && reference->size() * 4 != length) throw ShapeError("refine_loop: reference box count does not match");

  const auto truthIou = reference ? iou_matrix(*reference) : IoUMatrix<double>();
  const auto targets = reference ? reference_coords(*reference) : std::vector<int>();
  auto record = [&](int iteration, std::vector<int> coords, std::optional<double> ce) {
    RefinementStep step;
    step.iteration = iteration;
    step.plan = plan_from_coords(d, coords, vocab);
    step.coords = std::move(coords);
    step.crossEntropy = ce;
    if (reference) step.geometric = iou_discrepancy(iou_matrix(boxes_of(step.plan)), truthIou);
    return step;
  };

  RefinementTrace trace;
  std::vector<int> coords = draft;
  apply_locks(coords, locks);
  trace.steps.push_back(record(0, coords, std::nullopt));
  const nn::Matrix<float> context = model.refiner_context(d.skeleton);
  typename nn::RefinerModel<float>::Cache cache;
  for (int it = 1; it <= iterations; ++it) {
    const nn::Matrix<float> logits =
        model.refiner.forward(coords, context, d.interior, model.refiner_transformer(), cache);
    std::optional<double> ce;
    if (reference) ce = static_cast<double>(cross_entropy(logits, targets, false).mean);
    coords = decode_greedy(logits);
    apply_locks(coords, locks);
    trace.steps.push_back(record(it, coords, ce));
  }
  return trace;
}

std::vector<int> sample_draft(const nn::PlanModel<float>& model, const PreparedDiagram& d, int topK,
                              std::mt19937_64& rng, const LockMask& locks) {
  const auto length = static_cast<Eigen::Index>(d.skeleton.length());
  const auto& s = d.skeleton;
  typename nn::DraftModel<float>::DecodeState state;
  std::vector<int> coords;
  coords.reserve(static_cast<std::size_t>(length - 2));
  int token = s.tokens.front();
  for (Eigen::Index t = 0; t + 2 < length; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const nn::Matrix<float> logits = model.draft.step(state, token, s.categories[ut], s.positions[ut], d.causal.row(t));
    const int lock = locks.empty() ? -1 : locks[ut];
    token = lock >= 0 ? lock : sample_index(top_k_distribution(logits.row(0), topK), rng);
    coords.push_back(token);
  }
  return coords;
}

void validate(const GenerationRequest& req, const Vocabulary& vocab) {
  std::vector<FieldError> errors;
  if (req.numCandidates < 1 || req.numCandidates > kMaxCandidates)
    errors.push_back({"numCandidates", "must lie in [1, " + std::to_string(kMaxCandidates) + "]"});
  if (req.topK < 1 || req.topK > kCoordBins) errors.push_back({"topK", "must lie in [1, 256]"});
  if (req.refineIters < 0 || req.refineIters > kMaxRefineIters)
    errors.push_back({"refineIters", "must lie in [0, " + std::to_string(kMaxRefineIters) + "]"});
  for (const auto& [id, b] : req.locks) {
    if (req.diagram.index_of(id) < 0) errors.push_back({"locks." + id, "unknown room"});
    else if (!b.valid()) errors.push_back({"locks." + id, "invalid box"});
  }
  try {
    validate(req.diagram, vocab);
  } catch (const ValidationError& e) {
    errors.insert(errors.end(), e.errors().begin(), e.errors().end());
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

GenerationResult generate(const GenerationRequest& req, const ModelBundle& bundle) {
  validate(req, bundle.vocab);
  require_model_matches(bundle);
  const auto& vocab = bundle.vocab;
  const PreparedDiagram d = prepare_diagram(req.diagram, vocab, bundle.stats, bundle.model.config.maxElements);
  const LockMask locks = lock_mask(d, req.locks);

  GenerationResult out;
  out.request = req;
  out.modelHash = bundle.model_hash();
  out.vocabHash = vocab.hash();
  for (int i = 0; i < req.numCandidates; ++i) {
    Candidate c;
    c.seed = req.seed + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(c.seed);
    const std::vector<int> draft = sample_draft(bundle.model, d, req.topK, rng, locks);
    if (req.refineIters > 0) {
      c.trace = refine_loop(bundle.model, d, draft, req.refineIters, vocab, locks);
    } else {
      c.trace.steps.push_back({0, plan_from_coords(d, draft, vocab), draft, std::nullopt, std::nullopt});
    }
    c.plan = c.trace.final().plan;
    c.compatibility = compatibility(req.diagram, c.plan, vocab);
    out.candidates.push_back(std::move(c));
  }
  return out;
}

RefinementTrace edit_and_refine(const Floorplan& fp, const std::map<std::string, Box>& edits,
                                const BubbleDiagram& diagram, int iters, const ModelBundle& bundle) {
  require_model_matches(bundle);
  const auto& vocab = bundle.vocab;
  if (iters < 0 || iters > kMaxRefineIters)
    throw ValidationError("iters", "must lie in [0, " + std::to_string(kMaxRefineIters) + "]");
  const PreparedDiagram d = prepare_diagram(diagram, vocab, bundle.stats, bundle.model.config.maxElements);

  std::vector<FieldError> errors;
  std::vector<Box> boxes;
  for (int k = 0; k < d.num_elements(); ++k) {
    const int node = d.graph.parsed.order[static_cast<std::size_t>(k)];
    const auto it = std::find_if(fp.elements.begin(), fp.elements.end(),
                                 [&](const Element& e) { return e.roomIndex == node; });
    const std::string& id = diagram.nodes[static_cast<std::size_t>(node)].id;
    if (it == fp.elements.end() || it->category != diagram.nodes[static_cast<std::size_t>(node)].category) {
      errors.push_back({"plan", "no element matches diagram node '" + id + "'"});
      continue;
    }
    boxes.push_back(it->box);
  }
  if (fp.size() != static_cast<std::size_t>(d.num_elements()))
    errors.push_back({"plan", "element count differs from the diagram"});
  for (const auto& [id, b] : edits) {
    if (d.element_of(id) < 0) errors.push_back({"edits." + id, "unknown room"});
    else if (!b.valid()) errors.push_back({"edits." + id, "invalid box"});
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));

  const LockMask locks = lock_mask(d, edits);
  std::vector<int> coords = reference_coords(boxes);
  apply_locks(coords, locks);
  if (iters == 0) {
    RefinementTrace trace;
    trace.steps.push_back({0, plan_from_coords(d, coords, vocab), coords, std::nullopt, std::nullopt});
    return trace;
  }
  return refine_loop(bundle.model, d, coords, iters, vocab, locks);
}

Json to_json(const RefinementTrace& trace, const Vocabulary& vocab) {
  Json steps = Json::array();
  for (const auto& s : trace.steps) {
    Json j = {{"iteration", s.iteration}, {"plan", to_json(s.plan, vocab)}};
    if (s.crossEntropy) j["crossEntropy"] = *s.crossEntropy;
    if (s.geometric) j["geometric"] = *s.geometric;
    steps.push_back(std::move(j));
  }
  return steps;
}

Json to_json(const GenerationRequest& req, const Vocabulary& vocab) {
  Json locks = Json::object();
  for (const auto& [id, b] : req.locks) locks[id] = to_json(b);
  return {{"diagram", to_json(req.diagram, vocab)},
          {"numCandidates", req.numCandidates},
          {"seed", req.seed},
          {"topK", req.topK},
          {"refineIters", req.refineIters},
          {"locks", std::move(locks)}};
}

GenerationRequest generation_request_from_json(const Json& j, const BubbleDiagram& diagram) {
  if (!j.is_object()) throw ValidationError("body", "must be a JSON object");
  GenerationRequest req;
  req.diagram = diagram;
  std::vector<FieldError> errors;
  auto integer = [&](const char* key, auto& target) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    if (!v.is_number_integer()) {
      errors.push_back({key, "must be an integer"});
      return;
    }
    if (v.is_number_unsigned()) target = static_cast<std::remove_reference_t<decltype(target)>>(v.get<std::uint64_t>());
    else target = static_cast<std::remove_reference_t<decltype(target)>>(v.get<std::int64_t>());
  };
  integer("numCandidates", req.numCandidates);
  integer("seed", req.seed);
  integer("topK", req.topK);
  integer("refineIters", req.refineIters);
  if (j.contains("seed") && j.at("seed").is_number_integer() && !j.at("seed").is_number_unsigned() &&
      j.at("seed").get<std::int64_t>() < 0)
    errors.push_back({"seed", "must be non-negative"});
  if (j.contains("locks") && !j.at("locks").is_null()) {
    if (!j.at("locks").is_object()) {
      errors.push_back({"locks", "must map room ids to boxes"});
    } else {
      for (const auto& [id, box] : j.at("locks").items()) {
        try {
          req.locks[id] = box_from_json(box, "locks." + id);
        } catch (const ValidationError& e) {
          errors.insert(errors.end(), e.errors().begin(), e.errors().end());
        }
      }
    }
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return req;
}

Json to_json(const GenerationResult& result, const Vocabulary& vocab) {
  Json candidates = Json::array();
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const auto& c = result.candidates[i];
    candidates.push_back({{"index", i},
                          {"seed", c.seed},
                          {"plan", to_json(c.plan, vocab)},
                          {"trace", to_json(c.trace, vocab)},
                          {"compatibility", c.compatibility.distance},
                          {"compatibilityExact", c.compatibility.exact}});
  }
  return {{"request", to_json(result.request, vocab)},
          {"candidates", std::move(candidates)},
          {"modelHash", result.modelHash},
          {"vocabHash", result.vocabHash}};
}

}  // namespace planforge
