#include "planforge/training.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "planforge/data.hpp"
#include "planforge/graph.hpp"

namespace planforge {

namespace {

const std::set<std::string> kTrainKeys = {"corpus",       "out",          "epochs",       "batch_size",
                                          "lr",           "weight_decay", "clip_norm",    "refine_iters",
                                          "top_k",        "seed",         "refiner_input", "corruption_rate",
                                          "geometric_weight", "model"};
const std::set<std::string> kModelKeys = {"d", "L", "h", "ffn_multiplier", "gcn_layers", "max_elements",
                                          "share_transformer"};

template <typename T>
T read(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("training config: '") + key + "' has the wrong type");
  }
}

std::vector<int> ground_truth_tokens(const std::vector<Box>& boxes) {
  std::vector<int> out;
  for (const auto& b : boxes) out.insert(out.end(), {b.xL, b.yT, b.xR, b.yB});
  return out;
}

}  // namespace

TrainConfig train_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!kTrainKeys.count(key)) throw ConfigError("training config: unknown key '" + key + "'");
  TrainConfig c;
  c.corpusPath = read<std::string>(j, "corpus", c.corpusPath);
  c.outputDir = read<std::string>(j, "out", c.outputDir);
  c.epochs = read<int>(j, "epochs", c.epochs);
  c.batchSize = read<int>(j, "batch_size", c.batchSize);
  c.optimizer.learningRate = read<double>(j, "lr", c.optimizer.learningRate);
  c.optimizer.weightDecay = read<double>(j, "weight_decay", c.optimizer.weightDecay);
  c.optimizer.clipNorm = read<double>(j, "clip_norm", c.optimizer.clipNorm);
  c.refineIters = read<int>(j, "refine_iters", c.refineIters);
  c.topK = read<int>(j, "top_k", c.topK);
  c.seed = read<std::uint64_t>(j, "seed", c.seed);
  c.corruptionRate = read<double>(j, "corruption_rate", c.corruptionRate);
  c.geometricWeight = read<double>(j, "geometric_weight", c.geometricWeight);
  const std::string mode = read<std::string>(j, "refiner_input", "on_policy");
  if (mode == "on_policy") c.refinerInput = RefinerInput::onPolicy;
  else if (mode == "corrupted") c.refinerInput = RefinerInput::corrupted;
  else throw ConfigError("training config: refiner_input must be 'on_policy' or 'corrupted'");
  if (j.contains("model")) {
    const Json& m = j.at("model");
    if (!m.is_object()) throw ConfigError("training config: 'model' must be an object");
    for (const auto& [key, value] : m.items())
      if (!kModelKeys.count(key)) throw ConfigError("training config: unknown model key '" + key + "'");
    const int numCategories = c.model.numCategories;
    try {
      c.model = config_from_json(m);
    } catch (const Json::exception&) {
      throw ConfigError("training config: model section has a value of the wrong type");
    }
    c.model.numCategories = numCategories;
  }
  if (c.epochs < 1) throw ConfigError("training config: epochs must be at least 1");
  if (c.batchSize < 1) throw ConfigError("training config: batch_size must be at least 1");
  if (c.refineIters < 1) throw ConfigError("training config: refine_iters must be at least 1");
  if (c.topK < 1 || c.topK > kCoordBins) throw ConfigError("training config: top_k must lie in [1, 256]");
  if (!(c.optimizer.learningRate > 0)) throw ConfigError("training config: lr must be positive");
  if (c.corruptionRate < 0 || c.corruptionRate > 1) throw ConfigError("training config: corruption_rate must lie in [0, 1]");
  if (c.model.dim < 1 || c.model.layers < 1 || c.model.heads < 1 || c.model.dim % c.model.heads != 0)
    throw ConfigError("training config: d must be a positive multiple of h");
  if (c.model.gcnLayers < 1 || c.model.maxElements < 1 || c.model.ffnMultiplier < 1)
    throw ConfigError("training config: gcn_layers, max_elements and ffn_multiplier must be positive");
  return c;
}

Json to_json(const TrainConfig& c) {
  Json model = config_to_json(c.model);
  model.erase("N_c");
  return {{"corpus", c.corpusPath},
          {"out", c.outputDir},
          {"epochs", c.epochs},
          {"batch_size", c.batchSize},
          {"lr", c.optimizer.learningRate},
          {"weight_decay", c.optimizer.weightDecay},
          {"clip_norm", c.optimizer.clipNorm},
          {"refine_iters", c.refineIters},
          {"top_k", c.topK},
          {"seed", c.seed},
          {"refiner_input", c.refinerInput == RefinerInput::onPolicy ? "on_policy" : "corrupted"},
          {"corruption_rate", c.corruptionRate},
          {"geometric_weight", c.geometricWeight},
          {"model", std::move(model)}};
}

std::vector<int> TrainingSample::draft_targets() const {
  std::vector<int> t(input.length(), -1);
  for (std::size_t i = 0; i < coords.size(); ++i) t[i] = coords[i];
  return t;
}

TrainingSample make_training_sample(const Floorplan& fp, const Vocabulary& vocab,
                                    const CategoryPositionStats& stats, int maxElements) {
  // Diagram node i is plan element i.
  const BubbleDiagram bd = derive_diagram(fp, vocab);
  TrainingSample s;
  s.diagram = prepare_diagram(bd, vocab, stats, maxElements);
  for (int node : s.diagram.graph.parsed.order) s.boxes.push_back(fp.elements[static_cast<std::size_t>(node)].box);
  s.coords = ground_truth_tokens(s.boxes);
  s.input = s.diagram.skeleton;
  std::copy(s.coords.begin(), s.coords.end(), s.input.tokens.begin() + 1);
  return s;
}

PreparedCorpus prepare_corpus(const std::vector<Floorplan>& plans, const Vocabulary& vocab,
                              const CategoryPositionStats& stats, int maxElements) {
  PreparedCorpus out;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    try {
      out.samples.push_back(make_training_sample(hybrid_sort(plans[i], stats, vocab), vocab, stats, maxElements));
    } catch (const ValidationError& e) {
      out.skipped.emplace_back(i, e.what());
    }
  }
  return out;
}

Json metrics_json(const StepReport& r) {
  return {{"step", r.step},
          {"L_ar", r.loss.arLoss},
          {"L_ref", r.loss.refineLoss},
          {"L_geo_draft", r.loss.geoDraft},
          {"L_geo_refine", r.loss.geoRefine},
          {"total", r.loss.total}};
}

Trainer::Trainer(TrainConfig config, ModelBundle& bundle)
    : config_(std::move(config)),
      bundle_(bundle),
      grad_(nn::PlanModel<float>::zeros_like(bundle.model)),
      optimizer_(bundle.model, config_.optimizer),
      rng_(config_.seed ^ 0x9e3779b97f4a7c15ULL) {
  if (bundle.model.config.numCategories != bundle.vocab.num_categories())
    throw ConfigError("trainer: model and vocabulary disagree on the category count");
}

std::vector<int> Trainer::refiner_start(const TrainingSample& s) {
  if (config_.refinerInput == RefinerInput::onPolicy) return sample_draft(bundle_.model, s.diagram, config_.topK, rng_);
  std::vector<int> coords = s.coords;
  std::bernoulli_distribution hit(config_.corruptionRate);
  std::uniform_int_distribution<int> offset(1, 16);
  std::bernoulli_distribution negative(0.5);
  for (int& c : coords)
    if (hit(rng_)) c = std::clamp(c + (negative(rng_) ? -offset(rng_) : offset(rng_)), 0, kCoordBins - 1);
  return coords;
}

LossReport Trainer::accumulate(const TrainingSample& s, double weight, long& correct, long& supervised) {
  const auto& model = bundle_.model;
  const auto n4 = static_cast<Eigen::Index>(s.coords.size());
  const auto geoWeight = static_cast<float>(config_.geometricWeight);
  const auto w = static_cast<float>(weight);

  typename nn::DraftModel<float>::Cache dc;
  const nn::Matrix<float> logits = model.draft.forward(s.input, s.diagram.causal, dc);
  const auto ce = cross_entropy(logits, s.draft_targets());
  const auto geo = geometric_loss(logits.topRows(n4), s.boxes);
  correct += ce.correct;
  supervised += n4;
  nn::Matrix<float> dLogits = ce.grad;
  dLogits.topRows(n4) += geoWeight * geo.grad;
  dLogits *= w;
  model.draft.backward(dc, dLogits, grad_.draft);

  // Refinement rounds: each trains against the ground truth on its own
  // input; the greedy decode between rounds carries no gradient.
  std::vector<int> coords = refiner_start(s);
  const nn::Matrix<float> context = model.refiner_context(s.input);
  const int rounds = config_.refineIters;
  std::vector<double> refCe, refGeo;
  typename nn::RefinerModel<float>::Cache rc;
  for (int r = 0; r < rounds; ++r) {
    const nn::Matrix<float> out = model.refiner.forward(coords, context, s.diagram.interior, model.refiner_transformer(), rc);
    const auto rce = cross_entropy(out, s.coords);
    const auto rgeo = geometric_loss(out, s.boxes);
    refCe.push_back(static_cast<double>(rce.mean));
    refGeo.push_back(static_cast<double>(rgeo.value));
    nn::Matrix<float> d = rce.grad + geoWeight * rgeo.grad;
    d *= w / static_cast<float>(rounds);
    const nn::Matrix<float> dContext =
        model.refiner.backward(rc, d, model.refiner_transformer(), grad_.refiner, grad_.refiner_transformer());
    model.backward_context(s.input, dContext, grad_);
    coords = decode_greedy(out);
  }
  LossReport report = combine_losses(static_cast<double>(ce.mean), refCe, static_cast<double>(geo.value), refGeo);
  // The reported total follows the configured geometric weight.
  report.total = report.reconstruction + config_.geometricWeight * (report.geoDraft + report.geoRefine);
  return report;
}

StepReport Trainer::step(const std::vector<const TrainingSample*>& batch) {
  if (batch.empty()) throw ConfigError("trainer: empty batch");
  grad_.visit([](const std::string&, nn::Matrix<float>& g, bool) { g.setZero(); });
  StepReport out;
  const double weight = 1.0 / static_cast<double>(batch.size());
  std::vector<double> refSum(static_cast<std::size_t>(config_.refineIters), 0.0);
  for (const TrainingSample* s : batch) {
    const LossReport r = accumulate(*s, weight, out.correct, out.supervised);
    out.loss.arLoss += weight * r.arLoss;
    out.loss.geoDraft += weight * r.geoDraft;
    out.loss.geoRefine += weight * r.geoRefine;
    out.loss.reconstruction += weight * r.reconstruction;
    out.loss.total += weight * r.total;
    for (std::size_t k = 0; k < refSum.size(); ++k) refSum[k] += weight * r.refineLoss[k];
  }
  out.loss.refineLoss = refSum;
  out.gradNorm = optimizer_.step(bundle_.model, grad_);
  out.step = optimizer_.steps();
  return out;
}

std::vector<EpochReport> Trainer::fit(const std::vector<TrainingSample>& samples, std::ostream* metrics,
                                      const std::function<void(const EpochReport&)>& onEpoch) {
  if (samples.empty()) throw ConfigError("trainer: no training samples");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle(config_.seed);
  std::vector<EpochReport> reports;
  for (int epoch = 1; epoch <= config_.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle);
    EpochReport rep;
    rep.epoch = epoch;
    long correct = 0, supervised = 0;
    std::vector<double> refSum(static_cast<std::size_t>(config_.refineIters), 0.0);
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(config_.batchSize)) {
      std::vector<const TrainingSample*> batch;
      for (std::size_t k = first; k < std::min(order.size(), first + static_cast<std::size_t>(config_.batchSize)); ++k)
        batch.push_back(&samples[order[k]]);
      const StepReport r = step(batch);
      if (metrics) *metrics << metrics_json(r).dump() << '\n';
      correct += r.correct;
      supervised += r.supervised;
      ++rep.steps;
      rep.meanLoss.arLoss += r.loss.arLoss;
      rep.meanLoss.geoDraft += r.loss.geoDraft;
      rep.meanLoss.geoRefine += r.loss.geoRefine;
      rep.meanLoss.reconstruction += r.loss.reconstruction;
      rep.meanLoss.total += r.loss.total;
      for (std::size_t k = 0; k < refSum.size(); ++k) refSum[k] += r.loss.refineLoss[k];
    }
    const double inv = 1.0 / static_cast<double>(rep.steps);
    rep.meanLoss.arLoss *= inv;
    rep.meanLoss.geoDraft *= inv;
    rep.meanLoss.geoRefine *= inv;
    rep.meanLoss.reconstruction *= inv;
    rep.meanLoss.total *= inv;
    for (double& v : refSum) v *= inv;
    rep.meanLoss.refineLoss = refSum;
    rep.trainAccuracy = supervised ? static_cast<double>(correct) / static_cast<double>(supervised) : 0.0;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (metrics) metrics->flush();
    if (onEpoch) onEpoch(rep);
    reports.push_back(rep);
  }
  return reports;
}

double teacher_forced_accuracy(const nn::PlanModel<float>& model, const std::vector<TrainingSample>& samples) {
  long correct = 0, total = 0;
  typename nn::DraftModel<float>::Cache dc;
  for (const auto& s : samples) {
    const nn::Matrix<float> logits = model.draft.forward(s.input, s.diagram.causal, dc);
    correct += cross_entropy(logits, s.draft_targets(), false).correct;
    total += static_cast<long>(s.coords.size());
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

std::vector<EpochReport> run_training(const TrainConfig& config, const Vocabulary& vocab, std::ostream* log) {
  if (config.corpusPath.empty()) throw ConfigError("training config: 'corpus' is required");
  if (config.outputDir.empty()) throw ConfigError("training config: 'out' is required");
  const auto plans = read_corpus(config.corpusPath, vocab);
  if (plans.empty()) throw ConfigError("training corpus " + config.corpusPath + " is empty");

  ModelBundle bundle;
  bundle.vocab = vocab;
  const std::string statsPath = stats_path_for(config.corpusPath);
  if (std::filesystem::exists(statsPath)) {
    std::ifstream is(statsPath);
    bundle.stats = stats_from_json(Json::parse(is), vocab);
  } else {
    bundle.stats = compute_category_stats(plans);
  }
  nn::ModelConfig mc = config.model;
  mc.numCategories = vocab.num_categories();
  bundle.model = nn::PlanModel<float>::initialized(mc, config.seed);

  const PreparedCorpus corpus = prepare_corpus(plans, vocab, bundle.stats, mc.maxElements);
  if (log) {
    *log << "corpus: " << corpus.samples.size() << " samples, " << corpus.skipped.size() << " skipped\n";
    for (const auto& [index, reason] : corpus.skipped) *log << "  skipped plan " << index << ": " << reason << '\n';
  }
  if (corpus.samples.empty()) throw ConfigError("training corpus has no usable plans");

  std::filesystem::create_directories(config.outputDir);
  std::ofstream metrics(std::filesystem::path(config.outputDir) / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw ConfigError("cannot write metrics under " + config.outputDir);
  TrainConfig effective = config;
  effective.model = mc;
  Trainer trainer(effective, bundle);
  const std::string ckpt = (std::filesystem::path(config.outputDir) / "model.ckpt").string();
  auto reports = trainer.fit(corpus.samples, &metrics, [&](const EpochReport& r) {
    if (log) {
      char line[256];
      std::snprintf(line, sizeof line, "epoch %d: steps %ld  L_ar %.4f  L_ref %.4f  L_geo %.4f/%.4f  acc %.4f  %.1fs\n",
                    r.epoch, r.steps, r.meanLoss.arLoss,
                    r.meanLoss.refineLoss.empty() ? 0.0 : r.meanLoss.refineLoss.back(), r.meanLoss.geoDraft,
                    r.meanLoss.geoRefine, r.trainAccuracy, r.seconds);
      *log << line << std::flush;
    }
    bundle.meta = {{"epochs", r.epoch}, {"steps", trainer.steps()}, {"train_config", to_json(effective)}};
    save_checkpoint(ckpt, bundle);
  });
  return reports;
}

}  // namespace planforge
