#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "planforge/checkpoint.hpp"
#include "planforge/inference.hpp"
#include "planforge/nn/adamw.hpp"
#include "planforge/objectives.hpp"

namespace planforge {

/// How the refiner's first input is produced during training.
enum class RefinerInput {
  /// Student-forced top-k draft sampled from the current draft weights.
  onPolicy,
  /// Ground truth with a fraction of coordinates displaced at random.
  corrupted,
};

struct TrainConfig {
  nn::ModelConfig model;
  nn::AdamWConfig optimizer;
  int epochs = 20;
  int batchSize = 128;
  int refineIters = kDefaultRefineIters;
  int topK = kDefaultTopK;
  std::uint64_t seed = 0;
  RefinerInput refinerInput = RefinerInput::onPolicy;
  /// Share of coordinates displaced in corrupted mode.
  double corruptionRate = 0.15;
  /// Weight of both geometric terms; 1 keeps the plain sum.
  double geometricWeight = 1.0;

  std::string corpusPath;
  std::string outputDir;
};

/// Keys: corpus, out, epochs, batch_size, lr, weight_decay, clip_norm,
/// refine_iters, top_k, seed, refiner_input ("on_policy" | "corrupted"),
/// corruption_rate, model {d, L, h, ffn_multiplier, gcn_layers, max_elements,
/// share_transformer}. Missing keys keep their defaults; unknown keys and bad
/// values raise ConfigError.
TrainConfig train_config_from_json(const Json& j);
Json to_json(const TrainConfig& c);

/// One supervised plan: its diagram (from the plan's own geometry), the
/// teacher-forcing input and the ground-truth boxes in element order.
struct TrainingSample {
  PreparedDiagram diagram;
  nn::SequenceInput input;
  std::vector<int> coords;  // 4N ground-truth coordinate tokens
  std::vector<Box> boxes;

  int num_elements() const { return diagram.num_elements(); }
  /// Draft targets: row t predicts token t + 1; rows targeting EoS or
  /// beyond are masked with -1.
  std::vector<int> draft_targets() const;
};

/// Throws ValidationError when the plan's reconstructed diagram is invalid
/// (for example a door touching no room) or it exceeds `maxElements`.
TrainingSample make_training_sample(const Floorplan& fp, const Vocabulary& vocab,
                                    const CategoryPositionStats& stats, int maxElements);

struct PreparedCorpus {
  std::vector<TrainingSample> samples;
  /// Plans rejected by make_training_sample, with the reason.
  std::vector<std::pair<std::size_t, std::string>> skipped;
};
PreparedCorpus prepare_corpus(const std::vector<Floorplan>& plans, const Vocabulary& vocab,
                              const CategoryPositionStats& stats, int maxElements);

/// Mean losses over one optimizer step.
struct StepReport {
  long step = 0;
  LossReport loss;
  double gradNorm = 0;
  long correct = 0;     // teacher-forced argmax hits
  long supervised = 0;  // supervised draft rows
};

/// {"step", "L_ar", "L_ref": [...], "L_geo_draft", "L_geo_refine", "total"}
Json metrics_json(const StepReport& r);

struct EpochReport {
  int epoch = 0;
  long steps = 0;
  LossReport meanLoss;
  double trainAccuracy = 0;  // running teacher-forced accuracy during the epoch
  double seconds = 0;
};

/// Per-sample gradient accumulation over a batch, one AdamW update per batch.
class Trainer {
 public:
  /// `bundle` supplies vocabulary and statistics and receives the weights.
  Trainer(TrainConfig config, ModelBundle& bundle);

  /// Forward and backward over `batch`, then one optimizer update.
  StepReport step(const std::vector<const TrainingSample*>& batch);

  /// Shuffled epochs over `samples`. Writes one metrics line per step when
  /// `metrics` is given and calls `onEpoch` after each epoch.
  std::vector<EpochReport> fit(const std::vector<TrainingSample>& samples, std::ostream* metrics = nullptr,
                               const std::function<void(const EpochReport&)>& onEpoch = {});

  const TrainConfig& config() const { return config_; }
  long steps() const { return optimizer_.steps(); }

 private:
  /// Accumulates one sample's gradient into grad_ (scaled by `weight`).
  LossReport accumulate(const TrainingSample& s, double weight, long& correct, long& supervised);
  std::vector<int> refiner_start(const TrainingSample& s);

  TrainConfig config_;
  ModelBundle& bundle_;
  nn::PlanModel<float> grad_;
  nn::AdamW<float> optimizer_;
  std::mt19937_64 rng_;
};

/// Share of supervised draft rows whose argmax equals the target.
double teacher_forced_accuracy(const nn::PlanModel<float>& model, const std::vector<TrainingSample>& samples);

/// Builds the model, prepares the corpus named in the config (statistics
/// from its sidecar file, or computed), trains, and writes model.ckpt and
/// metrics.jsonl under outputDir. Returns the per-epoch reports.
std::vector<EpochReport> run_training(const TrainConfig& config, const Vocabulary& vocab,
                                      std::ostream* log = nullptr);

}  // namespace planforge
