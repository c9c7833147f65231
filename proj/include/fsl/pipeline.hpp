#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fsl/backbone.hpp"
#include "fsl/checkpoint.hpp"
#include "fsl/config.hpp"
#include "fsl/dataset.hpp"
#include "fsl/mar.hpp"
#include "fsl/metric.hpp"

namespace fsl {

/// Embedding model Psi = backbone o resizer plus the optional classification
/// head and the metric weights.
struct Model {
  BackboneParams backbone;
  std::optional<HeadParams> head;
  std::optional<MarParams> mar;
  MarConfig mar_config;
  Index mar_input_size = 32;
  Index backbone_input_size = 16;
  AsmParams metric = AsmParams::make(1.0, 0.0, true);

  /// Images (N, C, H, W) -> embeddings (N, 32). Without a resizer the images
  /// are bilinearly resized straight to the backbone input size.
  Tensor embed(Graph& g, const Tensor& images) const;
  /// Backbone, resizer and head parameters (not the metric weights).
  std::vector<NamedTensor> network_parameters() const;
};

Checkpoint make_checkpoint(const Model& model, Stage stage, std::uint64_t seed, int epoch,
                           double val_metric);
/// Throws FormatError when model-level blocks are missing or inconsistent.
Model model_from_checkpoint(const Checkpoint& checkpoint);

struct EpochRecord {
  Stage stage = Stage::kBackbone;
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double lr = 0.0;

  /// One JSON object, no trailing newline.
  std::string to_json_line() const;
};

struct StageResult {
  Checkpoint checkpoint;  // best validation epoch
  std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Stage 1: classification training of backbone + head on the train split.
/// Epoch 0 records the untrained model; the returned checkpoint is the epoch
/// with the highest validation accuracy (earliest on ties).
StageResult train_backbone_stage(const TrainConfig& config, const DatasetIndex& data,
                                 const EpochCallback& on_epoch = {});

/// Stage 2: a freshly initialized resizer in front of the stage-1 backbone,
/// trained jointly with the same classification objective.
StageResult train_joint_stage(const TrainConfig& config, const DatasetIndex& data,
                              const Checkpoint& base, const EpochCallback& on_epoch = {});

/// Stage 3: episodic training of backbone, resizer and metric weights.
StageResult finetune_stage(const TrainConfig& config, const DatasetIndex& data,
                           const Checkpoint& base, const EpochCallback& on_epoch = {});

struct EvalOptions {
  Split split = Split::kTest;
  int way = 5;
  int shot = 1;
  int query = 15;
  int episodes = 600;
  std::uint64_t seed = 0;
  /// Scores with these fixed (alpha, beta) instead of the model's own.
  std::optional<std::pair<double, double>> metric_override;
  bool keep_details = false;
};

struct EpisodeOutcome {
  Tensor logits;  // (way * query, way)
  std::vector<int> predictions;
  std::vector<int> labels;
  double accuracy = 0.0;
};

struct EvalResult {
  double mean = 0.0;  // percent
  double ci95 = 0.0;  // percent, 1.96 * standard error
  int episodes = 0;
  std::vector<double> episode_accuracy;
  std::vector<EpisodeOutcome> details;  // filled when keep_details
};

/// Episode e draws from stream (seed, e), so results do not depend on
/// evaluation order.
EvalResult evaluate(const Model& model, const DatasetIndex& data, const EvalOptions& options);
EvalResult evaluate(const Checkpoint& checkpoint, const DatasetIndex& data,
                    const EvalOptions& options);

/// Mean accuracy and 1.96 * standard error, both as percentages.
std::pair<double, double> mean_and_ci95(const std::vector<double>& fractions);

}  // namespace fsl
