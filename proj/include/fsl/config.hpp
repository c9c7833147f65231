#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "fsl/checkpoint.hpp"

namespace fsl {

enum class OptimizerKind { kAdam, kSgd };

/// Everything a training stage needs. JSON configs use these field names.
struct TrainConfig {
  Stage stage = Stage::kBackbone;

  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Unset means 0.1 for Adam and 0.5 for SGD.
  std::optional<double> lr_decay_factor;
  int lr_decay_interval = 20;

  int epochs = 30;
  int batch_size = 64;
  int episodes_per_epoch = 100;
  /// Episode shape for meta fine-tuning; required iff stage is finetune.
  std::optional<int> way, shot, query;

  int val_episodes = 200;
  int val_way = 5;
  int val_shot = 1;
  int val_query = 15;

  std::uint64_t seed = 1;

  int mar_feature_channels = 16;
  int mar_num_blocks = 4;
  int mar_reduction = 4;
  /// Images are bilinearly pre-scaled to this size before entering the resizer.
  int mar_input_size = 32;
  int backbone_input_size = 16;
  bool no_mar = false;
  bool frozen_metric = false;
  double alpha_init = 1.24;
  double beta_init = 0.1;

  double decay_factor() const;
  /// Learning rate in effect during `epoch` (1-based).
  double lr_at_epoch(int epoch) const;
  /// Throws ConfigError on invalid values or stage-invalid field combinations.
  void validate() const;
};

/// Overlays the fields present in `json_text` onto `config`. Unknown keys and
/// wrongly typed values raise ConfigError.
void merge_config_json(TrainConfig& config, std::string_view json_text);
TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base = {});
std::string config_to_json(const TrainConfig& config);

}  // namespace fsl
