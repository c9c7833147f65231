#include "fsl/config.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <type_traits>

#include "fsl/error.hpp"

namespace fsl {

double TrainConfig::decay_factor() const {
  if (lr_decay_factor) return *lr_decay_factor;
  return optimizer == OptimizerKind::kAdam ? 0.1 : 0.5;
}

double TrainConfig::lr_at_epoch(int epoch) const {
  const int drops = epoch <= 0 ? 0 : (epoch - 1) / lr_decay_interval;
  return lr * std::pow(decay_factor(), drops);
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(lr > 0.0 && std::isfinite(lr), "lr must be positive");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "beta1/beta2 must be in [0, 1)");
  require(eps > 0.0, "eps must be positive");
  require(decay_factor() > 0.0 && decay_factor() <= 1.0, "lr_decay_factor must be in (0, 1]");
  require(lr_decay_interval >= 1, "lr_decay_interval must be >= 1");
  require(epochs >= 0, "epochs must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(episodes_per_epoch >= 1, "episodes_per_epoch must be >= 1");
  require(val_episodes >= 1 && val_way >= 1 && val_shot >= 1 && val_query >= 1,
          "validation episode settings must be >= 1");
  require(mar_feature_channels >= 1 && mar_num_blocks >= 1 && mar_reduction >= 1 &&
              mar_feature_channels % mar_reduction == 0,
          "mar_feature_channels must be a positive multiple of mar_reduction");
  require(mar_input_size >= 7, "mar_input_size must be >= 7");
  require(backbone_input_size >= 16, "backbone_input_size must be >= 16");
  require(std::isfinite(alpha_init) && std::isfinite(beta_init), "alpha_init/beta_init must be finite");
  const bool episodic = way || shot || query;
  if (stage == Stage::kFinetune) {
    require(way && shot && query, "finetune requires way, shot and query");
    require(*way >= 1 && *shot >= 1 && *query >= 1, "way, shot and query must be >= 1");
  } else {
    require(!episodic, "way/shot/query are only valid for the finetune stage");
  }
}

namespace {

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  bool ok = true;
  if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
  else if constexpr (std::is_unsigned_v<T>) ok = v.is_number_unsigned();
  else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer();
  else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
  if (!ok) throw ConfigError("config: field '" + key + "' has the wrong type");
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: field '" + key + "' has the wrong type");
  }
}

}  // namespace

void merge_config_json(TrainConfig& c, std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& k = it.key();
    const nlohmann::json& v = it.value();
    if (k == "stage") {
      try {
        c.stage = parse_stage(get_as<std::string>(v, k));
      } catch (const ArgumentError& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    } else if (k == "optimizer") {
      const auto name = get_as<std::string>(v, k);
      if (name == "adam") c.optimizer = OptimizerKind::kAdam;
      else if (name == "sgd") c.optimizer = OptimizerKind::kSgd;
      else throw ConfigError("config: optimizer must be 'adam' or 'sgd'");
    } else if (k == "lr") c.lr = get_as<double>(v, k);
    else if (k == "weight_decay") c.weight_decay = get_as<double>(v, k);
    else if (k == "momentum") c.momentum = get_as<double>(v, k);
    else if (k == "beta1") c.beta1 = get_as<double>(v, k);
    else if (k == "beta2") c.beta2 = get_as<double>(v, k);
    else if (k == "eps") c.eps = get_as<double>(v, k);
    else if (k == "lr_decay_factor") c.lr_decay_factor = get_as<double>(v, k);
    else if (k == "lr_decay_interval") c.lr_decay_interval = get_as<int>(v, k);
    else if (k == "epochs") c.epochs = get_as<int>(v, k);
    else if (k == "batch_size") c.batch_size = get_as<int>(v, k);
    else if (k == "episodes_per_epoch") c.episodes_per_epoch = get_as<int>(v, k);
    else if (k == "way") c.way = get_as<int>(v, k);
    else if (k == "shot") c.shot = get_as<int>(v, k);
    else if (k == "query") c.query = get_as<int>(v, k);
    else if (k == "val_episodes") c.val_episodes = get_as<int>(v, k);
    else if (k == "val_way") c.val_way = get_as<int>(v, k);
    else if (k == "val_shot") c.val_shot = get_as<int>(v, k);
    else if (k == "val_query") c.val_query = get_as<int>(v, k);
    else if (k == "seed") c.seed = get_as<std::uint64_t>(v, k);
    else if (k == "mar_feature_channels") c.mar_feature_channels = get_as<int>(v, k);
    else if (k == "mar_num_blocks") c.mar_num_blocks = get_as<int>(v, k);
    else if (k == "mar_reduction") c.mar_reduction = get_as<int>(v, k);
    else if (k == "mar_input_size") c.mar_input_size = get_as<int>(v, k);
    else if (k == "backbone_input_size") c.backbone_input_size = get_as<int>(v, k);
    else if (k == "no_mar") c.no_mar = get_as<bool>(v, k);
    else if (k == "frozen_metric") c.frozen_metric = get_as<bool>(v, k);
    else if (k == "alpha_init") c.alpha_init = get_as<double>(v, k);
    else if (k == "beta_init") c.beta_init = get_as<double>(v, k);
    else throw ConfigError("config: unknown key '" + k + "'");
  }
}

TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_config_json(base, ss.str());
  return base;
}

std::string config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["stage"] = std::string(stage_name(c.stage));
  j["optimizer"] = c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd";
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["momentum"] = c.momentum;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["lr_decay_factor"] = c.decay_factor();
  j["lr_decay_interval"] = c.lr_decay_interval;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["episodes_per_epoch"] = c.episodes_per_epoch;
  if (c.way) j["way"] = *c.way;
  if (c.shot) j["shot"] = *c.shot;
  if (c.query) j["query"] = *c.query;
  j["val_episodes"] = c.val_episodes;
  j["val_way"] = c.val_way;
  j["val_shot"] = c.val_shot;
  j["val_query"] = c.val_query;
  j["seed"] = c.seed;
  j["mar_feature_channels"] = c.mar_feature_channels;
  j["mar_num_blocks"] = c.mar_num_blocks;
  j["mar_reduction"] = c.mar_reduction;
  j["mar_input_size"] = c.mar_input_size;
  j["backbone_input_size"] = c.backbone_input_size;
  j["no_mar"] = c.no_mar;
  j["frozen_metric"] = c.frozen_metric;
  j["alpha_init"] = c.alpha_init;
  j["beta_init"] = c.beta_init;
  return j.dump(2);
}

}  // namespace fsl
