#include "fsl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <memory>
#include <numeric>

#include "fsl/episode.hpp"
#include "fsl/error.hpp"
#include "fsl/ops.hpp"
#include "fsl/optim.hpp"
#include "fsl/random.hpp"

namespace fsl {

namespace {

constexpr std::uint64_t kValStream = 0x56414C;
constexpr std::uint64_t kEpochStream = 0x45504F;
constexpr Index kEmbedChunk = 64;

}  // namespace

Tensor Model::embed(Graph& g, const Tensor& images) const {
  Tensor x = images;
  if (mar) {
    if (x.dim(2) != mar_input_size || x.dim(3) != mar_input_size) {
      x = ops::bilinear_resize(g, x, mar_input_size, mar_input_size);
    }
    x = mar_forward(g, x, *mar, mar_config);
  } else {
    x = ops::bilinear_resize(g, x, backbone_input_size, backbone_input_size);
  }
  return backbone_forward(g, x, backbone);
}

std::vector<NamedTensor> Model::network_parameters() const {
  std::vector<NamedTensor> out = backbone.named();
  if (mar) {
    auto m = mar->named();
    out.insert(out.end(), m.begin(), m.end());
  }
  if (head) {
    auto h = head->named();
    out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

Checkpoint make_checkpoint(const Model& model, Stage stage, std::uint64_t seed, int epoch,
                           double val_metric) {
  Checkpoint c;
  c.stage = stage;
  c.seed = seed;
  c.epoch = epoch;
  c.val_metric = val_metric;
  for (const auto& [name, t] : model.network_parameters()) {
    c.blocks.push_back({name, t.shape(), t.values()});
  }
  c.blocks.push_back({"asm.alpha", {1}, model.metric.alpha.values()});
  c.blocks.push_back({"asm.beta", {1}, model.metric.beta.values()});
  Vector sizes(2);
  sizes << static_cast<double>(model.mar_input_size), static_cast<double>(model.backbone_input_size);
  c.blocks.push_back({"model.sizes", {2}, sizes});
  if (model.mar) {
    const MarConfig& m = model.mar_config;
    Vector cfg(6);
    cfg << m.in_channels, m.feature_channels, m.num_blocks, m.reduction, m.out_h, m.out_w;
    c.blocks.push_back({"model.mar_config", {6}, cfg});
  }
  return c;
}

namespace {

Tensor param_from(const Checkpoint& c, const std::string& name, const Shape& expected) {
  const ParamBlock& b = c.at(name);
  if (b.shape != expected) {
    throw FormatError("checkpoint block '" + name + "' has shape " + shape_string(b.shape) +
                      ", expected " + shape_string(expected));
  }
  return Tensor(b.shape, b.values, true);
}

ConvParams conv_from(const Checkpoint& c, const std::string& prefix, Index c_out, Index c_in, Index k) {
  return {param_from(c, prefix + ".weight", {c_out, c_in, k, k}), param_from(c, prefix + ".bias", {c_out})};
}

LinearParams linear_from(const Checkpoint& c, const std::string& prefix, Index d_out, Index d_in) {
  return {param_from(c, prefix + ".weight", {d_out, d_in}), param_from(c, prefix + ".bias", {d_out})};
}

Index as_index(double v, const char* what) {
  if (!(v >= 1.0 && v <= 1e6) || v != std::floor(v)) {
    throw FormatError(std::string("checkpoint: invalid ") + what);
  }
  return static_cast<Index>(v);
}

}  // namespace

Model model_from_checkpoint(const Checkpoint& c) {
  Model m;
  Index channels = c.at("backbone.conv0.weight").shape.at(1);
  Index in = channels;
  for (int i = 0; i < 4; ++i) {
    m.backbone.stages[static_cast<std::size_t>(i)] =
        conv_from(c, "backbone.conv" + std::to_string(i), kEmbeddingDim, in, 3);
    in = kEmbeddingDim;
  }
  const ParamBlock& sizes = c.at("model.sizes");
  if (sizes.values.size() != 2) throw FormatError("checkpoint: model.sizes must have 2 entries");
  m.mar_input_size = as_index(sizes.values[0], "mar input size");
  m.backbone_input_size = as_index(sizes.values[1], "backbone input size");
  if (c.find("head.fc.weight")) {
    const Index classes = c.at("head.fc.weight").shape.at(0);
    m.head = HeadParams{linear_from(c, "head.fc", classes, kEmbeddingDim)};
  }
  if (c.has_prefix("mar.")) {
    const ParamBlock& cfg = c.at("model.mar_config");
    if (cfg.values.size() != 6) throw FormatError("checkpoint: model.mar_config must have 6 entries");
    MarConfig mc{as_index(cfg.values[0], "mar in_channels"), as_index(cfg.values[1], "mar width"),
                 as_index(cfg.values[2], "mar block count"), as_index(cfg.values[3], "mar reduction"),
                 as_index(cfg.values[4], "mar out_h"), as_index(cfg.values[5], "mar out_w")};
    try {
      mc.validate();
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    }
    if (mc.in_channels != channels) throw FormatError("checkpoint: resizer and backbone channels differ");
    const Index f = mc.feature_channels, hidden = f / mc.reduction;
    MarParams p;
    p.conv7 = conv_from(c, "mar.conv7", f, channels, 7);
    p.conv1 = conv_from(c, "mar.conv1", f, f, 1);
    for (Index i = 0; i < mc.num_blocks; ++i) {
      const std::string prefix = "mar.block" + std::to_string(i);
      p.blocks.push_back({conv_from(c, prefix + ".conv_a", f, f, 3), conv_from(c, prefix + ".conv_b", f, f, 3),
                          linear_from(c, prefix + ".squeeze", hidden, f),
                          linear_from(c, prefix + ".excite", f, hidden)});
    }
    p.conv3 = conv_from(c, "mar.conv3", channels, f, 3);
    m.mar = std::move(p);
    m.mar_config = mc;
  } else {
    m.mar_config.in_channels = channels;
    m.mar_config.out_h = m.mar_config.out_w = m.backbone_input_size;
  }
  m.metric = AsmParams::make(c.at("asm.alpha").values[0], c.at("asm.beta").values[0], false);
  return m;
}

std::string EpochRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["stage"] = std::string(stage_name(stage));
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  j["val_acc"] = val_acc;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["lr"] = lr;
  return j.dump();
}

std::pair<double, double> mean_and_ci95(const std::vector<double>& fractions) {
  if (fractions.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(fractions.size());
  const double mean = std::accumulate(fractions.begin(), fractions.end(), 0.0) / n;
  if (fractions.size() < 2) return {mean * 100.0, 0.0};
  double ss = 0.0;
  for (double f : fractions) ss += (f - mean) * (f - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean * 100.0, 1.96 * sd / std::sqrt(n) * 100.0};
}

EvalResult evaluate(const Model& model, const DatasetIndex& data, const EvalOptions& opt) {
  if (opt.episodes < 1) throw ArgumentError("evaluate: episodes must be >= 1");
  // Every episode draws from the same split, so each image is embedded once.
  std::vector<SampleRef> refs;
  for (int cls : data.split_classes(opt.split)) {
    const int n = static_cast<int>(data.class_entry(cls).samples.size());
    for (int s = 0; s < n; ++s) refs.push_back({cls, s});
  }
  std::map<SampleRef, Index> row_of;
  for (std::size_t i = 0; i < refs.size(); ++i) row_of[refs[i]] = static_cast<Index>(i);
  RowMatrix embeddings(static_cast<Index>(refs.size()), kEmbeddingDim);
  for (std::size_t start = 0; start < refs.size(); start += kEmbedChunk) {
    const std::size_t end = std::min(refs.size(), start + static_cast<std::size_t>(kEmbedChunk));
    Graph g(Graph::Mode::kInference);
    Tensor e = model.embed(g, stack_images(data, std::span(refs).subspan(start, end - start)));
    embeddings.middleRows(static_cast<Index>(start), static_cast<Index>(end - start)) =
        ConstRowMatrixMap(e.values().data(), e.dim(0), e.dim(1));
  }
  auto gather = [&](const std::vector<SampleRef>& want) {
    RowMatrix m(static_cast<Index>(want.size()), kEmbeddingDim);
    for (std::size_t i = 0; i < want.size(); ++i) m.row(static_cast<Index>(i)) = embeddings.row(row_of.at(want[i]));
    return Tensor({m.rows(), m.cols()}, Eigen::Map<const Vector>(m.data(), m.size()));
  };

  AsmParams metric = opt.metric_override
                         ? AsmParams::make(opt.metric_override->first, opt.metric_override->second, true)
                         : AsmParams::make(model.metric.alpha_value(), model.metric.beta_value(), true);
  EvalResult result;
  result.episodes = opt.episodes;
  for (int e = 0; e < opt.episodes; ++e) {
    const Episode ep = sample_episode(data, opt.split, opt.way, opt.shot, opt.query,
                                      stream_seed(opt.seed, static_cast<std::uint64_t>(e)));
    Graph g(Graph::Mode::kInference);
    const Prototypes protos = compute_prototypes(g, gather(ep.support), ep.support_labels);
    Tensor logits = asm_logits(g, gather(ep.queries), protos.matrix, metric);
    std::vector<int> pred = argmax_rows(logits);
    int correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == ep.query_labels[i];
    const double acc = static_cast<double>(correct) / static_cast<double>(pred.size());
    result.episode_accuracy.push_back(acc);
    if (opt.keep_details) result.details.push_back({logits, pred, ep.query_labels, acc});
  }
  std::tie(result.mean, result.ci95) = mean_and_ci95(result.episode_accuracy);
  return result;
}

EvalResult evaluate(const Checkpoint& checkpoint, const DatasetIndex& data, const EvalOptions& options) {
  return evaluate(model_from_checkpoint(checkpoint), data, options);
}

namespace {

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg, std::vector<Tensor> params) {
  if (cfg.optimizer == OptimizerKind::kAdam) {
    return std::make_unique<Adam>(std::move(params),
                                  AdamOptions{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
  }
  return std::make_unique<SgdMomentum>(std::move(params),
                                       SgdMomentumOptions{cfg.lr, cfg.momentum, cfg.weight_decay});
}

EvalOptions validation_options(const TrainConfig& cfg) {
  EvalOptions opt;
  opt.split = Split::kVal;
  opt.way = cfg.val_way;
  opt.shot = cfg.val_shot;
  opt.query = cfg.val_query;
  opt.episodes = cfg.val_episodes;
  opt.seed = stream_seed(cfg.seed, kValStream);
  return opt;
}

struct ClassificationSet {
  std::vector<SampleRef> samples;
  std::map<int, int> label_of;  // class id -> head label
};

ClassificationSet classification_set(const DatasetIndex& data) {
  ClassificationSet set;
  const auto& classes = data.split_classes(Split::kTrain);
  if (classes.empty()) throw CapacityError("training split has no classes");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    set.label_of[classes[i]] = static_cast<int>(i);
    const int n = static_cast<int>(data.class_entry(classes[i]).samples.size());
    for (int s = 0; s < n; ++s) set.samples.push_back({classes[i], s});
  }
  return set;
}

double classification_loss_no_update(const Model& model, const DatasetIndex& data,
                                     const ClassificationSet& set) {
  double total = 0.0;
  for (std::size_t start = 0; start < set.samples.size(); start += kEmbedChunk) {
    const std::size_t end = std::min(set.samples.size(), start + static_cast<std::size_t>(kEmbedChunk));
    auto batch = std::span(set.samples).subspan(start, end - start);
    std::vector<int> labels;
    for (const auto& r : batch) labels.push_back(set.label_of.at(r.class_id));
    Graph g(Graph::Mode::kInference);
    Tensor loss = ops::cross_entropy_loss(g, head_forward(g, model.embed(g, stack_images(data, batch)), *model.head), labels);
    total += loss.item() * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(set.samples.size());
}

// Shared loop of the two classification stages.
StageResult run_classification(const TrainConfig& cfg, const DatasetIndex& data, Model& model,
                               Stage stage, const EpochCallback& on_epoch) {
  const ClassificationSet set = classification_set(data);
  if (!model.head || model.head->num_classes() != static_cast<Index>(set.label_of.size())) {
    throw ValidationError("classification head does not match the training split's class count");
  }
  std::vector<NamedTensor> named = model.network_parameters();
  std::vector<Tensor> params = tensors_of(named);
  for (Tensor& p : params) p.set_requires_grad(true);
  auto optimizer = make_optimizer(cfg, params);
  const EvalOptions val = validation_options(cfg);
  const std::pair<double, double> val_metric{1.0, 0.0};

  StageResult result;
  auto record = [&](int epoch, double loss) {
    EvalOptions v = val;
    v.metric_override = val_metric;
    const double acc = evaluate(model, data, v).mean;
    EpochRecord rec{stage, epoch, loss, acc, val_metric.first, val_metric.second, cfg.lr_at_epoch(epoch)};
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (epoch == 0 || acc > result.checkpoint.val_metric) {
      result.checkpoint = make_checkpoint(model, stage, cfg.seed, epoch, acc);
    }
  };

  record(0, classification_loss_no_update(model, data, set));
  std::vector<SampleRef> order = set.samples;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    optimizer->set_lr(cfg.lr_at_epoch(epoch));
    Rng rng = make_rng(cfg.seed, kEpochStream + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      auto batch = std::span(order).subspan(start, end - start);
      std::vector<int> labels;
      for (const auto& r : batch) labels.push_back(set.label_of.at(r.class_id));
      optimizer->zero_grad();
      Graph g;
      Tensor logits = head_forward(g, model.embed(g, stack_images(data, batch)), *model.head);
      Tensor loss = ops::cross_entropy_loss(g, logits, labels);
      g.backward(loss);
      optimizer->step();
      total += loss.item() * static_cast<double>(batch.size());
    }
    record(epoch, total / static_cast<double>(order.size()));
  }
  return result;
}

}  // namespace

StageResult train_backbone_stage(const TrainConfig& config, const DatasetIndex& data,
                                 const EpochCallback& on_epoch) {
  if (config.stage != Stage::kBackbone) throw ConfigError("train_backbone_stage: config stage must be backbone");
  config.validate();
  const Index channels = data.image_shape()[0];
  const auto num_classes = static_cast<Index>(data.split_classes(Split::kTrain).size());
  if (num_classes == 0) throw CapacityError("training split has no classes");
  Model model;
  model.backbone = backbone_init(channels, config.seed);
  model.head = head_init(num_classes, config.seed);
  model.backbone_input_size = config.backbone_input_size;
  model.mar_input_size = config.mar_input_size;
  model.mar_config.in_channels = channels;
  model.mar_config.out_h = model.mar_config.out_w = config.backbone_input_size;
  return run_classification(config, data, model, Stage::kBackbone, on_epoch);
}

StageResult train_joint_stage(const TrainConfig& config, const DatasetIndex& data,
                              const Checkpoint& base, const EpochCallback& on_epoch) {
  if (config.stage != Stage::kJoint) throw ConfigError("train_joint_stage: config stage must be joint");
  config.validate();
  if (base.stage != Stage::kBackbone) {
    throw ValidationError("train_joint_stage: base checkpoint has stage '" +
                          std::string(stage_name(base.stage)) + "', expected 'backbone'");
  }
  Model model = model_from_checkpoint(base);
  model.metric = AsmParams::make(1.0, 0.0, true);
  model.mar_input_size = config.mar_input_size;
  if (!config.no_mar) {
    MarConfig mc;
    mc.in_channels = model.backbone.in_channels();
    mc.feature_channels = config.mar_feature_channels;
    mc.num_blocks = config.mar_num_blocks;
    mc.reduction = config.mar_reduction;
    mc.out_h = mc.out_w = model.backbone_input_size;
    model.mar_config = mc;
    model.mar = mar_init(mc, config.seed);
  }
  return run_classification(config, data, model, Stage::kJoint, on_epoch);
}

StageResult finetune_stage(const TrainConfig& config, const DatasetIndex& data,
                           const Checkpoint& base, const EpochCallback& on_epoch) {
  if (config.stage != Stage::kFinetune) throw ConfigError("finetune_stage: config stage must be finetune");
  config.validate();
  if (base.stage != Stage::kJoint) {
    throw ValidationError("finetune_stage: base checkpoint has stage '" +
                          std::string(stage_name(base.stage)) + "', expected 'joint'");
  }
  Model model = model_from_checkpoint(base);
  model.head.reset();
  if (config.no_mar) model.mar.reset();
  model.metric = AsmParams::make(config.alpha_init, config.beta_init, config.frozen_metric);
  const int way = *config.way, shot = *config.shot, query = *config.query;

  std::vector<Tensor> params = tensors_of(model.network_parameters());
  for (Tensor& p : params) p.set_requires_grad(true);
  for (const Tensor& t : model.metric.learnable()) params.push_back(t);
  auto optimizer = make_optimizer(config, params);
  const EvalOptions val = validation_options(config);

  auto episode_seed = [&](int epoch, int e) {
    return stream_seed(stream_seed(config.seed, kEpochStream + static_cast<std::uint64_t>(epoch)),
                       static_cast<std::uint64_t>(e));
  };
  auto episode_loss = [&](Graph& g, const Episode& ep) {
    Tensor support = model.embed(g, stack_images(data, ep.support));
    const Prototypes protos = compute_prototypes(g, support, ep.support_labels);
    Tensor queries = model.embed(g, stack_images(data, ep.queries));
    return episode_logits_and_loss(g, queries, ep.query_labels, protos, model.metric).loss;
  };

  StageResult result;
  auto record = [&](int epoch, double loss) {
    const double acc = evaluate(model, data, val).mean;
    EpochRecord rec{Stage::kFinetune, epoch, loss, acc, model.metric.alpha_value(),
                    model.metric.beta_value(), config.lr_at_epoch(epoch)};
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (epoch == 0 || acc > result.checkpoint.val_metric) {
      result.checkpoint = make_checkpoint(model, Stage::kFinetune, config.seed, epoch, acc);
    }
  };

  {
    double total = 0.0;
    for (int e = 0; e < config.episodes_per_epoch; ++e) {
      Graph g(Graph::Mode::kInference);
      total += episode_loss(g, sample_episode(data, Split::kTrain, way, shot, query, episode_seed(1, e))).item();
    }
    record(0, total / config.episodes_per_epoch);
  }
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    optimizer->set_lr(config.lr_at_epoch(epoch));
    double total = 0.0;
    for (int e = 0; e < config.episodes_per_epoch; ++e) {
      const Episode ep = sample_episode(data, Split::kTrain, way, shot, query, episode_seed(epoch, e));
      optimizer->zero_grad();
      Graph g;
      Tensor loss = episode_loss(g, ep);
      g.backward(loss);
      optimizer->step();
      total += loss.item();
    }
    record(epoch, total / config.episodes_per_epoch);
  }
  return result;
}

}  // namespace fsl
