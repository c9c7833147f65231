#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "fsl/error.hpp"
#include "fsl/episode.hpp"
#include "fsl/pipeline.hpp"
#include "fsl/random.hpp"
#include "test_util.hpp"

namespace fsl {
namespace {

TrainConfig small_config(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.epochs = 2;
  c.batch_size = 16;
  c.episodes_per_epoch = 4;
  c.val_episodes = 10;
  c.val_way = 2;
  c.val_query = 3;
  c.mar_feature_channels = 4;
  c.mar_num_blocks = 1;
  c.mar_reduction = 2;
  c.mar_input_size = 16;
  c.seed = 3;
  if (stage == Stage::kFinetune) {
    c.way = 2;
    c.shot = 1;
    c.query = 3;
  }
  return c;
}

std::vector<std::string> log_lines(const StageResult& r) {
  std::vector<std::string> lines;
  for (const EpochRecord& rec : r.log) lines.push_back(rec.to_json_line());
  return lines;
}

class SmallPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = std::make_unique<test::TempDir>("pipeline");
    SyntheticOptions o;
    o.num_classes = 12;
    o.samples_per_class = 8;
    o.image_size = 16;
    data_ = std::make_unique<DatasetIndex>(load_dataset(generate_synthetic(dir_->path(), o)));
    stage1_ = std::make_unique<StageResult>(train_backbone_stage(small_config(Stage::kBackbone), *data_));
    stage2_ = std::make_unique<StageResult>(
        train_joint_stage(small_config(Stage::kJoint), *data_, stage1_->checkpoint));
  }
  static void TearDownTestSuite() {
    stage2_.reset();
    stage1_.reset();
    data_.reset();
    dir_.reset();
  }

  static std::unique_ptr<test::TempDir> dir_;
  static std::unique_ptr<DatasetIndex> data_;
  static std::unique_ptr<StageResult> stage1_, stage2_;
};

std::unique_ptr<test::TempDir> SmallPipeline::dir_;
std::unique_ptr<DatasetIndex> SmallPipeline::data_;
std::unique_ptr<StageResult> SmallPipeline::stage1_, SmallPipeline::stage2_;

TEST_F(SmallPipeline, EpochZeroLossIsNearUniform) {
  const double k = static_cast<double>(data_->split_classes(Split::kTrain).size());
  ASSERT_EQ(stage1_->log.front().epoch, 0);
  EXPECT_NEAR(stage1_->log.front().train_loss, std::log(k), 0.1 * std::log(k));
}

TEST_F(SmallPipeline, LogsAreBitwiseReproducible) {
  EXPECT_EQ(log_lines(train_backbone_stage(small_config(Stage::kBackbone), *data_)), log_lines(*stage1_));
  const StageResult again = train_joint_stage(small_config(Stage::kJoint), *data_, stage1_->checkpoint);
  EXPECT_EQ(log_lines(again), log_lines(*stage2_));
  EXPECT_EQ(encode_checkpoint(again.checkpoint), encode_checkpoint(stage2_->checkpoint));
}

TEST_F(SmallPipeline, BestCheckpointHoldsMaxValidation) {
  for (const StageResult* r : {stage1_.get(), stage2_.get()}) {
    ASSERT_EQ(r->log.size(), 3u);
    double best = -1;
    int best_epoch = -1;
    for (const EpochRecord& rec : r->log) {
      if (rec.val_acc > best) {
        best = rec.val_acc;
        best_epoch = rec.epoch;
      }
    }
    EXPECT_EQ(r->checkpoint.val_metric, best);
    EXPECT_EQ(r->checkpoint.epoch, best_epoch);
  }
}

TEST_F(SmallPipeline, StageOrderIsEnforced) {
  EXPECT_THROW(train_joint_stage(small_config(Stage::kJoint), *data_, stage2_->checkpoint), ValidationError);
  EXPECT_THROW(finetune_stage(small_config(Stage::kFinetune), *data_, stage1_->checkpoint), ValidationError);
  const StageResult s3 = finetune_stage(small_config(Stage::kFinetune), *data_, stage2_->checkpoint);
  EXPECT_THROW(train_joint_stage(small_config(Stage::kJoint), *data_, s3.checkpoint), ValidationError);
  EXPECT_THROW(finetune_stage(small_config(Stage::kFinetune), *data_, s3.checkpoint), ValidationError);
  EXPECT_THROW(train_backbone_stage(small_config(Stage::kJoint), *data_), ConfigError);
}

TEST_F(SmallPipeline, FinetuneRequiresEpisodeShape) {
  TrainConfig c = small_config(Stage::kFinetune);
  c.way.reset();
  EXPECT_THROW(finetune_stage(c, *data_, stage2_->checkpoint), ConfigError);
}

TEST_F(SmallPipeline, FrozenMetricStaysBitIdentical) {
  TrainConfig c = small_config(Stage::kFinetune);
  c.frozen_metric = true;
  const StageResult r = finetune_stage(c, *data_, stage2_->checkpoint);
  for (const EpochRecord& rec : r.log) {
    EXPECT_EQ(rec.alpha, c.alpha_init);
    EXPECT_EQ(rec.beta, c.beta_init);
  }
  const Model m = model_from_checkpoint(r.checkpoint);
  EXPECT_EQ(m.metric.alpha_value(), c.alpha_init);
  EXPECT_EQ(m.metric.beta_value(), c.beta_init);
  EXPECT_TRUE(m.mar.has_value());
  EXPECT_FALSE(m.head.has_value());
}

TEST_F(SmallPipeline, LearnedMetricMovesAndStaysFinite) {
  TrainConfig c = small_config(Stage::kFinetune);
  c.epochs = 3;
  c.lr = 1e-2;
  const StageResult r = finetune_stage(c, *data_, stage2_->checkpoint);
  ASSERT_EQ(r.log.size(), 4u);
  for (const EpochRecord& rec : r.log) {
    EXPECT_TRUE(std::isfinite(rec.alpha) && std::isfinite(rec.beta));
    EXPECT_TRUE(std::isfinite(rec.train_loss));
  }
  EXPECT_NE(r.log.back().alpha, c.alpha_init);
  EXPECT_EQ(log_lines(finetune_stage(c, *data_, stage2_->checkpoint)), log_lines(r));
}

TEST_F(SmallPipeline, NoMarFinetuneDropsResizer) {
  TrainConfig c = small_config(Stage::kFinetune);
  c.no_mar = true;
  c.epochs = 1;
  EXPECT_FALSE(model_from_checkpoint(finetune_stage(c, *data_, stage2_->checkpoint).checkpoint).mar.has_value());
}

TEST_F(SmallPipeline, SingleWayEpisodesAreTriviallyCorrect) {
  EvalOptions o;
  o.way = 1;
  o.shot = 2;
  o.query = 3;
  o.episodes = 50;
  const EvalResult r = evaluate(stage2_->checkpoint, *data_, o);
  EXPECT_EQ(r.mean, 100.0);
  EXPECT_EQ(r.ci95, 0.0);
  EXPECT_EQ(r.episodes, 50);
}

TEST_F(SmallPipeline, EvaluateIsDeterministic) {
  EvalOptions o;
  o.way = 2;
  o.query = 5;
  o.episodes = 40;
  o.seed = 11;
  const EvalResult a = evaluate(stage2_->checkpoint, *data_, o);
  const EvalResult b = evaluate(stage2_->checkpoint, *data_, o);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.ci95, b.ci95);
  EXPECT_EQ(a.episode_accuracy, b.episode_accuracy);
  o.way = 5;
  EXPECT_THROW(evaluate(stage2_->checkpoint, *data_, o), CapacityError);
}

// Fixed-weight scoring is a prototypical network: check logits against a
// direct loop implementation on the same episodes and embeddings.
TEST_F(SmallPipeline, NoMarUnitMetricMatchesPrototypeOracle) {
  Model m = model_from_checkpoint(stage1_->checkpoint);
  m.head.reset();
  EvalOptions o;
  o.split = Split::kTrain;
  o.way = 4;
  o.shot = 2;
  o.query = 3;
  o.episodes = 30;
  o.seed = 5;
  o.keep_details = true;
  o.metric_override = std::pair{1.0, 0.0};
  const EvalResult r = evaluate(m, *data_, o);
  ASSERT_EQ(r.details.size(), 30u);
  for (int e = 0; e < o.episodes; ++e) {
    const Episode ep = sample_episode(*data_, o.split, o.way, o.shot, o.query,
                                      stream_seed(o.seed, static_cast<std::uint64_t>(e)));
    Graph g(Graph::Mode::kInference);
    const Tensor s = m.embed(g, stack_images(*data_, ep.support));
    const Tensor q = m.embed(g, stack_images(*data_, ep.queries));
    const Index d = s.dim(1);
    std::vector<std::vector<double>> protos(4, std::vector<double>(static_cast<std::size_t>(d), 0.0));
    for (std::size_t i = 0; i < ep.support.size(); ++i)
      for (Index j = 0; j < d; ++j)
        protos[static_cast<std::size_t>(ep.support_labels[i])][static_cast<std::size_t>(j)] +=
            s.values()[static_cast<Index>(i) * d + j] / o.shot;
    const EpisodeOutcome& out = r.details[static_cast<std::size_t>(e)];
    int correct = 0;
    for (std::size_t i = 0; i < ep.queries.size(); ++i) {
      double best = -1e300;
      int arg = 0;
      for (int k = 0; k < 4; ++k) {
        double dist = 0.0;
        for (Index j = 0; j < d; ++j) {
          const double diff = q.values()[static_cast<Index>(i) * d + j] - protos[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
          dist += diff * diff;
        }
        EXPECT_NEAR(out.logits.values()[static_cast<Index>(i) * 4 + k], -dist, 1e-9);
        if (-dist > best) {
          best = -dist;
          arg = k;
        }
      }
      EXPECT_EQ(out.predictions[i], arg);
      correct += arg == ep.query_labels[i];
    }
    EXPECT_DOUBLE_EQ(r.episode_accuracy[static_cast<std::size_t>(e)], correct / 12.0);
  }
}

TEST(Evaluate, RandomModelIsAtChance) {
  std::vector<ClassEntry> classes;
  Rng rng = make_rng(21, 0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int c = 0; c < 10; ++c) {
    ClassEntry e{"n" + std::to_string(c), Split::kTest, {}};
    for (int k = 0; k < 20; ++k) {
      Vector px(3 * 16 * 16);
      for (Index i = 0; i < px.size(); ++i) px[i] = noise(rng);
      e.samples.push_back({"n", 0, 0, px});
    }
    classes.push_back(std::move(e));
  }
  const DatasetIndex data("noise", {3, 16, 16}, std::move(classes));
  Model m;
  m.backbone = backbone_init(3, 4);
  EvalOptions o;
  o.way = 5;
  o.query = 5;
  o.episodes = 2000;
  const EvalResult r = evaluate(m, data, o);
  EXPECT_NEAR(r.mean, 20.0, 3.0);
  EXPECT_GT(r.ci95, 0.0);
}

TEST(MeanAndCi, KnownValues) {
  const auto [mean, ci] = mean_and_ci95({0.0, 1.0, 0.5, 0.5});
  EXPECT_DOUBLE_EQ(mean, 50.0);
  EXPECT_NEAR(ci, 1.96 * std::sqrt(1.0 / 6.0) / 2.0 * 100.0, 1e-12);
  EXPECT_EQ(mean_and_ci95({0.4}).second, 0.0);
}

TEST(EpochRecordJson, FieldOrder) {
  const EpochRecord rec{Stage::kJoint, 3, 0.5, 61.25, 1.0, 0.0, 1e-3};
  EXPECT_EQ(rec.to_json_line(),
            R"({"stage":"joint","epoch":3,"train_loss":0.5,"val_acc":61.25,"alpha":1.0,"beta":0.0,"lr":0.001})");
}

// Default synthetic dataset, default stage settings.
class DefaultPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = std::make_unique<test::TempDir>("pipeline_default");
    data_ = std::make_unique<DatasetIndex>(load_dataset(generate_synthetic(dir_->path(), SyntheticOptions{})));
    TrainConfig c;
    stage1_ = std::make_unique<StageResult>(train_backbone_stage(c, *data_));
  }
  static void TearDownTestSuite() {
    stage1_.reset();
    data_.reset();
    dir_.reset();
  }
  static std::unique_ptr<test::TempDir> dir_;
  static std::unique_ptr<DatasetIndex> data_;
  static std::unique_ptr<StageResult> stage1_;
};

std::unique_ptr<test::TempDir> DefaultPipeline::dir_;
std::unique_ptr<DatasetIndex> DefaultPipeline::data_;
std::unique_ptr<StageResult> DefaultPipeline::stage1_;

TEST_F(DefaultPipeline, BackboneLossDecreasesOverFirstEpochs) {
  const auto& log = stage1_->log;
  ASSERT_GE(log.size(), 6u);
  for (std::size_t e = 1; e <= 5; ++e) EXPECT_LT(log[e].train_loss, log[e - 1].train_loss) << e;
}

TEST_F(DefaultPipeline, NoMarJointIsAContinuation) {
  TrainConfig c;
  c.stage = Stage::kJoint;
  c.no_mar = true;
  c.epochs = 5;
  const StageResult r = train_joint_stage(c, *data_, stage1_->checkpoint);
  const double start = r.log.front().val_acc;
  EXPECT_EQ(start, stage1_->checkpoint.val_metric);
  for (const EpochRecord& rec : r.log) EXPECT_LT(std::abs(rec.val_acc - start), 2.0) << rec.epoch;
}

}  // namespace
}  // namespace fsl
