#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fsl/error.hpp"
#include "fsl/gradcheck.hpp"
#include "fsl/metric.hpp"
#include "fsl/ops.hpp"
#include "fsl/optim.hpp"
#include "test_util.hpp"

namespace fsl {
namespace {

Tensor row(std::initializer_list<double> v) { return Tensor::from({1, static_cast<Index>(v.size())}, v); }

TEST(Distances, ClosedFormCases) {
  EXPECT_EQ(squared_euclidean(Tensor::from({2}, {1, 2}), Tensor::from({2}, {1, 2})), 0.0);
  EXPECT_EQ(squared_euclidean(Tensor::from({2}, {0, 0}), Tensor::from({2}, {3, 4})), 25.0);
  EXPECT_EQ(cosine_similarity(Tensor::from({2}, {1, 0}), Tensor::from({2}, {0, 1})), 0.0);
  EXPECT_NEAR(cosine_similarity(Tensor::from({2}, {1, 1}), Tensor::from({2}, {2, 2})), 1.0, 1e-12);
  EXPECT_EQ(cosine_similarity(Tensor::from({2}, {0, 0}), Tensor::from({2}, {2, 2})), 0.0);
  EXPECT_THROW(squared_euclidean(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(cosine_similarity(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST(Distances, MatchLoopOracleAndProperties) {
  for (int t = 0; t < test::kTrials; ++t) {
    Rng rng = test::trial_rng(t, 60);
    const Index d = test::pick(rng, 1, 40);
    Tensor a = uniform({d}, -2, 2, rng), b = uniform({d}, -2, 2, rng);
    double sq = 0, dot = 0, na = 0, nb = 0;
    for (Index i = 0; i < d; ++i) {
      const double x = a.values()[i], y = b.values()[i];
      sq += (x - y) * (x - y);
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    EXPECT_NEAR(squared_euclidean(a, b), sq, 1e-12);
    EXPECT_EQ(squared_euclidean(a, b), squared_euclidean(b, a));
    const double cos = cosine_similarity(a, b);
    EXPECT_NEAR(cos, dot / std::sqrt(na * nb), 1e-12);
    EXPECT_LE(std::abs(cos), 1.0 + 1e-15);
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
    const double c = std::uniform_real_distribution<double>(0.01, 50)(rng);
    EXPECT_NEAR(cosine_similarity(Tensor({d}, c * a.values()), b), cos, 1e-12);
  }
}

TEST(Prototypes, MeansAndErrors) {
  Graph g;
  const std::vector<int> one_class{0, 0}, two{1, 0};
  EXPECT_EQ(compute_prototypes(g, Tensor::from({2, 2}, {1, 3, 3, 5}), one_class).matrix.values(),
            Tensor::from({2}, {2, 4}).values());
  Tensor single = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Prototypes p = compute_prototypes(g, single, two);
  EXPECT_EQ(p.matrix.values(), Tensor::from({6}, {4, 5, 6, 1, 2, 3}).values());
  EXPECT_EQ(p.class_ids, (std::vector<int>{0, 1}));

  const std::vector<int> gap{0, 2}, uneven{0, 0, 1}, negative{0, -1}, short_labels{0};
  EXPECT_THROW(compute_prototypes(g, single, gap), ArgumentError);
  EXPECT_THROW(compute_prototypes(g, Tensor::zeros({3, 2}), uneven), ArgumentError);
  EXPECT_THROW(compute_prototypes(g, single, negative), ArgumentError);
  EXPECT_THROW(compute_prototypes(g, single, short_labels), ArgumentError);
}

TEST(Prototypes, SupportOrderDoesNotChangeBits) {
  for (int t = 0; t < test::kTrials; ++t) {
    Rng rng = test::trial_rng(t, 61);
    const int way = static_cast<int>(test::pick(rng, 1, 5)), shot = static_cast<int>(test::pick(rng, 1, 6));
    const Index d = test::pick(rng, 1, 12), n = way * shot;
    Tensor emb = normal({n, d}, 3.0, rng);
    std::vector<int> labels;
    for (int k = 0; k < way; ++k)
      for (int s = 0; s < shot; ++s) labels.push_back(k);
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor shuffled = emb.clone();
    std::vector<int> shuffled_labels(labels.size());
    for (Index i = 0; i < n; ++i) {
      shuffled.values().segment(i * d, d) = emb.values().segment(perm[i] * d, d);
      shuffled_labels[i] = labels[perm[i]];
    }
    Graph g;
    const Prototypes a = compute_prototypes(g, emb, labels), b = compute_prototypes(g, shuffled, shuffled_labels);
    EXPECT_EQ(a.matrix.values(), b.matrix.values());
    for (int k = 0; k < way; ++k) {
      Vector mean = Vector::Zero(d);
      for (int s = 0; s < shot; ++s) mean += emb.values().segment((k * shot + s) * d, d);
      mean /= shot;
      EXPECT_LT(test::max_abs_diff(a.matrix.values().segment(k * d, d), mean), 1e-9);
    }
  }
}

TEST(AsmScore, DefaultInitialisationHandCase) {
  // |q - w|^2 = 4 and cos(q, w) = 0.5: q = (2, 0), w = (1, sqrt 3).
  const Tensor q = Tensor::from({2}, {2, 0}), w = Tensor::from({2}, {1, std::sqrt(3.0)});
  ASSERT_NEAR(squared_euclidean(q, w), 4.0, 1e-14);
  ASSERT_NEAR(cosine_similarity(q, w), 0.5, 1e-14);
  EXPECT_NEAR(asm_score(q, w, AsmParams{}), -4.91, 1e-12);
  EXPECT_EQ(AsmParams{}.alpha_value(), 1.24);
  EXPECT_EQ(AsmParams{}.beta_value(), 0.1);
}

TEST(AsmScore, DegenerateFusionsAreThePureMetrics) {
  for (int t = 0; t < test::kTrials; ++t) {
    Rng rng = test::trial_rng(t, 62);
    const Index d = test::pick(rng, 1, 32);
    const Tensor q = uniform({d}, -2, 2, rng), w = uniform({d}, -2, 2, rng);
    EXPECT_NEAR(asm_score(q, w, AsmParams::make(1, 0)), -squared_euclidean(q, w), 1e-12);
    EXPECT_NEAR(asm_score(q, w, AsmParams::make(0, 1)), cosine_similarity(q, w), 1e-12);
  }
  EXPECT_THROW(asm_score(Tensor::zeros({2}), Tensor::zeros({3}), AsmParams{}), DimensionError);
}

TEST(AsmLogits, MatchScalarScoreAndGradients) {
  for (int t = 0; t < test::kTrials; ++t) {
    Rng rng = test::trial_rng(t, 63);
    const Index nq = test::pick(rng, 1, 5), np = test::pick(rng, 1, 4), d = test::pick(rng, 1, 6);
    const AsmParams m = AsmParams::make(std::uniform_real_distribution<double>(-2, 2)(rng),
                                        std::uniform_real_distribution<double>(-2, 2)(rng));
    Tensor q = uniform({nq, d}, -1, 1, rng, true), p = uniform({np, d}, -1, 1, rng, true);
    Graph g;
    const Tensor logits = asm_logits(g, q, p, m);
    for (Index i = 0; i < nq; ++i)
      for (Index k = 0; k < np; ++k) {
        EXPECT_NEAR(logits.at({i, k}),
                    asm_score(Tensor({d}, q.values().segment(i * d, d)), Tensor({d}, p.values().segment(k * d, d)), m),
                    1e-12);
      }
    Tensor w = uniform({nq, np}, -1, 1, rng);
    const GradcheckReport r = finite_diff_gradcheck(
        [=](Graph& gg) { return ops::sum(gg, ops::mul(gg, asm_logits(gg, q, p, m), w)); },
        std::vector<NamedTensor>{{"q", q}, {"p", p}, {"alpha", m.alpha}, {"beta", m.beta}});
    EXPECT_TRUE(r.passed()) << r.max_rel_error();
  }
}

TEST(EpisodeLoss, ClosedFormCases) {
  Graph g;
  const AsmParams euclid = AsmParams::make(1, 0, true);
  // Scores [-1, -2] for label 0.
  const std::vector<int> zero{0};
  const Prototypes two{Tensor::from({2, 2}, {1, 0, 1, 1}), {0, 1}};
  EpisodeLoss e = episode_logits_and_loss(g, row({0, 0}), zero, two, euclid);
  EXPECT_NEAR(e.logits.values()[0], -1.0, 1e-15);
  EXPECT_NEAR(e.logits.values()[1], -2.0, 1e-15);
  EXPECT_NEAR(e.loss.item(), -std::log(std::exp(-1.0) / (std::exp(-1.0) + std::exp(-2.0))), 1e-12);
  EXPECT_NEAR(e.loss.item(), 0.3133, 1e-4);

  // Query on prototype 1, the others at squared distance >= 100.
  const Prototypes far{Tensor::from({3, 2}, {10, 0, 0, 0, 0, -10}), {0, 1, 2}};
  const std::vector<int> one{1};
  e = episode_logits_and_loss(g, row({0, 0}), one, far, euclid);
  EXPECT_EQ(argmax_rows(e.logits), (std::vector<int>{1}));
  Graph probe;
  EXPECT_GT(ops::softmax(probe, e.logits).values()[1], 0.99);

  const Prototypes same{Tensor::full({4, 3}, 0.7), {0, 1, 2, 3}};
  const std::vector<int> labels{2, 0};
  e = episode_logits_and_loss(g, Tensor::from({2, 3}, {1, 2, 3, -1, 0, 4}), labels, same, AsmParams{});
  EXPECT_NEAR(e.loss.item(), std::log(4.0), 1e-12);

  const std::vector<int> bad{4};
  EXPECT_THROW(episode_logits_and_loss(g, row({0, 0, 0}), bad, same, AsmParams{}), ArgumentError);
}

TEST(EpisodeLoss, EuclideanFusionIsNearestPrototype) {
  for (int t = 0; t < test::kTrials; ++t) {
    Rng rng = test::trial_rng(t, 64);
    const Index nq = test::pick(rng, 1, 20), np = test::pick(rng, 2, 6), d = test::pick(rng, 1, 10);
    Tensor q = normal({nq, d}, 1, rng), p = normal({np, d}, 1, rng);
    Graph g;
    const std::vector<int> pred = argmax_rows(asm_logits(g, q, p, AsmParams::make(1, 0, true)));
    for (Index i = 0; i < nq; ++i) {
      int best = 0;
      double best_d = 1e300;
      for (Index k = 0; k < np; ++k) {
        double s = 0;
        for (Index j = 0; j < d; ++j) s += std::pow(q.values()[i * d + j] - p.values()[k * d + j], 2);
        if (s < best_d) best_d = s, best = static_cast<int>(k);
      }
      EXPECT_EQ(pred[static_cast<std::size_t>(i)], best);
    }
  }
}

TEST(EpisodeLoss, JointPositiveScalingKeepsPredictions) {
  for (int t = 0; t < 200; ++t) {
    Rng rng = test::trial_rng(t, 65);
    Tensor q = normal({15, 8}, 1, rng), p = normal({5, 8}, 1, rng);
    const double a = std::uniform_real_distribution<double>(0, 2)(rng), b = std::uniform_real_distribution<double>(0, 2)(rng);
    const double c = std::exp(std::uniform_real_distribution<double>(-3, 3)(rng));
    Graph g;
    EXPECT_EQ(argmax_rows(asm_logits(g, q, p, AsmParams::make(a, b))),
              argmax_rows(asm_logits(g, q, p, AsmParams::make(c * a, c * b))));
  }
}

TEST(EpisodeLoss, QueryOrderDoesNotChangeLoss) {
  for (int t = 0; t < test::kTrials; ++t) {
    Rng rng = test::trial_rng(t, 66);
    const int way = 4;
    Tensor q = normal({12, 6}, 1, rng);
    std::vector<int> labels;
    for (int i = 0; i < 12; ++i) labels.push_back(i % way);
    const Prototypes protos{normal({way, 6}, 1, rng), {0, 1, 2, 3}};
    std::vector<Index> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor qp = q.clone();
    std::vector<int> lp(12);
    for (Index i = 0; i < 12; ++i) {
      qp.values().segment(i * 6, 6) = q.values().segment(perm[i] * 6, 6);
      lp[i] = labels[perm[i]];
    }
    Graph g;
    EXPECT_NEAR(episode_logits_and_loss(g, q, labels, protos, AsmParams{}).loss.item(),
                episode_logits_and_loss(g, qp, lp, protos, AsmParams{}).loss.item(), 1e-12);
  }
}

TEST(EpisodeLoss, GradientsReachMetricWeightsAndEmbeddings) {
  for (int t = 0; t < test::kTrials; ++t) {
    Rng rng = test::trial_rng(t, 67);
    const int way = static_cast<int>(test::pick(rng, 2, 4)), shot = static_cast<int>(test::pick(rng, 1, 2));
    Tensor support = normal({way * shot, 5}, 1, rng, true), queries = normal({way * 2, 5}, 1, rng, true);
    std::vector<int> sl, ql;
    for (int k = 0; k < way; ++k) {
      for (int s = 0; s < shot; ++s) sl.push_back(k);
      ql.push_back(k);
      ql.push_back(k);
    }
    const AsmParams m = AsmParams::make(std::uniform_real_distribution<double>(0.1, 1.5)(rng),
                                        std::uniform_real_distribution<double>(-1, 1)(rng));
    const GradcheckReport r = finite_diff_gradcheck(
        [=](Graph& g) {
          return episode_logits_and_loss(g, queries, ql, compute_prototypes(g, support, sl), m).loss;
        },
        std::vector<NamedTensor>{{"support", support}, {"queries", queries}, {"alpha", m.alpha}, {"beta", m.beta}});
    EXPECT_TRUE(r.passed()) << r.max_rel_error();
  }
}

TEST(EpisodeLoss, FrozenWeightsGetNoGradient) {
  const AsmParams m = AsmParams::make(1.24, 0.1, true);
  EXPECT_TRUE(m.learnable().empty());
  Tensor q = Tensor::from({2, 2}, {1, 0, 0, 1}, true);
  const std::vector<int> labels{0, 1};
  Graph g;
  g.backward(episode_logits_and_loss(g, q, labels, Prototypes{Tensor::from({2, 2}, {1, 1, 0, 2}), {0, 1}}, m).loss);
  EXPECT_FALSE(m.alpha.has_grad());
  EXPECT_FALSE(m.beta.has_grad());
  EXPECT_TRUE(q.has_grad());
}

TEST(EpisodeLoss, CosineSeparableEpisodeRaisesBeta) {
  // Euclidean distance prefers the wrong prototype; only the angle is right.
  const AsmParams m = AsmParams::make(1.0, 0.1);
  ASSERT_EQ(m.learnable().size(), 2u);
  const Prototypes protos{Tensor::from({2, 2}, {5, 0, 0, 1}), {0, 1}};
  const Tensor q = Tensor::from({2, 2}, {0.5, 0, 0, 4.5});
  const std::vector<int> labels{0, 1};
  SgdMomentum opt(m.learnable(), SgdMomentumOptions{.lr = 0.1, .momentum = 0});
  const double before = m.beta_value();
  Graph g;
  g.backward(episode_logits_and_loss(g, q, labels, protos, m).loss);
  opt.step();
  EXPECT_GT(m.beta_value(), before);
}

}  // namespace
}  // namespace fsl
