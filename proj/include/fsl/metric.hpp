#pragma once

#include <span>
#include <vector>

#include "fsl/graph.hpp"

namespace fsl {

inline constexpr double kCosineEps = 1e-12;
inline constexpr double kAsmAlphaInit = 1.24;
inline constexpr double kAsmBetaInit = 0.1;

double squared_euclidean(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);
double cosine_similarity(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);
double squared_euclidean(const Tensor& a, const Tensor& b);
double cosine_similarity(const Tensor& a, const Tensor& b);

/// Fusion weights of the adaptive metric. Frozen weights never require a
/// gradient and are left untouched by training.
struct AsmParams {
  Tensor alpha = Tensor::scalar(kAsmAlphaInit, true);
  Tensor beta = Tensor::scalar(kAsmBetaInit, true);
  bool frozen = false;

  static AsmParams make(double alpha, double beta, bool frozen = false);
  double alpha_value() const { return alpha.item(); }
  double beta_value() const { return beta.item(); }
  /// Empty when frozen.
  std::vector<Tensor> learnable() const;
};

struct Prototypes {
  Tensor matrix;               // (N_way, d)
  std::vector<int> class_ids;  // row -> episode-local class
};

/// Row k is the mean of the support rows labelled k. Members are summed in a
/// fixed order (lexicographic by value), so the result does not depend on
/// support order.
Prototypes compute_prototypes(Graph& g, const Tensor& support_embeddings,
                              std::span<const int> labels);

/// alpha * (-|q - w|^2) + beta * cos(q, w).
double asm_score(const Tensor& query, const Tensor& prototype, const AsmParams& params);

/// (Q, d) x (N, d) -> (Q, N) matrix of asm scores, differentiable in the
/// queries, the prototypes, alpha and beta.
Tensor asm_logits(Graph& g, const Tensor& queries, const Tensor& prototypes,
                  const AsmParams& params);

struct EpisodeLoss {
  Tensor logits;
  Tensor loss;
};

/// Scores each query against each prototype, normalizes over the class axis
/// and returns the mean cross-entropy against `query_labels`.
EpisodeLoss episode_logits_and_loss(Graph& g, const Tensor& query_embeddings,
                                    std::span<const int> query_labels,
                                    const Prototypes& prototypes, const AsmParams& params);

/// Row-wise argmax, first index on ties.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace fsl
