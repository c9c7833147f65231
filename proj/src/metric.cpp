#include "fsl/metric.hpp"

#include <algorithm>
#include <cmath>

#include "fsl/error.hpp"
#include "fsl/ops.hpp"

namespace fsl {
namespace {

void require_same_width(Index a, Index b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": width mismatch " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

}  // namespace

double squared_euclidean(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  require_same_width(a.size(), b.size(), "squared_euclidean");
  return (a - b).squaredNorm();
}

double cosine_similarity(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  require_same_width(a.size(), b.size(), "cosine_similarity");
  const double na = std::max(a.norm(), kCosineEps);
  const double nb = std::max(b.norm(), kCosineEps);
  return a.dot(b) / (na * nb);
}

double squared_euclidean(const Tensor& a, const Tensor& b) {
  return squared_euclidean(a.values(), b.values());
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  return cosine_similarity(a.values(), b.values());
}

AsmParams AsmParams::make(double alpha, double beta, bool frozen) {
  AsmParams p;
  p.alpha = Tensor::scalar(alpha, !frozen);
  p.beta = Tensor::scalar(beta, !frozen);
  p.frozen = frozen;
  return p;
}

std::vector<Tensor> AsmParams::learnable() const {
  if (frozen) return {};
  return {alpha, beta};
}

Prototypes compute_prototypes(Graph& g, const Tensor& support_embeddings,
                              std::span<const int> labels) {
  if (support_embeddings.ndim() != 2) {
    throw DimensionError("compute_prototypes: embeddings must be (rows, d), got " +
                         shape_string(support_embeddings.shape()));
  }
  const Index rows = support_embeddings.dim(0), d = support_embeddings.dim(1);
  if (static_cast<Index>(labels.size()) != rows) {
    throw ArgumentError("compute_prototypes: label count does not match embedding rows");
  }
  int num_classes = 0;
  for (int label : labels) {
    if (label < 0) throw ArgumentError("compute_prototypes: negative label");
    num_classes = std::max(num_classes, label + 1);
  }
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(num_classes));
  for (Index i = 0; i < rows; ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);

  ConstRowMatrixMap x(support_embeddings.values().data(), rows, d);
  const std::size_t shot = members.empty() ? 0 : members[0].size();
  for (int k = 0; k < num_classes; ++k) {
    auto& m = members[static_cast<std::size_t>(k)];
    if (m.empty()) {
      throw ArgumentError("compute_prototypes: class " + std::to_string(k) + " has no support samples");
    }
    if (m.size() != shot) {
      throw ArgumentError("compute_prototypes: classes have unequal support counts");
    }
    std::stable_sort(m.begin(), m.end(), [&](Index a, Index b) {
      return std::lexicographical_compare(x.row(a).data(), x.row(a).data() + d,
                                          x.row(b).data(), x.row(b).data() + d);
    });
  }

  RowMatrix proto = RowMatrix::Zero(num_classes, d);
  for (int k = 0; k < num_classes; ++k) {
    const auto& m = members[static_cast<std::size_t>(k)];
    for (Index i : m) proto.row(k) += x.row(i);
    proto.row(k) /= static_cast<double>(m.size());
  }
  Tensor out({num_classes, d}, Eigen::Map<const Vector>(proto.data(), proto.size()));
  out = g.record(out, {support_embeddings},
                 [support_embeddings, members, rows, d](const Vector& go) mutable {
    ConstRowMatrixMap gp(go.data(), static_cast<Index>(members.size()), d);
    RowMatrix dx = RowMatrix::Zero(rows, d);
    for (std::size_t k = 0; k < members.size(); ++k) {
      const double w = 1.0 / static_cast<double>(members[k].size());
      for (Index i : members[k]) dx.row(i) += w * gp.row(static_cast<Index>(k));
    }
    accumulate(support_embeddings, Eigen::Map<const Vector>(dx.data(), dx.size()));
  });

  Prototypes result{out, {}};
  for (int k = 0; k < num_classes; ++k) result.class_ids.push_back(k);
  return result;
}

double asm_score(const Tensor& query, const Tensor& prototype, const AsmParams& params) {
  return -params.alpha_value() * squared_euclidean(query, prototype) +
         params.beta_value() * cosine_similarity(query, prototype);
}

Tensor asm_logits(Graph& g, const Tensor& queries, const Tensor& prototypes,
                  const AsmParams& params) {
  if (queries.ndim() != 2 || prototypes.ndim() != 2) {
    throw DimensionError("asm_logits: queries and prototypes must be matrices");
  }
  const Index nq = queries.dim(0), np = prototypes.dim(0), d = queries.dim(1);
  require_same_width(d, prototypes.dim(1), "asm_logits");
  ConstRowMatrixMap q(queries.values().data(), nq, d);
  ConstRowMatrixMap w(prototypes.values().data(), np, d);
  const double alpha = params.alpha_value(), beta = params.beta_value();

  RowMatrix euc(nq, np), cos(nq, np);
  for (Index j = 0; j < nq; ++j) {
    for (Index k = 0; k < np; ++k) {
      euc(j, k) = (q.row(j) - w.row(k)).squaredNorm();
      cos(j, k) = cosine_similarity(q.row(j).transpose(), w.row(k).transpose());
    }
  }
  RowMatrix scores = -alpha * euc + beta * cos;
  Tensor out({nq, np}, Eigen::Map<const Vector>(scores.data(), scores.size()));

  Tensor a = params.alpha, b = params.beta;
  return g.record(out, {queries, prototypes, a, b},
                  [queries, prototypes, a, b, euc, cos, nq, np, d](const Vector& go) mutable {
    ConstRowMatrixMap gs(go.data(), nq, np);
    const double alpha = a.item(), beta = b.item();
    if (a.requires_grad()) accumulate(a, Vector::Constant(1, -gs.cwiseProduct(euc).sum()));
    if (b.requires_grad()) accumulate(b, Vector::Constant(1, gs.cwiseProduct(cos).sum()));
    if (!queries.requires_grad() && !prototypes.requires_grad()) return;

    ConstRowMatrixMap q(queries.values().data(), nq, d);
    ConstRowMatrixMap w(prototypes.values().data(), np, d);
    Eigen::VectorXd qn(nq), wn(np);
    for (Index j = 0; j < nq; ++j) qn[j] = q.row(j).norm();
    for (Index k = 0; k < np; ++k) wn[k] = w.row(k).norm();
    RowMatrix dq = RowMatrix::Zero(nq, d), dw = RowMatrix::Zero(np, d);
    for (Index j = 0; j < nq; ++j) {
      for (Index k = 0; k < np; ++k) {
        const double gjk = gs(j, k);
        if (gjk == 0.0) continue;
        const auto diff = q.row(j) - w.row(k);
        dq.row(j) += gjk * (-2.0 * alpha) * diff;
        dw.row(k) += gjk * (2.0 * alpha) * diff;
        const double nqc = std::max(qn[j], kCosineEps), nwc = std::max(wn[k], kCosineEps);
        const double c = cos(j, k);
        Eigen::RowVectorXd dcq = w.row(k) / (nqc * nwc);
        if (qn[j] > kCosineEps) dcq -= c * q.row(j) / (qn[j] * qn[j]);
        Eigen::RowVectorXd dcw = q.row(j) / (nqc * nwc);
        if (wn[k] > kCosineEps) dcw -= c * w.row(k) / (wn[k] * wn[k]);
        dq.row(j) += gjk * beta * dcq;
        dw.row(k) += gjk * beta * dcw;
      }
    }
    accumulate(queries, Eigen::Map<const Vector>(dq.data(), dq.size()));
    accumulate(prototypes, Eigen::Map<const Vector>(dw.data(), dw.size()));
  });
}

EpisodeLoss episode_logits_and_loss(Graph& g, const Tensor& query_embeddings,
                                    std::span<const int> query_labels,
                                    const Prototypes& prototypes, const AsmParams& params) {
  const int ways = static_cast<int>(prototypes.matrix.dim(0));
  for (int label : query_labels) {
    if (label < 0 || label >= ways) {
      throw ArgumentError("episode loss: query label " + std::to_string(label) +
                          " outside [0, " + std::to_string(ways) + ")");
    }
  }
  Tensor logits = asm_logits(g, query_embeddings, prototypes.matrix, params);
  Tensor loss = ops::cross_entropy_loss(g, logits, query_labels);
  return {logits, loss};
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.ndim() != 2) throw DimensionError("argmax_rows: expected a matrix");
  ConstRowMatrixMap z(logits.values().data(), logits.dim(0), logits.dim(1));
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(z.rows()));
  for (Index i = 0; i < z.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < z.cols(); ++k) {
      if (z(i, k) > z(i, best)) best = k;
    }
    out.push_back(static_cast<int>(best));
  }
  return out;
}

}  // namespace fsl
