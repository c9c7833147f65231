#include "fsl/checks.hpp"

#include <chrono>
#include <functional>

#include "fsl/backbone.hpp"
#include "fsl/mar.hpp"
#include "fsl/metric.hpp"
#include "fsl/ops.hpp"
#include "fsl/random.hpp"

namespace fsl {

namespace {

using Builder = std::function<Tensor(Graph&)>;

Tensor weighted_sum(Graph& g, const Tensor& y, const Tensor& w) { return ops::sum(g, ops::mul(g, y, w)); }

Tensor input(Shape shape, Rng& rng) { return uniform(std::move(shape), -1.0, 1.0, rng, true); }

}  // namespace

std::vector<OpCheck> run_gradcheck_suite(std::uint64_t seed, GradcheckOptions options) {
  std::vector<OpCheck> out;
  auto check = [&](const std::string& op, const Builder& fn, const std::vector<NamedTensor>& params,
                   GradcheckOptions opts) {
    const auto start = std::chrono::steady_clock::now();
    GradcheckReport report = finite_diff_gradcheck(fn, params, opts);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    out.push_back({op, std::move(report), dt.count()});
  };
  Rng rng = make_rng(seed, 0x475243);

  {
    Tensor x = input({2, 3, 5, 6}, rng), k = input({4, 3, 3, 3}, rng), b = input({4}, rng);
    Tensor w1 = uniform({2, 4, 5, 6}, -1, 1, rng), w2 = uniform({2, 4, 2, 2}, -1, 1, rng);
    check("conv2d", [=](Graph& g) {
      return ops::add(g, weighted_sum(g, ops::conv2d(g, x, k, b, 1, 1), w1),
                      weighted_sum(g, ops::conv2d(g, x, k, b, 0, 2), w2));
    }, {{"input", x}, {"kernel", k}, {"bias", b}}, options);
  }
  {
    Tensor x = input({2, 2, 5, 7}, rng);
    Tensor w1 = uniform({2, 2, 3, 4}, -1, 1, rng), w2 = uniform({2, 2, 8, 9}, -1, 1, rng);
    check("bilinear_resize", [=](Graph& g) {
      return ops::add(g, weighted_sum(g, ops::bilinear_resize(g, x, 3, 4), w1),
                      weighted_sum(g, ops::bilinear_resize(g, x, 8, 9), w2));
    }, {{"input", x}}, options);
  }
  {
    Tensor x = uniform({3, 7}, -3, 3, rng, true), w = uniform({3, 7}, -1, 1, rng);
    check("gelu", [=](Graph& g) { return weighted_sum(g, ops::gelu(g, x), w); }, {{"input", x}}, options);
  }
  {
    Tensor x = input({4, 5}, rng), wt = input({3, 5}, rng), b = input({3}, rng), w = uniform({4, 3}, -1, 1, rng);
    check("linear", [=](Graph& g) { return weighted_sum(g, ops::linear(g, x, wt, b), w); },
          {{"input", x}, {"weight", wt}, {"bias", b}}, options);
  }
  {
    Tensor x = input({2, 3, 4, 5}, rng), w = uniform({2, 3}, -1, 1, rng);
    check("global_avg_pool", [=](Graph& g) { return weighted_sum(g, ops::global_avg_pool(g, x), w); },
          {{"input", x}}, options);
  }
  {
    Tensor x = uniform({3, 6}, -6, 6, rng, true), w = uniform({3, 6}, -1, 1, rng);
    check("sigmoid", [=](Graph& g) { return weighted_sum(g, ops::sigmoid(g, x), w); }, {{"input", x}}, options);
  }
  {
    Tensor x = uniform({4, 5}, -2, 2, rng, true), w = uniform({4, 5}, -1, 1, rng);
    const std::vector<int> labels{0, 3, 4, 1};
    check("softmax", [=](Graph& g) { return weighted_sum(g, ops::softmax(g, x), w); }, {{"input", x}}, options);
    check("cross_entropy", [=](Graph& g) { return ops::cross_entropy_loss(g, x, labels); }, {{"logits", x}},
          options);
  }
  {
    Tensor x = input({2, 4, 3, 3}, rng), w = uniform({2, 4, 3, 3}, -1, 1, rng);
    LinearParams sq = make_linear(2, 4, rng), ex = make_linear(4, 2, rng);
    for (Tensor* t : {&sq.bias, &ex.bias}) *t = input(t->shape(), rng);
    std::vector<NamedTensor> params{{"input", x}};
    append_named(params, "squeeze", sq);
    append_named(params, "excite", ex);
    check("channel_attention", [=](Graph& g) { return weighted_sum(g, channel_attention(g, x, sq, ex), w); },
          params, options);
  }

  MarConfig small;
  small.in_channels = 2;
  small.feature_channels = 4;
  small.num_blocks = 1;
  small.reduction = 2;
  small.out_h = 4;
  small.out_w = 5;
  // Nonzero biases everywhere so no pathway starts at an exact zero.
  MarParams mar = mar_init(small, seed);
  for (NamedTensor& nt : mar.named()) {
    if (nt.name.ends_with(".bias")) nt.tensor.values() = uniform(nt.tensor.shape(), -0.5, 0.5, rng).values();
  }
  {
    Tensor x = input({2, 4, 4, 4}, rng), w = uniform({2, 4, 4, 4}, -1, 1, rng);
    const MarBlockParams block = mar.blocks[0];
    std::vector<NamedTensor> params{{"input", x}};
    append_named(params, "conv_a", block.conv_a);
    append_named(params, "conv_b", block.conv_b);
    append_named(params, "squeeze", block.squeeze);
    append_named(params, "excite", block.excite);
    check("mar_block", [=](Graph& g) { return weighted_sum(g, mar_block(g, x, block), w); }, params, options);
  }
  {
    Tensor x = input({2, 2, 9, 8}, rng), w = uniform({2, 2, 4, 5}, -1, 1, rng);
    std::vector<NamedTensor> params{{"input", x}};
    for (const NamedTensor& nt : mar.named()) params.push_back(nt);
    check("mar_forward", [=](Graph& g) { return weighted_sum(g, mar_forward(g, x, mar, small), w); }, params,
          options);
  }
  {
    const BackboneParams bb = backbone_init(2, seed);
    Tensor x = input({2, 2, 16, 16}, rng), w = uniform({2, kEmbeddingDim}, -1, 1, rng);
    std::vector<NamedTensor> params{{"input", x}};
    for (const NamedTensor& nt : bb.named()) params.push_back(nt);
    GradcheckOptions sub = options;
    if (sub.max_elements_per_param == 0) sub.max_elements_per_param = 48;
    sub.one_sided_fallback = true;
    check("backbone_forward", [=](Graph& g) { return weighted_sum(g, backbone_forward(g, x, bb), w); }, params,
          sub);
  }
  {
    const AsmParams metric = AsmParams::make(1.24, 0.1);
    Tensor q = input({1, 6}, rng), p = input({1, 6}, rng);
    check("asm_score", [=](Graph& g) { return ops::sum(g, asm_logits(g, q, p, metric)); },
          {{"query", q}, {"prototype", p}, {"alpha", metric.alpha}, {"beta", metric.beta}}, options);
  }
  {
    const AsmParams metric = AsmParams::make(0.7, 0.4);
    Tensor support = input({6, 5}, rng), queries = input({6, 5}, rng);
    const std::vector<int> support_labels{0, 1, 2, 0, 1, 2}, query_labels{2, 0, 1, 1, 0, 2};
    check("episode_logits_and_loss", [=](Graph& g) {
      const Prototypes protos = compute_prototypes(g, support, support_labels);
      return episode_logits_and_loss(g, queries, query_labels, protos, metric).loss;
    }, {{"support", support}, {"queries", queries}, {"alpha", metric.alpha}, {"beta", metric.beta}}, options);
  }
  return out;
}

}  // namespace fsl
