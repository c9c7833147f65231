#include "fsl/backbone.hpp"

#include "fsl/error.hpp"
#include "fsl/ops.hpp"

namespace fsl {

std::vector<NamedTensor> BackboneParams::named() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    append_named(out, "backbone.conv" + std::to_string(i), stages[i]);
  }
  return out;
}

std::vector<NamedTensor> HeadParams::named() const {
  std::vector<NamedTensor> out;
  append_named(out, "head.fc", fc);
  return out;
}

BackboneParams backbone_init(Index in_channels, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x424B42);
  BackboneParams p;
  Index c = in_channels;
  for (ConvParams& stage : p.stages) {
    stage = make_conv(kEmbeddingDim, c, 3, rng);
    c = kEmbeddingDim;
  }
  return p;
}

HeadParams head_init(Index num_classes, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x484541);
  return {make_linear(num_classes, kEmbeddingDim, rng)};
}

Tensor backbone_forward(Graph& g, const Tensor& image, const BackboneParams& params) {
  if (image.ndim() != 4 || image.dim(2) < kBackboneMinInput || image.dim(3) < kBackboneMinInput) {
    throw DimensionError("backbone_forward: input " + shape_string(image.shape()) +
                         " too small for four pooling stages (need 16x16)");
  }
  Tensor x = image;
  for (const ConvParams& stage : params.stages) {
    x = ops::max_pool2x2(g, ops::gelu(g, apply_conv(g, x, stage, 1)));
  }
  return ops::global_avg_pool(g, x);
}

Tensor head_forward(Graph& g, const Tensor& embedding, const HeadParams& head) {
  if (embedding.ndim() != 2 || embedding.dim(1) != head.fc.weight.dim(1)) {
    throw DimensionError("head_forward: embedding " + shape_string(embedding.shape()) +
                         " does not match head width " + std::to_string(head.fc.weight.dim(1)));
  }
  return apply_linear(g, embedding, head.fc);
}

}  // namespace fsl
