#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fsl/layers.hpp"

namespace fsl {

inline constexpr Index kEmbeddingDim = 32;
inline constexpr Index kBackboneMinInput = 16;

/// Conv-4 style embedding network: four [conv3x3 -> GELU -> maxpool 2x2]
/// stages of width 32, then global average pooling.
struct BackboneParams {
  std::array<ConvParams, 4> stages;

  std::vector<NamedTensor> named() const;
  Index in_channels() const { return stages[0].weight.dim(1); }
};

struct HeadParams {
  LinearParams fc;  // (num_classes, d)

  std::vector<NamedTensor> named() const;
  Index num_classes() const { return fc.weight.dim(0); }
};

BackboneParams backbone_init(Index in_channels, std::uint64_t seed);
HeadParams head_init(Index num_classes, std::uint64_t seed);

/// (N, C, H, W) -> (N, 32). H and W must be at least 16.
Tensor backbone_forward(Graph& g, const Tensor& image, const BackboneParams& params);

/// (N, 32) -> (N, num_classes) logits.
Tensor head_forward(Graph& g, const Tensor& embedding, const HeadParams& head);

}  // namespace fsl
