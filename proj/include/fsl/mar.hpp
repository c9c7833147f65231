#pragma once

#include <cstdint>
#include <vector>

#include "fsl/layers.hpp"

namespace fsl {

/// Shape knobs of the learnable resizer: a 7x7 then 1x1 stem at input
/// resolution, bilinear downsampling, `num_blocks` residual blocks with
/// channel attention, and a 3x3 projection back to image channels.
struct MarConfig {
  Index in_channels = 3;
  Index feature_channels = 16;
  Index num_blocks = 4;
  Index reduction = 4;
  Index out_h = 16;
  Index out_w = 16;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const MarConfig&) const = default;
};

struct MarBlockParams {
  ConvParams conv_a;
  ConvParams conv_b;
  LinearParams squeeze;  // (F/r, F)
  LinearParams excite;   // (F, F/r)
};

struct MarParams {
  ConvParams conv7;
  ConvParams conv1;
  std::vector<MarBlockParams> blocks;
  ConvParams conv3;

  /// Stable order; names are prefixed with "mar.".
  std::vector<NamedTensor> named() const;
};

MarParams mar_init(const MarConfig& config, std::uint64_t seed);

/// Closed-form parameter count for `config`.
Index mar_parameter_count(const MarConfig& config);

/// Squeeze-excitation gating: sigmoid(excite(gelu(squeeze(avgpool(x))))) per
/// channel, multiplied back onto the features.
Tensor channel_attention(Graph& g, const Tensor& features, const LinearParams& squeeze,
                         const LinearParams& excite);

/// features + CA(convB(gelu(convA(features)))), shape preserving.
Tensor mar_block(Graph& g, const Tensor& features, const MarBlockParams& block);

/// (N, C_in, H, W) -> (N, C_in, out_h, out_w). With every parameter zero the
/// result is exactly the bilinear resize of the image.
Tensor mar_forward(Graph& g, const Tensor& image, const MarParams& params, const MarConfig& config);

}  // namespace fsl
