#pragma once

#include <span>
#include <vector>

#include "fsl/graph.hpp"
#include "fsl/tensor.hpp"

/// Differentiable operators. Every function records onto the given graph and
/// returns a new tensor; image tensors are (N, C, H, W).
namespace fsl::ops {

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& a, double factor);
Tensor sum(Graph& g, const Tensor& a);
Tensor mean(Graph& g, const Tensor& a);

/// Cross-correlation with zero padding and per-output-channel bias.
/// kernel is (C_out, C_in, kH, kW), bias is (C_out).
Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int padding, int stride);

/// Half-pixel-center bilinear resampling with edge clamping. Identity when
/// the target size equals the source size.
Tensor bilinear_resize(Graph& g, const Tensor& input, Index out_h, Index out_w);

/// Exact GELU, x * Phi(x).
Tensor gelu(Graph& g, const Tensor& input);
Tensor sigmoid(Graph& g, const Tensor& input);

/// input (N, d_in) times weight (d_out, d_in) transposed, plus bias (d_out).
Tensor linear(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias);

/// (N, C, H, W) -> (N, C) spatial mean.
Tensor global_avg_pool(Graph& g, const Tensor& input);

/// 2x2 window, stride 2, floor on odd extents. Ties go to the first position
/// in row-major scan order.
Tensor max_pool2x2(Graph& g, const Tensor& input);

/// Multiplies every (n, c) feature map by gate(n, c).
Tensor channel_scale(Graph& g, const Tensor& features, const Tensor& gate);

/// Row-wise softmax over (N, K).
Tensor softmax(Graph& g, const Tensor& input);

/// Mean negative log-likelihood of `labels` under row-wise softmax(logits).
Tensor cross_entropy_loss(Graph& g, const Tensor& logits, std::span<const int> labels);

/// Scalar helpers for tests and oracles.
double gelu_value(double x);
double sigmoid_value(double x);

}  // namespace fsl::ops
