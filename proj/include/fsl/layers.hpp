#pragma once

#include <string>
#include <vector>

#include "fsl/graph.hpp"
#include "fsl/random.hpp"

namespace fsl {

struct ConvParams {
  Tensor weight;  // (C_out, C_in, k, k)
  Tensor bias;    // (C_out)
};

struct LinearParams {
  Tensor weight;  // (d_out, d_in)
  Tensor bias;    // (d_out)
};

/// Fan-in-scaled uniform weights, zero bias.
ConvParams make_conv(Index c_out, Index c_in, Index kernel, Rng& rng);
LinearParams make_linear(Index d_out, Index d_in, Rng& rng);

void append_named(std::vector<NamedTensor>& out, const std::string& prefix, const ConvParams& p);
void append_named(std::vector<NamedTensor>& out, const std::string& prefix, const LinearParams& p);

Tensor apply_conv(Graph& g, const Tensor& x, const ConvParams& p, int padding);
Tensor apply_linear(Graph& g, const Tensor& x, const LinearParams& p);

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named);
Index count_parameters(const std::vector<NamedTensor>& named);

}  // namespace fsl
