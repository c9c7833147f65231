#include "fsl/layers.hpp"

#include "fsl/ops.hpp"

namespace fsl {

ConvParams make_conv(Index c_out, Index c_in, Index kernel, Rng& rng) {
  return {fan_in_uniform({c_out, c_in, kernel, kernel}, c_in * kernel * kernel, rng),
          Tensor::zeros({c_out}, true)};
}

LinearParams make_linear(Index d_out, Index d_in, Rng& rng) {
  return {fan_in_uniform({d_out, d_in}, d_in, rng), Tensor::zeros({d_out}, true)};
}

void append_named(std::vector<NamedTensor>& out, const std::string& prefix, const ConvParams& p) {
  out.push_back({prefix + ".weight", p.weight});
  out.push_back({prefix + ".bias", p.bias});
}

void append_named(std::vector<NamedTensor>& out, const std::string& prefix, const LinearParams& p) {
  out.push_back({prefix + ".weight", p.weight});
  out.push_back({prefix + ".bias", p.bias});
}

Tensor apply_conv(Graph& g, const Tensor& x, const ConvParams& p, int padding) {
  return ops::conv2d(g, x, p.weight, p.bias, padding, 1);
}

Tensor apply_linear(Graph& g, const Tensor& x, const LinearParams& p) {
  return ops::linear(g, x, p.weight, p.bias);
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

Index count_parameters(const std::vector<NamedTensor>& named) {
  Index total = 0;
  for (const auto& n : named) total += n.tensor.numel();
  return total;
}

}  // namespace fsl
