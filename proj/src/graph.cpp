#include "fsl/graph.hpp"

#include "fsl/error.hpp"

namespace fsl {

Tensor Graph::record(Tensor output, std::vector<Tensor> inputs, BackwardFn backward_fn) {
  bool needs_grad = false;
  for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  if (!recording() || !needs_grad) {
    output.set_requires_grad(false);
    return output;
  }
  output.set_requires_grad(true);
  nodes_.push_back(Node{output, std::move(inputs), std::move(backward_fn)});
  return output;
}

void Graph::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ArgumentError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (loss.requires_grad()) {
    Tensor root = loss;
    root.accumulate_grad(Vector::Ones(1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->output.has_grad()) continue;
      it->backward_fn(it->output.grad());
    }
  }
  for (Node& node : nodes_) {
    for (Tensor& in : node.inputs) {
      if (in.requires_grad() && !in.has_grad()) in.zero_grad();
    }
  }
}

}  // namespace fsl
