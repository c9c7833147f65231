#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "fsl/tensor.hpp"

namespace fsl {

/// Append-only tape of executed operations. Nodes are stored in execution
/// order, which is a topological order of the dataflow; `backward` walks it
/// in reverse and visits each node once.
///
/// A Graph and the tensors it references belong to one thread.
class Graph {
 public:
  enum class Mode { kRecord, kInference };
  using BackwardFn = std::function<void(const Vector& grad_output)>;

  explicit Graph(Mode mode = Mode::kRecord) : mode_(mode) {}

  /// Registers `output` as computed from `inputs`. When nothing is being
  /// recorded (inference mode, or no input requires a gradient) the output is
  /// returned as a constant and `backward_fn` is dropped.
  Tensor record(Tensor output, std::vector<Tensor> inputs, BackwardFn backward_fn);

  bool recording() const { return mode_ == Mode::kRecord; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode accumulation from a scalar loss. Leaves reached by the tape
  /// but not by the loss end with a zero gradient.
  void backward(const Tensor& loss);

 private:
  struct Node {
    Tensor output;
    std::vector<Tensor> inputs;
    BackwardFn backward_fn;
  };

  Mode mode_;
  std::vector<Node> nodes_;
};

/// Gradient accumulation helper for backward rules.
inline void accumulate(Tensor t, const Eigen::Ref<const Vector>& delta) {
  if (t.requires_grad()) t.accumulate_grad(delta);
}

}  // namespace fsl
