#pragma once

#include <cstdint>
#include <vector>

#include "fsl/tensor.hpp"

namespace fsl {

/// Common surface of the two optimizers. Parameters are tensor handles, so
/// updates land in the caller's parameter storage.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Applies one update. Throws StateError, leaving everything untouched, if
  /// any parameter lacks a gradient.
  virtual void step() = 0;
  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t step_count() const { return steps_; }
  const std::vector<Tensor>& params() const { return params_; }

 protected:
  Optimizer(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {}
  void require_grads() const;

  std::vector<Tensor> params_;
  double lr_;
  std::int64_t steps_ = 0;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Added to the gradient as weight_decay * param before the moment update.
  double weight_decay = 5e-4;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(std::vector<Tensor> params, AdamOptions options = {});
  void step() override;
  const std::vector<Vector>& first_moments() const { return m_; }
  const std::vector<Vector>& second_moments() const { return v_; }

 private:
  AdamOptions options_;
  std::vector<Vector> m_, v_;
};

struct SgdMomentumOptions {
  double lr = 2e-4;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// v <- momentum * v + grad; param <- param - lr * v.
class SgdMomentum final : public Optimizer {
 public:
  explicit SgdMomentum(std::vector<Tensor> params, SgdMomentumOptions options = {});
  void step() override;
  const std::vector<Vector>& velocities() const { return velocity_; }

 private:
  SgdMomentumOptions options_;
  std::vector<Vector> velocity_;
};

}  // namespace fsl
