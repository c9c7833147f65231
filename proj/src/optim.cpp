#include "fsl/optim.hpp"

#include <cmath>

#include "fsl/error.hpp"

namespace fsl {

void Optimizer::zero_grad() {
  for (Tensor& p : params_) p.clear_grad();
}

void Optimizer::require_grads() const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw StateError("optimizer: parameter " + std::to_string(i) + " " +
                       shape_string(params_[i].shape()) + " has no gradient");
    }
  }
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : Optimizer(std::move(params), options.lr), options_(options) {
  for (const Tensor& p : params_) {
    m_.push_back(Vector::Zero(p.numel()));
    v_.push_back(Vector::Zero(p.numel()));
  }
}

void Adam::step() {
  require_grads();
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Vector& p = params_[i].values();
    const Vector grad = params_[i].grad() + options_.weight_decay * p;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * grad;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * grad.cwiseAbs2();
    p.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.eps);
  }
}

SgdMomentum::SgdMomentum(std::vector<Tensor> params, SgdMomentumOptions options)
    : Optimizer(std::move(params), options.lr), options_(options) {
  for (const Tensor& p : params_) velocity_.push_back(Vector::Zero(p.numel()));
}

void SgdMomentum::step() {
  require_grads();
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Vector& p = params_[i].values();
    velocity_[i] = options_.momentum * velocity_[i] + params_[i].grad() + options_.weight_decay * p;
    p -= lr_ * velocity_[i];
  }
}

}  // namespace fsl
