// Adam with bias correction. One optimizer instance owns the moment state
// for a fixed set of named parameters; the step counter is shared across
// the set (one optimizer step updates every parameter once).
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "meshtex/common.hpp"
#include "meshtex/tensor.hpp"

namespace meshtex {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamSlot {
  Tensor<S> m;
  Tensor<S> v;
};

// In-place Adam update of a single parameter tensor. t is the 1-based step
// count after this update.
template <typename S>
void adam_step(Tensor<S>& param, const Tensor<S>& grad, AdamSlot<S>& slot,
               const AdamConfig& cfg, long t) {
  if (!param.same_shape(grad)) {
    throw ShapeError("adam_step: parameter " + shape_str(param.shape) +
                     " vs gradient " + shape_str(grad.shape));
  }
  const S b1 = static_cast<S>(cfg.beta1);
  const S b2 = static_cast<S>(cfg.beta2);
  const S corr1 = static_cast<S>(1.0 - std::pow(cfg.beta1, t));
  const S corr2 = static_cast<S>(1.0 - std::pow(cfg.beta2, t));
  const S lr = static_cast<S>(cfg.lr);
  const S eps = static_cast<S>(cfg.eps);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const S g = (*grad.data)[i];
    S& m = (*slot.m.data)[i];
    S& v = (*slot.v.data)[i];
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g * g;
    const S mhat = m / corr1;
    const S vhat = v / corr2;
    (*param.data)[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename S>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  void register_param(const std::string& name, Tensor<S>* param) {
    names_.push_back(name);
    params_.push_back(param);
    slots_.push_back(
        {Tensor<S>::zeros(param->shape), Tensor<S>::zeros(param->shape)});
  }

  // grads[i] is the gradient for the i-th registered parameter.
  void step(const std::vector<Tensor<S>>& grads) {
    if (grads.size() != params_.size()) {
      throw ShapeError("AdamOptimizer::step: expected " +
                       std::to_string(params_.size()) + " gradients, got " +
                       std::to_string(grads.size()));
    }
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      adam_step(*params_[i], grads[i], slots_[i], cfg_, t_);
    }
  }

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  std::size_t param_count() const { return params_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  AdamSlot<S>& slot(std::size_t i) { return slots_[i]; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::string> names_;
  std::vector<Tensor<S>*> params_;
  std::vector<AdamSlot<S>> slots_;
};

}  // namespace meshtex
