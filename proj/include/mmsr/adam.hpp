#pragma once

// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.

#include <cmath>
#include <vector>

#include "mmsr/tensor.hpp"

namespace mmsr {

template <class S>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Tensor<S>> params, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    moments_m_.reserve(params_.size());
    moments_v_.reserve(params_.size());
    for (const auto& p : params_) {
      moments_m_.push_back(ArrayX<S>::Zero(p.numel()));
      moments_v_.push_back(ArrayX<S>::Zero(p.numel()));
    }
  }

  int step_count() const { return step_; }

  // One update from the grads currently stored on the parameters.
  void step(double lr) {
    ++step_;
    const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    const S bc1 = static_cast<S>(1.0 - std::pow(beta1_, step_));
    const S bc2 = static_cast<S>(1.0 - std::pow(beta2_, step_));
    const S rate = static_cast<S>(lr), eps = static_cast<S>(eps_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto g = params_[i].grad_array();
      auto& m = moments_m_[i];
      auto& v = moments_v_[i];
      m = b1 * m + (S(1) - b1) * g;
      v = b2 * v + (S(1) - b2) * g.square();
      params_[i].array() -= rate * (m / bc1) / ((v / bc2).sqrt() + eps);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Tensor<S>> params_;
  std::vector<ArrayX<S>> moments_m_, moments_v_;
  double beta1_, beta2_, eps_;
  int step_ = 0;
};

}  // namespace mmsr
