#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bigraph/tensor.hpp"

namespace bigraph {

template <typename T>
struct AdamParamState {
  std::vector<T> m;
  std::vector<T> v;
};

// Standard bias-corrected Adam update on one tensor:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <typename T>
void adam_step(Tensor<T>& param, AdamParamState<T>& state, int64_t t, T lr, T beta1, T beta2,
               T eps) {
  size_t n = static_cast<size_t>(param.numel());
  if (state.m.empty()) {
    state.m.assign(n, T(0));
    state.v.assign(n, T(0));
  }
  BG_CHECK_DIM(state.m.size() == n, "adam: state size " << state.m.size()
                                                        << " does not match parameter " << n);
  if (!param.has_grad()) return;  // no gradient accumulated: parameter untouched
  auto g = param.grad();
  auto p = param.values_mut();
  T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), static_cast<double>(t)));
  T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), static_cast<double>(t)));
  for (size_t i = 0; i < n; ++i) {
    state.m[i] = beta1 * state.m[i] + (T(1) - beta1) * g[i];
    state.v[i] = beta2 * state.v[i] + (T(1) - beta2) * g[i] * g[i];
    T mhat = state.m[i] / bc1;
    T vhat = state.v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

// One optimizer instance per parameter group; groups update independently.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, T lr, T beta1 = T(0.5), T beta2 = T(0.999),
       T eps = T(1e-8))
      : params_(std::move(params)), states_(params_.size()), lr_(lr), beta1_(beta1),
        beta2_(beta2), eps_(eps) {}

  void step() {
    ++t_;
    for (size_t i = 0; i < params_.size(); ++i)
      adam_step(params_[i], states_[i], t_, lr_, beta1_, beta2_, eps_);
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<AdamParamState<T>> states_;
  T lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace bigraph
