#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "seizdet/error.hpp"
#include "seizdet/nn/network.hpp"

namespace seizdet::nn {

// Moment estimates for one parameter vector.
template <std::floating_point T>
struct AdamState {
  long step{0};
  std::vector<double> m, v;
  double lr{4.1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double epsilon{1e-7};
};

// One bias-corrected Adam update:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps).
template <std::floating_point T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& s) {
  if (params.size() != grads.size()) throw ContractError("adam_step: params and grads differ in length");
  if (s.m.empty()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  if (s.m.size() != params.size()) throw ContractError("adam_step: state length does not match params");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    params[i] = static_cast<T>(params[i] - s.lr * m_hat / (std::sqrt(v_hat) + s.epsilon));
  }
}

// Adam over every trainable tensor of a network.
template <std::floating_point T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-7)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  void step(Network<T>& net) {
    auto params = net.trainable_params();
    if (states_.empty()) states_.resize(params.size(), AdamState<T>{0, {}, {}, lr_, beta1_, beta2_, eps_});
    for (std::size_t i = 0; i < params.size(); ++i)
      adam_step<T>(params[i]->value.values(), params[i]->grad.values(), states_[i]);
  }

  long steps() const { return states_.empty() ? 0 : states_.front().step; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<AdamState<T>> states_;
};

}  // namespace seizdet::nn
