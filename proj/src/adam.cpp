#include "extsum/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace extsum {

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), Real(0));
      state.second_moment.emplace_back(p.size(), Real(0));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter list changed between steps");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    auto values = p.values();
    auto grads = p.grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (grads.size() != values.size() || m.size() != values.size()) {
      throw std::invalid_argument("adam_step: parameter " + std::to_string(k) + " has no gradient slot");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i];
      m[i] = static_cast<Real>(state.beta1 * m[i] + (1.0 - state.beta1) * g);
      v[i] = static_cast<Real>(state.beta2 * v[i] + (1.0 - state.beta2) * g * g);
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= static_cast<Real>(state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
    p.zero_grad();
  }
}

}  // namespace extsum
