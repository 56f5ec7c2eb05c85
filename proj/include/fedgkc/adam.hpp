#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "fedgkc/tensor.hpp"

namespace fedgkc {

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// L2 penalty folded into the gradient (coupled, as in classic Adam).
  double weight_decay = 5e-4;

  bool operator==(const AdamConfig&) const = default;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  Parameters first_moment;
  Parameters second_moment;
};

/// One bias-corrected Adam update of `params` in place. Every parameter must
/// have a gradient of matching shape.
inline void adam_step(Parameters& params, const Gradients& grads, AdamState& state) {
  for (const auto& [name, value] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw PreconditionError("adam_step: missing gradient for '" + name + "'");
    if (it->second.rows() != value.rows() || it->second.cols() != value.cols())
      throw DimensionError("adam_step: gradient shape mismatch for '" + name + "'");
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (auto& [name, value] : params) {
    Matrix g = grads.at(name);
    if (c.weight_decay != 0.0) g += c.weight_decay * value;
    auto [m_it, m_new] = state.first_moment.try_emplace(name, Matrix::Zero(value.rows(), value.cols()));
    auto [v_it, v_new] = state.second_moment.try_emplace(name, Matrix::Zero(value.rows(), value.cols()));
    Matrix& m = m_it->second;
    Matrix& v = v_it->second;
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    value.array() -= c.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + c.epsilon);
  }
}

}  // namespace fedgkc
