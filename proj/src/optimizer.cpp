#include "dnncal/optimizer.hpp"

#include <cmath>

#include "dnncal/errors.hpp"

namespace dnncal {

void adam_step(std::span<double> weights, std::span<const double> grads, AdamState& state, const AdamHyper& hyper) {
  const std::size_t n = weights.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n)
    throw DataError("adam_step: dimension mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grads[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    weights[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

}  // namespace dnncal
