#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dnncal {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  static AdamState zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update, in place.
void adam_step(std::span<double> weights, std::span<const double> grads, AdamState& state, const AdamHyper& hyper);

}  // namespace dnncal
