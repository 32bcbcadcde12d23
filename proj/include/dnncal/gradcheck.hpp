#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dnncal/network.hpp"

namespace dnncal {

struct GradcheckCase {
  NetworkConfig config;
  std::size_t checked = 0;
  std::size_t skipped_at_kink = 0;  // perturbation crossed an activation kink
  double max_rel_error_reference = 0.0;
  double max_rel_error_kernel = 0.0;
  double max_rel_kernel_vs_reference = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double tolerance = 1e-4;
  double step = 1e-5;
  bool passed() const;
  double worst() const;
};

/// Relative error |a-b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-3);

/// Random small networks (p <= 16, d_c <= 4, L <= 2) with random dropout
/// masks; compares reverse-mode gradients against central differences.
GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t n_cases = 20, double step = 1e-5,
                              double tolerance = 1e-4);

}  // namespace dnncal
