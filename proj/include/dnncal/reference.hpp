#pragma once

// Serial reference implementation of the training gradient. It is written for
// clarity (one sample at a time, gate by gate) and is kept as the yardstick
// that the batched OpenMP kernel is tested and benchmarked against.

#include <span>
#include <vector>

#include "dnncal/network.hpp"

namespace dnncal::reference {

/// Adds the squared-loss gradient of one sample to `grad` (layout of `net`);
/// returns that sample's squared residual. No ridge term.
double accumulate_sample_gradient(const Sample& sample, const NetworkWeights& net, const DropoutMasks* masks,
                                  std::span<double> grad);

/// Exact gradient of loss_penalized with respect to every weight.
std::vector<double> gradients(std::span<const Sample> batch, const NetworkWeights& net,
                              std::span<const DropoutMasks> masks = {});

}  // namespace dnncal::reference
