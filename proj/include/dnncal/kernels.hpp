#pragma once

// Batched training and inference kernels. Per-sample recurrent work runs in
// OpenMP parallel loops; the fully connected stack runs as dense matrix
// products over the whole batch. Every reduction is performed in sample
// order, so results do not depend on the thread count or the schedule.

#include <memory>
#include <span>
#include <vector>

#include "dnncal/network.hpp"

namespace dnncal {

class TrainingKernel {
 public:
  explicit TrainingKernel(const NetworkConfig& cfg);
  ~TrainingKernel();
  TrainingKernel(TrainingKernel&&) noexcept;
  TrainingKernel& operator=(TrainingKernel&&) noexcept;

  /// Writes data_weight * d(sum of squared residuals) + d(ridge) into `grad`
  /// and returns the unweighted sum of squared residuals over the batch.
  double loss_and_gradient(std::span<const Sample> batch, const NetworkWeights& net,
                           std::span<const DropoutMasks> masks, std::span<double> grad, double data_weight = 1.0);

 private:
  struct Workspace;
  std::unique_ptr<Workspace> ws_;
};

/// Column i holds lambda^(level) (unmasked) for series[i]; level 0 is the
/// flattened BiLSTM output, level L the input of the output head.
Eigen::MatrixXd feature_matrix(std::span<const std::span<const double>> series, const NetworkWeights& net,
                               std::size_t level);

/// Mean-head outputs (d_theta x n) without dropout.
Eigen::MatrixXd predict_batch(std::span<const std::span<const double>> series, const NetworkWeights& net);

}  // namespace dnncal
