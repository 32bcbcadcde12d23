#pragma once

// Inverse-emulator training and prediction: the mean network fitted on the
// contaminated ensemble, last-layer quantile heads on top of its frozen
// features, and MC-dropout intervals as a baseline.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dnncal/discrepancy.hpp"
#include "dnncal/network.hpp"

namespace dnncal {

struct TrainingConfig {
  std::size_t epochs = 25;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  /// Final learning rate as a fraction of the initial one (cosine schedule).
  double min_lr_fraction = 0.05;
  std::uint64_t seed = 1;
  /// 0 means the same as epochs.
  std::size_t quantile_epochs = 0;
  double quantile_learning_rate = 1e-2;
  /// Fraction of design points kept out of mean training and used to fit the
  /// quantile heads; 0 fits the heads on the training pairs themselves.
  double head_holdout = 0.2;
  std::size_t mc_passes = 1000;

  std::size_t effective_quantile_epochs() const;
  void validate(std::size_t n_pairs) const;
  bool operator==(const TrainingConfig&) const = default;
};

/// Maps between original units and the network's working units: series are
/// standardized with one global mean/scale, parameters mapped to [0,1].
struct Normalization {
  double series_mean = 0.0;
  double series_scale = 1.0;
  std::vector<Interval> box;

  static Normalization fit(const ContaminatedSet& data);

  TimeSeries normalize_series(std::span<const double> y) const;
  std::vector<double> normalize_theta(std::span<const double> theta) const;
  std::vector<double> denormalize_theta(std::span<const double> unit) const;
  bool operator==(const Normalization&) const = default;
};

struct TrainedModel {
  NetworkWeights net;
  std::vector<QuantileHead> heads;  // one per tau in config().tau_set once fitted
  Normalization norm;
  TrainingConfig train_cfg;
  std::vector<double> loss_history;   // [0] at initialization, then one per epoch
  std::vector<double> quantile_cost;  // final maskless pinball cost per head

  const NetworkConfig& config() const { return net.config(); }
  bool heads_fitted() const;
  const QuantileHead& head(double tau) const;
};

/// Point and interval estimate for each parameter, in original units.
struct CalibrationEstimate {
  std::vector<double> median;
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Normalized working copy of a contaminated set.
struct TrainingData {
  std::vector<TimeSeries> series;
  std::vector<std::vector<double>> targets;
  std::vector<Sample> samples() const;
};

TrainingData prepare(const ContaminatedSet& data, const Normalization& norm);

TrainedModel train_mean(const ContaminatedSet& data, NetworkConfig net_cfg, const TrainingConfig& train_cfg);

/// Pinball cost sum_i sum_j rho_tau(target - prediction), where
/// rho_tau(r) = r (tau - 1{r < 0}).
double pinball_cost(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets, double tau);

struct HeadFitOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double min_lr_fraction = 0.05;
  double p_keep = 1.0;  // dropout on the features feeding the head
};

/// Subgradient fit of one quantile head on fixed features (d_(L) x N) and
/// targets (d_theta x N), starting from `init`. Never returns a head whose
/// maskless cost exceeds that of `init`.
QuantileHead fit_quantile_head(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, double tau,
                               const QuantileHead& init, const HeadFitOptions& opts, Rng& rng);

/// Fits one head per tau in the network config on the frozen mean network.
void fit_quantile_heads(TrainedModel& model, const ContaminatedSet& data, const TrainingConfig& cfg);

/// Partition by design point: all realizations of a source land on the same
/// side. `second` receives round(fraction * sources) sources (at least one
/// when fraction > 0, never all of them); both halves carry the full box.
struct DesignSplit {
  ContaminatedSet first;
  ContaminatedSet second;
};
DesignSplit split_design_points(const ContaminatedSet& data, double fraction, Rng& rng);

std::vector<double> predict_point(const TrainedModel& model, std::span<const double> z);
CalibrationEstimate predict_interval(const TrainedModel& model, std::span<const double> z);
CalibrationEstimate predict_mc_dropout(const TrainedModel& model, std::span<const double> z, std::size_t passes,
                                       Rng& rng);

/// Batched forms returning estimates in normalized [0,1] units, one per series.
std::vector<CalibrationEstimate> predict_interval_unit(const TrainedModel& model,
                                                       std::span<const TimeSeries> series);
/// Scenario i draws its masks from rng.substream(i).
std::vector<CalibrationEstimate> predict_mc_dropout_unit(const TrainedModel& model,
                                                         std::span<const TimeSeries> series, std::size_t passes,
                                                         const Rng& rng);

/// Linear-interpolation sample quantile (Hyndman-Fan type 7).
double empirical_quantile(std::vector<double> values, double q);

}  // namespace dnncal
