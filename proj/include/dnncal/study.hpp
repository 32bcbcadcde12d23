#pragma once

// Synthetic single-peak simulation study: model, ensemble and test scenario
// generation, and the four scoring metrics (bias, RMSE, interval length,
// interval coverage).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dnncal/calibration.hpp"
#include "dnncal/discrepancy.hpp"

namespace dnncal {

inline constexpr std::size_t kSyntheticLength = 480;
inline constexpr std::size_t kSyntheticParams = 3;

/// u_1..u_p equally spaced on [-2, 2].
std::vector<double> synthetic_grid(std::size_t p = kSyntheticLength);

/// Y(theta, t) = 0.3 + (theta1 + 0.3) / sqrt(2 pi (theta3 + 0.1))
///                    * exp(-(u_t - theta2 + 0.5)^2 / (theta3 + 0.1)),
/// with theta in [0,1]^3 (scale, peak location, dispersion).
TimeSeries synthetic_output(std::span<const double> theta, std::size_t p = kSyntheticLength);

/// n runs on a Latin hypercube over [0,1]^3; the box is declared as [0,1]^3.
Ensemble generate_ensemble(std::size_t n, Rng& rng, std::size_t p = kSyntheticLength);

struct TestScenario {
  std::vector<double> theta_true;
  TimeSeries z;
  DiscrepancyParams noise;
};

/// theta uniform on [0,1]^3, discrepancy hyperparameters by Latin hypercube
/// over `ranges`, Z = Y(theta) + delta.
std::vector<TestScenario> generate_test_scenarios(std::size_t m, const DiscrepancyRanges& ranges, Rng& rng,
                                                  std::size_t p = kSyntheticLength);

enum class UqMethod { kQuantile, kMcDropout };
std::string to_string(UqMethod m);
UqMethod parse_method(const std::string& s);

struct MetricsRow {
  std::size_t parameter = 0;  // 1-based
  UqMethod method = UqMethod::kQuantile;
  double bias = 0.0;
  double rmse = 0.0;
  double pi_length = 0.0;
  double pi_coverage = 0.0;
};

/// Metrics per parameter from unit-scale estimates and truths.
std::vector<MetricsRow> score(std::span<const CalibrationEstimate> estimates,
                              std::span<const std::vector<double>> truths, UqMethod method);

/// Runs the model on every scenario and scores it in normalized units.
std::vector<MetricsRow> evaluate(const TrainedModel& model, std::span<const TestScenario> scenarios, UqMethod method,
                                 std::uint64_t seed = 0);

}  // namespace dnncal
