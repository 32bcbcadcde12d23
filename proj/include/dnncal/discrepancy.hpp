#pragma once

// Data-model discrepancy simulation: zero-mean Gaussian process noise with a
// squared-exponential-plus-nugget covariance, hyperparameters drawn by Latin
// hypercube, superimposed on an ensemble of model runs.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dnncal/network.hpp"
#include "dnncal/rng.hpp"

namespace dnncal {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
  double width() const { return hi - lo; }
  bool operator==(const Interval&) const = default;
};

struct DiscrepancyParams {
  double zeta = 0.0;   // nugget variance
  double kappa = 0.0;  // partial sill
  double phi = 1.0;    // range, in squared time steps
  bool degenerate() const { return zeta == 0.0 && kappa == 0.0; }
  bool operator==(const DiscrepancyParams&) const = default;
};

struct DiscrepancyRanges {
  Interval zeta{1e-6, 1e-4};
  Interval kappa{0.0025, 0.04};
  Interval phi{10.0, 300.0};
  std::size_t n_d = 25;

  void validate() const;
};

/// Stratified Latin hypercube over an axis-aligned box: each coordinate of the
/// N points falls in each of the N equal-width strata exactly once.
std::vector<std::vector<double>> latin_hypercube(std::span<const Interval> box, std::size_t n, Rng& rng);

std::vector<DiscrepancyParams> lhs_sample(const DiscrepancyRanges& ranges, std::size_t n, Rng& rng);

Eigen::MatrixXd build_covariance(std::size_t p, const DiscrepancyParams& params);

struct CholeskyFactor {
  Eigen::MatrixXd lower;
  double jitter = 0.0;  // added to the diagonal before factoring
};

inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterCap = 1e-4;

/// Cholesky factor of M, retrying with diagonal jitter 1e-10, 1e-9, ..., 1e-4.
/// Throws NumericError when even the capped jitter fails.
CholeskyFactor chol_with_jitter(const Eigen::MatrixXd& m);

TimeSeries sample_gp(const Eigen::MatrixXd& lower, Rng& rng);

/// Perturbed-physics ensemble: one parameter vector and one output per run.
struct Ensemble {
  std::vector<std::vector<double>> theta;
  std::vector<TimeSeries> y;
  std::vector<Interval> box;  // declared parameter box; empty means infer

  std::size_t size() const { return theta.size(); }
  std::size_t d_theta() const { return theta.empty() ? 0 : theta.front().size(); }
  std::size_t p() const { return y.empty() ? 0 : y.front().size(); }
  void validate() const;
};

struct ContaminationRecord {
  std::size_t source = 0;       // i, 1-based
  std::size_t realization = 0;  // j, 1-based
  DiscrepancyParams params;
  double jitter = 0.0;
  bool operator==(const ContaminationRecord&) const = default;
};

struct ContaminatedSet {
  std::vector<std::vector<double>> theta;
  std::vector<TimeSeries> y;
  std::vector<ContaminationRecord> provenance;
  std::vector<Interval> box;

  std::size_t size() const { return theta.size(); }
  std::size_t d_theta() const { return theta.empty() ? 0 : theta.front().size(); }
  std::size_t p() const { return y.empty() ? 0 : y.front().size(); }
  void validate() const;
};

/// One discrepancy realization (1-based draw index `index` of the stream
/// rooted at `root`), zero when the parameters are degenerate.
TimeSeries draw_discrepancy(std::size_t p, const DiscrepancyParams& params, const Rng& root, std::size_t index,
                            double* jitter_used = nullptr);

/// Y~_k = Y(theta_i) + delta_ij with k = n_d (i-1) + j; one Latin hypercube
/// draw of (zeta, kappa, phi) per pair.
ContaminatedSet contaminate(const Ensemble& ensemble, const DiscrepancyRanges& ranges, Rng& rng);

/// Declared box if present, else per-column min/max of theta.
std::vector<Interval> parameter_box(const std::vector<std::vector<double>>& theta,
                                    const std::vector<Interval>& declared);

}  // namespace dnncal
