#pragma once

// End-to-end synthetic study: generate, contaminate, train, fit heads and
// score, all driven by one RunConfig and its master seed.

#include <cstdint>
#include <vector>

#include "dnncal/calibration.hpp"
#include "dnncal/config.hpp"
#include "dnncal/study.hpp"

namespace dnncal {

/// Independent seeds for each stage, derived from the master seed.
struct SeedPlan {
  std::uint64_t ensemble;
  std::uint64_t contamination;
  std::uint64_t scenarios;
  std::uint64_t training;
  std::uint64_t evaluation;

  static SeedPlan from_master(std::uint64_t seed);
};

/// Mean network plus quantile heads, trained on `data` with the config's
/// network and training settings.
TrainedModel train_model(const ContaminatedSet& data, const RunConfig& cfg);

struct BenchmarkResult {
  TrainedModel model;
  std::vector<MetricsRow> quantile;
  std::vector<MetricsRow> mc_dropout;       // empty unless requested
  std::vector<MetricsRow> quantile_clean;   // noiseless outputs at the same theta; empty unless requested
  double seconds_data = 0.0;
  double seconds_train = 0.0;
  double seconds_evaluate = 0.0;
};

struct BenchmarkOptions {
  bool mc_dropout = true;
  bool clean = false;
};

BenchmarkResult run_benchmark(const RunConfig& cfg, const BenchmarkOptions& opts = {});

}  // namespace dnncal
