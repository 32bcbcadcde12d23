#include "dnncal/pipeline.hpp"

#include <algorithm>
#include <chrono>

#include "dnncal/rng.hpp"

namespace dnncal {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SeedPlan SeedPlan::from_master(std::uint64_t seed) {
  const Rng root(seed);
  return SeedPlan{root.substream(1).seed(), root.substream(2).seed(), root.substream(3).seed(),
                  root.substream(4).seed(), root.substream(5).seed()};
}

TrainedModel train_model(const ContaminatedSet& data, const RunConfig& cfg) {
  TrainingConfig tc = cfg.training;
  tc.seed = SeedPlan::from_master(cfg.seed).training;
  if (tc.head_holdout == 0.0) {
    TrainedModel model = train_mean(data, cfg.network, tc);
    fit_quantile_heads(model, data, tc);
    return model;
  }
  Rng split_rng = Rng(tc.seed).substream(7);
  const DesignSplit split = split_design_points(data, tc.head_holdout, split_rng);
  TrainedModel model = train_mean(split.first, cfg.network, tc);
  TrainingConfig heads = tc;
  heads.batch_size = std::min(tc.batch_size, split.second.size());
  fit_quantile_heads(model, split.second, heads);
  return model;
}

BenchmarkResult run_benchmark(const RunConfig& cfg, const BenchmarkOptions& opts) {
  const SeedPlan seeds = SeedPlan::from_master(cfg.seed);
  BenchmarkResult r;
  auto t0 = std::chrono::steady_clock::now();
  Rng ens_rng(seeds.ensemble);
  const Ensemble ensemble = generate_ensemble(cfg.n_runs, ens_rng, cfg.series_length);
  Rng con_rng(seeds.contamination);
  const ContaminatedSet data = contaminate(ensemble, cfg.ranges, con_rng);
  Rng sc_rng(seeds.scenarios);
  const std::vector<TestScenario> scenarios =
      generate_test_scenarios(cfg.n_scenarios, cfg.ranges, sc_rng, cfg.series_length);
  r.seconds_data = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  r.model = train_model(data, cfg);
  r.seconds_train = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  r.quantile = evaluate(r.model, scenarios, UqMethod::kQuantile, seeds.evaluation);
  if (opts.mc_dropout) r.mc_dropout = evaluate(r.model, scenarios, UqMethod::kMcDropout, seeds.evaluation);
  if (opts.clean) {
    std::vector<TestScenario> clean = scenarios;
    for (auto& s : clean) {
      s.z = synthetic_output(s.theta_true, cfg.series_length);
      s.noise = DiscrepancyParams{};
    }
    r.quantile_clean = evaluate(r.model, clean, UqMethod::kQuantile, seeds.evaluation);
  }
  r.seconds_evaluate = seconds_since(t0);
  return r;
}

}  // namespace dnncal
