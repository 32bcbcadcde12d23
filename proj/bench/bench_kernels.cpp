// Serial reference gradients against the batched OpenMP kernel, plus batched
// inference, on a full-size network with a configurable series length.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <vector>

#include "dnncal/kernels.hpp"
#include "dnncal/reference.hpp"

using namespace dnncal;

namespace {

struct Fixture {
  NetworkConfig cfg;
  NetworkWeights net;
  std::vector<std::vector<double>> series, targets;
  std::vector<Sample> batch;
  std::vector<DropoutMasks> masks;

  Fixture(std::size_t p, std::size_t n) : cfg(make_config(p)), net(init(cfg)) {
    Rng rng(11);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(p), t(cfg.d_theta);
      for (double& v : s) v = rng.normal();
      for (double& v : t) v = rng.uniform();
      series.push_back(std::move(s));
      targets.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back(Sample{series[i], targets[i]});
      masks.push_back(sample_dropout_masks(cfg, rng));
    }
  }

  static NetworkConfig make_config(std::size_t p) {
    NetworkConfig c;
    c.p = p;
    return c;
  }
  static NetworkWeights init(const NetworkConfig& c) {
    Rng rng(3);
    return NetworkWeights::initialize(c, rng);
  }
};

void BM_ReferenceGradient(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)), 32);
  for (auto _ : state) benchmark::DoNotOptimize(reference::gradients(f.batch, f.net, f.masks));
  state.SetItemsProcessed(state.iterations() * 32);
}

void BM_KernelGradient(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)), 32);
  omp_set_num_threads(static_cast<int>(state.range(1)));
  TrainingKernel kernel(f.cfg);
  std::vector<double> grad(f.net.values().size());
  for (auto _ : state) benchmark::DoNotOptimize(kernel.loss_and_gradient(f.batch, f.net, f.masks, grad));
  state.SetItemsProcessed(state.iterations() * 32);
}

void BM_PredictBatch(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)), 256);
  omp_set_num_threads(static_cast<int>(state.range(1)));
  std::vector<std::span<const double>> spans(f.series.begin(), f.series.end());
  for (auto _ : state) benchmark::DoNotOptimize(predict_batch(spans, f.net));
  state.SetItemsProcessed(state.iterations() * 256);
}

void thread_counts(benchmark::internal::Benchmark* b) {
  const int max_threads = omp_get_max_threads();
  for (long p : {96, 480}) {
    b->Args({p, 1});
    if (max_threads > 1) b->Args({p, max_threads});
  }
}

}  // namespace

BENCHMARK(BM_ReferenceGradient)->Arg(96)->Arg(480)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KernelGradient)->Apply(thread_counts)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictBatch)->Apply(thread_counts)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
