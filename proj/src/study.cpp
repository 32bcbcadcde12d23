#include "dnncal/study.hpp"

#include <cmath>
#include <numbers>

#include "dnncal/errors.hpp"

namespace dnncal {

std::vector<double> synthetic_grid(std::size_t p) {
  if (p < 2) throw UsageError("synthetic grid needs at least two points");
  std::vector<double> u(p);
  const double step = 4.0 / static_cast<double>(p - 1);
  for (std::size_t t = 0; t < p; ++t) u[t] = -2.0 + step * static_cast<double>(t);
  u.back() = 2.0;
  return u;
}

TimeSeries synthetic_output(std::span<const double> theta, std::size_t p) {
  if (theta.size() != kSyntheticParams) throw DataError("synthetic model takes exactly three parameters");
  for (double v : theta)
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("synthetic model parameters must lie in [0,1]");
  const double spread = theta[2] + 0.1;
  const double amplitude = (theta[0] + 0.3) / std::sqrt(2.0 * std::numbers::pi * spread);
  const double centre = theta[1] - 0.5;
  const auto u = synthetic_grid(p);
  TimeSeries y(p);
  for (std::size_t t = 0; t < p; ++t) {
    const double d = u[t] - centre;
    y[t] = 0.3 + amplitude * std::exp(-d * d / spread);
  }
  return y;
}

Ensemble generate_ensemble(std::size_t n, Rng& rng, std::size_t p) {
  if (n < 1) throw UsageError("ensemble size must be >= 1");
  const std::vector<Interval> box(kSyntheticParams, Interval{0.0, 1.0});
  Ensemble e;
  e.box = box;
  e.theta = latin_hypercube(box, n, rng);
  for (const auto& th : e.theta) e.y.push_back(synthetic_output(th, p));
  return e;
}

std::vector<TestScenario> generate_test_scenarios(std::size_t m, const DiscrepancyRanges& ranges, Rng& rng,
                                                  std::size_t p) {
  if (m < 1) throw UsageError("scenario count must be >= 1");
  ranges.validate();
  const Rng root(rng.engine()());
  Rng design = root.substream(0);
  std::vector<TestScenario> out(m);
  for (auto& s : out) {
    s.theta_true.resize(kSyntheticParams);
    for (double& v : s.theta_true) v = design.uniform();
  }
  const auto noise = lhs_sample(ranges, m, design);
  std::string failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < m; ++i) {
    try {
      out[i].noise = noise[i];
      TimeSeries z = synthetic_output(out[i].theta_true, p);
      const TimeSeries delta = draw_discrepancy(p, noise[i], root, i + 1);
      for (std::size_t t = 0; t < p; ++t) z[t] += delta[t];
      out[i].z = std::move(z);
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw NumericError(failure);
  return out;
}

std::string to_string(UqMethod m) { return m == UqMethod::kQuantile ? "quantile" : "mc-dropout"; }

UqMethod parse_method(const std::string& s) {
  if (s == "quantile" || s == "dnn-q") return UqMethod::kQuantile;
  if (s == "mc-dropout" || s == "dnn-mc") return UqMethod::kMcDropout;
  throw UsageError("unknown method '" + s + "' (expected quantile or mc-dropout)");
}

std::vector<MetricsRow> score(std::span<const CalibrationEstimate> estimates,
                              std::span<const std::vector<double>> truths, UqMethod method) {
  if (estimates.empty()) throw DataError("cannot score an empty scenario list");
  if (estimates.size() != truths.size()) throw DataError("estimate and truth counts differ");
  const std::size_t d = truths.front().size();
  std::vector<MetricsRow> rows(d);
  const double n = static_cast<double>(estimates.size());
  for (std::size_t k = 0; k < d; ++k) {
    double bias = 0.0, sq = 0.0, len = 0.0, covered = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
      const auto& e = estimates[i];
      const double truth = truths[i][k];
      const double err = e.median[k] - truth;
      bias += err;
      sq += err * err;
      len += e.upper[k] - e.lower[k];
      if (truth >= e.lower[k] && truth <= e.upper[k]) covered += 1.0;
    }
    rows[k] = MetricsRow{k + 1, method, bias / n, std::sqrt(sq / n), len / n, covered / n};
  }
  return rows;
}

std::vector<MetricsRow> evaluate(const TrainedModel& model, std::span<const TestScenario> scenarios, UqMethod method,
                                 std::uint64_t seed) {
  if (scenarios.empty()) throw DataError("cannot evaluate on an empty scenario list");
  std::vector<TimeSeries> series;
  std::vector<std::vector<double>> truths;
  for (const auto& s : scenarios) {
    series.push_back(s.z);
    truths.push_back(model.norm.normalize_theta(s.theta_true));
  }
  const std::vector<CalibrationEstimate> est =
      method == UqMethod::kQuantile
          ? predict_interval_unit(model, series)
          : predict_mc_dropout_unit(model, series, model.train_cfg.mc_passes, Rng(seed).substream(7));
  return score(est, truths, method);
}

}  // namespace dnncal
