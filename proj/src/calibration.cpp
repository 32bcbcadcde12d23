#include "dnncal/calibration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "dnncal/errors.hpp"
#include "dnncal/kernels.hpp"
#include "dnncal/optimizer.hpp"

namespace dnncal {
namespace {

double cosine_lr(double lr, double min_fraction, std::size_t step, std::size_t total) {
  if (total <= 1) return lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total - 1);
  return lr * (min_fraction + (1.0 - min_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

std::vector<std::span<const double>> spans_of(std::span<const TimeSeries> series) {
  std::vector<std::span<const double>> out;
  out.reserve(series.size());
  for (const auto& s : series) out.emplace_back(s);
  return out;
}

Eigen::MatrixXd target_matrix(const std::vector<std::vector<double>>& targets) {
  const auto d = static_cast<Eigen::Index>(targets.empty() ? 0 : targets.front().size());
  Eigen::MatrixXd t(d, static_cast<Eigen::Index>(targets.size()));
  for (std::size_t i = 0; i < targets.size(); ++i) t.col(static_cast<Eigen::Index>(i)) = ConstVecView(targets[i].data(), d);
  return t;
}

double full_loss(const NetworkWeights& net, const TrainingData& td) {
  const auto spans = spans_of(td.series);
  const Eigen::MatrixXd out = predict_batch(spans, net);
  return (out - target_matrix(td.targets)).squaredNorm() + ridge_penalty(net);
}

Eigen::MatrixXd apply_head(const QuantileHead& h, const Eigen::MatrixXd& features) {
  Eigen::MatrixXd out = h.w * features;
  out.colwise() += h.a;
  return out;
}

}  // namespace

std::size_t TrainingConfig::effective_quantile_epochs() const {
  return quantile_epochs > 0 ? quantile_epochs : epochs;
}

void TrainingConfig::validate(std::size_t n_pairs) const {
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (batch_size < 1 || batch_size > n_pairs)
    throw UsageError("batch_size must lie in [1, " + std::to_string(n_pairs) + "]");
  if (!(learning_rate > 0.0) || !(quantile_learning_rate > 0.0)) throw UsageError("learning rates must be > 0");
  if (!(min_lr_fraction > 0.0 && min_lr_fraction <= 1.0)) throw UsageError("min_lr_fraction must lie in (0,1]");
  if (mc_passes < 1) throw UsageError("mc_passes must be >= 1");
  if (!(head_holdout >= 0.0 && head_holdout < 1.0)) throw UsageError("head_holdout must lie in [0,1)");
}

Normalization Normalization::fit(const ContaminatedSet& data) {
  data.validate();
  Normalization n;
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& y : data.y)
    for (double v : y) {
      sum += v;
      ++count;
    }
  n.series_mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (const auto& y : data.y)
    for (double v : y) ss += (v - n.series_mean) * (v - n.series_mean);
  n.series_scale = std::sqrt(ss / static_cast<double>(count));
  if (!(n.series_scale > 0.0) || !std::isfinite(n.series_scale)) n.series_scale = 1.0;
  if (!std::isfinite(n.series_mean)) throw DataError("series contain non-finite values");
  n.box = parameter_box(data.theta, data.box);
  return n;
}

TimeSeries Normalization::normalize_series(std::span<const double> y) const {
  TimeSeries out(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) out[t] = (y[t] - series_mean) / series_scale;
  return out;
}

std::vector<double> Normalization::normalize_theta(std::span<const double> theta) const {
  if (theta.size() != box.size()) throw DataError("parameter vector has wrong dimension");
  std::vector<double> out(theta.size());
  for (std::size_t d = 0; d < theta.size(); ++d) {
    const double w = box[d].width() > 0.0 ? box[d].width() : 1.0;
    out[d] = (theta[d] - box[d].lo) / w;
  }
  return out;
}

std::vector<double> Normalization::denormalize_theta(std::span<const double> unit) const {
  if (unit.size() != box.size()) throw DataError("parameter vector has wrong dimension");
  std::vector<double> out(unit.size());
  for (std::size_t d = 0; d < unit.size(); ++d) {
    const double w = box[d].width() > 0.0 ? box[d].width() : 1.0;
    out[d] = box[d].lo + unit[d] * w;
  }
  return out;
}

bool TrainedModel::heads_fitted() const {
  const auto& taus = config().tau_set;
  if (heads.size() != taus.size()) return false;
  for (std::size_t k = 0; k < taus.size(); ++k)
    if (heads[k].tau != taus[k]) return false;
  return true;
}

const QuantileHead& TrainedModel::head(double tau) const {
  for (const auto& h : heads)
    if (h.tau == tau) return h;
  throw UsageError("model has no quantile head for tau=" + std::to_string(tau) + " (heads not fitted)");
}

std::vector<Sample> TrainingData::samples() const {
  std::vector<Sample> out;
  out.reserve(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) out.push_back(Sample{series[i], targets[i]});
  return out;
}

TrainingData prepare(const ContaminatedSet& data, const Normalization& norm) {
  TrainingData td;
  td.series.reserve(data.size());
  td.targets.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    td.series.push_back(norm.normalize_series(data.y[i]));
    td.targets.push_back(norm.normalize_theta(data.theta[i]));
  }
  return td;
}

TrainedModel train_mean(const ContaminatedSet& data, NetworkConfig net_cfg, const TrainingConfig& cfg) {
  data.validate();
  const std::size_t n = data.size();
  cfg.validate(n);
  net_cfg.p = data.p();
  net_cfg.d_theta = data.d_theta();
  net_cfg.validate();

  TrainedModel model;
  model.train_cfg = cfg;
  model.norm = Normalization::fit(data);
  const TrainingData td = prepare(data, model.norm);
  const std::vector<Sample> all = td.samples();

  const Rng root(cfg.seed);
  Rng init_rng = root.substream(0);
  model.net = NetworkWeights::initialize(net_cfg, init_rng);
  model.loss_history.push_back(full_loss(model.net, td));

  TrainingKernel kernel(net_cfg);
  AdamState state = AdamState::zeros(model.net.size());
  AlignedBuffer grad(model.net.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches * cfg.epochs;
  std::size_t step = 0;
  std::vector<Sample> batch;
  std::vector<DropoutMasks> masks;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng = root.substream(epoch);
    std::shuffle(order.begin(), order.end(), rng.engine());
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t start = b * cfg.batch_size;
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      batch.clear();
      masks.clear();
      for (std::size_t k = start; k < stop; ++k) {
        batch.push_back(all[order[k]]);
        masks.push_back(sample_dropout_masks(net_cfg, rng));
      }
      const double weight = static_cast<double>(n) / static_cast<double>(batch.size());
      const double loss = kernel.loss_and_gradient(batch, model.net, masks, grad, weight);
      if (!std::isfinite(loss)) throw NumericError("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      epoch_loss += loss;
      AdamHyper hyper;
      hyper.lr = cosine_lr(cfg.learning_rate, cfg.min_lr_fraction, step++, total_steps);
      adam_step(model.net.values(), grad, state, hyper);
    }
    const double recorded = epoch_loss + ridge_penalty(model.net);
    if (!std::isfinite(recorded)) throw NumericError("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
    model.loss_history.push_back(recorded);
  }
  return model;
}

double pinball_cost(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets, double tau) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
    throw DataError("pinball_cost: shape mismatch");
  double cost = 0.0;
  for (Eigen::Index j = 0; j < targets.cols(); ++j)
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
      const double r = targets(i, j) - predictions(i, j);
      cost += r * (tau - (r < 0.0 ? 1.0 : 0.0));
    }
  return cost;
}

QuantileHead fit_quantile_head(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, double tau,
                               const QuantileHead& init, const HeadFitOptions& opts, Rng& rng) {
  if (!(tau > 0.0 && tau < 1.0)) throw UsageError("tau must lie in (0,1)");
  const Eigen::Index n = features.cols();
  const Eigen::Index d_in = features.rows();
  const Eigen::Index d_out = targets.rows();
  if (targets.cols() != n || n == 0) throw DataError("fit_quantile_head: feature/target count mismatch");
  if (init.w.rows() != d_out || init.w.cols() != d_in || init.a.size() != d_out)
    throw DataError("fit_quantile_head: initial head has wrong shape");
  if (opts.batch_size < 1 || opts.epochs < 1) throw UsageError("fit_quantile_head: bad options");
  if (!(opts.p_keep > 0.0 && opts.p_keep <= 1.0)) throw UsageError("fit_quantile_head: p_keep must lie in (0,1]");

  // Parameters as one vector: W row-major, then a.
  const auto n_w = static_cast<std::size_t>(d_out * d_in);
  AlignedBuffer params(n_w + static_cast<std::size_t>(d_out));
  MatView w(params.data(), d_out, d_in);
  VecView a(params.data() + n_w, d_out);
  w = init.w;
  a = init.a;
  AlignedBuffer grad(params.size());
  MatView gw(grad.data(), d_out, d_in);
  VecView ga(grad.data() + n_w, d_out);
  AdamState state = AdamState::zeros(params.size());

  const double scale = 1.0 / opts.p_keep;
  const auto batch = static_cast<Eigen::Index>(opts.batch_size);
  const Eigen::Index batches = (n + batch - 1) / batch;
  const std::size_t total = static_cast<std::size_t>(batches) * opts.epochs;
  std::size_t step = 0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Vec f(d_in);
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (Eigen::Index b = 0; b < batches; ++b) {
      const Eigen::Index start = b * batch;
      const Eigen::Index stop = std::min(n, start + batch);
      gw.setZero();
      ga.setZero();
      for (Eigen::Index k = start; k < stop; ++k) {
        const Eigen::Index i = order[static_cast<std::size_t>(k)];
        f = features.col(i);
        if (opts.p_keep < 1.0)
          for (Eigen::Index j = 0; j < d_in; ++j) f[j] = rng.bernoulli(opts.p_keep) ? f[j] * scale : 0.0;
        const Vec pred = w * f + a;
        for (Eigen::Index d = 0; d < d_out; ++d) {
          // d/dpred rho_tau(target - pred) = 1{pred > target} - tau
          const double g = (pred[d] > targets(d, i) ? 1.0 : 0.0) - tau;
          gw.row(d) += g * f.transpose();
          ga[d] += g;
        }
      }
      const double weight = static_cast<double>(n) / static_cast<double>(stop - start);
      for (double& g : grad) g *= weight;
      AdamHyper hyper;
      hyper.lr = cosine_lr(opts.learning_rate, opts.min_lr_fraction, step++, total);
      adam_step(params, grad, state, hyper);
    }
  }

  QuantileHead fitted{tau, RowMat(w), Vec(a)};
  QuantileHead start{tau, init.w, init.a};
  const double fitted_cost = pinball_cost(apply_head(fitted, features), targets, tau);
  const double start_cost = pinball_cost(apply_head(start, features), targets, tau);
  return fitted_cost <= start_cost ? fitted : start;
}

void fit_quantile_heads(TrainedModel& model, const ContaminatedSet& data, const TrainingConfig& cfg) {
  data.validate();
  const NetworkConfig& net_cfg = model.config();
  if (model.net.size() == 0) throw UsageError("fit_quantile_heads: mean network has not been trained");
  if (data.p() != net_cfg.p || data.d_theta() != net_cfg.d_theta)
    throw DataError("fit_quantile_heads: data shape does not match the model");
  cfg.validate(data.size());
  const TrainingData td = prepare(data, model.norm);
  const std::size_t L = net_cfg.widths.size();
  const Eigen::MatrixXd features = feature_matrix(spans_of(td.series), model.net, L);
  const Eigen::MatrixXd targets = target_matrix(td.targets);

  HeadFitOptions opts;
  opts.epochs = cfg.effective_quantile_epochs();
  opts.batch_size = cfg.batch_size;
  opts.learning_rate = cfg.quantile_learning_rate;
  opts.min_lr_fraction = cfg.min_lr_fraction;
  opts.p_keep = net_cfg.p_keep;
  const QuantileHead mean_head{0.5, RowMat(model.net.fc_w(L)), Vec(model.net.fc_a(L))};

  model.heads.clear();
  model.quantile_cost.clear();
  const Rng root(cfg.seed);
  for (std::size_t k = 0; k < net_cfg.tau_set.size(); ++k) {
    const double tau = net_cfg.tau_set[k];
    QuantileHead init = mean_head;
    init.tau = tau;
    Rng rng = root.substream(1'000'003 + k);
    QuantileHead h = fit_quantile_head(features, targets, tau, init, opts, rng);
    model.quantile_cost.push_back(pinball_cost(apply_head(h, features), targets, tau));
    model.heads.push_back(std::move(h));
  }
}

DesignSplit split_design_points(const ContaminatedSet& data, double fraction, Rng& rng) {
  data.validate();
  if (!(fraction >= 0.0 && fraction < 1.0)) throw UsageError("holdout fraction must lie in [0,1)");
  std::vector<std::size_t> sources;
  for (const auto& rec : data.provenance)
    if (std::find(sources.begin(), sources.end(), rec.source) == sources.end()) sources.push_back(rec.source);
  if (data.provenance.size() != data.size()) throw DataError("split_design_points: provenance is missing");

  std::size_t held = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(sources.size())));
  if (fraction > 0.0) held = std::max<std::size_t>(held, 1);
  if (held >= sources.size()) throw UsageError("split_design_points: too few design points to hold any out");

  std::vector<std::pair<double, std::size_t>> keyed;
  for (std::size_t s : sources) keyed.emplace_back(rng.uniform(), s);
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> out_sources;
  for (std::size_t k = 0; k < held; ++k) out_sources.push_back(keyed[k].second);

  DesignSplit split;
  const auto box = parameter_box(data.theta, data.box);
  split.first.box = box;
  split.second.box = box;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const bool out = std::find(out_sources.begin(), out_sources.end(), data.provenance[k].source) != out_sources.end();
    ContaminatedSet& side = out ? split.second : split.first;
    side.theta.push_back(data.theta[k]);
    side.y.push_back(data.y[k]);
    side.provenance.push_back(data.provenance[k]);
  }
  return split;
}

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("empirical_quantile: no values");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

constexpr double kLowerTau = 0.025;
constexpr double kUpperTau = 0.975;

double clip01(double x) { return std::clamp(x, 0.0, 1.0); }

CalibrationEstimate to_original(const TrainedModel& model, const CalibrationEstimate& unit) {
  return CalibrationEstimate{model.norm.denormalize_theta(unit.median), model.norm.denormalize_theta(unit.lower),
                             model.norm.denormalize_theta(unit.upper)};
}

}  // namespace

std::vector<CalibrationEstimate> predict_interval_unit(const TrainedModel& model, std::span<const TimeSeries> series) {
  if (!model.heads_fitted()) throw UsageError("model is unfitted: quantile heads are missing");
  const QuantileHead& lo = model.heads.front();
  const QuantileHead& mid = model.head(0.5);
  const QuantileHead& hi = model.heads.back();
  std::vector<TimeSeries> normalized;
  normalized.reserve(series.size());
  for (const auto& s : series) {
    if (s.size() != model.config().p) throw DataError("observation length does not match the model (p)");
    normalized.push_back(model.norm.normalize_series(s));
  }
  const Eigen::MatrixXd feat = feature_matrix(spans_of(normalized), model.net, model.config().widths.size());
  const Eigen::MatrixXd pl = apply_head(lo, feat), pm = apply_head(mid, feat), ph = apply_head(hi, feat);
  std::vector<CalibrationEstimate> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    CalibrationEstimate& e = out[i];
    const auto col = static_cast<Eigen::Index>(i);
    for (Eigen::Index d = 0; d < pm.rows(); ++d) {
      std::array<double, 3> v{pl(d, col), pm(d, col), ph(d, col)};
      std::sort(v.begin(), v.end());
      e.lower.push_back(clip01(v[0]));
      e.median.push_back(clip01(v[1]));
      e.upper.push_back(clip01(v[2]));
    }
  }
  return out;
}

std::vector<CalibrationEstimate> predict_mc_dropout_unit(const TrainedModel& model, std::span<const TimeSeries> series,
                                                         std::size_t passes, const Rng& rng) {
  if (passes < 1) throw UsageError("mc dropout needs at least one pass");
  const NetworkConfig& cfg = model.config();
  const std::size_t L = cfg.widths.size();
  std::vector<TimeSeries> normalized;
  for (const auto& s : series) {
    if (s.size() != cfg.p) throw DataError("observation length does not match the model (p)");
    normalized.push_back(model.norm.normalize_series(s));
  }
  // Masks act on lambda^(1..L); lambda^(1) itself is deterministic.
  const Eigen::MatrixXd first = feature_matrix(spans_of(normalized), model.net, 1);
  std::vector<CalibrationEstimate> out(series.size());
  const auto B = static_cast<Eigen::Index>(passes);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < series.size(); ++i) {
    Rng r = rng.substream(i);
    // One matrix-vector chain per pass, so identical masks give identical draws.
    Eigen::MatrixXd act(static_cast<Eigen::Index>(cfg.d_theta), B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const DropoutMasks m = sample_dropout_masks(cfg, r);
      Vec x = first.col(static_cast<Eigen::Index>(i));
      for (std::size_t l = 0; l < L; ++l) {
        x = x.cwiseProduct(m.keep[l]) * m.scale;
        Vec next = model.net.fc_w(l + 1) * x + model.net.fc_a(l + 1);
        x = l + 1 < L ? Vec(next.cwiseMax(0.0)) : next;
      }
      act.col(b) = x;
    }
    CalibrationEstimate& e = out[i];
    for (Eigen::Index d = 0; d < act.rows(); ++d) {
      std::vector<double> draws(static_cast<std::size_t>(B));
      for (Eigen::Index b = 0; b < B; ++b) draws[static_cast<std::size_t>(b)] = act(d, b);
      e.median.push_back(clip01(empirical_quantile(draws, 0.5)));
      e.lower.push_back(clip01(empirical_quantile(draws, kLowerTau)));
      e.upper.push_back(clip01(empirical_quantile(draws, kUpperTau)));
    }
  }
  return out;
}

std::vector<double> predict_point(const TrainedModel& model, std::span<const double> z) {
  const NetworkConfig& cfg = model.config();
  if (z.size() != cfg.p) throw DataError("observation length does not match the model (p)");
  const TimeSeries zn = model.norm.normalize_series(z);
  // Falls back to the mean head for a model whose quantile heads are not fitted.
  const QuantileHead* median = nullptr;
  for (const auto& h : model.heads)
    if (h.tau == 0.5) median = &h;
  const Vec out = network_forward(zn, model.net, nullptr, median);
  std::vector<double> unit(static_cast<std::size_t>(out.size()));
  for (Eigen::Index d = 0; d < out.size(); ++d) unit[static_cast<std::size_t>(d)] = clip01(out[d]);
  return model.norm.denormalize_theta(unit);
}

CalibrationEstimate predict_interval(const TrainedModel& model, std::span<const double> z) {
  const TimeSeries one(z.begin(), z.end());
  return to_original(model, predict_interval_unit(model, std::span<const TimeSeries>(&one, 1)).front());
}

CalibrationEstimate predict_mc_dropout(const TrainedModel& model, std::span<const double> z, std::size_t passes,
                                       Rng& rng) {
  const TimeSeries one(z.begin(), z.end());
  const Rng root(rng.engine()());
  return to_original(model, predict_mc_dropout_unit(model, std::span<const TimeSeries>(&one, 1), passes, root).front());
}

}  // namespace dnncal
