#include "dnncal/kernels.hpp"

#include <algorithm>
#include <array>

#include "dnncal/errors.hpp"

namespace dnncal {
namespace {

struct DirCache {
  Eigen::MatrixXd xs;   // d_x x p, windows in processing order
  Eigen::MatrixXd pre;  // 4 d_c x p, stacked gate pre-activations
  Eigen::MatrixXd c;    // d_c x (p+1), column 0 is the zero state
  Eigen::MatrixXd h;    // d_c x (p+1)
};

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double relu_slope(double x) { return x > 0.0 ? 1.0 : 0.0; }
inline double hard_sigmoid(double x) { return x <= 0.0 ? 0.0 : (x >= 1.0 ? 1.0 : x); }
inline double hard_sigmoid_slope(double x) { return (x > 0.0 && x < 1.0) ? 1.0 : 0.0; }

Eigen::MatrixXd window_matrix(std::span<const double> z, std::size_t d_t) {
  const auto p = static_cast<Eigen::Index>(z.size());
  const auto dx = static_cast<Eigen::Index>(d_t + 1);
  Eigen::MatrixXd x(dx, p);
  for (Eigen::Index t = 0; t < p; ++t)
    for (Eigen::Index k = 0; k < dx; ++k) {
      const Eigen::Index src = t - (dx - 1 - k);
      x(k, t) = z[static_cast<std::size_t>(std::max<Eigen::Index>(src, 0))];
    }
  return x;
}

void lstm_forward_cached(const Eigen::MatrixXd& x, const LstmView& w, bool reverse, DirCache& cache) {
  const Eigen::Index p = x.cols();
  const auto dc = static_cast<Eigen::Index>(w.cell_width());
  cache.xs.resize(x.rows(), p);
  for (Eigen::Index k = 0; k < p; ++k) cache.xs.col(k) = x.col(reverse ? p - 1 - k : k);
  cache.pre.noalias() = w.wx * cache.xs;
  cache.pre.colwise() += w.a;
  cache.c.resize(dc, p + 1);
  cache.h.resize(dc, p + 1);
  cache.c.col(0).setZero();
  cache.h.col(0).setZero();
  for (Eigen::Index k = 0; k < p; ++k) {
    auto pre = cache.pre.col(k);
    pre.noalias() += w.wh * cache.h.col(k);
    for (Eigen::Index j = 0; j < dc; ++j) {
      const double g = relu(pre[j]);
      const double uf = hard_sigmoid(pre[dc + j]);
      const double ui = hard_sigmoid(pre[2 * dc + j]);
      const double uo = hard_sigmoid(pre[3 * dc + j]);
      const double c = uf * cache.c(j, k) + ui * g;
      cache.c(j, k + 1) = c;
      cache.h(j, k + 1) = uo * relu(c);
    }
  }
}

// Adds this direction's contribution to h_t into the time-major lambda0.
void scatter_features(const DirCache& cache, bool reverse, double* lambda0) {
  const Eigen::Index p = cache.pre.cols();
  const Eigen::Index dc = cache.c.rows();
  for (Eigen::Index k = 0; k < p; ++k) {
    const Eigen::Index t = reverse ? p - 1 - k : k;
    for (Eigen::Index j = 0; j < dc; ++j) lambda0[t * dc + j] += cache.h(j, k + 1);
  }
}

void lstm_backward_cached(const DirCache& cache, const LstmView& w, bool reverse, const double* dlambda0,
                          MatView g_wx, MatView g_wh, VecView g_a) {
  const Eigen::Index p = cache.pre.cols();
  const auto dc = static_cast<Eigen::Index>(w.cell_width());
  Eigen::MatrixXd dpre(4 * dc, p);
  Vec dh_next = Vec::Zero(dc);
  Vec dc_next = Vec::Zero(dc);
  for (Eigen::Index k = p; k-- > 0;) {
    const Eigen::Index t = reverse ? p - 1 - k : k;
    const auto pre = cache.pre.col(k);
    auto dp = dpre.col(k);
    for (Eigen::Index j = 0; j < dc; ++j) {
      const double dh = dlambda0[t * dc + j] + dh_next[j];
      const double c = cache.c(j, k + 1);
      const double c_prev = cache.c(j, k);
      const double g = relu(pre[j]);
      const double uf = hard_sigmoid(pre[dc + j]);
      const double ui = hard_sigmoid(pre[2 * dc + j]);
      const double uo = hard_sigmoid(pre[3 * dc + j]);
      const double dcell = dc_next[j] + dh * uo * relu_slope(c);
      dc_next[j] = dcell * uf;
      dp[j] = dcell * ui * relu_slope(pre[j]);
      dp[dc + j] = dcell * c_prev * hard_sigmoid_slope(pre[dc + j]);
      dp[2 * dc + j] = dcell * g * hard_sigmoid_slope(pre[2 * dc + j]);
      dp[3 * dc + j] = dh * relu(c) * hard_sigmoid_slope(pre[3 * dc + j]);
    }
    dh_next.noalias() = w.wh.transpose() * dp;
  }
  g_wx.noalias() += dpre * cache.xs.transpose();
  g_wh.noalias() += dpre * cache.h.leftCols(p).transpose();
  g_a += dpre.rowwise().sum();
}

void check_batch(std::span<const Sample> batch, const NetworkConfig& cfg, std::span<const DropoutMasks> masks) {
  if (batch.empty()) throw DataError("empty batch");
  if (!masks.empty() && masks.size() != batch.size()) throw DataError("one mask set per sample is required");
  for (const Sample& s : batch)
    if (s.series.size() != cfg.p || s.target.size() != cfg.d_theta)
      throw DataError("sample shape does not match network config");
  for (const DropoutMasks& m : masks) {
    if (m.keep.size() != cfg.widths.size()) throw DataError("dropout masks: layer count mismatch");
    for (std::size_t l = 0; l < cfg.widths.size(); ++l)
      if (static_cast<std::size_t>(m.keep[l].size()) != cfg.widths[l]) throw DataError("dropout masks: width mismatch");
  }
}

// lambda0 columns for a set of series.
Eigen::MatrixXd lambda0_matrix(std::span<const std::span<const double>> series, const NetworkWeights& net) {
  const NetworkConfig& cfg = net.config();
  const auto n = static_cast<Eigen::Index>(series.size());
  Eigen::MatrixXd lambda0 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.d0()), n);
  const LstmView fwd = net.lstm(Direction::kForward);
  const LstmView bwd = net.lstm(Direction::kBackward);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::MatrixXd x = window_matrix(series[static_cast<std::size_t>(i)], cfg.d_t);
    DirCache cache;
    lstm_forward_cached(x, fwd, false, cache);
    scatter_features(cache, false, lambda0.col(i).data());
    lstm_forward_cached(x, bwd, true, cache);
    scatter_features(cache, true, lambda0.col(i).data());
  }
  return lambda0;
}

}  // namespace

struct TrainingKernel::Workspace {
  NetworkConfig cfg;
  std::size_t lstm_size = 0;
  std::vector<std::array<DirCache, 2>> caches;
  Eigen::MatrixXd lambda0;
  Eigen::MatrixXd lstm_grads;  // lstm_size x batch
};

TrainingKernel::TrainingKernel(const NetworkConfig& cfg) : ws_(std::make_unique<Workspace>()) {
  cfg.validate();
  ws_->cfg = cfg;
  ws_->lstm_size = ParameterLayout(cfg).fc_w(0).offset;
}

TrainingKernel::~TrainingKernel() = default;
TrainingKernel::TrainingKernel(TrainingKernel&&) noexcept = default;
TrainingKernel& TrainingKernel::operator=(TrainingKernel&&) noexcept = default;

double TrainingKernel::loss_and_gradient(std::span<const Sample> batch, const NetworkWeights& net,
                                         std::span<const DropoutMasks> masks, std::span<double> grad,
                                         double data_weight) {
  const NetworkConfig& cfg = net.config();
  if (!(cfg == ws_->cfg)) throw DataError("training kernel was built for a different network config");
  const ParameterLayout& layout = net.layout();
  if (grad.size() != layout.size()) throw DataError("gradient buffer size mismatch");
  check_batch(batch, cfg, masks);

  const auto B = static_cast<Eigen::Index>(batch.size());
  const std::size_t L = cfg.widths.size();
  const LstmView fwd = net.lstm(Direction::kForward);
  const LstmView bwd = net.lstm(Direction::kBackward);
  Workspace& ws = *ws_;
  if (ws.caches.size() < batch.size()) ws.caches.resize(batch.size());
  ws.lambda0.setZero(static_cast<Eigen::Index>(cfg.d0()), B);

#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < B; ++i) {
    const Eigen::MatrixXd x = window_matrix(batch[static_cast<std::size_t>(i)].series, cfg.d_t);
    auto& c = ws.caches[static_cast<std::size_t>(i)];
    lstm_forward_cached(x, fwd, false, c[0]);
    lstm_forward_cached(x, bwd, true, c[1]);
    scatter_features(c[0], false, ws.lambda0.col(i).data());
    scatter_features(c[1], true, ws.lambda0.col(i).data());
  }

  // Fully connected stack over the whole batch.
  std::vector<Eigen::MatrixXd> in(L + 1), z(L), keep(L);
  in[0] = ws.lambda0;
  for (std::size_t l = 0; l < L; ++l) {
    z[l].noalias() = net.fc_w(l) * in[l];
    z[l].colwise() += net.fc_a(l);
    in[l + 1] = z[l].cwiseMax(0.0);
    if (!masks.empty()) {
      keep[l].resize(z[l].rows(), B);
      for (Eigen::Index i = 0; i < B; ++i)
        keep[l].col(i) = masks[static_cast<std::size_t>(i)].keep[l] * masks[static_cast<std::size_t>(i)].scale;
      in[l + 1].array() *= keep[l].array();
    }
  }
  Eigen::MatrixXd out = net.fc_w(L) * in[L];
  out.colwise() += net.fc_a(L);
  for (Eigen::Index i = 0; i < B; ++i)
    out.col(i) -= ConstVecView(batch[static_cast<std::size_t>(i)].target.data(), out.rows());
  const double loss = out.squaredNorm();

  std::fill(grad.begin(), grad.end(), 0.0);
  double* g = grad.data();
  Eigen::MatrixXd d = (2.0 * data_weight) * out;
  mat_view(g, layout.fc_w(L)).noalias() = d * in[L].transpose();
  vec_view(g, layout.fc_a(L)) = d.rowwise().sum();
  Eigen::MatrixXd d_in = net.fc_w(L).transpose() * d;
  for (std::size_t l = L; l-- > 0;) {
    if (!masks.empty()) d_in.array() *= keep[l].array();
    d_in.array() *= (z[l].array() > 0.0).cast<double>();
    mat_view(g, layout.fc_w(l)).noalias() = d_in * in[l].transpose();
    vec_view(g, layout.fc_a(l)) = d_in.rowwise().sum();
    Eigen::MatrixXd next = net.fc_w(l).transpose() * d_in;
    d_in.swap(next);
  }

  // Recurrent backward pass per sample, then an ordered sum of the slots.
  ws.lstm_grads.setZero(static_cast<Eigen::Index>(ws.lstm_size), B);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < B; ++i) {
    double* slot = ws.lstm_grads.col(i).data();
    const auto& c = ws.caches[static_cast<std::size_t>(i)];
    for (Direction dir : {Direction::kForward, Direction::kBackward}) {
      const bool reverse = dir == Direction::kBackward;
      lstm_backward_cached(c[reverse ? 1 : 0], reverse ? bwd : fwd, reverse, d_in.col(i).data(),
                           mat_view(slot, layout.lstm_wx(dir)), mat_view(slot, layout.lstm_wh(dir)),
                           vec_view(slot, layout.lstm_a(dir)));
    }
  }
  for (Eigen::Index i = 0; i < B; ++i)
    for (std::size_t k = 0; k < ws.lstm_size; ++k) g[k] += ws.lstm_grads(static_cast<Eigen::Index>(k), i);

  const double lambda = cfg.lambda;
  const auto w = net.values();
  for (const Block& b : layout.blocks()) {
    if (!b.penalized) continue;
    for (std::size_t k = b.offset; k < b.offset + b.size(); ++k) g[k] += 2.0 * lambda * w[k];
  }
  return loss;
}

Eigen::MatrixXd feature_matrix(std::span<const std::span<const double>> series, const NetworkWeights& net,
                               std::size_t level) {
  const NetworkConfig& cfg = net.config();
  if (level > cfg.widths.size()) throw DataError("feature_matrix: level exceeds hidden layer count");
  for (auto s : series)
    if (s.size() != cfg.p) throw DataError("feature_matrix: series length does not match p");
  const std::size_t width = level == 0 ? cfg.d0() : cfg.widths[level - 1];
  Eigen::MatrixXd out(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(series.size()));
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < series.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, series.size() - start);
    Eigen::MatrixXd m = lambda0_matrix(series.subspan(start, count), net);
    for (std::size_t l = 0; l < level; ++l) {
      Eigen::MatrixXd zl = net.fc_w(l) * m;
      zl.colwise() += net.fc_a(l);
      m = zl.cwiseMax(0.0);
    }
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) = m;
  }
  return out;
}

Eigen::MatrixXd predict_batch(std::span<const std::span<const double>> series, const NetworkWeights& net) {
  const std::size_t L = net.config().widths.size();
  Eigen::MatrixXd out = net.fc_w(L) * feature_matrix(series, net, L);
  out.colwise() += net.fc_a(L);
  return out;
}

}  // namespace dnncal
