#include "dnncal/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dnncal/errors.hpp"

namespace dnncal {

double activate(Activation kind, double x) {
  switch (kind) {
    case Activation::kHardSigmoid:
      return std::max(0.0, std::min(1.0, x));
    case Activation::kRelu:
      return std::max(0.0, x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

Vec activate(Activation kind, const Vec& x) {
  return x.unaryExpr([kind](double v) { return activate(kind, v); });
}

double activation_slope(Activation kind, double x) {
  switch (kind) {
    case Activation::kHardSigmoid:
      return (x > 0.0 && x < 1.0) ? 1.0 : 0.0;
    case Activation::kRelu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

void NetworkConfig::validate() const {
  auto fail = [](const std::string& m) { throw UsageError("network config: " + m); };
  if (p < 1) fail("p must be >= 1");
  if (d_theta < 1) fail("d_theta must be >= 1");
  if (d_c < 1) fail("d_c must be >= 1");
  if (d_t >= p) fail("lag depth d_t must be < p");
  if (widths.empty()) fail("at least one hidden layer is required");
  for (auto w : widths)
    if (w < 1) fail("layer widths must be >= 1");
  if (!(p_keep > 0.0 && p_keep <= 1.0)) fail("p_keep must lie in (0,1]");
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (tau_set.empty()) fail("tau_set must not be empty");
  for (std::size_t i = 0; i < tau_set.size(); ++i) {
    if (!(tau_set[i] > 0.0 && tau_set[i] < 1.0)) fail("tau values must lie in (0,1)");
    if (i > 0 && !(tau_set[i] > tau_set[i - 1])) fail("tau_set must be strictly increasing");
  }
}

ParameterLayout::ParameterLayout(const NetworkConfig& cfg) {
  auto add = [this](std::string name, std::size_t rows, std::size_t cols, bool penalized) {
    blocks_.push_back(Block{std::move(name), size_, rows, cols, penalized});
    size_ += rows * cols;
  };
  const std::size_t g = kGateCount * cfg.d_c;
  for (const char* dir : {"forward", "backward"}) {
    add(std::string(dir) + ".wx", g, cfg.d_x(), true);
    add(std::string(dir) + ".wh", g, cfg.d_c, true);
    add(std::string(dir) + ".a", g, 1, false);
  }
  std::size_t in = cfg.d0();
  for (std::size_t l = 0; l <= cfg.widths.size(); ++l) {
    const std::size_t out = l < cfg.widths.size() ? cfg.widths[l] : cfg.d_theta;
    add("fc" + std::to_string(l) + ".w", out, in, true);
    add("fc" + std::to_string(l) + ".a", out, 1, false);
    in = out;
  }
}

LstmDirectionWeights LstmDirectionWeights::zeros(std::size_t d_c, std::size_t d_x) {
  const auto g = static_cast<Eigen::Index>(kGateCount * d_c);
  LstmDirectionWeights w;
  w.wx = RowMat::Zero(g, static_cast<Eigen::Index>(d_x));
  w.wh = RowMat::Zero(g, static_cast<Eigen::Index>(d_c));
  w.a = Vec::Zero(g);
  return w;
}

LstmView LstmDirectionWeights::view() const {
  return LstmView{ConstMatView(wx.data(), wx.rows(), wx.cols()), ConstMatView(wh.data(), wh.rows(), wh.cols()),
                  ConstVecView(a.data(), a.size())};
}

NetworkWeights::NetworkWeights(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  layout_ = ParameterLayout(cfg_);
  values_.assign(layout_.size(), 0.0);
}

NetworkWeights NetworkWeights::initialize(const NetworkConfig& cfg, Rng& rng) {
  NetworkWeights net(cfg);
  for (const Block& b : net.layout_.blocks()) {
    auto view = net.block(b);
    const bool lstm = b.name.rfind("fc", 0) != 0;
    if (lstm && b.name.ends_with(".wh")) {
      // Recurrent matrices start at zero.
      continue;
    }
    if (b.penalized) {
      // LSTM gate blocks are initialized as separate d_c-row matrices.
      const double fan_out = lstm ? static_cast<double>(cfg.d_c) : static_cast<double>(b.rows);
      const double limit = std::sqrt(6.0 / (static_cast<double>(b.cols) + fan_out));
      for (Eigen::Index i = 0; i < view.size(); ++i) view.data()[i] = rng.uniform(-limit, limit);
    } else if (b.name.rfind("fc", 0) != 0) {
      // Gate intercepts start at kGateInterceptInit; the cell-input
      // intercept stays at zero.
      for (std::size_t i = cfg.d_c; i < b.rows; ++i) view(static_cast<Eigen::Index>(i), 0) = kGateInterceptInit;
    }
  }
  return net;
}

LstmView NetworkWeights::lstm(Direction d) const {
  const double* base = values_.data();
  return LstmView{mat_view(base, layout_.lstm_wx(d)), mat_view(base, layout_.lstm_wh(d)),
                  vec_view(base, layout_.lstm_a(d))};
}

void NetworkWeights::set_lstm(Direction d, const LstmDirectionWeights& w) {
  auto wx = mat_view(values_.data(), layout_.lstm_wx(d));
  auto wh = mat_view(values_.data(), layout_.lstm_wh(d));
  auto a = vec_view(values_.data(), layout_.lstm_a(d));
  if (wx.rows() != w.wx.rows() || wx.cols() != w.wx.cols() || wh.rows() != w.wh.rows() ||
      wh.cols() != w.wh.cols() || a.size() != w.a.size())
    throw DataError("set_lstm: dimension mismatch");
  wx = w.wx;
  wh = w.wh;
  a = w.a;
}

DropoutMasks DropoutMasks::ones(const NetworkConfig& cfg) {
  DropoutMasks m;
  for (auto w : cfg.widths) m.keep.push_back(Vec::Ones(static_cast<Eigen::Index>(w)));
  return m;
}

DropoutMasks sample_dropout_masks(const NetworkConfig& cfg, Rng& rng) {
  if (!(cfg.p_keep > 0.0 && cfg.p_keep <= 1.0)) throw UsageError("p_keep must lie in (0,1]");
  DropoutMasks m;
  m.scale = 1.0 / cfg.p_keep;
  for (auto w : cfg.widths) {
    Vec r(static_cast<Eigen::Index>(w));
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = rng.bernoulli(cfg.p_keep) ? 1.0 : 0.0;
    m.keep.push_back(std::move(r));
  }
  return m;
}

std::vector<Vec> build_lag_windows(std::span<const double> z, std::size_t d_t) {
  const std::size_t p = z.size();
  if (p < 1) throw DataError("build_lag_windows: empty series");
  if (d_t >= p) throw DataError("build_lag_windows: lag depth " + std::to_string(d_t) + " >= series length");
  std::vector<Vec> out(p, Vec(static_cast<Eigen::Index>(d_t + 1)));
  for (std::size_t t = 0; t < p; ++t)
    for (std::size_t k = 0; k <= d_t; ++k) {
      const std::size_t lag = d_t - k;
      out[t][static_cast<Eigen::Index>(k)] = t >= lag ? z[t - lag] : z[0];
    }
  return out;
}

LstmState lstm_cell_step(const Vec& x, const LstmState& prev, const LstmView& w, LstmStepTrace* trace) {
  const auto dc = static_cast<Eigen::Index>(w.cell_width());
  if (x.size() != w.wx.cols() || prev.c.size() != dc || prev.h.size() != dc || w.wx.rows() != 4 * dc ||
      w.a.size() != 4 * dc)
    throw DataError("lstm_cell_step: dimension mismatch");
  Vec pre = w.wx * x + w.wh * prev.h + w.a;
  Vec g = activate(Activation::kRelu, Vec(pre.segment(0, dc)));
  Vec uf = activate(Activation::kHardSigmoid, Vec(pre.segment(dc, dc)));
  Vec ui = activate(Activation::kHardSigmoid, Vec(pre.segment(2 * dc, dc)));
  Vec uo = activate(Activation::kHardSigmoid, Vec(pre.segment(3 * dc, dc)));
  LstmState next;
  next.c = uf.cwiseProduct(prev.c) + ui.cwiseProduct(g);
  next.h = uo.cwiseProduct(activate(Activation::kRelu, next.c));
  if (trace) *trace = LstmStepTrace{std::move(pre), std::move(g), std::move(uf), std::move(ui), std::move(uo)};
  return next;
}

std::vector<Vec> bilstm_forward(const std::vector<Vec>& windows, const LstmView& fwd, const LstmView& bwd) {
  const std::size_t p = windows.size();
  if (p < 1) throw DataError("bilstm_forward: empty sequence");
  if (fwd.cell_width() != bwd.cell_width()) throw DataError("bilstm_forward: direction widths differ");
  std::vector<Vec> h(p);
  LstmState s = LstmState::zeros(fwd.cell_width());
  for (std::size_t t = 0; t < p; ++t) {
    s = lstm_cell_step(windows[t], s, fwd);
    h[t] = s.h;
  }
  s = LstmState::zeros(bwd.cell_width());
  for (std::size_t t = p; t-- > 0;) {
    s = lstm_cell_step(windows[t], s, bwd);
    h[t] += s.h;
  }
  return h;
}

Vec flatten_features(const std::vector<Vec>& h) {
  if (h.empty()) return {};
  const Eigen::Index dc = h.front().size();
  Vec out(dc * static_cast<Eigen::Index>(h.size()));
  for (std::size_t t = 0; t < h.size(); ++t) out.segment(static_cast<Eigen::Index>(t) * dc, dc) = h[t];
  return out;
}

namespace {

void check_masks(const NetworkConfig& cfg, const DropoutMasks& m) {
  if (m.keep.size() != cfg.widths.size()) throw DataError("dropout masks: layer count mismatch");
  for (std::size_t l = 0; l < cfg.widths.size(); ++l)
    if (static_cast<std::size_t>(m.keep[l].size()) != cfg.widths[l])
      throw DataError("dropout masks: width mismatch at layer " + std::to_string(l + 1));
}

}  // namespace

std::vector<Vec> fc_hidden(const Vec& lambda0, const NetworkWeights& net, const DropoutMasks* masks) {
  const NetworkConfig& cfg = net.config();
  if (static_cast<std::size_t>(lambda0.size()) != cfg.d0()) throw DataError("fc_forward: lambda0 length mismatch");
  if (masks) check_masks(cfg, *masks);
  std::vector<Vec> lambda;
  lambda.reserve(cfg.widths.size());
  Vec in = lambda0;
  for (std::size_t l = 0; l < cfg.widths.size(); ++l) {
    Vec z = net.fc_w(l) * in + net.fc_a(l);
    lambda.push_back(activate(Activation::kRelu, z));
    in = masks ? Vec(lambda.back().cwiseProduct(masks->keep[l]) * masks->scale) : lambda.back();
  }
  return lambda;
}

Vec fc_forward(const Vec& lambda0, const NetworkWeights& net, const QuantileHead* head, const DropoutMasks* masks) {
  const NetworkConfig& cfg = net.config();
  std::vector<Vec> lambda = fc_hidden(lambda0, net, masks);
  Vec top = masks ? Vec(lambda.back().cwiseProduct(masks->keep.back()) * masks->scale) : lambda.back();
  if (head) {
    if (static_cast<std::size_t>(head->w.rows()) != cfg.d_theta || head->w.cols() != top.size())
      throw DataError("quantile head: dimension mismatch");
    return head->w * top + head->a;
  }
  const std::size_t L = cfg.widths.size();
  return net.fc_w(L) * top + net.fc_a(L);
}

Vec network_features(std::span<const double> z, const NetworkWeights& net) {
  const NetworkConfig& cfg = net.config();
  if (z.size() != cfg.p)
    throw DataError("series length " + std::to_string(z.size()) + " does not match p=" + std::to_string(cfg.p));
  auto windows = build_lag_windows(z, cfg.d_t);
  return flatten_features(bilstm_forward(windows, net.lstm(Direction::kForward), net.lstm(Direction::kBackward)));
}

Vec network_forward(std::span<const double> z, const NetworkWeights& net, const DropoutMasks* masks,
                    const QuantileHead* head) {
  return fc_forward(network_features(z, net), net, head, masks);
}

double ridge_penalty(const NetworkWeights& net) {
  double s = 0.0;
  const auto v = net.values();
  for (const Block& b : net.layout().blocks()) {
    if (!b.penalized) continue;
    for (std::size_t i = b.offset; i < b.offset + b.size(); ++i) s += v[i] * v[i];
  }
  return net.config().lambda * s;
}

double loss_penalized(std::span<const Sample> batch, const NetworkWeights& net, std::span<const DropoutMasks> masks) {
  if (batch.empty()) throw DataError("loss_penalized: empty batch");
  if (!masks.empty() && masks.size() != batch.size()) throw DataError("loss_penalized: one mask set per sample");
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Vec out = network_forward(batch[i].series, net, masks.empty() ? nullptr : &masks[i]);
    if (static_cast<std::size_t>(out.size()) != batch[i].target.size()) throw DataError("loss_penalized: target size");
    const Vec target = ConstVecView(batch[i].target.data(), out.size());
    loss += (out - target).squaredNorm();
  }
  return loss + ridge_penalty(net);
}

}  // namespace dnncal
