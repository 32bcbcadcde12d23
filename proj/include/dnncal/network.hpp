#pragma once

// Bidirectional LSTM feature extractor followed by a fully connected
// regression stack. All trainable weights live in one flat buffer described by
// a ParameterLayout so the optimizer and gradient code can treat the network
// as a single vector; typed views are carved out of it on demand.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dnncal/rng.hpp"

namespace dnncal {

using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatView = Eigen::Map<RowMat>;
using ConstMatView = Eigen::Map<const RowMat>;
using VecView = Eigen::Map<Vec>;
using ConstVecView = Eigen::Map<const Vec>;

using TimeSeries = std::vector<double>;
/// Heap buffer aligned for Eigen packets.
using AlignedBuffer = std::vector<double, Eigen::aligned_allocator<double>>;

enum class Activation { kHardSigmoid, kRelu, kIdentity };

double activate(Activation kind, double x);
Vec activate(Activation kind, const Vec& x);
/// Derivative with the subgradient fixed to 0 at every kink.
double activation_slope(Activation kind, double x);

struct NetworkConfig {
  std::size_t p = 480;
  std::size_t d_theta = 3;
  std::size_t d_t = 2;
  std::size_t d_c = 16;
  std::vector<std::size_t> widths{64, 32};
  double p_keep = 0.9;
  double lambda = 1e-4;
  std::vector<double> tau_set{0.025, 0.5, 0.975};

  std::size_t d_x() const { return d_t + 1; }
  std::size_t d0() const { return p * d_c; }
  std::size_t hidden_layers() const { return widths.size(); }
  std::size_t last_width() const { return widths.empty() ? d0() : widths.back(); }

  /// Throws UsageError when any invariant fails.
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

enum class Direction { kForward = 0, kBackward = 1 };

/// Gate blocks are stacked row-wise in this order inside the LSTM matrices.
enum class Gate { kCell = 0, kForget = 1, kInput = 2, kOutput = 3 };
inline constexpr std::size_t kGateCount = 4;

/// Initial gate intercept: the middle of the clamp's linear range, so every
/// gate starts half open and passes gradient.
inline constexpr double kGateInterceptInit = 0.5;

struct Block {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool penalized = false;  // ridge applies to matrices only
  std::size_t size() const { return rows * cols; }
};

class ParameterLayout {
 public:
  ParameterLayout() = default;
  explicit ParameterLayout(const NetworkConfig& cfg);

  std::size_t size() const { return size_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  const Block& lstm_wx(Direction d) const { return blocks_[3 * idx(d)]; }
  const Block& lstm_wh(Direction d) const { return blocks_[3 * idx(d) + 1]; }
  const Block& lstm_a(Direction d) const { return blocks_[3 * idx(d) + 2]; }
  /// Layer l = 0..L; layer L is the mean output head.
  const Block& fc_w(std::size_t l) const { return blocks_[6 + 2 * l]; }
  const Block& fc_a(std::size_t l) const { return blocks_[6 + 2 * l + 1]; }
  std::size_t fc_layers() const { return (blocks_.size() - 6) / 2; }

 private:
  static std::size_t idx(Direction d) { return static_cast<std::size_t>(d); }
  std::vector<Block> blocks_;
  std::size_t size_ = 0;
};

inline ConstMatView mat_view(const double* base, const Block& b) {
  return ConstMatView(base + b.offset, static_cast<Eigen::Index>(b.rows),
                      static_cast<Eigen::Index>(b.cols));
}
inline MatView mat_view(double* base, const Block& b) {
  return MatView(base + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
}
inline ConstVecView vec_view(const double* base, const Block& b) {
  return ConstVecView(base + b.offset, static_cast<Eigen::Index>(b.size()));
}
inline VecView vec_view(double* base, const Block& b) {
  return VecView(base + b.offset, static_cast<Eigen::Index>(b.size()));
}

/// Non-owning view of one LSTM direction (stacked gates c, f, i, o).
struct LstmView {
  ConstMatView wx;  // 4 d_c x d_x
  ConstMatView wh;  // 4 d_c x d_c
  ConstVecView a;   // 4 d_c
  std::size_t cell_width() const { return static_cast<std::size_t>(wh.cols()); }
  std::size_t input_width() const { return static_cast<std::size_t>(wx.cols()); }
};

/// Owning weights for a single direction; used standalone by tests and tools.
struct LstmDirectionWeights {
  RowMat wx;
  RowMat wh;
  Vec a;

  static LstmDirectionWeights zeros(std::size_t d_c, std::size_t d_x);
  auto gate_wx(Gate g) { return wx.middleRows(row0(g), wh.cols()); }
  auto gate_wh(Gate g) { return wh.middleRows(row0(g), wh.cols()); }
  auto gate_a(Gate g) { return a.segment(row0(g), wh.cols()); }
  LstmView view() const;

 private:
  Eigen::Index row0(Gate g) const { return static_cast<Eigen::Index>(g) * wh.cols(); }
};

struct LstmState {
  Vec c;
  Vec h;
  static LstmState zeros(std::size_t d_c) { return {Vec::Zero(static_cast<Eigen::Index>(d_c)), Vec::Zero(static_cast<Eigen::Index>(d_c))}; }
};

/// Full network: config, layout and the flat weight vector.
class NetworkWeights {
 public:
  NetworkWeights() = default;
  explicit NetworkWeights(NetworkConfig cfg);  // all zeros

  /// Glorot-uniform input and FC matrices, zero recurrent matrices, zero
  /// intercepts except LSTM gate intercepts.
  static NetworkWeights initialize(const NetworkConfig& cfg, Rng& rng);

  const NetworkConfig& config() const { return cfg_; }
  const ParameterLayout& layout() const { return layout_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  LstmView lstm(Direction d) const;
  ConstMatView fc_w(std::size_t l) const { return mat_view(values_.data(), layout_.fc_w(l)); }
  ConstVecView fc_a(std::size_t l) const { return vec_view(values_.data(), layout_.fc_a(l)); }
  MatView fc_w(std::size_t l) { return mat_view(values_.data(), layout_.fc_w(l)); }
  VecView fc_a(std::size_t l) { return vec_view(values_.data(), layout_.fc_a(l)); }
  MatView block(const Block& b) { return mat_view(values_.data(), b); }

  void set_lstm(Direction d, const LstmDirectionWeights& w);

  bool operator==(const NetworkWeights& o) const { return cfg_ == o.cfg_ && values_ == o.values_; }

 private:
  NetworkConfig cfg_;
  ParameterLayout layout_;
  AlignedBuffer values_;
};

/// Alternative output layer fitted for one quantile level.
struct QuantileHead {
  double tau = 0.5;
  RowMat w;  // d_theta x d_(L)
  Vec a;     // d_theta
};

/// Bernoulli keep masks on the hidden FC outputs lambda^(1..L). Entries are
/// exactly 0 or 1; kept units are multiplied by `scale` (inverted dropout,
/// 1/p_keep for sampled masks) so that maskless prediction matches the
/// training-time expectation.
struct DropoutMasks {
  std::vector<Vec> keep;
  double scale = 1.0;

  static DropoutMasks ones(const NetworkConfig& cfg);
};

DropoutMasks sample_dropout_masks(const NetworkConfig& cfg, Rng& rng);

/// x_t = [Z_{t-d_t}, ..., Z_t]; indices before the start repeat Z_1.
std::vector<Vec> build_lag_windows(std::span<const double> z, std::size_t d_t);

/// Intermediate gate values of one cell step.
struct LstmStepTrace {
  Vec pre;  // stacked pre-activations, 4 d_c
  Vec g;    // f^(c)(pre_c)
  Vec uf, ui, uo;
};

LstmState lstm_cell_step(const Vec& x, const LstmState& prev, const LstmView& w,
                         LstmStepTrace* trace = nullptr);

/// h_t = forward h_t + backward h_t for t = 1..p, both directions from zero state.
std::vector<Vec> bilstm_forward(const std::vector<Vec>& windows, const LstmView& fwd, const LstmView& bwd);

/// Time-major concatenation of h_1..h_p.
Vec flatten_features(const std::vector<Vec>& h);

/// Hidden stack lambda^(1..L) (unmasked) for input lambda^(0).
std::vector<Vec> fc_hidden(const Vec& lambda0, const NetworkWeights& net, const DropoutMasks* masks);

/// Output of the FC stack: the mean head, or `head` when given.
Vec fc_forward(const Vec& lambda0, const NetworkWeights& net, const QuantileHead* head = nullptr,
               const DropoutMasks* masks = nullptr);

Vec network_features(std::span<const double> z, const NetworkWeights& net);
Vec network_forward(std::span<const double> z, const NetworkWeights& net, const DropoutMasks* masks = nullptr,
                    const QuantileHead* head = nullptr);

/// lambda * sum of squares over penalized (matrix) blocks.
double ridge_penalty(const NetworkWeights& net);

struct Sample {
  std::span<const double> series;  // standardized series, length p
  std::span<const double> target;  // normalized parameters, length d_theta
};

/// Sum of squared residuals plus ridge penalty. `masks` is empty or has one
/// entry per sample.
double loss_penalized(std::span<const Sample> batch, const NetworkWeights& net,
                      std::span<const DropoutMasks> masks = {});

}  // namespace dnncal
