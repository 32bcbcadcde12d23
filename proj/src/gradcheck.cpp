#include "dnncal/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dnncal/kernels.hpp"
#include "dnncal/reference.hpp"

namespace dnncal {
namespace {

std::uint8_t gate_region(double x) { return x <= 0.0 ? 0 : (x >= 1.0 ? 2 : 1); }

// Which linear piece every activation sits on. Two weight vectors with equal
// signatures lie in the same smooth region of the loss.
std::vector<std::uint8_t> kink_signature(std::span<const Sample> batch, const NetworkWeights& net,
                                         std::span<const DropoutMasks> masks) {
  const NetworkConfig& cfg = net.config();
  const auto dc = static_cast<Eigen::Index>(cfg.d_c);
  std::vector<std::uint8_t> sig;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto x = build_lag_windows(batch[i].series, cfg.d_t);
    std::vector<Vec> h(x.size(), Vec::Zero(dc));
    for (Direction dir : {Direction::kForward, Direction::kBackward}) {
      const LstmView w = net.lstm(dir);
      LstmState s = LstmState::zeros(cfg.d_c);
      LstmStepTrace tr;
      for (std::size_t k = 0; k < x.size(); ++k) {
        const std::size_t t = dir == Direction::kForward ? k : x.size() - 1 - k;
        s = lstm_cell_step(x[t], s, w, &tr);
        h[t] += s.h;
        for (Eigen::Index j = 0; j < dc; ++j) {
          sig.push_back(tr.pre[j] > 0.0);
          for (int g = 1; g < 4; ++g) sig.push_back(gate_region(tr.pre[g * dc + j]));
          sig.push_back(s.c[j] > 0.0);
        }
      }
    }
    Vec in = flatten_features(h);
    for (std::size_t l = 0; l < cfg.widths.size(); ++l) {
      Vec z = net.fc_w(l) * in + net.fc_a(l);
      for (Eigen::Index j = 0; j < z.size(); ++j) sig.push_back(z[j] > 0.0);
      in = z.cwiseMax(0.0);
      if (!masks.empty()) in = in.cwiseProduct(masks[i].keep[l]) * masks[i].scale;
    }
  }
  return sig;
}

NetworkConfig random_config(Rng& rng) {
  auto pick = [&rng](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo + 1)) % (hi - lo + 1);
  };
  NetworkConfig cfg;
  cfg.p = pick(3, 16);
  cfg.d_theta = pick(1, 3);
  cfg.d_t = pick(0, 2);
  cfg.d_c = pick(1, 4);
  cfg.widths.clear();
  const std::size_t L = pick(1, 2);
  for (std::size_t l = 0; l < L; ++l) cfg.widths.push_back(pick(2, 6));
  cfg.p_keep = 0.75;
  cfg.lambda = rng.uniform(0.0, 0.1);
  return cfg;
}

}  // namespace

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

bool GradcheckReport::passed() const {
  if (cases.empty()) return false;
  for (const auto& c : cases) {
    if (c.checked == 0) return false;
    if (c.max_rel_error_reference >= tolerance || c.max_rel_error_kernel >= tolerance ||
        c.max_rel_kernel_vs_reference >= tolerance)
      return false;
  }
  return true;
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& c : cases)
    w = std::max({w, c.max_rel_error_reference, c.max_rel_error_kernel, c.max_rel_kernel_vs_reference});
  return w;
}

GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t n_cases, double step, double tolerance) {
  GradcheckReport report;
  report.tolerance = tolerance;
  report.step = step;
  Rng master(seed);
  for (std::size_t c = 0; c < n_cases; ++c) {
    Rng rng = master.substream(c);
    GradcheckCase result;
    result.config = random_config(rng);
    const NetworkConfig& cfg = result.config;
    NetworkWeights net = NetworkWeights::initialize(cfg, rng);
    // Spread weights so that gates sit inside the linear part of the clamp.
    for (const Block& b : net.layout().blocks()) {
      auto v = net.block(b);
      const bool gate_bias = !b.penalized && b.name.rfind("fc", 0) != 0;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (gate_bias && i >= static_cast<Eigen::Index>(cfg.d_c))
          v.data()[i] = rng.uniform(0.2, 0.8);
        else
          v.data()[i] += rng.uniform(-0.3, 0.3);
      }
    }

    const std::size_t n_samples = 2 + c % 2;
    std::vector<std::vector<double>> series(n_samples), targets(n_samples);
    std::vector<Sample> batch;
    std::vector<DropoutMasks> masks;
    for (std::size_t i = 0; i < n_samples; ++i) {
      for (std::size_t t = 0; t < cfg.p; ++t) series[i].push_back(rng.normal());
      for (std::size_t k = 0; k < cfg.d_theta; ++k) targets[i].push_back(rng.uniform());
      masks.push_back(sample_dropout_masks(cfg, rng));
    }
    for (std::size_t i = 0; i < n_samples; ++i) batch.push_back(Sample{series[i], targets[i]});

    const std::vector<double> g_ref = reference::gradients(batch, net, masks);
    std::vector<double> g_ker(net.size());
    TrainingKernel kernel(cfg);
    kernel.loss_and_gradient(batch, net, masks, g_ker);

    const auto base_sig = kink_signature(batch, net, masks);
    for (std::size_t k = 0; k < net.size(); ++k) {
      const double w0 = net.values()[k];
      net.values()[k] = w0 + step;
      const double up = loss_penalized(batch, net, masks);
      const bool up_ok = kink_signature(batch, net, masks) == base_sig;
      net.values()[k] = w0 - step;
      const double down = loss_penalized(batch, net, masks);
      const bool down_ok = kink_signature(batch, net, masks) == base_sig;
      net.values()[k] = w0;
      result.max_rel_kernel_vs_reference =
          std::max(result.max_rel_kernel_vs_reference, relative_error(g_ker[k], g_ref[k]));
      if (!up_ok || !down_ok) {
        ++result.skipped_at_kink;
        continue;
      }
      const double fd = (up - down) / (2.0 * step);
      ++result.checked;
      result.max_rel_error_reference = std::max(result.max_rel_error_reference, relative_error(g_ref[k], fd));
      result.max_rel_error_kernel = std::max(result.max_rel_error_kernel, relative_error(g_ker[k], fd));
    }
    report.cases.push_back(std::move(result));
  }
  return report;
}

}  // namespace dnncal
