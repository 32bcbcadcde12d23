#include "dnncal/reference.hpp"

#include "dnncal/errors.hpp"

namespace dnncal::reference {
namespace {

struct DirectionTape {
  std::vector<LstmState> states;  // states[0] is the zero state
  std::vector<LstmStepTrace> traces;
  std::vector<std::size_t> order;  // time index processed at each step
};

DirectionTape run_direction(const std::vector<Vec>& x, const LstmView& w, bool reverse) {
  const std::size_t p = x.size();
  DirectionTape tape;
  tape.states.push_back(LstmState::zeros(w.cell_width()));
  tape.traces.resize(p);
  for (std::size_t k = 0; k < p; ++k) {
    const std::size_t t = reverse ? p - 1 - k : k;
    tape.order.push_back(t);
    tape.states.push_back(lstm_cell_step(x[t], tape.states.back(), w, &tape.traces[k]));
  }
  return tape;
}

void backprop_direction(const DirectionTape& tape, const std::vector<Vec>& x, const LstmView& w,
                        const std::vector<Vec>& dh_out, MatView g_wx, MatView g_wh, VecView g_a) {
  const auto dc = static_cast<Eigen::Index>(w.cell_width());
  Vec dh_next = Vec::Zero(dc);
  Vec dc_next = Vec::Zero(dc);
  Vec dpre(4 * dc);
  for (std::size_t k = tape.traces.size(); k-- > 0;) {
    const std::size_t t = tape.order[k];
    const LstmStepTrace& tr = tape.traces[k];
    const LstmState& prev = tape.states[k];
    const LstmState& cur = tape.states[k + 1];
    const Vec dh = dh_out[t] + dh_next;
    Vec dcell = dc_next;
    for (Eigen::Index j = 0; j < dc; ++j) {
      const double relu_c = activate(Activation::kRelu, cur.c[j]);
      const double duo = dh[j] * relu_c;
      dcell[j] += dh[j] * tr.uo[j] * activation_slope(Activation::kRelu, cur.c[j]);
      const double dg = dcell[j] * tr.ui[j];
      const double dui = dcell[j] * tr.g[j];
      const double duf = dcell[j] * prev.c[j];
      dc_next[j] = dcell[j] * tr.uf[j];
      dpre[j] = dg * activation_slope(Activation::kRelu, tr.pre[j]);
      dpre[dc + j] = duf * activation_slope(Activation::kHardSigmoid, tr.pre[dc + j]);
      dpre[2 * dc + j] = dui * activation_slope(Activation::kHardSigmoid, tr.pre[2 * dc + j]);
      dpre[3 * dc + j] = duo * activation_slope(Activation::kHardSigmoid, tr.pre[3 * dc + j]);
    }
    g_wx += dpre * x[t].transpose();
    g_wh += dpre * prev.h.transpose();
    g_a += dpre;
    dh_next = w.wh.transpose() * dpre;
  }
}

}  // namespace

double accumulate_sample_gradient(const Sample& sample, const NetworkWeights& net, const DropoutMasks* masks,
                                  std::span<double> grad) {
  const NetworkConfig& cfg = net.config();
  const ParameterLayout& layout = net.layout();
  if (grad.size() != layout.size()) throw DataError("gradient buffer size mismatch");
  if (sample.series.size() != cfg.p || sample.target.size() != cfg.d_theta)
    throw DataError("sample shape does not match network config");
  const std::size_t L = cfg.widths.size();
  const auto dc = static_cast<Eigen::Index>(cfg.d_c);

  // Forward pass with everything needed for the backward sweep.
  const std::vector<Vec> x = build_lag_windows(sample.series, cfg.d_t);
  const LstmView fwd = net.lstm(Direction::kForward);
  const LstmView bwd = net.lstm(Direction::kBackward);
  const DirectionTape tape_f = run_direction(x, fwd, false);
  const DirectionTape tape_b = run_direction(x, bwd, true);
  const std::size_t p = x.size();
  std::vector<Vec> h(p);
  for (std::size_t k = 0; k < p; ++k) h[tape_f.order[k]] = tape_f.states[k + 1].h;
  for (std::size_t k = 0; k < p; ++k) h[tape_b.order[k]] += tape_b.states[k + 1].h;
  const Vec lambda0 = flatten_features(h);

  // in[l] is the (masked) input of weight layer l; z[l] its pre-activation output.
  std::vector<Vec> in(L + 1), z(L);
  in[0] = lambda0;
  for (std::size_t l = 0; l < L; ++l) {
    z[l] = net.fc_w(l) * in[l] + net.fc_a(l);
    Vec lam = activate(Activation::kRelu, z[l]);
    in[l + 1] = masks ? Vec(lam.cwiseProduct(masks->keep[l]) * masks->scale) : lam;
  }
  const Vec out = net.fc_w(L) * in[L] + net.fc_a(L);
  const Vec resid = out - ConstVecView(sample.target.data(), out.size());

  // Backward through the FC stack.
  double* g = grad.data();
  Vec d = 2.0 * resid;
  mat_view(g, layout.fc_w(L)) += d * in[L].transpose();
  vec_view(g, layout.fc_a(L)) += d;
  Vec d_in = net.fc_w(L).transpose() * d;
  for (std::size_t l = L; l-- > 0;) {
    // d_in is the gradient w.r.t. in[l+1]; undo the mask, then the ReLU.
    Vec dz = masks ? Vec(d_in.cwiseProduct(masks->keep[l]) * masks->scale) : d_in;
    for (Eigen::Index j = 0; j < dz.size(); ++j) dz[j] *= activation_slope(Activation::kRelu, z[l][j]);
    mat_view(g, layout.fc_w(l)) += dz * in[l].transpose();
    vec_view(g, layout.fc_a(l)) += dz;
    d_in = net.fc_w(l).transpose() * dz;
  }

  // d_in is now d loss / d lambda0; both directions receive the same dh_t.
  std::vector<Vec> dh(p);
  for (std::size_t t = 0; t < p; ++t) dh[t] = d_in.segment(static_cast<Eigen::Index>(t) * dc, dc);
  for (Direction dir : {Direction::kForward, Direction::kBackward}) {
    backprop_direction(dir == Direction::kForward ? tape_f : tape_b, x, net.lstm(dir), dh,
                       mat_view(g, layout.lstm_wx(dir)), mat_view(g, layout.lstm_wh(dir)),
                       vec_view(g, layout.lstm_a(dir)));
  }
  return resid.squaredNorm();
}

std::vector<double> gradients(std::span<const Sample> batch, const NetworkWeights& net,
                              std::span<const DropoutMasks> masks) {
  if (batch.empty()) throw DataError("gradients: empty batch");
  if (!masks.empty() && masks.size() != batch.size()) throw DataError("gradients: one mask set per sample");
  std::vector<double> grad(net.size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i)
    accumulate_sample_gradient(batch[i], net, masks.empty() ? nullptr : &masks[i], grad);
  const double lambda = net.config().lambda;
  const auto w = net.values();
  for (const Block& b : net.layout().blocks()) {
    if (!b.penalized) continue;
    for (std::size_t i = b.offset; i < b.offset + b.size(); ++i) grad[i] += 2.0 * lambda * w[i];
  }
  return grad;
}

}  // namespace dnncal::reference
