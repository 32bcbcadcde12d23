#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "dnncal/errors.hpp"
#include "dnncal/gradcheck.hpp"
#include "dnncal/kernels.hpp"
#include "dnncal/network.hpp"
#include "dnncal/optimizer.hpp"
#include "dnncal/reference.hpp"

using namespace dnncal;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

NetworkConfig small_config() {
  NetworkConfig c;
  c.p = 8;
  c.d_theta = 2;
  c.d_t = 1;
  c.d_c = 3;
  c.widths = {5, 4};
  c.p_keep = 0.8;
  c.lambda = 1e-3;
  return c;
}

struct Batch {
  std::vector<std::vector<double>> series, targets;
  std::vector<Sample> samples;
};

Batch random_batch(const NetworkConfig& c, std::size_t n, Rng& rng) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> z(c.p), t(c.d_theta);
    for (double& v : z) v = rng.normal();
    for (double& v : t) v = rng.uniform();
    b.series.push_back(z);
    b.targets.push_back(t);
  }
  for (std::size_t i = 0; i < n; ++i) b.samples.push_back(Sample{b.series[i], b.targets[i]});
  return b;
}

}  // namespace

TEST_CASE("activations") {
  CHECK(activate(Activation::kHardSigmoid, vec({-0.5, 0.3, 1.7})) == vec({0.0, 0.3, 1.0}));
  CHECK(activate(Activation::kRelu, vec({-2.0, 0.0, 3.5})) == vec({0.0, 0.0, 3.5}));
  CHECK(activate(Activation::kHardSigmoid, 0.0) == 0.0);
  CHECK(activate(Activation::kIdentity, -4.25) == -4.25);
  CHECK(activation_slope(Activation::kRelu, 0.0) == 0.0);
  CHECK(activation_slope(Activation::kHardSigmoid, 1.0) == 0.0);
  CHECK(activation_slope(Activation::kHardSigmoid, 0.5) == 1.0);
}

TEST_CASE("lag windows") {
  const std::vector<double> z{1, 2, 3, 4};
  auto w0 = build_lag_windows(z, 0);
  REQUIRE(w0.size() == 4);
  for (std::size_t t = 0; t < 4; ++t) CHECK(w0[t] == vec({z[t]}));
  auto w2 = build_lag_windows(z, 2);
  CHECK(w2[2] == vec({1, 2, 3}));
  CHECK(w2[0] == vec({1, 1, 1}));
  CHECK(w2[1] == vec({1, 1, 2}));
  CHECK_THROWS_AS(build_lag_windows(z, 4), DataError);
}

TEST_CASE("cell step") {
  SUBCASE("zero weights close every gate") {
    const auto w = LstmDirectionWeights::zeros(2, 3);
    LstmStepTrace tr;
    const auto s = lstm_cell_step(vec({1, -2, 3}), LstmState{vec({4, 5}), vec({1, 1})}, w.view(), &tr);
    CHECK(s.c == vec({0, 0}));
    CHECK(s.h == vec({0, 0}));
    CHECK(tr.uf == vec({0, 0}));
  }
  SUBCASE("scalar hand evaluation") {
    auto w = LstmDirectionWeights::zeros(1, 1);
    w.gate_a(Gate::kForget).setConstant(10);
    w.gate_a(Gate::kInput).setConstant(10);
    w.gate_a(Gate::kOutput).setConstant(10);
    w.gate_wx(Gate::kCell).setConstant(1);
    const auto s = lstm_cell_step(vec({2}), LstmState{vec({3}), vec({0})}, w.view());
    CHECK(s.c[0] == 5.0);
    CHECK(s.h[0] == 5.0);
  }
  SUBCASE("gates in range, h non-negative") {
    Rng rng(3);
    auto w = LstmDirectionWeights::zeros(4, 2);
    for (auto* m : {&w.wx, &w.wh}) m->setRandom();
    w.a.setRandom();
    LstmState s = LstmState::zeros(4);
    LstmStepTrace tr;
    for (int t = 0; t < 20; ++t) {
      s = lstm_cell_step(vec({rng.normal(), rng.normal()}), s, w.view(), &tr);
      for (const Vec* g : {&tr.uf, &tr.ui, &tr.uo}) {
        CHECK(g->minCoeff() >= 0.0);
        CHECK(g->maxCoeff() <= 1.0);
      }
      CHECK(s.h.minCoeff() >= 0.0);
    }
  }
  CHECK_THROWS_AS(lstm_cell_step(vec({1, 2}), LstmState::zeros(1), LstmDirectionWeights::zeros(1, 1).view()),
                  DataError);
}

TEST_CASE("bidirectional pass") {
  Rng rng(11);
  auto fwd = LstmDirectionWeights::zeros(3, 2);
  fwd.wx.setRandom();
  fwd.wh.setRandom();
  fwd.a.setConstant(0.5);
  std::vector<double> z{0.3, -1.0, 0.7, 2.0, 0.1};
  const auto windows = build_lag_windows(z, 1);

  SUBCASE("zero backward weights give the forward output") {
    const auto bwd = LstmDirectionWeights::zeros(3, 2);
    const auto h = bilstm_forward(windows, fwd.view(), bwd.view());
    LstmState s = LstmState::zeros(3);
    for (std::size_t t = 0; t < windows.size(); ++t) {
      s = lstm_cell_step(windows[t], s, fwd.view());
      CHECK(h[t] == s.h);
    }
  }
  SUBCASE("single step") {
    auto bwd = fwd;
    bwd.wx *= -0.5;
    const std::vector<Vec> one{vec({0.2, 0.9})};
    const auto h = bilstm_forward(one, fwd.view(), bwd.view());
    const auto f = lstm_cell_step(one[0], LstmState::zeros(3), fwd.view());
    const auto b = lstm_cell_step(one[0], LstmState::zeros(3), bwd.view());
    CHECK(h[0] == f.h + b.h);
  }
  SUBCASE("deterministic") {
    const auto a = bilstm_forward(windows, fwd.view(), fwd.view());
    const auto b = bilstm_forward(windows, fwd.view(), fwd.view());
    CHECK(a == b);
  }
}

TEST_CASE("fully connected stack") {
  NetworkConfig c;
  c.p = 2;
  c.d_theta = 2;
  c.d_t = 0;
  c.d_c = 1;
  c.widths = {2};
  SUBCASE("constant head") {
    NetworkWeights net(c);
    net.fc_a(1) = vec({0.5, 0.5});
    CHECK(fc_forward(vec({3, -7}), net) == vec({0.5, 0.5}));
    CHECK(network_forward(std::vector<double>{1.0, 9.0}, net) == vec({0.5, 0.5}));
  }
  SUBCASE("hand 2x2") {
    NetworkWeights net(c);
    net.fc_w(0) << 1, 2, -1, 1;
    net.fc_a(0) = vec({0.5, -4});
    net.fc_w(1) << 2, 0, 1, 3;
    net.fc_a(1) = vec({0, 1});
    // hidden: relu([1+4+0.5, -1+2-4]) = [5.5, 0]; out = [11, 6.5]
    CHECK(fc_forward(vec({1, 2}), net) == vec({11, 6.5}));
  }
  SUBCASE("all-ones masks match the maskless call") {
    Rng rng(5);
    NetworkConfig s = small_config();
    const auto net = NetworkWeights::initialize(s, rng);
    std::vector<double> z(s.p);
    for (double& v : z) v = rng.normal();
    const auto ones = DropoutMasks::ones(s);
    CHECK(network_forward(z, net, &ones) == network_forward(z, net));
  }
  SUBCASE("bad masks are rejected") {
    NetworkWeights net(c);
    DropoutMasks m;
    CHECK_THROWS_AS(fc_forward(vec({1, 2}), net, nullptr, &m), DataError);
  }
}

TEST_CASE("network forward") {
  Rng rng(21);
  const NetworkConfig c = small_config();
  const auto net = NetworkWeights::initialize(c, rng);
  std::vector<double> z(c.p);
  for (double& v : z) v = rng.normal();
  CHECK(network_forward(z, net) == network_forward(z, net));
  CHECK_THROWS_AS(network_forward(std::vector<double>(c.p + 1), net), DataError);
  // Lipschitz probe: a small input change moves the output by a bounded amount.
  const Vec base = network_forward(z, net);
  std::vector<double> z2 = z;
  z2[3] += 1e-6;
  CHECK((network_forward(z2, net) - base).norm() < 1e-3);
}

TEST_CASE("layout and initialization") {
  Rng rng(1);
  const NetworkConfig c = small_config();
  const auto net = NetworkWeights::initialize(c, rng);
  const auto& L = net.layout();
  CHECK(L.fc_layers() == 3);
  CHECK(L.fc_w(0).cols == c.p * c.d_c);
  CHECK(L.fc_w(2).rows == c.d_theta);
  const auto a = vec_view(net.values().data(), L.lstm_a(Direction::kForward));
  for (std::size_t i = 0; i < c.d_c; ++i) CHECK(a[static_cast<Eigen::Index>(i)] == 0.0);
  for (std::size_t i = c.d_c; i < 4 * c.d_c; ++i) CHECK(a[static_cast<Eigen::Index>(i)] == kGateInterceptInit);
  CHECK(mat_view(net.values().data(), L.lstm_wh(Direction::kBackward)).isZero());
  const double limit = std::sqrt(6.0 / (24.0 + 5.0));
  CHECK(net.fc_w(0).cwiseAbs().maxCoeff() <= limit);
  Rng again(1);
  CHECK(NetworkWeights::initialize(c, again) == net);
}

TEST_CASE("penalized loss") {
  NetworkConfig c;
  c.p = 2;
  c.d_theta = 2;
  c.d_t = 0;
  c.d_c = 1;
  c.widths = {1};
  c.lambda = 0.0;
  NetworkWeights net(c);
  net.fc_a(1) = vec({0.1, -0.2});
  const std::vector<double> z{1, 2}, target{0, 0}, exact{0.1, -0.2};
  const Sample s{z, target};
  CHECK(loss_penalized(std::span(&s, 1), net) == doctest::Approx(0.05).epsilon(1e-15));
  const Sample perfect{z, exact};
  CHECK(loss_penalized(std::span(&perfect, 1), net) == 0.0);

  c.lambda = 0.1;
  NetworkWeights one(c);
  one.fc_w(1)(0, 0) = 2.0;
  const Sample zero_res{z, target};
  CHECK(ridge_penalty(one) == doctest::Approx(0.4));
  CHECK(loss_penalized(std::span(&zero_res, 1), one) == doctest::Approx(0.4));
}

TEST_CASE("gradients") {
  Rng rng(8);
  const NetworkConfig c = small_config();

  SUBCASE("ridge term alone") {
    const auto net = NetworkWeights::initialize(c, rng);
    NetworkConfig plain = c;
    plain.lambda = 0.0;
    NetworkWeights unpenalized(plain);
    std::copy(net.values().begin(), net.values().end(), unpenalized.values().begin());
    Batch b = random_batch(c, 2, rng);
    const auto with = reference::gradients(b.samples, net);
    const auto without = reference::gradients(b.samples, unpenalized);
    for (const Block& blk : net.layout().blocks())
      for (std::size_t i = blk.offset; i < blk.offset + blk.size(); ++i) {
        const double want = blk.penalized ? 2.0 * c.lambda * net.values()[i] : 0.0;
        CHECK(with[i] - without[i] == doctest::Approx(want).epsilon(1e-9).scale(1e-12));
      }
  }

  SUBCASE("zero weights") {
    NetworkWeights net(c);
    Batch b = random_batch(c, 3, rng);
    const auto g = reference::gradients(b.samples, net);
    const auto& L = net.layout();
    for (std::size_t i = 0; i < L.fc_a(2).offset; ++i) CHECK(g[i] == 0.0);
    for (std::size_t d = 0; d < c.d_theta; ++d) {
      double want = 0.0;
      for (const auto& t : b.targets) want += 2.0 * (0.0 - t[d]);
      CHECK(g[L.fc_a(2).offset + d] == doctest::Approx(want));
    }
  }

  SUBCASE("kernel matches reference") {
    const auto net = NetworkWeights::initialize(c, rng);
    Batch b = random_batch(c, 6, rng);
    std::vector<DropoutMasks> masks;
    for (std::size_t i = 0; i < 6; ++i) masks.push_back(sample_dropout_masks(c, rng));
    const auto want = reference::gradients(b.samples, net, masks);
    std::vector<double> got(net.size());
    TrainingKernel k(c);
    const double sse = k.loss_and_gradient(b.samples, net, masks, got);
    CHECK(sse + ridge_penalty(net) == doctest::Approx(loss_penalized(b.samples, net, masks)).epsilon(1e-12));
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
    std::vector<double> again(net.size());
    k.loss_and_gradient(b.samples, net, masks, again);
    CHECK(again == got);
  }

  SUBCASE("finite-difference suite") {
    const auto rep = run_gradcheck(7, 20);
    CHECK(rep.cases.size() == 20);
    CHECK(rep.passed());
    CHECK(rep.worst() < 1e-4);
  }
}

TEST_CASE("adam") {
  std::vector<double> w{1.0, -2.0, 3.0};
  const std::vector<double> w0 = w;
  AdamState st = AdamState::zeros(3);
  AdamHyper h;
  adam_step(w, std::vector<double>{0, 0, 0}, st, h);
  CHECK(w == w0);

  AdamState s1 = AdamState::zeros(3);
  std::vector<double> w1 = w0;
  adam_step(w1, std::vector<double>{0.5, -3.0, 1e-3}, s1, h);
  CHECK(w1[0] - w0[0] == doctest::Approx(-h.lr).epsilon(1e-4));
  CHECK(w1[1] - w0[1] == doctest::Approx(h.lr).epsilon(1e-4));
  CHECK(w1[2] - w0[2] == doctest::Approx(-h.lr).epsilon(1e-4));

  AdamState s2 = AdamState::zeros(3);
  std::vector<double> w2 = w0;
  adam_step(w2, std::vector<double>{0.5, -3.0, 1e-3}, s2, h);
  CHECK(w2 == w1);
  CHECK(s2 == s1);
}

TEST_CASE("dropout masks") {
  NetworkConfig c = small_config();
  c.p_keep = 1.0;
  Rng rng(4);
  const auto ones = sample_dropout_masks(c, rng);
  for (const auto& k : ones.keep) CHECK(k.isOnes());

  c.p_keep = 0.8;
  c.widths = {1000};
  Rng a(9), b(9);
  CHECK(sample_dropout_masks(c, a).keep[0] == sample_dropout_masks(c, b).keep[0]);
  double kept = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto m = sample_dropout_masks(c, a);
    for (Eigen::Index i = 0; i < m.keep[0].size(); ++i) {
      CHECK((m.keep[0][i] == 0.0 || m.keep[0][i] == 1.0));
      kept += m.keep[0][i];
    }
  }
  CHECK(std::abs(kept / 1e5 - 0.8) < 0.01);
}

TEST_CASE("config validation") {
  NetworkConfig c = small_config();
  c.p_keep = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = small_config();
  c.tau_set = {0.5, 0.1};
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = small_config();
  c.widths = {3, 0};
  CHECK_THROWS_AS(c.validate(), UsageError);
}
