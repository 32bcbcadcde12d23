#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dnncal/errors.hpp"
#include "dnncal/study.hpp"

using namespace dnncal;

TEST_CASE("synthetic model") {
  const auto u = synthetic_grid();
  CHECK(u.size() == 480);
  CHECK(u.front() == -2.0);
  CHECK(u.back() == 2.0);
  CHECK(u[1] - u[0] == doctest::Approx(4.0 / 479.0));

  const std::vector<double> theta{0.7, 0.5, 0.9};
  const auto y = synthetic_output(theta);
  const auto peak = std::max_element(y.begin(), y.end());
  CHECK(*peak == doctest::Approx(0.69894).epsilon(1e-5));
  // u = 0 falls between two grid points; the maximum sits at one of them.
  const auto at = static_cast<std::size_t>(peak - y.begin());
  CHECK(std::abs(u[at]) <= 2.0 / 479.0 + 1e-12);

  // Peak height formula where the exponent vanishes exactly (u = -0.5 on a 9-point grid).
  const std::vector<double> th2{0.2, 0.0, 0.4};
  const auto y9 = synthetic_output(th2, 9);
  CHECK(y9[3] == doctest::Approx(0.3 + 0.5 / std::sqrt(2.0 * std::numbers::pi * 0.5)));

  for (double v : y) CHECK(v > 0.0);
  CHECK_THROWS_AS(synthetic_output(std::vector<double>{1.2, 0.5, 0.5}), DataError);
  CHECK_THROWS_AS(synthetic_output(std::vector<double>{0.5, 0.5}), DataError);

  double last = 0.0;
  for (double t1 : {0.0, 0.25, 0.5, 1.0}) {
    const auto yt = synthetic_output(std::vector<double>{t1, 0.3, 0.6});
    const double m = *std::max_element(yt.begin(), yt.end());
    CHECK(m > last);
    last = m;
  }
}

TEST_CASE("ensemble and scenarios") {
  Rng a(3), b(3);
  const auto e = generate_ensemble(200, a, 48);
  CHECK(e.size() == 200);
  for (const auto& t : e.theta)
    for (double v : t) CHECK((v >= 0.0 && v <= 1.0));
  const auto e2 = generate_ensemble(200, b, 48);
  CHECK(e.theta == e2.theta);
  CHECK(e.y == e2.y);

  DiscrepancyRanges r;
  Rng s1(9), s2(9);
  const auto sc = generate_test_scenarios(20, r, s1, 48);
  const auto sc2 = generate_test_scenarios(20, r, s2, 48);
  REQUIRE(sc.size() == 20);
  for (std::size_t i = 0; i < sc.size(); ++i) {
    CHECK(sc[i].z == sc2[i].z);
    CHECK(sc[i].z.size() == 48);
    CHECK(r.phi.contains(sc[i].noise.phi));
  }

  DiscrepancyRanges zero;
  zero.zeta = {0.0, 0.0};
  zero.kappa = {0.0, 0.0};
  Rng s3(1);
  for (const auto& s : generate_test_scenarios(5, zero, s3, 48)) CHECK(s.z == synthetic_output(s.theta_true, 48));
}

TEST_CASE("scoring") {
  const std::vector<std::vector<double>> truth{{0.1, 0.9}, {0.4, 0.2}, {0.6, 0.5}, {0.8, 0.3}};
  std::vector<CalibrationEstimate> oracle;
  for (const auto& t : truth) oracle.push_back({t, t, t});
  for (const auto& row : score(oracle, truth, UqMethod::kQuantile)) {
    CHECK(row.bias == 0.0);
    CHECK(row.rmse == 0.0);
    CHECK(row.pi_length == 0.0);
    CHECK(row.pi_coverage == 1.0);
  }

  std::vector<CalibrationEstimate> est;
  for (const auto& t : truth) est.push_back({{t[0] + 0.1}, {t[0] - 0.05}, {t[0] + 0.05}});
  est[2].lower = {0.7};
  est[2].upper = {0.75};
  const std::vector<std::vector<double>> truth1{{0.1}, {0.4}, {0.6}, {0.8}};
  const auto rows = score(est, truth1, UqMethod::kMcDropout);
  CHECK(rows[0].pi_coverage == 0.75);
  CHECK(rows[0].bias == doctest::Approx(0.1));
  CHECK(rows[0].rmse == doctest::Approx(0.1));
  CHECK(rows[0].pi_length == doctest::Approx((0.1 * 3 + 0.05) / 4));
  CHECK(rows[0].parameter == 1);

  CHECK_THROWS_AS(score({}, {}, UqMethod::kQuantile), DataError);
  CHECK(parse_method("dnn-q") == UqMethod::kQuantile);
  CHECK(to_string(UqMethod::kMcDropout) == "mc-dropout");
  CHECK_THROWS_AS(parse_method("bootstrap"), UsageError);
}
