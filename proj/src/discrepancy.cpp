#include "dnncal/discrepancy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "dnncal/errors.hpp"

namespace dnncal {

void DiscrepancyRanges::validate() const {
  auto check = [](const Interval& r, const char* name, bool positive) {
    if (!(r.lo <= r.hi)) throw UsageError(std::string("discrepancy range for ") + name + " is inverted");
    if (positive ? !(r.lo > 0.0) : !(r.lo >= 0.0))
      throw UsageError(std::string("discrepancy range for ") + name + (positive ? " must be > 0" : " must be >= 0"));
  };
  check(zeta, "zeta", false);
  check(kappa, "kappa", false);
  check(phi, "phi", true);
  if (n_d < 1) throw UsageError("n_d must be >= 1");
}

std::vector<std::vector<double>> latin_hypercube(std::span<const Interval> box, std::size_t n, Rng& rng) {
  if (n < 1) throw UsageError("latin hypercube needs at least one point");
  for (const Interval& r : box)
    if (!(r.lo <= r.hi)) throw UsageError("latin hypercube: inverted range");
  std::vector<std::vector<double>> pts(n, std::vector<double>(box.size()));
  std::vector<std::size_t> perm(n);
  for (std::size_t d = 0; d < box.size(); ++d) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    const double w = box[d].width() / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.uniform();
      pts[i][d] = std::min(box[d].hi, box[d].lo + (static_cast<double>(perm[i]) + u) * w);
    }
  }
  return pts;
}

std::vector<DiscrepancyParams> lhs_sample(const DiscrepancyRanges& ranges, std::size_t n, Rng& rng) {
  ranges.validate();
  const Interval box[3] = {ranges.zeta, ranges.kappa, ranges.phi};
  const auto pts = latin_hypercube(box, n, rng);
  std::vector<DiscrepancyParams> out;
  out.reserve(n);
  for (const auto& q : pts) out.push_back(DiscrepancyParams{q[0], q[1], q[2]});
  return out;
}

Eigen::MatrixXd build_covariance(std::size_t p, const DiscrepancyParams& params) {
  if (p < 1) throw UsageError("covariance size must be >= 1");
  if (!(params.phi > 0.0)) throw UsageError("range parameter phi must be > 0");
  const auto n = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    m(a, a) = params.zeta + params.kappa;
    for (Eigen::Index b = 0; b < a; ++b) {
      const double d = static_cast<double>(a - b);
      const double v = params.kappa * std::exp(-d * d / params.phi);
      m(a, b) = v;
      m(b, a) = v;
    }
  }
  return m;
}

CholeskyFactor chol_with_jitter(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DataError("cholesky: matrix is not square");
  double jitter = 0.0;
  for (;;) {
    Eigen::MatrixXd a = m;
    a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) return CholeskyFactor{llt.matrixL(), jitter};
    if (jitter >= kJitterCap) break;
    jitter = jitter == 0.0 ? kJitterStart : jitter * 10.0;
    if (jitter > kJitterCap) jitter = kJitterCap;
  }
  std::ostringstream msg;
  msg << "covariance matrix is not positive definite (failed with jitter " << jitter << ")";
  throw NumericError(msg.str());
}

TimeSeries sample_gp(const Eigen::MatrixXd& lower, Rng& rng) {
  Vec z(lower.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  const Vec delta = lower.triangularView<Eigen::Lower>() * z;
  return TimeSeries(delta.data(), delta.data() + delta.size());
}

void Ensemble::validate() const {
  if (theta.empty()) throw DataError("ensemble is empty");
  if (theta.size() != y.size()) throw DataError("ensemble: parameter and output counts differ");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (theta[i].size() != d_theta()) throw DataError("ensemble: ragged parameter vector at run " + std::to_string(i + 1));
    if (y[i].size() != p()) throw DataError("ensemble: ragged output at run " + std::to_string(i + 1));
  }
  if (!box.empty() && box.size() != d_theta()) throw DataError("ensemble: parameter box has wrong dimension");
}

void ContaminatedSet::validate() const {
  if (theta.empty()) throw DataError("contaminated set is empty");
  if (theta.size() != y.size()) throw DataError("contaminated set: parameter and output counts differ");
  if (!provenance.empty() && provenance.size() != theta.size())
    throw DataError("contaminated set: provenance count differs from pair count");
  for (std::size_t i = 0; i < theta.size(); ++i)
    if (theta[i].size() != d_theta() || y[i].size() != p())
      throw DataError("contaminated set: ragged pair " + std::to_string(i + 1));
  if (!box.empty() && box.size() != d_theta()) throw DataError("contaminated set: parameter box has wrong dimension");
}

TimeSeries draw_discrepancy(std::size_t p, const DiscrepancyParams& params, const Rng& root, std::size_t index,
                            double* jitter_used) {
  if (jitter_used) *jitter_used = 0.0;
  if (params.degenerate()) return TimeSeries(p, 0.0);
  const CholeskyFactor f = chol_with_jitter(build_covariance(p, params));
  if (jitter_used) *jitter_used = f.jitter;
  Rng rng = root.substream(index);
  return sample_gp(f.lower, rng);
}

ContaminatedSet contaminate(const Ensemble& ensemble, const DiscrepancyRanges& ranges, Rng& rng) {
  ensemble.validate();
  ranges.validate();
  const std::size_t n = ensemble.size();
  const std::size_t nd = ranges.n_d;
  const std::size_t total = n * nd;
  const std::size_t p = ensemble.p();
  const Rng root(rng.engine()());
  Rng design_rng = root.substream(0);
  const std::vector<DiscrepancyParams> params = lhs_sample(ranges, total, design_rng);

  ContaminatedSet out;
  out.theta.resize(total);
  out.y.resize(total);
  out.provenance.resize(total);
  out.box = ensemble.box;
  std::string failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < total; ++k) {
    const std::size_t i = k / nd;
    try {
      double jitter = 0.0;
      const TimeSeries delta = draw_discrepancy(p, params[k], root, k + 1, &jitter);
      TimeSeries y = ensemble.y[i];
      for (std::size_t t = 0; t < p; ++t) y[t] += delta[t];
      out.theta[k] = ensemble.theta[i];
      out.y[k] = std::move(y);
      out.provenance[k] = ContaminationRecord{i + 1, k % nd + 1, params[k], jitter};
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw NumericError(failure);
  return out;
}

std::vector<Interval> parameter_box(const std::vector<std::vector<double>>& theta,
                                    const std::vector<Interval>& declared) {
  if (!declared.empty()) return declared;
  if (theta.empty()) throw DataError("cannot infer a parameter box from no runs");
  std::vector<Interval> box(theta.front().size(), Interval{0.0, 0.0});
  for (std::size_t d = 0; d < box.size(); ++d) {
    box[d].lo = box[d].hi = theta.front()[d];
    for (const auto& t : theta) {
      box[d].lo = std::min(box[d].lo, t[d]);
      box[d].hi = std::max(box[d].hi, t[d]);
    }
  }
  return box;
}

}  // namespace dnncal
