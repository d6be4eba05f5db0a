#pragma once

// Certificates for the convergence theory of the balanced methods, computed
// from a recorded run:
//   * contraction: ‖wᵏ⁺¹ − w*‖²_H ≤ ‖wᵏ − w*‖²_H − α(2−α)‖wᵏ − w̃ᵏ‖²_H
//   * ergodic gap: θ(x̃_t) − θ(x) + (w̃_t − w)ᵀF(w) ≤ ‖w − w⁰‖²_H / (2(t+1))
//     for probes w ∈ Ω near the running average w̃_t.

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "balm/error.hpp"
#include "balm/linalg.hpp"
#include "balm/problem.hpp"
#include "balm/solvers.hpp"

namespace balm {

inline constexpr double kContractionSlackTol = 1e-9;
inline constexpr double kGapTol = 1e-8;

struct ContractionCertificate {
  std::size_t iteration = 0;
  double dist_before = 0.0;  // ‖wᵏ − w*‖²_H
  double dist_after = 0.0;   // ‖wᵏ⁺¹ − w*‖²_H
  double step_h = 0.0;       // ‖wᵏ − w̃ᵏ‖²_H (w̃ᵏ = wᵏ⁺¹ when α = 1)
  double slack = 0.0;        // dist_before − dist_after − α(2−α)·step_h

  bool passes() const { return slack >= -kContractionSlackTol; }
};

struct GapCertificate {
  std::size_t t = 0;
  PrimalDualPoint ergodic_point;
  std::vector<PrimalDualPoint> probe_points;
  double max_lhs = -std::numeric_limits<double>::infinity();
  /// Bound at the probe attaining max_lhs.
  double bound = 0.0;
  /// max over probes of lhs − bound.
  double worst_excess = -std::numeric_limits<double>::infinity();

  bool passes() const { return worst_excess <= kGapTol; }
};

/// w̃_t = (1/(t+1)) Σ_{k=0}^{t} wᵏ⁺¹.
inline PrimalDualPoint ergodic_average(const RunHistory& history, std::size_t t) {
  if (history.iterates.size() < t + 2)
    detail::fail(ErrorKind::kInsufficientHistory,
                 "ergodic average over t = " + std::to_string(t) + " needs " +
                     std::to_string(t + 2) + " iterates, history has " +
                     std::to_string(history.iterates.size()));
  const auto& first = history.iterates[1];
  Vector sum_x(first.x.size(), 0.0), sum_l(first.lambda.size(), 0.0);
  for (std::size_t k = 1; k <= t + 1; ++k) {
    axpy(1.0, history.iterates[k].x, sum_x);
    axpy(1.0, history.iterates[k].lambda, sum_l);
  }
  const double inv = 1.0 / static_cast<double>(t + 1);
  return {scaled(sum_x, inv), scaled(sum_l, inv)};
}

/// One certificate per recorded step.
inline std::vector<ContractionCertificate> contraction_ledger(
    const RunHistory& history, const DenseMatrix& h,
    const std::optional<PrimalDualPoint>& w_star, double alpha) {
  if (!w_star) detail::fail(ErrorKind::kMissingReference, "contraction needs a solution w*");
  if (!(alpha > 0.0 && alpha < 2.0))
    detail::fail(ErrorKind::kConfigInvalid, "alpha must lie in (0, 2)");
  const double scale = alpha * (2.0 - alpha);
  std::vector<ContractionCertificate> out;
  for (std::size_t k = 0; k + 1 < history.iterates.size(); ++k) {
    const auto& wk = history.iterates[k];
    const auto& wn = history.iterates[k + 1];
    ContractionCertificate c;
    c.iteration = k;
    c.dist_before = h_quadratic(h, difference(wk, *w_star));
    c.dist_after = h_quadratic(h, difference(wn, *w_star));
    if (alpha == 1.0) {
      c.step_h = h_quadratic(h, difference(wk, wn));
    } else {
      if (k >= history.predictors.size() || !history.predictors[k])
        detail::fail(ErrorKind::kInsufficientHistory,
                     "relaxed contraction needs the predictor of step " + std::to_string(k));
      c.step_h = h_quadratic(h, difference(wk, *history.predictors[k]));
    }
    c.slack = c.dist_before - c.dist_after - scale * c.step_h;
    out.push_back(c);
  }
  return out;
}

namespace detail {

// Uniform point in the Euclidean unit ball around `center`, rejected until it
// lies in Ω.
template <LinearlyConstrained Prob>
PrimalDualPoint sample_probe(const Prob& prob, const Vector& center, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t d = center.size();
  for (int attempt = 0; attempt < 10'000'000; ++attempt) {
    Vector dir(d);
    for (double& v : dir) v = gauss(rng);
    const double nd = norm2(dir);
    if (nd == 0.0) continue;
    const double radius = std::pow(unif(rng), 1.0 / static_cast<double>(d));
    Vector p = center;
    axpy(radius / nd, dir, p);
    PrimalDualPoint w = PrimalDualPoint::from_stacked(p, prob.n());
    if (in_omega(prob, w)) return w;
  }
  fail(ErrorKind::kNoConvergence, "could not sample a probe inside the feasible set");
}

}  // namespace detail

/// θ(x̃) − θ(x) + (w̃ − w)ᵀF(w).
template <LinearlyConstrained Prob>
double gap_lhs(const Prob& prob, const PrimalDualPoint& w_tilde, const PrimalDualPoint& w) {
  return objective_value(prob, w_tilde.x) - objective_value(prob, w.x) +
         dot(difference(w_tilde, w), vi_operator(prob, w));
}

/// Ergodic O(1/t) certificate from `probe_count` seeded probes.
template <LinearlyConstrained Prob>
GapCertificate vi_gap(const Prob& prob, const RunHistory& history, const DenseMatrix& h,
                      std::size_t t, std::size_t probe_count, std::uint64_t seed) {
  GapCertificate cert;
  cert.t = t;
  cert.ergodic_point = ergodic_average(history, t);
  const PrimalDualPoint& w0 = history.iterates.front();
  const Vector center = cert.ergodic_point.stacked();
  std::mt19937_64 rng(seed);
  const double denom = 2.0 * static_cast<double>(t + 1);
  for (std::size_t i = 0; i < probe_count; ++i) {
    PrimalDualPoint w = detail::sample_probe(prob, center, rng);
    const double lhs = gap_lhs(prob, cert.ergodic_point, w);
    const double bound = h_quadratic(h, difference(w, w0)) / denom;
    if (lhs > cert.max_lhs) {
      cert.max_lhs = lhs;
      cert.bound = bound;
    }
    cert.worst_excess = std::max(cert.worst_excess, lhs - bound);
    cert.probe_points.push_back(std::move(w));
  }
  return cert;
}

}  // namespace balm
