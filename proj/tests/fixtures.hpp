#pragma once

// Random instances and conversions shared by the unit suites and the
// acceptance runner.

#include <cmath>
#include <random>
#include <vector>

#include "balm/balm.hpp"
#include "oracles.hpp"

namespace fx {

using balm::DenseMatrix;
using balm::Vector;

inline oracle::Mat to_mat(const DenseMatrix& a) {
  oracle::Mat m(a.rows(), oracle::Vec(a.cols()));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m[i][j] = a(i, j);
  return m;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double gauss() { return gauss_(eng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  std::size_t index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(eng_);
  }
  /// 10^u for u uniform in [lo, hi].
  double log_uniform(double lo, double hi) { return std::pow(10.0, uniform(lo, hi)); }

  Vector vec(std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (double& x : v) x = scale * gauss();
    return v;
  }

  DenseMatrix mat(std::size_t r, std::size_t c, double scale = 1.0) {
    DenseMatrix a(r, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) a(i, j) = scale * gauss();
    return a;
  }

  /// Rank-deficient product of an r×k and a k×c factor.
  DenseMatrix low_rank(std::size_t r, std::size_t c, std::size_t k) {
    return balm::multiply(mat(r, k), mat(k, c));
  }

  /// MᵀM/n + shift·I.
  DenseMatrix spd(std::size_t n, double shift = 0.5) {
    DenseMatrix p = balm::gram_cols(mat(n, n));
    p *= 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) p(i, i) += shift;
    return p;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> gauss_;
};

struct KnownProblem {
  balm::Problem prob;
  balm::PrimalDualPoint w_star;
};

/// The scalar fixture min ½x² s.t. x = 1, saddle point (1, 1).
inline KnownProblem scalar_problem() {
  return {balm::Problem(balm::ObjectiveSpec::quadratic(DenseMatrix{{1.0}}, Vector{0.0}),
                        balm::SetSpec::whole_space(), DenseMatrix{{1.0}}, Vector{1.0},
                        balm::Sense::kEquality),
          {{1.0}, {1.0}}};
}

/// Strongly convex equality QP with its saddle point from the dense KKT system.
inline KnownProblem random_equality_qp(Rng& rng, std::size_t m, std::size_t n) {
  DenseMatrix p = rng.spd(n);
  Vector c = rng.vec(n);
  DenseMatrix a = rng.mat(m, n);
  Vector b = rng.vec(m);
  auto s = oracle::equality_qp(to_mat(p), c, to_mat(a), b);
  return {balm::Problem(balm::ObjectiveSpec::quadratic(p, c), balm::SetSpec::whole_space(), a, b,
                        balm::Sense::kEquality),
          {s->x, s->lambda}};
}

/// Strongly convex QP with Ax ≥ b, roughly half the rows active at the
/// solution; saddle point by active-set enumeration.
inline KnownProblem random_inequality_qp(Rng& rng, std::size_t m, std::size_t n) {
  for (;;) {
    DenseMatrix p = rng.spd(n);
    Vector c = rng.vec(n);
    DenseMatrix a = rng.mat(m, n);
    auto free = oracle::gauss_solve(to_mat(p), balm::scaled(c, -1.0));
    Vector b = balm::multiply(a, *free);
    for (double& v : b) v += rng.uniform(-1.0, 1.0);
    auto s = oracle::inequality_qp(to_mat(p), c, to_mat(a), b);
    if (!s) continue;
    return {balm::Problem(balm::ObjectiveSpec::quadratic(p, c), balm::SetSpec::whole_space(), a,
                          b, balm::Sense::kInequality),
            {s->x, s->lambda}};
  }
}

struct KnownSeparable {
  balm::SeparableProblem prob;
  balm::PrimalDualPoint w_star;
};

/// Two (or more) quadratic blocks coupled by equality rows.
inline KnownSeparable random_block_qp(Rng& rng, std::size_t m, const std::vector<std::size_t>& sizes,
                                      balm::Sense sense = balm::Sense::kEquality) {
  std::vector<balm::Block> blocks;
  for (std::size_t ni : sizes)
    blocks.push_back({balm::ObjectiveSpec::quadratic(rng.spd(ni), rng.vec(ni)),
                      balm::SetSpec::whole_space(), rng.mat(m, ni)});
  Vector b = rng.vec(m);
  balm::SeparableProblem sp(std::move(blocks), b, sense);
  const balm::Problem flat = balm::merged(sp);
  const auto* q = flat.theta().as<balm::QuadraticObjective>();
  std::optional<oracle::Saddle> s =
      sense == balm::Sense::kEquality
          ? oracle::equality_qp(to_mat(q->P()), q->c(), to_mat(flat.A()), flat.b())
          : oracle::inequality_qp(to_mat(q->P()), q->c(), to_mat(flat.A()), flat.b());
  return {std::move(sp), {s->x, s->lambda}};
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Drive a method for exactly `steps` iterations, recording every iterate,
/// regardless of convergence.
template <class Prob>
balm::RunHistory drive(const Prob& prob, const balm::Method& method, const balm::PrimalDualPoint& w0,
                       std::size_t steps) {
  balm::RunHistory h;
  h.method = method.name;
  h.metric = method.metric;
  h.alpha = method.alpha;
  h.iterates.push_back(w0);
  h.residuals.push_back(balm::kkt_residual(prob, w0));
  for (std::size_t k = 0; k < steps; ++k) {
    balm::StepResult sr = method.step(h.iterates.back());
    h.predictors.push_back(sr.predictor);
    h.residuals.push_back(balm::kkt_residual(prob, sr.next));
    h.iterates.push_back(std::move(sr.next));
  }
  return h;
}

}  // namespace fx
