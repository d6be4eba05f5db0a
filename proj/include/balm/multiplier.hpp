#pragma once

// Multiplier subproblem of the balanced methods:
//
//   λᵏ⁺¹ = argmin { ½(λ − λᵏ)ᵀ H (λ − λᵏ) + sᵀλ : λ ∈ Λ }
//
// For equality rows this is the SPD system H(λ − λᵏ) = −s. For inequality
// rows it is the strictly monotone LCP 0 ≤ λ ⊥ H(λ − λᵏ) + s ≥ 0, solved by
// projected Gauss–Seidel with an exact active-set polish.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "balm/error.hpp"
#include "balm/linalg.hpp"
#include "balm/problem.hpp"

namespace balm {

/// A constant metric matrix of the multiplier subproblem and its factor.
/// Built once per run and reused every iteration.
struct MultiplierSystem {
  DenseMatrix H;
  SpdFactor factor;

  std::size_t dim() const noexcept { return H.rows(); }
};

namespace detail {

inline void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    fail(ErrorKind::kConfigInvalid, std::string(name) + " must be finite and > 0");
}

inline MultiplierSystem finish_system(DenseMatrix h) {
  SpdFactor f = cholesky_factor(h);
  return {std::move(h), std::move(f)};
}

}  // namespace detail

/// H₀ = (1/r)AAᵀ + δI_m.
inline MultiplierSystem build_h0(const DenseMatrix& a, double r, double delta) {
  detail::require_positive(r, "r");
  detail::require_positive(delta, "delta");
  DenseMatrix h = gram_rows(a);
  h *= 1.0 / r;
  for (std::size_t i = 0; i < h.rows(); ++i) h(i, i) += delta;
  return detail::finish_system(std::move(h));
}

struct ScaledBlock {
  const DenseMatrix& A;
  double r;
};

/// H_p = Σᵢ (1/rᵢ)AᵢAᵢᵀ + δI_m.
inline MultiplierSystem build_hp(std::span<const ScaledBlock> blocks, double delta) {
  detail::require_positive(delta, "delta");
  if (blocks.empty()) detail::fail(ErrorKind::kInvalidDims, "build_hp needs a block");
  const std::size_t m = blocks.front().A.rows();
  DenseMatrix h(m, m);
  for (const auto& blk : blocks) {
    detail::require_positive(blk.r, "r_i");
    detail::require_dims(blk.A.rows() == m, "blocks disagree on row count");
    DenseMatrix g = gram_rows(blk.A);
    g *= 1.0 / blk.r;
    h += g;
  }
  for (std::size_t i = 0; i < m; ++i) h(i, i) += delta;
  return detail::finish_system(std::move(h));
}

/// H₂ = (1/s)A₂A₂ᵀ + (1/r + δ)I_m.
inline MultiplierSystem build_h2(const DenseMatrix& a2, double r, double s, double delta) {
  detail::require_positive(r, "r");
  detail::require_positive(s, "s");
  detail::require_positive(delta, "delta");
  DenseMatrix h = gram_rows(a2);
  h *= 1.0 / s;
  for (std::size_t i = 0; i < h.rows(); ++i) h(i, i) += 1.0 / r + delta;
  return detail::finish_system(std::move(h));
}

/// λ with H(λ − λᵏ) = −s.
inline Vector solve_equality(const MultiplierSystem& sys, std::span<const double> lambda_k,
                             std::span<const double> s_k) {
  detail::require_dims(lambda_k.size() == sys.dim() && s_k.size() == sys.dim(),
                       "multiplier system dimension");
  Vector step = solve_spd(sys.factor, s_k);
  return sub(lambda_k, step);
}

struct LcpOptions {
  double tol = 1e-9;
  int max_sweeps = 10000;
};

/// y = H(λ − λᵏ) + s.
inline Vector lcp_slack(const MultiplierSystem& sys, std::span<const double> lambda,
                        std::span<const double> lambda_k, std::span<const double> s_k) {
  return add(multiply(sys.H, sub(lambda, lambda_k)), s_k);
}

/// λ ≥ 0, y ≥ −tol and |λᵀy| ≤ tol·(1 + ‖s‖).
inline bool lcp_certified(std::span<const double> lambda, std::span<const double> y,
                          double s_norm, double tol) {
  for (std::size_t i = 0; i < lambda.size(); ++i)
    if (lambda[i] < 0.0 || y[i] < -tol) return false;
  return std::abs(dot(lambda, y)) <= tol * (1.0 + s_norm);
}

namespace detail {

// Solve y_S = 0 with λ outside S fixed at zero.
inline bool polish_active_set(const MultiplierSystem& sys, std::span<const double> lambda_k,
                              std::span<const double> s_k, const std::vector<std::size_t>& active,
                              Vector& out) {
  const std::size_t m = sys.dim();
  out.assign(m, 0.0);
  if (active.empty()) return true;
  const std::size_t k = active.size();
  DenseMatrix hs(k, k);
  Vector rhs(k);
  for (std::size_t a = 0; a < k; ++a) {
    const std::size_t i = active[a];
    for (std::size_t b = 0; b < k; ++b) hs(a, b) = sys.H(i, active[b]);
    double hl = 0.0;
    for (std::size_t j = 0; j < m; ++j) hl += sys.H(i, j) * lambda_k[j];
    rhs[a] = hl - s_k[i];
  }
  Vector sol;
  try {
    sol = solve_spd(cholesky_factor(hs), rhs);
  } catch (const Error&) {
    return false;
  }
  for (std::size_t a = 0; a < k; ++a) {
    if (sol[a] < 0.0) return false;
    out[active[a]] = sol[a];
  }
  return true;
}

}  // namespace detail

/// 0 ≤ λ ⊥ H(λ − λᵏ) + s ≥ 0 by projected Gauss–Seidel from max(λᵏ, 0).
/// Whenever the sweep changes the support of λ, the support is tried as an
/// active set and solved exactly; the first certified candidate is returned.
inline Vector solve_lcp(const MultiplierSystem& sys, std::span<const double> lambda_k,
                        std::span<const double> s_k, const LcpOptions& opts = {}) {
  const std::size_t m = sys.dim();
  detail::require_dims(lambda_k.size() == m && s_k.size() == m,
                       "multiplier system dimension");
  const double s_norm = norm2(s_k);
  Vector lambda(m);
  for (std::size_t i = 0; i < m; ++i) lambda[i] = std::max(lambda_k[i], 0.0);

  std::vector<std::size_t> tried;
  bool tried_any = false;
  Vector candidate;
  auto try_polish = [&]() -> bool {
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < m; ++i)
      if (lambda[i] > 0.0) support.push_back(i);
    if (tried_any && support == tried) return false;
    tried = support;
    tried_any = true;
    if (!detail::polish_active_set(sys, lambda_k, s_k, support, candidate)) return false;
    return lcp_certified(candidate, lcp_slack(sys, candidate, lambda_k, s_k), s_norm,
                         opts.tol);
  };

  if (lcp_certified(lambda, lcp_slack(sys, lambda, lambda_k, s_k), s_norm, opts.tol)) {
    // λᵏ itself may already solve the problem; the polish sharpens it.
    if (try_polish()) return candidate;
    return lambda;
  }

  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    for (std::size_t i = 0; i < m; ++i) {
      double yi = s_k[i];
      for (std::size_t j = 0; j < m; ++j) yi += sys.H(i, j) * (lambda[j] - lambda_k[j]);
      lambda[i] = std::max(0.0, lambda[i] - yi / sys.H(i, i));
    }
    if (try_polish()) return candidate;
    if (lcp_certified(lambda, lcp_slack(sys, lambda, lambda_k, s_k), s_norm, opts.tol))
      return lambda;
  }
  detail::fail(ErrorKind::kNoConvergence,
               "projected Gauss-Seidel did not certify in " +
                   std::to_string(opts.max_sweeps) + " sweeps");
}

/// Dispatch on the constraint sense.
inline Vector solve_multiplier(const MultiplierSystem& sys, Sense sense,
                               std::span<const double> lambda_k, std::span<const double> s_k) {
  return sense == Sense::kEquality ? solve_equality(sys, lambda_k, s_k)
                                   : solve_lcp(sys, lambda_k, s_k);
}

}  // namespace balm
