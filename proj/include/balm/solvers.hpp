#pragma once

// The balanced ALM family and the baseline methods it is compared against.
//
// Balanced ALM (one block), with H₀ = (1/r)AAᵀ + δI:
//   xᵏ⁺¹ = prox_θ,X^r( xᵏ + (1/r)Aᵀλᵏ )
//   λᵏ⁺¹ = argmin_{λ∈Λ} ½‖λ − λᵏ‖²_H₀ + (A(2xᵏ⁺¹ − xᵏ) − b)ᵀλ
//
// Every step function is pure given (problem, config, factored system, wᵏ).
// `run` drives any of them through a type-erased Method.

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "balm/error.hpp"
#include "balm/linalg.hpp"
#include "balm/multiplier.hpp"
#include "balm/problem.hpp"
#include "balm/prox.hpp"

namespace balm {

// ---------------------------------------------------------------------------
// Configuration

struct BalancedAlmConfig {
  double r = 1.0;
  double delta = 1.0;
  double alpha = 1.0;  // relaxation factor in (0, 2); 1 is the plain method

  void validate() const {
    detail::require_positive(r, "r");
    detail::require_positive(delta, "delta");
    if (!(alpha > 0.0 && alpha < 2.0))
      detail::fail(ErrorKind::kConfigInvalid, "alpha must lie in (0, 2)");
  }
};

struct SplitConfig {
  std::vector<double> r_list;
  double delta = 1.0;

  void validate(std::size_t blocks) const {
    if (r_list.size() != blocks)
      detail::fail(ErrorKind::kConfigInvalid,
                   "split method needs one r per block (" + std::to_string(blocks) +
                       "), got " + std::to_string(r_list.size()));
    for (double r : r_list) detail::require_positive(r, "r_i");
    detail::require_positive(delta, "delta");
  }
};

struct AltSplitConfig {
  double r = 1.0;
  double s = 1.0;
  double delta = 1.0;

  void validate() const {
    detail::require_positive(r, "r");
    detail::require_positive(s, "s");
    detail::require_positive(delta, "delta");
  }
};

enum class BaselineMethod { kClassicAlm, kLalm, kPrimalDual, kAdmm, kLinearizedAdmm };

inline std::string_view to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::kClassicAlm: return "classic-alm";
    case BaselineMethod::kLalm: return "lalm";
    case BaselineMethod::kPrimalDual: return "primal-dual";
    case BaselineMethod::kAdmm: return "admm";
    case BaselineMethod::kLinearizedAdmm: return "ladmm";
  }
  return "unknown";
}

struct InnerSolverOptions {
  double tol = 1e-10;
  int max_iters = 50000;
};

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::kClassicAlm;
  double r = 1.0;
  /// σ for LALM, s for primal-dual and linearized ADMM. Zero picks 1.01
  /// times the smallest admissible value.
  double sigma_or_s = 0.0;
  InnerSolverOptions inner;
  /// Accept the 0.75·r‖AᵀA‖ bounds for LALM and linearized ADMM instead of
  /// the classical r‖AᵀA‖ ones.
  bool sharp_bounds = false;
};

struct StopRule {
  int max_iters = 100000;
  double kkt_tol = 1e-8;

  void validate() const {
    if (max_iters < 1) detail::fail(ErrorKind::kConfigInvalid, "max_iters must be >= 1");
    if (!(kkt_tol > 0.0)) detail::fail(ErrorKind::kConfigInvalid, "kkt_tol must be > 0");
  }
};

using MethodConfig =
    std::variant<BalancedAlmConfig, SplitConfig, AltSplitConfig, BaselineConfig>;

inline std::string method_name(const MethodConfig& cfg) {
  return std::visit(
      [](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BalancedAlmConfig>)
          return c.alpha == 1.0 ? "balanced-alm" : "generalized-alm";
        else if constexpr (std::is_same_v<T, SplitConfig>) return "split-balanced";
        else if constexpr (std::is_same_v<T, AltSplitConfig>) return "alt-split";
        else return std::string(to_string(c.method));
      },
      cfg);
}

// ---------------------------------------------------------------------------
// Metric matrices of the contraction analysis

/// [[rI, Aᵀ], [A, (1/r)AAᵀ + δI]].
inline DenseMatrix balanced_metric(const DenseMatrix& a, double r, double delta) {
  const std::size_t n = a.cols(), m = a.rows();
  DenseMatrix h(n + m, n + m);
  for (std::size_t i = 0; i < n; ++i) h(i, i) = r;
  const DenseMatrix h0 = build_h0(a, r, delta).H;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      h(n + i, j) = a(i, j);
      h(j, n + i) = a(i, j);
    }
    for (std::size_t j = 0; j < m; ++j) h(n + i, n + j) = h0(i, j);
  }
  return h;
}

/// Block-diagonal rᵢI with Aᵢᵀ couplings and H_p in the multiplier corner.
template <LinearlyConstrained Prob>
DenseMatrix split_metric(const Prob& prob, std::span<const double> r_list, double delta) {
  const auto blocks = detail::blocks_of(prob);
  detail::require_dims(r_list.size() == blocks.size(), "one r per block");
  const std::size_t n = prob.n(), m = prob.m();
  DenseMatrix h(n + m, n + m);
  std::vector<ScaledBlock> scaled_blocks;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    scaled_blocks.push_back({*blk.A, r_list[b]});
    for (std::size_t j = 0; j < blk.A->cols(); ++j) {
      h(blk.offset + j, blk.offset + j) = r_list[b];
      for (std::size_t i = 0; i < m; ++i) {
        h(n + i, blk.offset + j) = (*blk.A)(i, j);
        h(blk.offset + j, n + i) = (*blk.A)(i, j);
      }
    }
  }
  const DenseMatrix hp = build_hp(scaled_blocks, delta).H;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) h(n + i, n + j) = hp(i, j);
  return h;
}

/// [[rA₁ᵀA₁ + δI, 0, A₁ᵀ], [0, sI, A₂ᵀ], [A₁, A₂, H₂]].
inline DenseMatrix alt_split_metric(const DenseMatrix& a1, const DenseMatrix& a2, double r,
                                    double s, double delta) {
  detail::require_dims(a1.rows() == a2.rows(), "A1 and A2 row counts");
  const std::size_t n1 = a1.cols(), n2 = a2.cols(), m = a1.rows();
  const std::size_t n = n1 + n2;
  DenseMatrix h(n + m, n + m);
  const DenseMatrix g1 = gram_cols(a1);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n1; ++j) h(i, j) = r * g1(i, j);
    h(i, i) += delta;
  }
  for (std::size_t i = 0; i < n2; ++i) h(n1 + i, n1 + i) = s;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n1; ++j) {
      h(n + i, j) = a1(i, j);
      h(j, n + i) = a1(i, j);
    }
    for (std::size_t j = 0; j < n2; ++j) {
      h(n + i, n1 + j) = a2(i, j);
      h(n1 + j, n + i) = a2(i, j);
    }
  }
  const DenseMatrix h2 = build_h2(a2, r, s, delta).H;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) h(n + i, n + j) = h2(i, j);
  return h;
}

// ---------------------------------------------------------------------------
// Balanced ALM family

namespace detail {

// Shared body of the one-block and p-block balanced steps; the one-block
// method is exactly the p = 1 case.
template <LinearlyConstrained Prob>
PrimalDualPoint balanced_predictor(const Prob& prob, std::span<const double> r_list,
                                   const MultiplierSystem& sys, const PrimalDualPoint& w) {
  check_point(prob, w);
  require_dims(sys.dim() == prob.m(), "multiplier system does not match problem");
  PrimalDualPoint next;
  next.x.resize(prob.n());
  Vector s = scaled(prob.b(), -1.0);
  const auto blocks = blocks_of(prob);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    const double r = r_list[b];
    auto xi = slice(w.x, blk);
    Vector q = multiply_transposed(*blk.A, w.lambda);
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = xi[j] + q[j] / r;
    Vector xn = prox_constrained(*blk.theta, *blk.set, r, q);
    Vector extrapolated(xn.size());
    for (std::size_t j = 0; j < xn.size(); ++j) extrapolated[j] = 2.0 * xn[j] - xi[j];
    axpy(1.0, multiply(*blk.A, extrapolated), s);
    std::copy(xn.begin(), xn.end(), next.x.begin() + static_cast<std::ptrdiff_t>(blk.offset));
  }
  next.lambda = solve_multiplier(sys, prob.sense(), w.lambda, s);
  return next;
}

}  // namespace detail

/// One balanced ALM iteration (unrelaxed). `sys` must come from build_h0(A, r, δ).
inline PrimalDualPoint balanced_alm_step(const Problem& prob, const BalancedAlmConfig& cfg,
                                         const MultiplierSystem& sys,
                                         const PrimalDualPoint& w) {
  cfg.validate();
  if (cfg.alpha != 1.0)
    detail::fail(ErrorKind::kConfigInvalid, "balanced_alm_step is the alpha = 1 method");
  const double r[] = {cfg.r};
  return detail::balanced_predictor(prob, r, sys, w);
}

struct StepResult {
  PrimalDualPoint next;
  /// w̃ᵏ for relaxed steps; absent when the step is its own predictor.
  std::optional<PrimalDualPoint> predictor;
};

/// Relaxed balanced ALM: predictor w̃ᵏ from the plain step, then
/// wᵏ⁺¹ = wᵏ − α(wᵏ − w̃ᵏ). With α = 1 the predictor is returned as is.
inline StepResult generalized_step(const Problem& prob, const BalancedAlmConfig& cfg,
                                   const MultiplierSystem& sys, const PrimalDualPoint& w) {
  cfg.validate();
  const double r[] = {cfg.r};
  PrimalDualPoint tilde = detail::balanced_predictor(prob, r, sys, w);
  if (cfg.alpha == 1.0) return {tilde, std::nullopt};
  PrimalDualPoint next = w;
  for (std::size_t i = 0; i < next.x.size(); ++i)
    next.x[i] = w.x[i] - cfg.alpha * (w.x[i] - tilde.x[i]);
  for (std::size_t i = 0; i < next.lambda.size(); ++i)
    next.lambda[i] = w.lambda[i] - cfg.alpha * (w.lambda[i] - tilde.lambda[i]);
  return {std::move(next), std::move(tilde)};
}

/// Multi-block balanced step: every block is a prox step from wᵏ (Jacobi
/// order); `sys` must come from build_hp. A plain Problem is the p = 1 case.
template <LinearlyConstrained Prob>
PrimalDualPoint split_balanced_step(const Prob& prob, const SplitConfig& cfg,
                                    const MultiplierSystem& sys, const PrimalDualPoint& w) {
  cfg.validate(detail::blocks_of(prob).size());
  return detail::balanced_predictor(prob, cfg.r_list, sys, w);
}

template <LinearlyConstrained Prob>
MultiplierSystem build_split_system(const Prob& prob, const SplitConfig& cfg) {
  const auto blocks = detail::blocks_of(prob);
  cfg.validate(blocks.size());
  std::vector<ScaledBlock> sb;
  for (std::size_t i = 0; i < blocks.size(); ++i) sb.push_back({*blocks[i].A, cfg.r_list[i]});
  return build_hp(sb, cfg.delta);
}

/// Factored pieces of the two-block alternative splitting: H₂ and the
/// x₁-subproblem matrix rA₁ᵀA₁ + δI + P₁.
struct AltSplitSystem {
  MultiplierSystem h2;
  enum class X1Mode { kLinearSolve, kProx } x1_mode = X1Mode::kLinearSolve;
  DenseMatrix x1_metric;  // rA₁ᵀA₁ + δI
  SpdFactor x1_factor;    // of x1_metric + P₁
};

inline AltSplitSystem build_alt_split_system(const SeparableProblem& prob,
                                             const AltSplitConfig& cfg) {
  cfg.validate();
  if (prob.p() != 2)
    detail::fail(ErrorKind::kConfigInvalid, "alternative splitting needs exactly 2 blocks");
  const Block& b1 = prob.block(0);
  AltSplitSystem sys;
  sys.h2 = build_h2(prob.block(1).A, cfg.r, cfg.s, cfg.delta);
  if (b1.A.is_zero()) {
    // The ‖A₁(x₁ − x₁ᵏ)‖² term vanishes: a prox step with parameter δ.
    sys.x1_mode = AltSplitSystem::X1Mode::kProx;
    return sys;
  }
  if (!b1.set.is_whole_space() || !detail::quadratic_family(b1.theta))
    detail::fail(ErrorKind::kUnsupportedCombination,
                 "alternative splitting solves the x1 step in closed form only for a "
                 "zero/linear/quadratic objective over the whole space");
  DenseMatrix m = gram_cols(b1.A);
  m *= cfg.r;
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += cfg.delta;
  sys.x1_metric = m;
  if (const auto* q = b1.theta.as<QuadraticObjective>()) m += q->P();
  sys.x1_factor = cholesky_factor(m);
  return sys;
}

/// Alternative two-block splitting. x₁ keeps the ‖A₁(x₁ − x₁ᵏ)‖² term, x₂ is a
/// prox step with parameter s, and H₂ carries only A₂. Both x-blocks read wᵏ.
inline PrimalDualPoint alt_split_step(const SeparableProblem& prob, const AltSplitConfig& cfg,
                                      const AltSplitSystem& sys, const PrimalDualPoint& w) {
  cfg.validate();
  detail::check_point(prob, w);
  if (prob.p() != 2)
    detail::fail(ErrorKind::kConfigInvalid, "alternative splitting needs exactly 2 blocks");
  const Block& b1 = prob.block(0);
  const Block& b2 = prob.block(1);
  auto x1 = prob.block_of(w.x, 0);
  auto x2 = prob.block_of(w.x, 1);

  Vector x1n;
  if (sys.x1_mode == AltSplitSystem::X1Mode::kProx) {
    x1n = prox_constrained(b1.theta, b1.set, cfg.delta, x1);
  } else {
    // (rA₁ᵀA₁ + δI + P₁) x₁ = (rA₁ᵀA₁ + δI) x₁ᵏ + A₁ᵀλᵏ − c₁
    Vector rhs = add(multiply(sys.x1_metric, x1), multiply_transposed(b1.A, w.lambda));
    if (const auto* q = b1.theta.as<QuadraticObjective>()) axpy(-1.0, q->c(), rhs);
    else if (const auto* l = b1.theta.as<LinearObjective>()) axpy(-1.0, l->c, rhs);
    x1n = solve_spd(sys.x1_factor, rhs);
  }

  Vector q2 = multiply_transposed(b2.A, w.lambda);
  for (std::size_t j = 0; j < q2.size(); ++j) q2[j] = x2[j] + q2[j] / cfg.s;
  Vector x2n = prox_constrained(b2.theta, b2.set, cfg.s, q2);

  Vector s = scaled(prob.b(), -1.0);
  Vector e1(x1n.size()), e2(x2n.size());
  for (std::size_t j = 0; j < e1.size(); ++j) e1[j] = 2.0 * x1n[j] - x1[j];
  for (std::size_t j = 0; j < e2.size(); ++j) e2[j] = 2.0 * x2n[j] - x2[j];
  axpy(1.0, multiply(b1.A, e1), s);
  axpy(1.0, multiply(b2.A, e2), s);

  PrimalDualPoint next;
  next.x = std::move(x1n);
  next.x.insert(next.x.end(), x2n.begin(), x2n.end());
  next.lambda = solve_multiplier(sys.h2, prob.sense(), w.lambda, s);
  return next;
}

// ---------------------------------------------------------------------------
// Baselines

namespace detail {

inline double norm_sq_or_zero(const DenseMatrix& a) {
  return a.is_zero() ? 0.0 : spectral_norm_sq(a);
}

// min f(x) + θ(x) over X by FISTA with gradient-based restart.
template <class Grad>
Vector accelerated_prox_gradient(const ObjectiveSpec& theta, const SetSpec& set, Grad grad,
                                 double lipschitz, std::span<const double> start,
                                 const InnerSolverOptions& opts) {
  Vector x = prox_constrained(theta, set, lipschitz, start);
  Vector y = x;
  double t = 1.0;
  for (int it = 0; it < opts.max_iters; ++it) {
    Vector g = grad(y);
    Vector q(y.size());
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = y[j] - g[j] / lipschitz;
    Vector xn = prox_constrained(theta, set, lipschitz, q);
    // Gradient-mapping norm, in the units of the outer dual residual.
    const double gap = lipschitz * norm2(sub(xn, y));
    if (gap <= opts.tol * (1.0 + norm2(xn))) return xn;
    // Restart momentum when the step points against the last move.
    if (dot(sub(y, xn), sub(xn, x)) > 0.0) t = 1.0;
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / tn;
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = xn[j] + beta * (xn[j] - x[j]);
    x = std::move(xn);
    t = tn;
  }
  fail(ErrorKind::kInnerNoConvergence,
       "accelerated proximal gradient did not reach " + std::to_string(opts.tol) + " in " +
           std::to_string(opts.max_iters) + " iterations");
}

// Factor of P + rAᵀA for the closed-form augmented-Lagrangian subproblem, when
// θ is zero/linear/quadratic, X is the whole space and the matrix is PD.
inline std::shared_ptr<const SpdFactor> alm_closed_form_factor(const ObjectiveSpec& theta,
                                                               const SetSpec& set,
                                                               const DenseMatrix& a, double r,
                                                               Sense sense) {
  if (sense != Sense::kEquality || !set.is_whole_space() || !quadratic_family(theta))
    return nullptr;
  DenseMatrix m = gram_cols(a);
  m *= r;
  if (const auto* q = theta.as<QuadraticObjective>()) m += q->P();
  try {
    return std::make_shared<const SpdFactor>(cholesky_factor(m));
  } catch (const Error&) {
    return nullptr;
  }
}

// argmin_{x∈X} θ(x) + (1/2r)‖P_Λ(λ − r(Ax − b))‖² (the augmented Lagrangian
// up to a constant). For equality rows: θ(x) − λᵀ(Ax − b) + (r/2)‖Ax − b‖².
inline Vector alm_subproblem(const ObjectiveSpec& theta, const SetSpec& set,
                             const DenseMatrix& a, std::span<const double> b,
                             std::span<const double> lambda, double r, Sense sense,
                             double a_norm_sq, const SpdFactor* closed_form,
                             std::span<const double> warm, const InnerSolverOptions& inner) {
  if (closed_form != nullptr) {
    // (P + rAᵀA) x = Aᵀ(λ + r b) − c
    Vector t(lambda.begin(), lambda.end());
    axpy(r, b, t);
    Vector rhs = multiply_transposed(a, t);
    if (const auto* q = theta.as<QuadraticObjective>()) axpy(-1.0, q->c(), rhs);
    else if (const auto* l = theta.as<LinearObjective>()) axpy(-1.0, l->c, rhs);
    return solve_spd(*closed_form, rhs);
  }
  const SetSpec lambda_set = multiplier_set(sense);
  auto grad = [&](std::span<const double> x) {
    Vector u = multiply(a, x);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = lambda[i] - r * (u[i] - b[i]);
    u = project(lambda_set, u);
    Vector g = multiply_transposed(a, u);
    for (double& v : g) v = -v;
    return g;
  };
  const double lipschitz = std::max(r * a_norm_sq, 1e-12);
  return accelerated_prox_gradient(theta, set, grad, lipschitz, warm, inner);
}

// P_Λ(λ − t·u)
inline Vector multiplier_ascent(std::span<const double> lambda, double t,
                                std::span<const double> u, Sense sense) {
  Vector out(lambda.begin(), lambda.end());
  axpy(-t, u, out);
  return project(multiplier_set(sense), out);
}

}  // namespace detail

/// A validated baseline configuration: ‖AᵀA‖ (or ‖A₂ᵀA₂‖) is computed once,
/// the step parameter is checked against its convergence bound, and closed
/// form subproblem factors are cached. Only `resolve_baseline` builds one.
class ResolvedBaseline {
 public:
  const BaselineConfig& config() const noexcept { return cfg_; }
  BaselineMethod method() const noexcept { return cfg_.method; }
  double r() const noexcept { return cfg_.r; }
  /// σ (LALM) or s (primal-dual, linearized ADMM); 0 for the others.
  double step_parameter() const noexcept { return param_; }
  /// ‖AᵀA‖, or ‖A₂ᵀA₂‖ for the two-block methods.
  double operator_norm_sq() const noexcept { return norm_sq_; }

 private:
  friend ResolvedBaseline resolve_baseline(const Problem&, const BaselineConfig&);
  friend ResolvedBaseline resolve_baseline(const SeparableProblem&, const BaselineConfig&);
  friend PrimalDualPoint classic_alm_step(const Problem&, const ResolvedBaseline&,
                                          const PrimalDualPoint&);
  friend PrimalDualPoint admm_step(const SeparableProblem&, const ResolvedBaseline&,
                                   const PrimalDualPoint&);
  friend PrimalDualPoint ladmm_step(const SeparableProblem&, const ResolvedBaseline&,
                                    const PrimalDualPoint&);

  BaselineConfig cfg_;
  double param_ = 0.0;
  double norm_sq_ = 0.0;
  std::vector<double> block_norm_sq_;
  std::vector<std::shared_ptr<const SpdFactor>> closed_form_;
};

namespace detail {

inline double checked_parameter(double given, double bound, double factor, bool lower_open,
                                const char* what) {
  const double threshold = factor * bound;
  if (given == 0.0) return threshold > 0.0 ? 1.01 * threshold : 1.0;
  require_positive(given, what);
  if (lower_open && !(given > threshold))
    fail(ErrorKind::kConfigInvalid, std::string(what) + " = " + std::to_string(given) +
                                        " must exceed " + std::to_string(threshold));
  return given;
}

}  // namespace detail

inline ResolvedBaseline resolve_baseline(const Problem& prob, const BaselineConfig& cfg) {
  detail::require_positive(cfg.r, "r");
  ResolvedBaseline rb;
  rb.cfg_ = cfg;
  const double factor = cfg.sharp_bounds ? 0.75 : 1.0;
  switch (cfg.method) {
    case BaselineMethod::kClassicAlm:
      rb.norm_sq_ = detail::norm_sq_or_zero(prob.A());
      rb.closed_form_.push_back(detail::alm_closed_form_factor(prob.theta(), prob.set(),
                                                               prob.A(), cfg.r, prob.sense()));
      break;
    case BaselineMethod::kLalm:
      rb.norm_sq_ = detail::norm_sq_or_zero(prob.A());
      rb.param_ = detail::checked_parameter(cfg.sigma_or_s, cfg.r * rb.norm_sq_, factor, true,
                                            "sigma");
      break;
    case BaselineMethod::kPrimalDual:
      // rs > ‖AᵀA‖  ⇔  s > ‖AᵀA‖ / r
      rb.norm_sq_ = detail::norm_sq_or_zero(prob.A());
      rb.param_ =
          detail::checked_parameter(cfg.sigma_or_s, rb.norm_sq_ / cfg.r, 1.0, true, "s");
      break;
    case BaselineMethod::kAdmm:
    case BaselineMethod::kLinearizedAdmm:
      detail::fail(ErrorKind::kConfigInvalid,
                   std::string(to_string(cfg.method)) + " needs a two-block problem");
  }
  return rb;
}

inline ResolvedBaseline resolve_baseline(const SeparableProblem& prob,
                                         const BaselineConfig& cfg) {
  if (cfg.method != BaselineMethod::kAdmm && cfg.method != BaselineMethod::kLinearizedAdmm)
    return resolve_baseline(merged(prob), cfg);
  detail::require_positive(cfg.r, "r");
  if (prob.p() != 2)
    detail::fail(ErrorKind::kConfigInvalid, "ADMM variants need exactly 2 blocks");
  if (prob.sense() != Sense::kEquality)
    detail::fail(ErrorKind::kConfigInvalid, "ADMM variants need equality constraints");
  ResolvedBaseline rb;
  rb.cfg_ = cfg;
  for (const auto& blk : prob.blocks()) {
    rb.block_norm_sq_.push_back(detail::norm_sq_or_zero(blk.A));
    rb.closed_form_.push_back(
        detail::alm_closed_form_factor(blk.theta, blk.set, blk.A, cfg.r, prob.sense()));
  }
  rb.norm_sq_ = rb.block_norm_sq_[1];
  if (cfg.method == BaselineMethod::kLinearizedAdmm) {
    const double factor = cfg.sharp_bounds ? 0.75 : 1.0;
    rb.param_ =
        detail::checked_parameter(cfg.sigma_or_s, cfg.r * rb.norm_sq_, factor, true, "s");
  }
  return rb;
}

namespace detail {

inline void require_method(const ResolvedBaseline& rb, BaselineMethod m) {
  if (rb.method() != m)
    fail(ErrorKind::kConfigInvalid, "configuration is for " +
                                        std::string(to_string(rb.method())) + ", not " +
                                        std::string(to_string(m)));
}

}  // namespace detail

/// Classic ALM: x minimizes the augmented Lagrangian (closed form when
/// possible, otherwise accelerated proximal gradient), then
/// λ = P_Λ(λ − r(Ax − b)).
inline PrimalDualPoint classic_alm_step(const Problem& prob, const ResolvedBaseline& rb,
                                        const PrimalDualPoint& w) {
  detail::require_method(rb, BaselineMethod::kClassicAlm);
  detail::check_point(prob, w);
  const SpdFactor* closed = rb.closed_form_.empty() ? nullptr : rb.closed_form_[0].get();
  PrimalDualPoint next;
  next.x = detail::alm_subproblem(prob.theta(), prob.set(), prob.A(), prob.b(), w.lambda,
                                  rb.r(), prob.sense(), rb.norm_sq_, closed, w.x,
                                  rb.config().inner);
  next.lambda =
      detail::multiplier_ascent(w.lambda, rb.r(), constraint_residual(prob, next.x), prob.sense());
  return next;
}

/// Linearized ALM: the quadratic penalty is linearized at xᵏ with proximal
/// weight σ > r‖AᵀA‖.
inline PrimalDualPoint lalm_step(const Problem& prob, const ResolvedBaseline& rb,
                                 const PrimalDualPoint& w) {
  detail::require_method(rb, BaselineMethod::kLalm);
  detail::check_point(prob, w);
  const double sigma = rb.step_parameter();
  Vector u = detail::multiplier_ascent(w.lambda, rb.r(), constraint_residual(prob, w.x),
                                       prob.sense());
  Vector q = multiply_transposed(prob.A(), u);
  for (std::size_t j = 0; j < q.size(); ++j) q[j] = w.x[j] + q[j] / sigma;
  PrimalDualPoint next;
  next.x = prox_constrained(prob.theta(), prob.set(), sigma, q);
  next.lambda =
      detail::multiplier_ascent(w.lambda, rb.r(), constraint_residual(prob, next.x), prob.sense());
  return next;
}

/// Primal-dual (Chambolle–Pock type) step with rs > ‖AᵀA‖. The x-update is
/// the balanced one; the multiplier metric is s·I instead of H₀.
inline PrimalDualPoint primal_dual_step(const Problem& prob, const ResolvedBaseline& rb,
                                        const PrimalDualPoint& w) {
  detail::require_method(rb, BaselineMethod::kPrimalDual);
  detail::check_point(prob, w);
  const double r = rb.r();
  const double s = rb.step_parameter();
  Vector q = multiply_transposed(prob.A(), w.lambda);
  for (std::size_t j = 0; j < q.size(); ++j) q[j] = w.x[j] + q[j] / r;
  PrimalDualPoint next;
  next.x = prox_constrained(prob.theta(), prob.set(), r, q);
  Vector extrapolated(next.x.size());
  for (std::size_t j = 0; j < extrapolated.size(); ++j)
    extrapolated[j] = 2.0 * next.x[j] - w.x[j];
  next.lambda = detail::multiplier_ascent(w.lambda, 1.0 / s,
                                          constraint_residual(prob, extrapolated), prob.sense());
  return next;
}

namespace detail {

// x₁ of (linearized) ADMM: argmin θ₁(x₁) − λᵀA₁x₁ + (r/2)‖A₁x₁ + A₂x₂ − b‖².
inline Vector admm_block_update(const SeparableProblem& prob, std::size_t i,
                                std::span<const double> other_contribution,
                                std::span<const double> lambda, double r, double norm_sq,
                                const SpdFactor* closed, std::span<const double> warm,
                                const InnerSolverOptions& inner) {
  const Block& blk = prob.block(i);
  Vector shifted_b = sub(prob.b(), other_contribution);
  return alm_subproblem(blk.theta, blk.set, blk.A, shifted_b, lambda, r, Sense::kEquality,
                        norm_sq, closed, warm, inner);
}

}  // namespace detail

/// Two-block ADMM, Gauss–Seidel order x₁ → x₂ → λ.
inline PrimalDualPoint admm_step(const SeparableProblem& prob, const ResolvedBaseline& rb,
                                 const PrimalDualPoint& w) {
  detail::require_method(rb, BaselineMethod::kAdmm);
  detail::check_point(prob, w);
  const Block& b1 = prob.block(0);
  const Block& b2 = prob.block(1);
  Vector x1 = detail::admm_block_update(prob, 0, multiply(b2.A, prob.block_of(w.x, 1)),
                                        w.lambda, rb.r(), rb.block_norm_sq_[0],
                                        rb.closed_form_[0].get(), prob.block_of(w.x, 0),
                                        rb.config().inner);
  Vector x2 = detail::admm_block_update(prob, 1, multiply(b1.A, x1), w.lambda, rb.r(),
                                        rb.block_norm_sq_[1], rb.closed_form_[1].get(),
                                        prob.block_of(w.x, 1), rb.config().inner);
  PrimalDualPoint next;
  next.x = std::move(x1);
  next.x.insert(next.x.end(), x2.begin(), x2.end());
  next.lambda = detail::multiplier_ascent(w.lambda, rb.r(), constraint_residual(prob, next.x),
                                          Sense::kEquality);
  return next;
}

/// ADMM with the x₂ penalty linearized via G = sI − rA₂ᵀA₂, s > r‖A₂ᵀA₂‖.
inline PrimalDualPoint ladmm_step(const SeparableProblem& prob, const ResolvedBaseline& rb,
                                  const PrimalDualPoint& w) {
  detail::require_method(rb, BaselineMethod::kLinearizedAdmm);
  detail::check_point(prob, w);
  const Block& b1 = prob.block(0);
  const Block& b2 = prob.block(1);
  auto x2k = prob.block_of(w.x, 1);
  Vector a2x2 = multiply(b2.A, x2k);
  Vector x1 = detail::admm_block_update(prob, 0, a2x2, w.lambda, rb.r(), rb.block_norm_sq_[0],
                                        rb.closed_form_[0].get(), prob.block_of(w.x, 0),
                                        rb.config().inner);
  // q₂ = x₂ᵏ + (1/s)A₂ᵀ(λᵏ − r(A₁x₁ᵏ⁺¹ + A₂x₂ᵏ − b))
  Vector res = add(multiply(b1.A, x1), a2x2);
  Vector u(w.lambda.begin(), w.lambda.end());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] -= rb.r() * (res[i] - prob.b()[i]);
  const double s = rb.step_parameter();
  Vector q = multiply_transposed(b2.A, u);
  for (std::size_t j = 0; j < q.size(); ++j) q[j] = x2k[j] + q[j] / s;
  Vector x2 = prox_constrained(b2.theta, b2.set, s, q);
  PrimalDualPoint next;
  next.x = std::move(x1);
  next.x.insert(next.x.end(), x2.begin(), x2.end());
  next.lambda = detail::multiplier_ascent(w.lambda, rb.r(), constraint_residual(prob, next.x),
                                          Sense::kEquality);
  return next;
}

// ---------------------------------------------------------------------------
// Type-erased method and the driver loop

/// A configured method bound to one problem: factors are built once here and
/// reused by every step.
struct Method {
  std::string name;
  /// Metric in which step lengths ‖wᵏ − wᵏ⁺¹‖_H are reported. For the
  /// balanced family this is the contraction metric of the method.
  DenseMatrix metric;
  double alpha = 1.0;
  std::function<StepResult(const PrimalDualPoint&)> step;
};

namespace detail {

template <class F>
std::function<StepResult(const PrimalDualPoint&)> plain(F f) {
  return [f = std::move(f)](const PrimalDualPoint& w) { return StepResult{f(w), std::nullopt}; };
}

inline DenseMatrix primal_dual_metric(const DenseMatrix& a, double r, double s) {
  const std::size_t n = a.cols(), m = a.rows();
  DenseMatrix h(n + m, n + m);
  for (std::size_t i = 0; i < n; ++i) h(i, i) = r;
  for (std::size_t i = 0; i < m; ++i) {
    h(n + i, n + i) = s;
    for (std::size_t j = 0; j < n; ++j) {
      h(n + i, j) = a(i, j);
      h(j, n + i) = a(i, j);
    }
  }
  return h;
}

inline Method make_single_block_method(std::shared_ptr<const Problem> prob,
                                       const MethodConfig& cfg) {
  Method out;
  out.name = method_name(cfg);
  const std::size_t dim = prob->n() + prob->m();
  if (const auto* c = std::get_if<BalancedAlmConfig>(&cfg)) {
    c->validate();
    auto sys = std::make_shared<const MultiplierSystem>(build_h0(prob->A(), c->r, c->delta));
    out.metric = balanced_metric(prob->A(), c->r, c->delta);
    out.alpha = c->alpha;
    out.step = [prob, c = *c, sys](const PrimalDualPoint& w) {
      return generalized_step(*prob, c, *sys, w);
    };
    return out;
  }
  if (const auto* c = std::get_if<SplitConfig>(&cfg)) {
    auto sys = std::make_shared<const MultiplierSystem>(build_split_system(*prob, *c));
    out.metric = split_metric(*prob, c->r_list, c->delta);
    out.step = plain([prob, c = *c, sys](const PrimalDualPoint& w) {
      return split_balanced_step(*prob, c, *sys, w);
    });
    return out;
  }
  if (std::holds_alternative<AltSplitConfig>(cfg))
    fail(ErrorKind::kConfigInvalid, "alternative splitting needs a two-block problem");
  const auto& bc = std::get<BaselineConfig>(cfg);
  auto rb = std::make_shared<const ResolvedBaseline>(resolve_baseline(*prob, bc));
  out.metric = DenseMatrix::identity(dim);
  switch (bc.method) {
    case BaselineMethod::kClassicAlm:
      out.step = plain([prob, rb](const PrimalDualPoint& w) {
        return classic_alm_step(*prob, *rb, w);
      });
      break;
    case BaselineMethod::kLalm:
      out.step = plain([prob, rb](const PrimalDualPoint& w) { return lalm_step(*prob, *rb, w); });
      break;
    case BaselineMethod::kPrimalDual:
      out.metric = primal_dual_metric(prob->A(), rb->r(), rb->step_parameter());
      out.step = plain([prob, rb](const PrimalDualPoint& w) {
        return primal_dual_step(*prob, *rb, w);
      });
      break;
    default:
      fail(ErrorKind::kConfigInvalid, "ADMM variants need a two-block problem");
  }
  return out;
}

}  // namespace detail

inline Method make_method(const Problem& prob, const MethodConfig& cfg) {
  return detail::make_single_block_method(std::make_shared<const Problem>(prob), cfg);
}

/// Methods on a separable problem. One-block methods run on the merged
/// program, whose x is the same stacked vector.
inline Method make_method(const SeparableProblem& prob, const MethodConfig& cfg) {
  auto sp = std::make_shared<const SeparableProblem>(prob);
  const std::size_t dim = prob.n() + prob.m();
  if (const auto* c = std::get_if<SplitConfig>(&cfg)) {
    Method out;
    out.name = method_name(cfg);
    auto sys = std::make_shared<const MultiplierSystem>(build_split_system(*sp, *c));
    out.metric = split_metric(*sp, c->r_list, c->delta);
    out.step = detail::plain([sp, c = *c, sys](const PrimalDualPoint& w) {
      return split_balanced_step(*sp, c, *sys, w);
    });
    return out;
  }
  if (const auto* c = std::get_if<AltSplitConfig>(&cfg)) {
    Method out;
    out.name = method_name(cfg);
    auto sys = std::make_shared<const AltSplitSystem>(build_alt_split_system(*sp, *c));
    out.metric = alt_split_metric(sp->block(0).A, sp->block(1).A, c->r, c->s, c->delta);
    out.step = detail::plain([sp, c = *c, sys](const PrimalDualPoint& w) {
      return alt_split_step(*sp, c, *sys, w);
    });
    return out;
  }
  if (const auto* c = std::get_if<BaselineConfig>(&cfg);
      c && (c->method == BaselineMethod::kAdmm || c->method == BaselineMethod::kLinearizedAdmm)) {
    Method out;
    out.name = method_name(cfg);
    auto rb = std::make_shared<const ResolvedBaseline>(resolve_baseline(*sp, *c));
    out.metric = DenseMatrix::identity(dim);
    if (c->method == BaselineMethod::kAdmm)
      out.step = detail::plain([sp, rb](const PrimalDualPoint& w) { return admm_step(*sp, *rb, w); });
    else
      out.step = detail::plain([sp, rb](const PrimalDualPoint& w) { return ladmm_step(*sp, *rb, w); });
    return out;
  }
  return detail::make_single_block_method(std::make_shared<const Problem>(merged(*sp)), cfg);
}

/// Zero point projected onto X and Λ.
template <LinearlyConstrained Prob>
PrimalDualPoint default_start(const Prob& prob) {
  PrimalDualPoint w{Vector(prob.n(), 0.0), Vector(prob.m(), 0.0)};
  for (const auto& blk : detail::blocks_of(prob)) {
    Vector xi = project(*blk.set, detail::slice(w.x, blk));
    std::copy(xi.begin(), xi.end(), w.x.begin() + static_cast<std::ptrdiff_t>(blk.offset));
  }
  return w;
}

/// Per-iteration record of a run. iterates[0] is w⁰; predictors and
/// successive_h_steps have one entry per step taken (one fewer than iterates).
struct RunHistory {
  std::string method;
  DenseMatrix metric;
  double alpha = 1.0;
  std::vector<PrimalDualPoint> iterates;
  std::vector<std::optional<PrimalDualPoint>> predictors;
  std::vector<KktResidual> residuals;
  std::vector<double> h_distances;  // ‖wᵏ − w*‖_H, when a reference is given
  std::vector<double> successive_h_steps;  // ‖wᵏ − wᵏ⁺¹‖_H
  bool converged = false;

  std::size_t steps() const noexcept { return iterates.empty() ? 0 : iterates.size() - 1; }
  const PrimalDualPoint& last() const { return iterates.back(); }
};

inline double h_norm(const DenseMatrix& h, std::span<const double> v) {
  return std::sqrt(std::max(0.0, h_quadratic(h, v)));
}

/// Iterate `method` from w0 until every KKT component is within tolerance or
/// the iteration cap is reached. The residual is checked at w0 first.
template <LinearlyConstrained Prob>
RunHistory run_method(const Prob& prob, const Method& method, const StopRule& stop,
                      const PrimalDualPoint& w0,
                      const std::optional<PrimalDualPoint>& reference = std::nullopt) {
  stop.validate();
  detail::check_point(prob, w0);
  if (prob.sense() == Sense::kInequality)
    for (double v : w0.lambda)
      if (v < 0.0) detail::fail(ErrorKind::kConfigInvalid, "starting multiplier must be >= 0");
  if (reference) detail::check_point(prob, *reference);

  RunHistory h;
  h.method = method.name;
  h.metric = method.metric;
  h.alpha = method.alpha;
  auto record = [&](PrimalDualPoint w) {
    h.residuals.push_back(kkt_residual(prob, w));
    if (reference) h.h_distances.push_back(h_norm(h.metric, difference(w, *reference)));
    h.iterates.push_back(std::move(w));
  };
  record(w0);
  for (int k = 0;; ++k) {
    if (h.residuals.back().within(stop.kkt_tol)) {
      h.converged = true;
      break;
    }
    if (k >= stop.max_iters) break;
    StepResult sr = method.step(h.iterates.back());
    h.successive_h_steps.push_back(h_norm(h.metric, difference(h.iterates.back(), sr.next)));
    h.predictors.push_back(std::move(sr.predictor));
    record(std::move(sr.next));
  }
  return h;
}

template <LinearlyConstrained Prob>
RunHistory run(const Prob& prob, const MethodConfig& cfg, const StopRule& stop,
               const std::optional<PrimalDualPoint>& w0 = std::nullopt,
               const std::optional<PrimalDualPoint>& reference = std::nullopt) {
  stop.validate();
  Method method = make_method(prob, cfg);
  return run_method(prob, method, stop, w0 ? *w0 : default_start(prob), reference);
}

}  // namespace balm
