#pragma once

// Problem containers and the optimality measures shared by all solvers.
//
//   min θ(x)  s.t.  Ax = b (or Ax ≥ b),  x ∈ X
//
// with Lagrangian L(x, λ) = θ(x) − λᵀ(Ax − b) and multiplier set Λ = ℝᵐ for
// equality rows, ℝᵐ₊ for inequality rows. The saddle-point conditions are the
// variational inequality with the affine operator F(w) = (−Aᵀλ, Ax − b).

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "balm/error.hpp"
#include "balm/linalg.hpp"
#include "balm/prox.hpp"

namespace balm {

enum class Sense { kEquality, kInequality };

inline std::string_view to_string(Sense s) {
  return s == Sense::kEquality ? "eq" : "geq";
}

/// Λ for the given constraint sense.
inline SetSpec multiplier_set(Sense s) {
  return s == Sense::kEquality ? SetSpec::whole_space() : SetSpec::nonnegative_orthant();
}

class Problem {
 public:
  Problem(ObjectiveSpec theta, SetSpec set, DenseMatrix a, Vector b, Sense sense)
      : theta_(std::move(theta)),
        set_(std::move(set)),
        a_(std::move(a)),
        b_(std::move(b)),
        sense_(sense) {
    detail::require_dims(a_.rows() == b_.size(),
                         "A has " + std::to_string(a_.rows()) + " rows, b has " +
                             std::to_string(b_.size()));
    detail::require_dims(a_.rows() > 0 && a_.cols() > 0, "empty constraint matrix");
    detail::require_dims(theta_.accepts_dim(n()), "objective dimension != A cols");
    detail::require_dims(set_.accepts_dim(n()), "set dimension != A cols");
    if (!a_.all_finite() || !all_finite(b_))
      detail::fail(ErrorKind::kConfigInvalid, "constraint data has non-finite entries");
  }

  const ObjectiveSpec& theta() const noexcept { return theta_; }
  const SetSpec& set() const noexcept { return set_; }
  const DenseMatrix& A() const noexcept { return a_; }
  const Vector& b() const noexcept { return b_; }
  Sense sense() const noexcept { return sense_; }
  std::size_t n() const noexcept { return a_.cols(); }
  std::size_t m() const noexcept { return a_.rows(); }

 private:
  ObjectiveSpec theta_;
  SetSpec set_;
  DenseMatrix a_;
  Vector b_;
  Sense sense_;
};

struct Block {
  ObjectiveSpec theta;
  SetSpec set;
  DenseMatrix A;
};

/// Σᵢ θᵢ(xᵢ) subject to Σᵢ Aᵢxᵢ = b (or ≥ b), xᵢ ∈ Xᵢ, with p ≥ 2 blocks.
class SeparableProblem {
 public:
  SeparableProblem(std::vector<Block> blocks, Vector b, Sense sense)
      : blocks_(std::move(blocks)), b_(std::move(b)), sense_(sense) {
    if (blocks_.size() < 2)
      detail::fail(ErrorKind::kInvalidDims, "a separable problem needs at least 2 blocks");
    offsets_.push_back(0);
    for (const auto& blk : blocks_) {
      detail::require_dims(blk.A.rows() == b_.size(), "block A row count != b length");
      detail::require_dims(blk.A.cols() > 0, "empty block");
      detail::require_dims(blk.theta.accepts_dim(blk.A.cols()),
                           "block objective dimension != block A cols");
      detail::require_dims(blk.set.accepts_dim(blk.A.cols()),
                           "block set dimension != block A cols");
      if (!blk.A.all_finite())
        detail::fail(ErrorKind::kConfigInvalid, "block A has non-finite entries");
      offsets_.push_back(offsets_.back() + blk.A.cols());
    }
    if (!all_finite(b_))
      detail::fail(ErrorKind::kConfigInvalid, "b has non-finite entries");
  }

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  const Block& block(std::size_t i) const { return blocks_.at(i); }
  std::size_t p() const noexcept { return blocks_.size(); }
  const Vector& b() const noexcept { return b_; }
  Sense sense() const noexcept { return sense_; }
  std::size_t m() const noexcept { return b_.size(); }
  std::size_t n() const noexcept { return offsets_.back(); }
  /// Start of block i inside the stacked x; offset(p()) == n().
  std::size_t offset(std::size_t i) const { return offsets_.at(i); }

  std::span<const double> block_of(std::span<const double> x, std::size_t i) const {
    return x.subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
  }

 private:
  std::vector<Block> blocks_;
  Vector b_;
  Sense sense_;
  std::vector<std::size_t> offsets_;
};

/// w = (x, λ); for separable problems x is the concatenation of the blocks.
struct PrimalDualPoint {
  Vector x;
  Vector lambda;

  Vector stacked() const {
    Vector w(x);
    w.insert(w.end(), lambda.begin(), lambda.end());
    return w;
  }

  static PrimalDualPoint from_stacked(std::span<const double> w, std::size_t n) {
    detail::require_dims(w.size() >= n, "stacked point shorter than n");
    return {Vector(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n)),
            Vector(w.begin() + static_cast<std::ptrdiff_t>(n), w.end())};
  }

  friend bool operator==(const PrimalDualPoint&, const PrimalDualPoint&) = default;
};

inline Vector difference(const PrimalDualPoint& a, const PrimalDualPoint& b) {
  return sub(a.stacked(), b.stacked());
}

struct KktResidual {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;

  double max() const { return std::max({primal, dual, complementarity}); }
  bool within(double tol) const {
    return primal <= tol && dual <= tol && complementarity <= tol;
  }
};

// ---------------------------------------------------------------------------
// Shared views. A plain Problem is treated as a single block.

namespace detail {

struct BlockRef {
  const ObjectiveSpec* theta;
  const SetSpec* set;
  const DenseMatrix* A;
  std::size_t offset;
};

inline std::vector<BlockRef> blocks_of(const Problem& p) {
  return {{&p.theta(), &p.set(), &p.A(), 0}};
}

inline std::vector<BlockRef> blocks_of(const SeparableProblem& p) {
  std::vector<BlockRef> out;
  for (std::size_t i = 0; i < p.p(); ++i)
    out.push_back({&p.block(i).theta, &p.block(i).set, &p.block(i).A, p.offset(i)});
  return out;
}

inline std::span<const double> slice(std::span<const double> x, const BlockRef& b) {
  return x.subspan(b.offset, b.A->cols());
}

template <class Prob>
void check_point(const Prob& prob, const PrimalDualPoint& w) {
  require_dims(w.x.size() == prob.n() && w.lambda.size() == prob.m(),
               "point (" + std::to_string(w.x.size()) + ", " +
                   std::to_string(w.lambda.size()) + ") does not match problem (" +
                   std::to_string(prob.n()) + ", " + std::to_string(prob.m()) + ")");
}

}  // namespace detail

template <class Prob>
concept LinearlyConstrained =
    std::same_as<Prob, Problem> || std::same_as<Prob, SeparableProblem>;

/// Σᵢ Aᵢxᵢ − b.
template <LinearlyConstrained Prob>
Vector constraint_residual(const Prob& prob, std::span<const double> x) {
  detail::require_dims(x.size() == prob.n(), "x length != problem n");
  Vector r = scaled(prob.b(), -1.0);
  for (const auto& blk : detail::blocks_of(prob))
    axpy(1.0, multiply(*blk.A, detail::slice(x, blk)), r);
  return r;
}

/// θ(x) (summed over blocks).
template <LinearlyConstrained Prob>
double objective_value(const Prob& prob, std::span<const double> x) {
  detail::require_dims(x.size() == prob.n(), "x length != problem n");
  double s = 0.0;
  for (const auto& blk : detail::blocks_of(prob))
    s += blk.theta->value(detail::slice(x, blk));
  return s;
}

/// w ∈ Ω = X × Λ.
template <LinearlyConstrained Prob>
bool in_omega(const Prob& prob, const PrimalDualPoint& w, double tol = 0.0) {
  detail::check_point(prob, w);
  for (const auto& blk : detail::blocks_of(prob))
    if (!blk.set->contains(detail::slice(w.x, blk), tol)) return false;
  return multiplier_set(prob.sense()).contains(w.lambda, tol);
}

/// F(w) = (−A₁ᵀλ, …, −A_pᵀλ, Σᵢ Aᵢxᵢ − b).
template <LinearlyConstrained Prob>
Vector vi_operator(const Prob& prob, const PrimalDualPoint& w) {
  detail::check_point(prob, w);
  Vector f;
  f.reserve(prob.n() + prob.m());
  for (const auto& blk : detail::blocks_of(prob)) {
    Vector g = multiply_transposed(*blk.A, w.lambda);
    for (double v : g) f.push_back(-v);
  }
  Vector r = constraint_residual(prob, w.x);
  f.insert(f.end(), r.begin(), r.end());
  return f;
}

/// θ(x) − λᵀ(Ax − b).
template <LinearlyConstrained Prob>
double lagrangian(const Prob& prob, const PrimalDualPoint& w) {
  detail::check_point(prob, w);
  return objective_value(prob, w.x) - dot(w.lambda, constraint_residual(prob, w.x));
}

/// Primal infeasibility, natural-map stationarity residual
/// ‖x − P_X-prox_θ¹(x + Aᵀλ)‖ and |λᵀ(Ax − b)| (inequality rows only).
template <LinearlyConstrained Prob>
KktResidual kkt_residual(const Prob& prob, const PrimalDualPoint& w) {
  detail::check_point(prob, w);
  KktResidual out;
  Vector r = constraint_residual(prob, w.x);
  if (prob.sense() == Sense::kEquality) {
    out.primal = norm2(r);
  } else {
    Vector viol(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) viol[i] = std::min(r[i], 0.0);
    out.primal = norm2(viol);
    out.complementarity = std::abs(dot(w.lambda, r));
  }
  double dual_sq = 0.0;
  for (const auto& blk : detail::blocks_of(prob)) {
    auto xi = detail::slice(w.x, blk);
    Vector q = add(xi, multiply_transposed(*blk.A, w.lambda));
    Vector y = prox_constrained(*blk.theta, *blk.set, 1.0, q);
    const double d = norm2(sub(xi, y));
    dual_sq += d * d;
  }
  out.dual = std::sqrt(dual_sq);
  return out;
}

// ---------------------------------------------------------------------------
// Merging blocks into a single-block problem

namespace detail {

inline bool quadratic_family(const ObjectiveSpec& t) {
  return t.as<ZeroObjective>() || t.as<LinearObjective>() || t.as<QuadraticObjective>();
}

}  // namespace detail

/// θ(x) = Σᵢ θᵢ(xᵢ) as a single objective: a block-diagonal quadratic when
/// every block is zero/linear/quadratic, a separable sum when every block is
/// separable, UnsupportedObjective otherwise.
inline ObjectiveSpec merge_objectives(const SeparableProblem& prob) {
  const std::size_t n = prob.n();
  bool all_zero = true;
  bool all_quadratic = true;
  bool all_separable = true;
  for (const auto& blk : prob.blocks()) {
    all_zero = all_zero && blk.theta.as<ZeroObjective>() != nullptr;
    all_quadratic = all_quadratic && detail::quadratic_family(blk.theta);
    all_separable = all_separable && blk.theta.is_separable();
  }
  if (all_zero) return ObjectiveSpec::zero();
  if (all_quadratic) {
    DenseMatrix p(n, n);
    Vector c(n, 0.0);
    for (std::size_t i = 0; i < prob.p(); ++i) {
      const std::size_t off = prob.offset(i);
      const auto& t = prob.block(i).theta;
      if (const auto* q = t.as<QuadraticObjective>()) {
        for (std::size_t r = 0; r < q->P().rows(); ++r) {
          c[off + r] = q->c()[r];
          for (std::size_t s = 0; s < q->P().cols(); ++s) p(off + r, off + s) = q->P()(r, s);
        }
      } else if (const auto* l = t.as<LinearObjective>()) {
        std::copy(l->c.begin(), l->c.end(), c.begin() + static_cast<std::ptrdiff_t>(off));
      }
    }
    return ObjectiveSpec::quadratic(std::move(p), std::move(c));
  }
  if (all_separable) {
    std::vector<ScalarTerm> terms;
    terms.reserve(n);
    for (const auto& blk : prob.blocks()) {
      auto t = blk.theta.scalar_terms(blk.A.cols());
      terms.insert(terms.end(), t.begin(), t.end());
    }
    return ObjectiveSpec::separable_sum(std::move(terms));
  }
  detail::fail(ErrorKind::kUnsupportedObjective,
               "blocks mix non-separable and non-quadratic objectives");
}

inline SetSpec merge_sets(const SeparableProblem& prob) {
  bool all_whole = true;
  bool all_orthant = true;
  for (const auto& blk : prob.blocks()) {
    all_whole = all_whole && blk.set.kind() == SetSpec::Kind::kWholeSpace;
    all_orthant = all_orthant && blk.set.kind() == SetSpec::Kind::kNonnegativeOrthant;
  }
  if (all_whole) return SetSpec::whole_space();
  if (all_orthant) return SetSpec::nonnegative_orthant();
  Vector lo, hi;
  for (const auto& blk : prob.blocks())
    for (std::size_t j = 0; j < blk.A.cols(); ++j) {
      lo.push_back(blk.set.lower_bound(j));
      hi.push_back(blk.set.upper_bound(j));
    }
  return SetSpec::box(std::move(lo), std::move(hi));
}

/// The same program with A = [A₁ … A_p] and x stacked block by block.
inline Problem merged(const SeparableProblem& prob) {
  DenseMatrix a(prob.m(), prob.n());
  for (std::size_t i = 0; i < prob.p(); ++i) {
    const auto& ai = prob.block(i).A;
    for (std::size_t r = 0; r < ai.rows(); ++r)
      for (std::size_t c = 0; c < ai.cols(); ++c) a(r, prob.offset(i) + c) = ai(r, c);
  }
  return Problem(merge_objectives(prob), merge_sets(prob), std::move(a), prob.b(),
                 prob.sense());
}

}  // namespace balm
