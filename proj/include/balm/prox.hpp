#pragma once

// Closed-form proximity operators for the objective building blocks, plus
// projections onto the simple sets a variable may be restricted to.
//
//   prox(θ, r, q) = argmin_y  θ(y) + (r/2)‖y − q‖²

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "balm/error.hpp"
#include "balm/linalg.hpp"

namespace balm {

/// One coordinate of a separable objective:
///   φ(y) = l1·|y| + (quad/2)·y² + lin·y,   l1 ≥ 0, quad ≥ 0.
struct ScalarTerm {
  double l1 = 0.0;
  double quad = 0.0;
  double lin = 0.0;

  double value(double y) const { return l1 * std::abs(y) + 0.5 * quad * y * y + lin * y; }

  friend bool operator==(const ScalarTerm&, const ScalarTerm&) = default;
};

struct ZeroObjective {
  friend bool operator==(const ZeroObjective&, const ZeroObjective&) = default;
};

struct L1Objective {
  double weight = 1.0;
  friend bool operator==(const L1Objective&, const L1Objective&) = default;
};

struct LinearObjective {
  Vector c;
  friend bool operator==(const LinearObjective&, const LinearObjective&) = default;
};

struct SeparableSumObjective {
  std::vector<ScalarTerm> terms;
  friend bool operator==(const SeparableSumObjective&,
                         const SeparableSumObjective&) = default;
};

/// ½ yᵀPy + cᵀy with P symmetric PSD. Factors of P + r·I are cached per r
/// and shared between copies; the cache is guarded for concurrent readers.
class QuadraticObjective {
 public:
  QuadraticObjective(DenseMatrix p, Vector c)
      : p_(std::move(p)), c_(std::move(c)), cache_(std::make_shared<Cache>()) {}

  const DenseMatrix& P() const noexcept { return p_; }
  const Vector& c() const noexcept { return c_; }

  const SpdFactor& shifted_factor(double r) const {
    std::lock_guard lock(cache_->mu);
    auto it = cache_->by_shift.find(r);
    if (it == cache_->by_shift.end()) {
      DenseMatrix m = p_;
      for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += r;
      it = cache_->by_shift.emplace(r, cholesky_factor(m)).first;
    }
    return it->second;
  }

  friend bool operator==(const QuadraticObjective& a, const QuadraticObjective& b) {
    return a.p_ == b.p_ && a.c_ == b.c_;
  }

 private:
  struct Cache {
    std::mutex mu;
    std::map<double, SpdFactor> by_shift;  // node-based: references stay valid
  };

  DenseMatrix p_;
  Vector c_;
  std::shared_ptr<Cache> cache_;
};

class ObjectiveSpec {
 public:
  using Variant = std::variant<ZeroObjective, L1Objective, QuadraticObjective,
                               LinearObjective, SeparableSumObjective>;

  ObjectiveSpec() : v_(ZeroObjective{}) {}

  static ObjectiveSpec zero() { return ObjectiveSpec(ZeroObjective{}); }

  static ObjectiveSpec l1(double weight) {
    if (!(weight >= 0.0) || !std::isfinite(weight))
      detail::fail(ErrorKind::kConfigInvalid, "l1 weight must be finite and >= 0");
    return ObjectiveSpec(L1Objective{weight});
  }

  static ObjectiveSpec quadratic(DenseMatrix p, Vector c) {
    detail::require_dims(p.square() && p.rows() == c.size(),
                         "quadratic objective: P and c shapes disagree");
    if (!p.all_finite() || !all_finite(c))
      detail::fail(ErrorKind::kConfigInvalid, "quadratic objective has non-finite data");
    if (!is_symmetric(p))
      detail::fail(ErrorKind::kConfigInvalid, "quadratic objective: P not symmetric");
    DenseMatrix shifted = p;
    for (std::size_t i = 0; i < shifted.rows(); ++i) shifted(i, i) += 1e-10;
    try {
      (void)cholesky_factor(shifted);
    } catch (const Error&) {
      detail::fail(ErrorKind::kConfigInvalid, "quadratic objective: P not PSD");
    }
    return ObjectiveSpec(QuadraticObjective(std::move(p), std::move(c)));
  }

  static ObjectiveSpec linear(Vector c) {
    if (!all_finite(c))
      detail::fail(ErrorKind::kConfigInvalid, "linear objective has non-finite data");
    return ObjectiveSpec(LinearObjective{std::move(c)});
  }

  static ObjectiveSpec separable_sum(std::vector<ScalarTerm> terms) {
    for (const auto& t : terms)
      if (!(t.l1 >= 0.0) || !(t.quad >= 0.0) || !std::isfinite(t.l1) ||
          !std::isfinite(t.quad) || !std::isfinite(t.lin))
        detail::fail(ErrorKind::kConfigInvalid,
                     "separable term needs finite l1 >= 0 and quad >= 0");
    return ObjectiveSpec(SeparableSumObjective{std::move(terms)});
  }

  const Variant& variant() const noexcept { return v_; }

  template <class T>
  const T* as() const noexcept {
    return std::get_if<T>(&v_);
  }

  std::string_view kind() const {
    return std::visit(
        [](const auto& o) -> std::string_view {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, ZeroObjective>) return "zero";
          else if constexpr (std::is_same_v<T, L1Objective>) return "l1";
          else if constexpr (std::is_same_v<T, QuadraticObjective>) return "quadratic";
          else if constexpr (std::is_same_v<T, LinearObjective>) return "linear";
          else return "separable_sum";
        },
        v_);
  }

  /// Fixed dimension for kinds that carry data; 0 for zero and l1, which
  /// adapt to any length.
  std::size_t fixed_dim() const {
    return std::visit(
        [](const auto& o) -> std::size_t {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, QuadraticObjective>) return o.c().size();
          else if constexpr (std::is_same_v<T, LinearObjective>) return o.c.size();
          else if constexpr (std::is_same_v<T, SeparableSumObjective>) return o.terms.size();
          else return 0;
        },
        v_);
  }

  bool accepts_dim(std::size_t n) const {
    const std::size_t d = fixed_dim();
    return d == 0 ? (as<ZeroObjective>() || as<L1Objective>()) : d == n;
  }

  /// True when θ(y) = Σᵢ φᵢ(yᵢ), so its prox over a box is the clipped
  /// coordinatewise prox.
  bool is_separable() const {
    if (const auto* q = as<QuadraticObjective>()) return q->P().is_diagonal();
    return true;
  }

  /// θ(x).
  double value(std::span<const double> x) const {
    detail::require_dims(accepts_dim(x.size()),
                         "objective of kind " + std::string(kind()) +
                             " evaluated at a vector of length " +
                             std::to_string(x.size()));
    return std::visit(
        [&](const auto& o) -> double {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, ZeroObjective>) {
            return 0.0;
          } else if constexpr (std::is_same_v<T, L1Objective>) {
            double s = 0.0;
            for (double v : x) s += std::abs(v);
            return o.weight * s;
          } else if constexpr (std::is_same_v<T, QuadraticObjective>) {
            return 0.5 * dot(x, multiply(o.P(), x)) + dot(o.c(), x);
          } else if constexpr (std::is_same_v<T, LinearObjective>) {
            return dot(o.c, x);
          } else {
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s += o.terms[i].value(x[i]);
            return s;
          }
        },
        v_);
  }

  /// Per-coordinate view of a separable objective of length n.
  std::vector<ScalarTerm> scalar_terms(std::size_t n) const {
    detail::require_dims(accepts_dim(n), "scalar_terms length");
    if (!is_separable())
      detail::fail(ErrorKind::kUnsupportedObjective,
                   "non-diagonal quadratic has no scalar decomposition");
    return std::visit(
        [&](const auto& o) -> std::vector<ScalarTerm> {
          using T = std::decay_t<decltype(o)>;
          std::vector<ScalarTerm> t(n);
          if constexpr (std::is_same_v<T, L1Objective>) {
            for (auto& s : t) s.l1 = o.weight;
          } else if constexpr (std::is_same_v<T, QuadraticObjective>) {
            for (std::size_t i = 0; i < n; ++i) t[i] = {0.0, o.P()(i, i), o.c()[i]};
          } else if constexpr (std::is_same_v<T, LinearObjective>) {
            for (std::size_t i = 0; i < n; ++i) t[i].lin = o.c[i];
          } else if constexpr (std::is_same_v<T, SeparableSumObjective>) {
            t = o.terms;
          }
          return t;
        },
        v_);
  }

  friend bool operator==(const ObjectiveSpec&, const ObjectiveSpec&) = default;

 private:
  explicit ObjectiveSpec(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

// ---------------------------------------------------------------------------
// Sets

inline constexpr double kInf = std::numeric_limits<double>::infinity();

class SetSpec {
 public:
  enum class Kind { kWholeSpace, kNonnegativeOrthant, kBox };

  SetSpec() = default;

  static SetSpec whole_space() { return SetSpec(); }
  static SetSpec nonnegative_orthant() {
    SetSpec s;
    s.kind_ = Kind::kNonnegativeOrthant;
    return s;
  }
  /// Bounds may be ±infinity; they are only ever compared against.
  static SetSpec box(Vector lower, Vector upper) {
    detail::require_dims(lower.size() == upper.size(), "box bound lengths");
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (std::isnan(lower[i]) || std::isnan(upper[i]) || !(lower[i] <= upper[i]) ||
          lower[i] == kInf || upper[i] == -kInf)
        detail::fail(ErrorKind::kConfigInvalid,
                     "box bound " + std::to_string(i) + " has lower > upper");
    SetSpec s;
    s.kind_ = Kind::kBox;
    s.lower_ = std::move(lower);
    s.upper_ = std::move(upper);
    return s;
  }

  Kind kind() const noexcept { return kind_; }
  bool is_whole_space() const noexcept { return kind_ == Kind::kWholeSpace; }
  const Vector& lower() const noexcept { return lower_; }
  const Vector& upper() const noexcept { return upper_; }

  std::string_view kind_name() const {
    switch (kind_) {
      case Kind::kWholeSpace: return "whole_space";
      case Kind::kNonnegativeOrthant: return "nonnegative_orthant";
      case Kind::kBox: return "box";
    }
    return "unknown";
  }

  bool accepts_dim(std::size_t n) const {
    return kind_ != Kind::kBox || lower_.size() == n;
  }

  double lower_bound(std::size_t i) const {
    switch (kind_) {
      case Kind::kWholeSpace: return -kInf;
      case Kind::kNonnegativeOrthant: return 0.0;
      case Kind::kBox: return lower_[i];
    }
    return -kInf;
  }

  double upper_bound(std::size_t i) const {
    return kind_ == Kind::kBox ? upper_[i] : kInf;
  }

  bool contains(std::span<const double> x, double tol = 0.0) const {
    detail::require_dims(accepts_dim(x.size()), "set membership length");
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] < lower_bound(i) - tol || x[i] > upper_bound(i) + tol) return false;
    return true;
  }

  friend bool operator==(const SetSpec&, const SetSpec&) = default;

 private:
  Kind kind_ = Kind::kWholeSpace;
  Vector lower_;
  Vector upper_;
};

/// Euclidean projection onto X.
inline Vector project(const SetSpec& set, std::span<const double> v) {
  detail::require_dims(set.accepts_dim(v.size()),
                       "projection onto a box of length " +
                           std::to_string(set.lower().size()) + " of a vector of length " +
                           std::to_string(v.size()));
  Vector out(v.begin(), v.end());
  if (set.is_whole_space()) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lo = set.lower_bound(i);
    const double hi = set.upper_bound(i);
    if (out[i] < lo) out[i] = lo;
    else if (out[i] > hi) out[i] = hi;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Proximity operators

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

inline double scalar_prox(const ScalarTerm& term, double r, double q) {
  return soft_threshold(r * q - term.lin, term.l1) / (term.quad + r);
}

/// argmin_y θ(y) + (r/2)‖y − q‖² over the whole space.
inline Vector prox(const ObjectiveSpec& theta, double r, std::span<const double> q) {
  if (!(r > 0.0) || !std::isfinite(r))
    detail::fail(ErrorKind::kConfigInvalid, "prox parameter r must be > 0");
  detail::require_dims(theta.accepts_dim(q.size()),
                       "prox of " + std::string(theta.kind()) + " at a point of length " +
                           std::to_string(q.size()));
  return std::visit(
      [&](const auto& o) -> Vector {
        using T = std::decay_t<decltype(o)>;
        Vector y(q.begin(), q.end());
        if constexpr (std::is_same_v<T, ZeroObjective>) {
          return y;
        } else if constexpr (std::is_same_v<T, L1Objective>) {
          const double t = o.weight / r;
          for (double& v : y) v = soft_threshold(v, t);
          return y;
        } else if constexpr (std::is_same_v<T, LinearObjective>) {
          for (std::size_t i = 0; i < y.size(); ++i) y[i] -= o.c[i] / r;
          return y;
        } else if constexpr (std::is_same_v<T, SeparableSumObjective>) {
          for (std::size_t i = 0; i < y.size(); ++i) y[i] = scalar_prox(o.terms[i], r, q[i]);
          return y;
        } else {
          // (P + rI) y = r q − c
          for (std::size_t i = 0; i < y.size(); ++i) y[i] = r * q[i] - o.c()[i];
          return solve_spd(o.shifted_factor(r), y);
        }
      },
      theta.variant());
}

/// argmin { θ(y) + (r/2)‖y − q‖² : y ∈ X }. Closed form for any θ over the
/// whole space and for separable θ over a box or orthant.
inline Vector prox_constrained(const ObjectiveSpec& theta, const SetSpec& set, double r,
                               std::span<const double> q) {
  if (set.is_whole_space()) return prox(theta, r, q);
  if (!theta.is_separable())
    detail::fail(ErrorKind::kUnsupportedCombination,
                 "no closed-form prox for non-separable " + std::string(theta.kind()) +
                     " over " + std::string(set.kind_name()));
  return project(set, prox(theta, r, q));
}

}  // namespace balm
