#include <gtest/gtest.h>

#include "balm/multiplier.hpp"
#include "expect_kind.hpp"
#include "fixtures.hpp"

using balm::DenseMatrix;
using balm::MultiplierSystem;
using balm::Vector;

namespace {

MultiplierSystem system_of(DenseMatrix h) {
  auto f = balm::cholesky_factor(h);
  return {std::move(h), std::move(f)};
}

// Random A for the positive-definiteness sweeps: full, rank deficient or
// badly scaled (‖AᵀA‖ up to 1e6).
DenseMatrix hard_matrix(fx::Rng& rng, std::size_t m, std::size_t n, int kind) {
  switch (kind % 3) {
    case 0: return rng.mat(m, n);
    case 1: return rng.low_rank(m, n, rng.index(1, std::min(m, n)));
    default: {
      DenseMatrix a = rng.mat(m, n);
      for (std::size_t i = 0; i < m; ++i) {
        const double s = rng.log_uniform(-3, 3);
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= s;
      }
      return a;
    }
  }
}

}  // namespace

TEST(BuildH0, Examples) {
  EXPECT_EQ(balm::build_h0(DenseMatrix::identity(2), 2.0, 0.5).H, DenseMatrix::identity(2));
  EXPECT_EQ(balm::build_h0(DenseMatrix{{1.0}}, 1.0, 1.0).H, (DenseMatrix{{2.0}}));
}

TEST(BuildH0, ZeroDeltaRejected) {
  EXPECT_BALM_ERROR(balm::build_h0(DenseMatrix{{1.0, 1.0}}, 1.0, 0.0), kConfigInvalid);
  EXPECT_BALM_ERROR(balm::build_h0(DenseMatrix{{1.0, 1.0}}, -1.0, 1.0), kConfigInvalid);
}

TEST(BuildHp, SingleBlockMatchesH0) {
  fx::Rng rng(41);
  DenseMatrix a = rng.mat(3, 5);
  const balm::ScaledBlock blocks[] = {{a, 0.7}};
  EXPECT_EQ(balm::build_hp(blocks, 0.3).H, balm::build_h0(a, 0.7, 0.3).H);
}

TEST(BuildHp, Examples) {
  DenseMatrix one{{1.0}};
  const balm::ScaledBlock scalars[] = {{one, 1.0}, {one, 1.0}};
  EXPECT_EQ(balm::build_hp(scalars, 1.0).H, (DenseMatrix{{3.0}}));
  DenseMatrix i2 = DenseMatrix::identity(2), z2(2, 3);
  const balm::ScaledBlock blocks[] = {{i2, 2.0}, {z2, 1.0}};
  EXPECT_EQ(balm::build_hp(blocks, 0.5).H, DenseMatrix::identity(2));
}

TEST(BuildH2, Examples) {
  EXPECT_EQ(balm::build_h2(DenseMatrix{{1.0}}, 1.0, 1.0, 1.0).H, (DenseMatrix{{3.0}}));
  EXPECT_EQ(balm::build_h2(DenseMatrix(2, 2), 1.0, 1.0, 1.0).H, DenseMatrix::identity(2, 2.0));
  EXPECT_EQ(balm::build_h2(DenseMatrix::identity(2), 1.0, 1.0, 0.5).H,
            DenseMatrix::identity(2, 2.5));
}

TEST(MultiplierMatrices, FactorableForRandomParameters) {
  fx::Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = rng.index(1, 12), n1 = rng.index(1, 12), n2 = rng.index(1, 12);
    DenseMatrix a1 = hard_matrix(rng, m, n1, trial), a2 = hard_matrix(rng, m, n2, trial + 1);
    const double r = rng.log_uniform(-3, 3), s = rng.log_uniform(-3, 3);
    const double delta = rng.log_uniform(-4, 1);
    EXPECT_NO_THROW(balm::build_h0(a1, r, delta)) << "trial " << trial;
    const balm::ScaledBlock blocks[] = {{a1, r}, {a2, s}};
    EXPECT_NO_THROW(balm::build_hp(blocks, delta)) << "trial " << trial;
    EXPECT_NO_THROW(balm::build_h2(a2, r, s, delta)) << "trial " << trial;
  }
}

TEST(SolveEquality, Examples) {
  auto sys = system_of(DenseMatrix{{2.0}});
  EXPECT_NEAR(balm::solve_equality(sys, Vector{0.0}, Vector{-1.0})[0], 0.5, 1e-15);
  EXPECT_EQ(balm::solve_equality(sys, Vector{0.25}, Vector{0.0}), (Vector{0.25}));
  auto id = system_of(DenseMatrix::identity(2));
  EXPECT_EQ(balm::solve_equality(id, Vector{1, 1}, Vector{1, -1}), (Vector{0, 2}));
}

TEST(SolveEquality, DimensionMismatch) {
  auto sys = system_of(DenseMatrix{{2.0}});
  EXPECT_BALM_ERROR(balm::solve_equality(sys, Vector{0.0, 1.0}, Vector{1.0}), kDimensionMismatch);
}

TEST(SolveEquality, MatchesDenseSolveOfExplicitSystem) {
  fx::Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = rng.index(1, 10), n = rng.index(1, 10);
    DenseMatrix a = rng.mat(m, n);
    const double r = rng.log_uniform(-1, 1), delta = rng.log_uniform(-2, 0);
    auto sys = balm::build_h0(a, r, delta);
    Vector lk = rng.vec(m), s = rng.vec(m);
    // Explicit (1/r)AAᵀ + δI by loops.
    oracle::Mat h(m, oracle::Vec(m, 0.0));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < n; ++k) h[i][j] += a(i, k) * a(j, k) / r;
        if (i == j) h[i][j] += delta;
      }
    Vector rhs = oracle::matvec(h, lk);
    for (std::size_t i = 0; i < m; ++i) rhs[i] -= s[i];
    Vector want = *oracle::gauss_solve(h, rhs);
    Vector got = balm::solve_equality(sys, lk, s);
    EXPECT_LE(fx::max_abs_diff(got, want), 1e-10 * (1 + balm::norm_inf(want)));
    EXPECT_LE(balm::norm2(balm::lcp_slack(sys, got, lk, s)), 1e-10 * (1 + balm::norm2(s)));
  }
}

TEST(SolveLcp, IdentityProjects) {
  auto sys = system_of(DenseMatrix::identity(2));
  EXPECT_EQ(balm::solve_lcp(sys, Vector{0, 0}, Vector{-1, 1}), (Vector{1, 0}));
}

TEST(SolveLcp, InteriorSolution) {
  auto sys = system_of(DenseMatrix{{2, 1}, {1, 2}});
  Vector l = balm::solve_lcp(sys, Vector{0, 0}, Vector{-1, -1});
  EXPECT_NEAR(l[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(l[1], 1.0 / 3.0, 1e-12);
}

TEST(SolveLcp, OneActiveBound) {
  auto sys = system_of(DenseMatrix{{2, 1}, {1, 2}});
  Vector l = balm::solve_lcp(sys, Vector{0, 0}, Vector{1, -1});
  EXPECT_NEAR(l[0], 0.0, 1e-12);
  EXPECT_NEAR(l[1], 0.5, 1e-12);
  Vector y = balm::lcp_slack(sys, l, Vector{0, 0}, Vector{1, -1});
  EXPECT_NEAR(y[0], 1.5, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
}

TEST(SolveLcp, SweepCapReported) {
  fx::Rng rng(44);
  auto sys = system_of(rng.spd(8, 1e-3));
  balm::LcpOptions opts;
  opts.max_sweeps = 0;
  EXPECT_BALM_ERROR(balm::solve_lcp(sys, Vector(8, 0.0), rng.vec(8), opts), kNoConvergence);
}

TEST(SolveLcp, CertificateOnRandomInstances) {
  fx::Rng rng(45);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = rng.index(1, 20);
    auto sys = balm::build_h0(rng.mat(m, rng.index(1, 20)), rng.log_uniform(-1, 1),
                              rng.log_uniform(-2, 0));
    Vector lk = rng.vec(m), s = rng.vec(m);
    for (double& v : lk) v = std::abs(v);
    Vector l = balm::solve_lcp(sys, lk, s);
    Vector y = balm::lcp_slack(sys, l, lk, s);
    for (std::size_t i = 0; i < m; ++i) {
      EXPECT_GE(l[i], 0.0);
      EXPECT_GE(y[i], -1e-9);
    }
    EXPECT_LE(std::abs(balm::dot(l, y)), 1e-9 * (1 + balm::norm2(s)));
  }
}

TEST(SolveLcp, MatchesActiveSetEnumeration) {
  fx::Rng rng(46);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = rng.index(1, 10);
    DenseMatrix h = rng.spd(m, rng.log_uniform(-2, 0));
    auto sys = system_of(h);
    Vector lk = rng.vec(m), s = rng.vec(m);
    for (double& v : lk) v = std::abs(v);
    auto want = oracle::lcp_enumerate(fx::to_mat(h), lk, s);
    ASSERT_TRUE(want.has_value());
    Vector got = balm::solve_lcp(sys, lk, s);
    EXPECT_LE(fx::max_abs_diff(got, want->lambda), 1e-7) << "trial " << trial;
  }
}

TEST(SolveMultiplier, DispatchesOnSense) {
  auto sys = system_of(DenseMatrix::identity(2));
  EXPECT_EQ(balm::solve_multiplier(sys, balm::Sense::kEquality, Vector{0, 0}, Vector{-1, 1}),
            (Vector{1, -1}));
  EXPECT_EQ(balm::solve_multiplier(sys, balm::Sense::kInequality, Vector{0, 0}, Vector{-1, 1}),
            (Vector{1, 0}));
}
