#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "balm/bench.hpp"
#include "balm/diagnostics.hpp"
#include "expect_kind.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;
using balm::AnyProblem;
using balm::DenseMatrix;
using balm::GenerateOptions;
using balm::InstanceKind;
using balm::MatchupOptions;
using balm::ObjectiveSpec;
using balm::PrimalDualPoint;
using balm::Problem;
using balm::ProblemFile;
using balm::SetSpec;
using balm::Vector;

namespace {

class ScratchDir {
 public:
  ScratchDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("balm_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ProblemFile generated(InstanceKind kind, std::size_t m, std::size_t n, std::uint64_t seed,
                      std::vector<std::size_t> blocks = {}) {
  GenerateOptions o;
  o.m = m;
  o.n = n;
  o.seed = seed;
  o.blocks = std::move(blocks);
  return balm::generate_instance(kind, o);
}

const Problem& flat(const ProblemFile& f) { return std::get<Problem>(f.problem); }

void expect_bit_equal(const Vector& a, const Vector& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(std::memcmp(&a[i], &b[i], sizeof(double)), 0) << "entry " << i;
}

}  // namespace

// ---------------------------------------------------------------------------
// Problem files

TEST(ProblemFile, RoundTripIsByteExactForEveryGenerator) {
  const std::vector<ProblemFile> files{
      generated(InstanceKind::kBasisPursuit, 4, 9, 1),
      generated(InstanceKind::kLassoEq, 3, 5, 2),
      generated(InstanceKind::kNonnegQpIneq, 4, 6, 3),
      generated(InstanceKind::kRandomQpEq, 3, 5, 4),
      generated(InstanceKind::kRandomQpEq, 2, 0, 5, {2, 3, 1}),
  };
  for (const auto& f : files) {
    const std::string text = balm::serialize_problem(f);
    ProblemFile back = balm::parse_problem(text);
    EXPECT_EQ(balm::serialize_problem(back), text);
    EXPECT_EQ(back.reference.has_value(), f.reference.has_value());
  }
}

TEST(ProblemFile, NumbersSurviveBitForBit) {
  fx::Rng rng(81);
  DenseMatrix a = rng.mat(3, 4, 1e-7);
  a(0, 0) = 0.1;
  a(1, 1) = -0.0;
  a(2, 2) = 1e300;
  a(0, 3) = 5e-324;
  Vector b{1.0 / 3.0, std::nextafter(1.0, 2.0), -2.5e-17};
  Problem prob(ObjectiveSpec::linear(rng.vec(4)), SetSpec::whole_space(), a, b,
               balm::Sense::kEquality);
  ProblemFile back = balm::parse_problem(balm::serialize_problem({prob, std::nullopt}));
  expect_bit_equal(flat(back).A().data(), a.data());
  expect_bit_equal(flat(back).b(), b);
}

TEST(ProblemFile, EveryObjectiveAndSetKind) {
  std::vector<balm::ScalarTerm> terms{{0.5, 1.0, -0.25}, {0.0, 2.0, 1.0}};
  const std::vector<std::pair<ObjectiveSpec, SetSpec>> cases{
      {ObjectiveSpec::zero(), SetSpec::nonnegative_orthant()},
      {ObjectiveSpec::l1(0.3), SetSpec::box({-1, -balm::kInf}, {balm::kInf, 2})},
      {ObjectiveSpec::quadratic(DenseMatrix{{2, 1}, {1, 2}}, {1, -1}), SetSpec::whole_space()},
      {ObjectiveSpec::linear({1, 2}), SetSpec::box({0, 0}, {1, 1})},
      {ObjectiveSpec::separable_sum(terms), SetSpec::whole_space()},
  };
  for (const auto& [theta, set] : cases) {
    Problem prob(theta, set, DenseMatrix{{1, 1}}, Vector{1}, balm::Sense::kInequality);
    const std::string text = balm::serialize_problem({prob, PrimalDualPoint{{0.5, 0.5}, {0.0}}});
    ProblemFile back = balm::parse_problem(text);
    EXPECT_EQ(balm::serialize_problem(back), text) << theta.kind();
    EXPECT_EQ(flat(back).theta().kind(), theta.kind());
    EXPECT_EQ(flat(back).set().kind(), set.kind());
    EXPECT_EQ(flat(back).sense(), balm::Sense::kInequality);
  }
}

TEST(ProblemFile, AtomicWriteLeavesNoTemporary) {
  ScratchDir dir;
  auto f = generated(InstanceKind::kRandomQpEq, 2, 3, 6);
  balm::write_problem_file(dir / "p.json", f);
  EXPECT_TRUE(fs::exists(dir / "p.json"));
  EXPECT_FALSE(fs::exists(dir / "p.json.tmp"));
  EXPECT_EQ(slurp(dir / "p.json"), balm::serialize_problem(f));
  EXPECT_EQ(balm::serialize_problem(balm::read_problem_file(dir / "p.json")),
            balm::serialize_problem(f));
}

TEST(ProblemFile, SchemaErrors) {
  const std::string good = balm::serialize_problem(generated(InstanceKind::kRandomQpEq, 2, 3, 7));
  auto mutate = [&](auto&& edit) {
    auto j = nlohmann::ordered_json::parse(good);
    edit(j);
    return j.dump();
  };
  EXPECT_BALM_ERROR(balm::parse_problem("{not json"), kSchemaError);
  EXPECT_BALM_ERROR(balm::parse_problem(mutate([](auto& j) { j["schema_version"] = "balm-problem/9"; })),
                    kSchemaError);
  EXPECT_BALM_ERROR(balm::parse_problem(mutate([](auto& j) { j.erase("b"); })), kSchemaError);
  EXPECT_BALM_ERROR(balm::parse_problem(mutate([](auto& j) { j["sense"] = "leq"; })), kSchemaError);
  EXPECT_BALM_ERROR(balm::parse_problem(mutate([](auto& j) { j["A"]["rows"] = 3; })), kSchemaError);
  EXPECT_BALM_ERROR(balm::parse_problem(mutate([](auto& j) { j["b"].push_back(1.0); })), kSchemaError);
  EXPECT_BALM_ERROR(balm::parse_problem(mutate([](auto& j) { j["A"]["data"][0] = "x"; })), kSchemaError);
  EXPECT_BALM_ERROR(balm::parse_problem(mutate([](auto& j) { j["objective"]["kind"] = "huber"; })),
                    kSchemaError);
  EXPECT_BALM_ERROR(balm::parse_problem(mutate([](auto& j) { j["reference"]["x"].push_back(0.0); })),
                    kSchemaError);
}

TEST(ProblemFile, MissingFileIsIoError) {
  ScratchDir dir;
  EXPECT_BALM_ERROR(balm::read_problem_file(dir / "absent.json"), kIoError);
}

TEST(ReferenceFile, PointOrProblem) {
  ScratchDir dir;
  PrimalDualPoint w{{1.25, -3.0}, {0.5}};
  balm::io::write_atomic(dir / "ref.json", balm::serialize_point(w));
  auto back = balm::read_reference_file(dir / "ref.json");
  EXPECT_EQ(back.x, w.x);
  EXPECT_EQ(back.lambda, w.lambda);
  balm::write_problem_file(dir / "p.json", generated(InstanceKind::kRandomQpEq, 1, 1, 0));
  EXPECT_EQ(balm::read_reference_file(dir / "p.json").x, (Vector{1.0}));
  balm::write_problem_file(dir / "q.json", generated(InstanceKind::kNonnegQpIneq, 2, 3, 0));
  EXPECT_BALM_ERROR(balm::read_reference_file(dir / "q.json"), kMissingReference);
}

// ---------------------------------------------------------------------------
// Generators

TEST(Generate, ScalarFixture) {
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    auto f = generated(InstanceKind::kRandomQpEq, 1, 1, seed);
    const Problem& p = flat(f);
    EXPECT_EQ(p.A(), (DenseMatrix{{1.0}}));
    EXPECT_EQ(p.b(), (Vector{1.0}));
    EXPECT_EQ(balm::objective_value(p, Vector{2.0}), 2.0);
    ASSERT_TRUE(f.reference.has_value());
    EXPECT_EQ(f.reference->x, (Vector{1.0}));
    EXPECT_EQ(f.reference->lambda, (Vector{1.0}));
  }
}

TEST(Generate, BasisPursuitWithZeroSignal) {
  GenerateOptions o;
  o.m = 3;
  o.n = 6;
  o.seed = 8;
  o.sparsity = 0;
  auto f = balm::generate_instance(InstanceKind::kBasisPursuit, o);
  EXPECT_EQ(flat(f).b(), Vector(3, 0.0));
  ASSERT_TRUE(f.reference.has_value());
  EXPECT_EQ(f.reference->x, Vector(6, 0.0));
  EXPECT_LE(balm::kkt_residual(flat(f), *f.reference).max(), 0.0);
}

TEST(Generate, BasisPursuitPlantsSparseSignal) {
  GenerateOptions o;
  o.m = 10;
  o.n = 30;
  o.seed = 9;
  o.sparsity = 2;
  auto f = balm::generate_instance(InstanceKind::kBasisPursuit, o);
  // b = A·x_true lies in the range of A and the ℓ₁ solve recovers a point
  // with objective no larger than any 2-sparse representation.
  auto h = balm::run(flat(f), balm::BalancedAlmConfig{1.0, 0.05, 1.0}, {200000, 1e-7});
  ASSERT_TRUE(h.converged);
  EXPECT_LE(balm::kkt_residual(flat(f), h.last()).primal, 1e-7);
}

TEST(Generate, InvalidDims) {
  EXPECT_BALM_ERROR(generated(InstanceKind::kBasisPursuit, 5, 3, 0), kInvalidDims);
  EXPECT_BALM_ERROR(generated(InstanceKind::kRandomQpEq, 5, 3, 0), kInvalidDims);
  EXPECT_BALM_ERROR(generated(InstanceKind::kRandomQpEq, 0, 3, 0), kInvalidDims);
  EXPECT_BALM_ERROR(generated(InstanceKind::kRandomQpEq, 4, 0, 0, {1, 2}), kInvalidDims);
}

TEST(Generate, UnknownKind) {
  EXPECT_BALM_ERROR(balm::parse_instance_kind("sudoku"), kConfigInvalid);
  EXPECT_EQ(balm::parse_instance_kind("lasso_eq"), InstanceKind::kLassoEq);
}

TEST(Generate, SameSeedSameInstance) {
  for (auto kind : {InstanceKind::kBasisPursuit, InstanceKind::kLassoEq,
                    InstanceKind::kNonnegQpIneq, InstanceKind::kRandomQpEq}) {
    EXPECT_EQ(balm::serialize_problem(generated(kind, 3, 6, 42)),
              balm::serialize_problem(generated(kind, 3, 6, 42)));
    EXPECT_NE(balm::serialize_problem(generated(kind, 3, 6, 42)),
              balm::serialize_problem(generated(kind, 3, 6, 43)));
  }
}

TEST(Generate, StoredSaddlePointsSatisfyKkt) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto f = generated(InstanceKind::kRandomQpEq, 1 + seed % 4, 6, seed);
    ASSERT_TRUE(f.reference.has_value());
    EXPECT_LE(balm::kkt_residual(flat(f), *f.reference).max(), 1e-10) << "seed " << seed;
    auto g = generated(InstanceKind::kRandomQpEq, 2, 0, seed, {2, 3});
    const auto& sp = std::get<balm::SeparableProblem>(g.problem);
    EXPECT_LE(balm::kkt_residual(sp, *g.reference).max(), 1e-10) << "seed " << seed;
  }
}

TEST(Generate, StoredSaddlePointMatchesKktOracle) {
  auto f = generated(InstanceKind::kRandomQpEq, 3, 5, 17);
  const Problem& p = flat(f);
  const auto* q = p.theta().as<balm::QuadraticObjective>();
  auto want = oracle::equality_qp(fx::to_mat(q->P()), q->c(), fx::to_mat(p.A()), p.b());
  ASSERT_TRUE(want.has_value());
  EXPECT_LE(fx::max_abs_diff(f.reference->x, want->x), 1e-10);
  EXPECT_LE(fx::max_abs_diff(f.reference->lambda, want->lambda), 1e-10);
}

TEST(Generate, InactiveInequalitiesHaveZeroMultiplier) {
  auto f = generated(InstanceKind::kNonnegQpIneq, 3, 5, 21);
  const Problem& g = flat(f);
  Problem loose(g.theta(), g.set(), g.A(), Vector(3, -1e6), balm::Sense::kInequality);
  const auto* q = g.theta().as<balm::QuadraticObjective>();
  // Unconstrained minimizer from the oracle: P x = −c.
  oracle::Vec minus_c = q->c();
  for (double& v : minus_c) v = -v;
  Vector x_free = *oracle::gauss_solve(fx::to_mat(q->P()), minus_c);
  EXPECT_LE(balm::kkt_residual(loose, {x_free, Vector(3, 0.0)}).max(), 1e-10);
  auto h = balm::run(loose, balm::BalancedAlmConfig{}, {100000, 1e-9});
  ASSERT_TRUE(h.converged);
  for (double l : h.last().lambda) EXPECT_NEAR(l, 0.0, 1e-8);
  EXPECT_LE(fx::max_abs_diff(h.last().x, x_free), 1e-6);
}

TEST(Generate, LassoLayout) {
  auto f = generated(InstanceKind::kLassoEq, 3, 5, 22);
  const auto& sp = std::get<balm::SeparableProblem>(f.problem);
  ASSERT_EQ(sp.p(), 2u);
  EXPECT_EQ(sp.block(0).A, DenseMatrix::identity(3, -1.0));
  EXPECT_EQ(sp.block(1).A.cols(), 5u);
  EXPECT_EQ(sp.block(1).theta.kind(), "l1");
}

// ---------------------------------------------------------------------------
// Methods by name and history tables

TEST(MethodNames, AllKnownNamesResolveOnTwoBlockProblems) {
  auto f = generated(InstanceKind::kRandomQpEq, 2, 0, 23, {3, 3});
  for (const auto& name : balm::known_methods()) {
    balm::MethodParams p;
    if (name == "generalized-alm") p.alpha = 1.5;
    EXPECT_NO_THROW(balm::make_method(f.problem, name, p)) << name;
  }
  EXPECT_BALM_ERROR(balm::make_method(f.problem, "newton", {}), kConfigInvalid);
}

TEST(HistoryTable, ParamsRoundTripThroughMetadata) {
  balm::MethodParams p;
  p.r = 0.3;
  p.delta = 1.0 / 7.0;
  p.alpha = 1.5;
  p.s = 2.25;
  p.r_list = {0.1, 0.2};
  p.sharp_bounds = true;
  p.inner.tol = 1e-11;
  p.inner.max_iters = 123;
  balm::MethodParams q = balm::params_from_meta(balm::method_meta("generalized-alm", p));
  EXPECT_EQ(q.r, p.r);
  EXPECT_EQ(q.delta, p.delta);
  EXPECT_EQ(q.alpha, p.alpha);
  EXPECT_EQ(q.s, p.s);
  EXPECT_FALSE(q.sigma.has_value());
  EXPECT_EQ(q.r_list, p.r_list);
  EXPECT_TRUE(q.sharp_bounds);
  EXPECT_EQ(q.inner.tol, p.inner.tol);
  EXPECT_EQ(q.inner.max_iters, 123);
  // Methods without relaxation record the α they actually ran with.
  EXPECT_EQ(balm::method_meta("alt-split", p).at("alpha"), "1");
}

TEST(HistoryTable, SchemaErrors) {
  EXPECT_BALM_ERROR(balm::parse_history_table(""), kSchemaError);
  EXPECT_BALM_ERROR(balm::parse_history_table("k,primal\n0,1\n"), kSchemaError);
  const std::string head = "# schema=balm-history/1\n# n=1\n# m=1\n";
  EXPECT_BALM_ERROR(balm::parse_history_table(head + "k,primal,dual\n"), kSchemaError);
  const std::string cols = "k,primal,dual,complementarity,step_h,dist_h,x0,lambda0\n";
  EXPECT_BALM_ERROR(balm::parse_history_table(head + cols + "0,1,2,3,,,oops,0\n"), kSchemaError);
  EXPECT_BALM_ERROR(balm::parse_history_table(head + cols + "0,1,2,3,,,0\n"), kSchemaError);
  EXPECT_NO_THROW(balm::parse_history_table(head + cols + "0,1,2,3,,,0,0\n"));
}

// ---------------------------------------------------------------------------
// Matchups

TEST(Matchup, ScalarProblemThreeMethodsAgree) {
  ScratchDir dir;
  auto f = generated(InstanceKind::kRandomQpEq, 1, 1, 0);
  MatchupOptions opts;
  opts.stop = {100000, 1e-8};
  auto rows = balm::run_matchup(f, {"balanced-alm", "classic-alm", "primal-dual"}, opts,
                                dir / "report.json");
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    ASSERT_TRUE(r.ok()) << r.method << ": " << r.error;
    EXPECT_TRUE(r.converged) << r.method;
    EXPECT_LE(r.final_kkt.max(), 1e-8) << r.method;
    EXPECT_NEAR(r.objective_value, rows[0].objective_value, 1e-6) << r.method;
    EXPECT_NEAR(r.objective_value, 0.5, 1e-6) << r.method;
    EXPECT_LE(r.iterations, 100000u);
    ASSERT_TRUE(r.history_path.has_value());
    EXPECT_TRUE(fs::exists(*r.history_path));
  }
  auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(report["schema_version"], "balm-report/1");
  ASSERT_EQ(report["rows"].size(), 3u);
  EXPECT_EQ(report["rows"][1]["method"], "classic-alm");
  EXPECT_EQ(report["rows"][1]["status"], "converged");
}

TEST(Matchup, EmptyMethodList) {
  ScratchDir dir;
  auto rows = balm::run_matchup(generated(InstanceKind::kRandomQpEq, 1, 1, 0), {}, {},
                                dir / "report.json");
  EXPECT_TRUE(rows.empty());
  auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_TRUE(report["rows"].empty());
}

TEST(Matchup, InvalidStepConditionStaysInItsRow) {
  ScratchDir dir;
  auto f = generated(InstanceKind::kRandomQpEq, 1, 1, 0);
  MatchupOptions opts;
  opts.params.s = 0.5;  // r·s = 0.5 ≤ ‖AᵀA‖ = 1
  auto rows = balm::run_matchup(f, {"balanced-alm", "primal-dual", "classic-alm"}, opts,
                                dir / "report.json");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[0].ok());
  EXPECT_TRUE(rows[0].converged);
  ASSERT_FALSE(rows[1].ok());
  EXPECT_EQ(*rows[1].error_kind, balm::ErrorKind::kConfigInvalid);
  EXPECT_FALSE(rows[1].history_path.has_value());
  EXPECT_TRUE(rows[2].ok());
  EXPECT_TRUE(rows[2].converged);
  auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(report["rows"][1]["status"], "error");
  EXPECT_EQ(report["rows"][1]["error_kind"], "ConfigInvalid");
}

TEST(Matchup, IterationCapReportedAsMaxIters) {
  ScratchDir dir;
  MatchupOptions opts;
  opts.stop = {3, 1e-12};
  auto rows = balm::run_matchup(generated(InstanceKind::kRandomQpEq, 3, 6, 24), {"balanced-alm"},
                                opts, dir / "report.json");
  ASSERT_TRUE(rows[0].ok());
  EXPECT_FALSE(rows[0].converged);
  EXPECT_EQ(rows[0].iterations, 3u);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "report.json"))["rows"][0]["status"], "max_iters");
}

TEST(Matchup, TablesAreDeterministic) {
  ScratchDir dir;
  auto f = generated(InstanceKind::kNonnegQpIneq, 5, 8, 25);
  const std::vector<std::string> methods{"balanced-alm", "classic-alm", "lalm", "primal-dual"};
  MatchupOptions opts;
  opts.stop = {20000, 1e-8};
  balm::run_matchup(f, methods, opts, dir / "a.json");
  balm::run_matchup(f, methods, opts, dir / "b.json");
  for (const auto& m : methods) {
    const std::string a = slurp(balm::history_path_for(dir / "a.json", m));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(balm::history_path_for(dir / "b.json", m))) << m;
  }
}

TEST(Matchup, TablesReconstructCertificatesOffline) {
  ScratchDir dir;
  auto f = generated(InstanceKind::kRandomQpEq, 2, 0, 26, {2, 3});
  MatchupOptions opts;
  opts.stop = {60, 1e-14};
  opts.params.alpha = 1.5;
  const std::vector<std::string> methods{"generalized-alm", "split-balanced", "alt-split"};
  balm::run_matchup(f, methods, opts, dir / "r.json");
  for (const auto& name : methods) {
    // In-memory reference run.
    balm::Method live_method = balm::make_method(f.problem, name, opts.params);
    const auto& sp = std::get<balm::SeparableProblem>(f.problem);
    auto live = balm::run_method(sp, live_method, opts.stop, balm::default_start(sp), f.reference);
    // Offline replay from the table alone.
    auto parsed = balm::parse_history_table(slurp(balm::history_path_for(dir / "r.json", name)));
    balm::Method offline_method =
        balm::make_method(f.problem, parsed.meta.at("method"), balm::params_from_meta(parsed.meta));
    ASSERT_EQ(parsed.history.iterates.size(), live.iterates.size()) << name;
    for (std::size_t k = 0; k < live.iterates.size(); ++k) {
      EXPECT_EQ(parsed.history.iterates[k].x, live.iterates[k].x);
      EXPECT_EQ(parsed.history.iterates[k].lambda, live.iterates[k].lambda);
    }
    EXPECT_EQ(offline_method.metric, live_method.metric);
    EXPECT_EQ(parsed.history.alpha, live_method.alpha);
    auto a = balm::contraction_ledger(live, live_method.metric, f.reference, live_method.alpha);
    auto b = balm::contraction_ledger(parsed.history, offline_method.metric, f.reference,
                                      parsed.history.alpha);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_EQ(a[k].slack, b[k].slack) << name << " " << k;
      EXPECT_TRUE(b[k].passes());
    }
    auto ga = balm::vi_gap(sp, live, live_method.metric, 50, 100, 3);
    auto gb = balm::vi_gap(sp, parsed.history, offline_method.metric, 50, 100, 3);
    EXPECT_EQ(ga.max_lhs, gb.max_lhs) << name;
    EXPECT_EQ(ga.worst_excess, gb.worst_excess) << name;
  }
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(balm::exit_code_for(balm::ErrorKind::kNoConvergence), 1);
  EXPECT_EQ(balm::exit_code_for(balm::ErrorKind::kInnerNoConvergence), 1);
  EXPECT_EQ(balm::exit_code_for(balm::ErrorKind::kConfigInvalid), 2);
  EXPECT_EQ(balm::exit_code_for(balm::ErrorKind::kInvalidDims), 2);
  EXPECT_EQ(balm::exit_code_for(balm::ErrorKind::kSchemaError), 3);
  EXPECT_EQ(balm::exit_code_for(balm::ErrorKind::kIoError), 3);
}
