#pragma once

// Benchmark plumbing: problem files, seeded instance generators, iteration
// history tables and solver matchups.
//
// Problem files are JSON with a schema_version, explicit matrix shapes and
// shortest round-trip decimal numbers, so parse ∘ serialize is the identity
// on the canonical form. Infinite box bounds are written as "inf" / "-inf".

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "balm/diagnostics.hpp"
#include "balm/error.hpp"
#include "balm/linalg.hpp"
#include "balm/problem.hpp"
#include "balm/prox.hpp"
#include "balm/solvers.hpp"

namespace balm {

inline constexpr const char* kProblemSchema = "balm-problem/1";
inline constexpr const char* kHistorySchema = "balm-history/1";
inline constexpr const char* kReportSchema = "balm-report/1";

using AnyProblem = std::variant<Problem, SeparableProblem>;

struct ProblemFile {
  AnyProblem problem;
  /// Known saddle point, when the generator can compute one.
  std::optional<PrimalDualPoint> reference;
};

template <class F>
decltype(auto) visit_problem(const AnyProblem& p, F&& f) {
  return std::visit(std::forward<F>(f), p);
}

// ---------------------------------------------------------------------------
// File helpers

namespace io {

using Json = nlohmann::ordered_json;

[[noreturn]] inline void schema_error(const std::string& what) {
  detail::fail(ErrorKind::kSchemaError, what);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) detail::fail(ErrorKind::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write to a sibling temporary, then rename over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) detail::fail(ErrorKind::kIoError, "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) detail::fail(ErrorKind::kIoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) detail::fail(ErrorKind::kIoError, "cannot rename onto " + path.string());
}

inline Json number(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

inline double to_number(const Json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  schema_error(where + ": expected a number");
}

inline Json vector_json(std::span<const double> v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

inline Vector to_vector(const Json& j, const std::string& where) {
  if (!j.is_array()) schema_error(where + ": expected an array");
  Vector v;
  v.reserve(j.size());
  for (const auto& e : j) v.push_back(to_number(e, where));
  return v;
}

inline const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    schema_error(where + ": missing field '" + key + "'");
  return j.at(key);
}

inline Json matrix_json(const DenseMatrix& a) {
  Json j;
  j["rows"] = a.rows();
  j["cols"] = a.cols();
  j["data"] = vector_json(a.data());
  return j;
}

inline DenseMatrix to_matrix(const Json& j, const std::string& where) {
  const Json& rows = field(j, "rows", where);
  const Json& cols = field(j, "cols", where);
  if (!rows.is_number_unsigned() || !cols.is_number_unsigned())
    schema_error(where + ": rows/cols must be non-negative integers");
  Vector data = to_vector(field(j, "data", where), where + ".data");
  const auto r = rows.get<std::size_t>(), c = cols.get<std::size_t>();
  if (data.size() != r * c)
    schema_error(where + ": data length " + std::to_string(data.size()) + " != " +
                 std::to_string(r) + "x" + std::to_string(c));
  return DenseMatrix(r, c, std::move(data));
}

inline Json objective_json(const ObjectiveSpec& theta) {
  Json j;
  j["kind"] = std::string(theta.kind());
  if (const auto* l1 = theta.as<L1Objective>()) {
    j["weight"] = l1->weight;
  } else if (const auto* q = theta.as<QuadraticObjective>()) {
    j["P"] = matrix_json(q->P());
    j["c"] = vector_json(q->c());
  } else if (const auto* l = theta.as<LinearObjective>()) {
    j["c"] = vector_json(l->c);
  } else if (const auto* s = theta.as<SeparableSumObjective>()) {
    Json terms = Json::array();
    for (const auto& t : s->terms) terms.push_back(Json{{"l1", t.l1}, {"quad", t.quad}, {"lin", t.lin}});
    j["terms"] = terms;
  }
  return j;
}

inline ObjectiveSpec to_objective(const Json& j, const std::string& where) {
  const Json& kind = field(j, "kind", where);
  if (!kind.is_string()) schema_error(where + ".kind must be a string");
  const auto& k = kind.get_ref<const std::string&>();
  try {
    if (k == "zero") return ObjectiveSpec::zero();
    if (k == "l1") return ObjectiveSpec::l1(to_number(field(j, "weight", where), where));
    if (k == "quadratic")
      return ObjectiveSpec::quadratic(to_matrix(field(j, "P", where), where + ".P"),
                                      to_vector(field(j, "c", where), where + ".c"));
    if (k == "linear") return ObjectiveSpec::linear(to_vector(field(j, "c", where), where + ".c"));
    if (k == "separable_sum") {
      std::vector<ScalarTerm> terms;
      for (const auto& t : field(j, "terms", where))
        terms.push_back({to_number(field(t, "l1", where), where),
                         to_number(field(t, "quad", where), where),
                         to_number(field(t, "lin", where), where)});
      return ObjectiveSpec::separable_sum(std::move(terms));
    }
  } catch (const Error& e) {
    schema_error(where + ": " + e.what());
  }
  schema_error(where + ": unknown objective kind '" + k + "'");
}

inline Json set_json(const SetSpec& set) {
  Json j;
  j["kind"] = std::string(set.kind_name());
  if (set.kind() == SetSpec::Kind::kBox) {
    j["lower"] = vector_json(set.lower());
    j["upper"] = vector_json(set.upper());
  }
  return j;
}

inline SetSpec to_set(const Json& j, const std::string& where) {
  const Json& kind = field(j, "kind", where);
  if (!kind.is_string()) schema_error(where + ".kind must be a string");
  const auto& k = kind.get_ref<const std::string&>();
  if (k == "whole_space") return SetSpec::whole_space();
  if (k == "nonnegative_orthant") return SetSpec::nonnegative_orthant();
  if (k == "box") {
    try {
      return SetSpec::box(to_vector(field(j, "lower", where), where + ".lower"),
                          to_vector(field(j, "upper", where), where + ".upper"));
    } catch (const Error& e) {
      schema_error(where + ": " + e.what());
    }
  }
  schema_error(where + ": unknown set kind '" + k + "'");
}

inline Json point_json(const PrimalDualPoint& w) {
  return Json{{"x", vector_json(w.x)}, {"lambda", vector_json(w.lambda)}};
}

inline PrimalDualPoint to_point(const Json& j, const std::string& where) {
  return {to_vector(field(j, "x", where), where + ".x"),
          to_vector(field(j, "lambda", where), where + ".lambda")};
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace io

// ---------------------------------------------------------------------------
// Problem files

inline std::string serialize_problem(const ProblemFile& file) {
  io::Json j;
  j["schema_version"] = kProblemSchema;
  std::visit(
      [&](const auto& prob) {
        using T = std::decay_t<decltype(prob)>;
        j["sense"] = std::string(to_string(prob.sense()));
        j["b"] = io::vector_json(prob.b());
        if constexpr (std::is_same_v<T, Problem>) {
          j["objective"] = io::objective_json(prob.theta());
          j["set"] = io::set_json(prob.set());
          j["A"] = io::matrix_json(prob.A());
        } else {
          io::Json blocks = io::Json::array();
          for (const auto& blk : prob.blocks())
            blocks.push_back(io::Json{{"objective", io::objective_json(blk.theta)},
                                      {"set", io::set_json(blk.set)},
                                      {"A", io::matrix_json(blk.A)}});
          j["blocks"] = blocks;
        }
      },
      file.problem);
  if (file.reference) j["reference"] = io::point_json(*file.reference);
  return j.dump(2) + "\n";
}

inline ProblemFile parse_problem(const std::string& text) {
  io::Json j;
  try {
    j = io::Json::parse(text);
  } catch (const std::exception& e) {
    io::schema_error(std::string("problem file is not valid JSON: ") + e.what());
  }
  const io::Json& version = io::field(j, "schema_version", "problem");
  if (!version.is_string() || version.get<std::string>() != kProblemSchema)
    io::schema_error("unsupported schema_version (expected " + std::string(kProblemSchema) + ")");
  const io::Json& sense_j = io::field(j, "sense", "problem");
  Sense sense;
  if (sense_j == "eq") sense = Sense::kEquality;
  else if (sense_j == "geq") sense = Sense::kInequality;
  else io::schema_error("problem.sense must be \"eq\" or \"geq\"");
  Vector b = io::to_vector(io::field(j, "b", "problem"), "problem.b");

  std::optional<PrimalDualPoint> reference;
  if (j.contains("reference")) reference = io::to_point(j.at("reference"), "problem.reference");

  try {
    if (j.contains("blocks")) {
      std::vector<Block> blocks;
      std::size_t i = 0;
      for (const auto& bj : j.at("blocks")) {
        const std::string where = "problem.blocks[" + std::to_string(i++) + "]";
        blocks.push_back({io::to_objective(io::field(bj, "objective", where), where + ".objective"),
                          io::to_set(io::field(bj, "set", where), where + ".set"),
                          io::to_matrix(io::field(bj, "A", where), where + ".A")});
      }
      SeparableProblem prob(std::move(blocks), std::move(b), sense);
      if (reference) detail::check_point(prob, *reference);
      return {std::move(prob), std::move(reference)};
    }
    Problem prob(io::to_objective(io::field(j, "objective", "problem"), "problem.objective"),
                 io::to_set(io::field(j, "set", "problem"), "problem.set"),
                 io::to_matrix(io::field(j, "A", "problem"), "problem.A"), std::move(b), sense);
    if (reference) detail::check_point(prob, *reference);
    return {std::move(prob), std::move(reference)};
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kSchemaError) throw;
    io::schema_error(std::string("inconsistent problem: ") + e.what());
  }
}

inline ProblemFile read_problem_file(const std::filesystem::path& path) {
  return parse_problem(io::read_text(path));
}

inline void write_problem_file(const std::filesystem::path& path, const ProblemFile& file) {
  io::write_atomic(path, serialize_problem(file));
}

inline std::string serialize_point(const PrimalDualPoint& w) {
  io::Json j;
  j["schema_version"] = "balm-point/1";
  j["x"] = io::vector_json(w.x);
  j["lambda"] = io::vector_json(w.lambda);
  return j.dump(2) + "\n";
}

/// Accepts a point file ({"x", "lambda"}) or a problem file with a stored
/// reference.
inline PrimalDualPoint read_reference_file(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  io::Json j;
  try {
    j = io::Json::parse(text);
  } catch (const std::exception& e) {
    io::schema_error(std::string("reference file is not valid JSON: ") + e.what());
  }
  if (j.contains("x") && j.contains("lambda")) return io::to_point(j, "reference");
  ProblemFile pf = parse_problem(text);
  if (!pf.reference) detail::fail(ErrorKind::kMissingReference, path.string() + " has no reference");
  return *pf.reference;
}

// ---------------------------------------------------------------------------
// Instance generators

enum class InstanceKind { kBasisPursuit, kLassoEq, kNonnegQpIneq, kRandomQpEq };

inline InstanceKind parse_instance_kind(std::string_view s) {
  if (s == "basis_pursuit") return InstanceKind::kBasisPursuit;
  if (s == "lasso_eq") return InstanceKind::kLassoEq;
  if (s == "nonneg_qp_ineq") return InstanceKind::kNonnegQpIneq;
  if (s == "random_qp_eq") return InstanceKind::kRandomQpEq;
  detail::fail(ErrorKind::kConfigInvalid, "unknown instance kind '" + std::string(s) + "'");
}

struct GenerateOptions {
  std::size_t m = 1;
  std::size_t n = 1;
  /// Column counts per block; random_qp_eq builds a separable problem when
  /// this has two or more entries.
  std::vector<std::size_t> blocks;
  std::uint64_t seed = 0;
  /// Planted nonzeros for basis_pursuit; negative picks max(1, m/5).
  int sparsity = -1;
  /// l1 weight of lasso_eq.
  double lasso_weight = 0.1;
};

namespace detail {

class InstanceRng {
 public:
  explicit InstanceRng(std::uint64_t seed) : rng_(seed) {}

  double gauss() { return gauss_(rng_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }

  DenseMatrix gauss_matrix(std::size_t r, std::size_t c, double scale = 1.0) {
    DenseMatrix a(r, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) a(i, j) = scale * gauss();
    return a;
  }

  Vector gauss_vector(std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (double& x : v) x = scale * gauss();
    return v;
  }

  // MᵀM/n + 0.5·I: well conditioned SPD.
  DenseMatrix spd(std::size_t n) {
    DenseMatrix p = gram_cols(gauss_matrix(n, n));
    p *= 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) p(i, i) += 0.5;
    return p;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_;
};

/// Saddle point of min ½xᵀPx + cᵀx s.t. Ax = b: stationarity Px + c = Aᵀλ
/// and feasibility, solved through the Schur complement AP⁻¹Aᵀ.
inline PrimalDualPoint equality_qp_saddle_point(const DenseMatrix& p, std::span<const double> c,
                                                const DenseMatrix& a, std::span<const double> b) {
  const SpdFactor pf = cholesky_factor(p);
  DenseMatrix pinv_at(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Vector col = solve_spd(pf, a.row(i));
    for (std::size_t j = 0; j < col.size(); ++j) pinv_at(j, i) = col[j];
  }
  DenseMatrix schur = multiply(a, pinv_at);
  for (std::size_t i = 0; i < schur.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double avg = 0.5 * (schur(i, j) + schur(j, i));
      schur(i, j) = avg;
      schur(j, i) = avg;
    }
  Vector pinv_c = solve_spd(pf, c);
  Vector rhs = add(b, multiply(a, pinv_c));
  Vector lambda = solve_spd(cholesky_factor(schur), rhs);
  Vector x = sub(multiply(pinv_at, lambda), pinv_c);
  return {std::move(x), std::move(lambda)};
}

}  // namespace detail

/// Reproducible instance for a fixed seed.
///
///  basis_pursuit   min ‖x‖₁ s.t. Ax = A·x_true, x_true k-sparse
///  lasso_eq        min ½‖z‖² + μ‖x‖₁ s.t. −z + Ax = b   (blocks z, x)
///  nonneg_qp_ineq  min ½xᵀPx + cᵀx s.t. Ax ≥ b, multipliers λ ≥ 0
///  random_qp_eq    min ½xᵀPx + cᵀx s.t. Ax = b with its saddle point stored
///
/// random_qp_eq with m = n = 1 is the canonical fixture min ½x² s.t. x = 1.
inline ProblemFile generate_instance(InstanceKind kind, const GenerateOptions& opts) {
  if (opts.m == 0 || (opts.n == 0 && opts.blocks.empty()))
    detail::fail(ErrorKind::kInvalidDims, "dimensions must be positive");
  detail::InstanceRng rng(opts.seed);
  const std::size_t m = opts.m, n = opts.n;
  switch (kind) {
    case InstanceKind::kBasisPursuit: {
      if (m > n) detail::fail(ErrorKind::kInvalidDims, "basis_pursuit needs m <= n");
      DenseMatrix a = rng.gauss_matrix(m, n, 1.0 / std::sqrt(static_cast<double>(m)));
      const std::size_t k = opts.sparsity < 0 ? std::max<std::size_t>(1, m / 5)
                                              : static_cast<std::size_t>(opts.sparsity);
      if (k > n) detail::fail(ErrorKind::kInvalidDims, "sparsity exceeds n");
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
      std::shuffle(idx.begin(), idx.end(), rng.engine());
      Vector x_true(n, 0.0);
      for (std::size_t i = 0; i < k; ++i) x_true[idx[i]] = rng.gauss();
      Vector b = multiply(a, x_true);
      std::optional<PrimalDualPoint> ref;
      if (k == 0) ref = PrimalDualPoint{Vector(n, 0.0), Vector(m, 0.0)};
      return {Problem(ObjectiveSpec::l1(1.0), SetSpec::whole_space(), std::move(a), std::move(b),
                      Sense::kEquality),
              std::move(ref)};
    }
    case InstanceKind::kLassoEq: {
      DenseMatrix a = rng.gauss_matrix(m, n, 1.0 / std::sqrt(static_cast<double>(m)));
      Vector b = rng.gauss_vector(m);
      std::vector<Block> blocks;
      blocks.push_back({ObjectiveSpec::quadratic(DenseMatrix::identity(m), Vector(m, 0.0)),
                        SetSpec::whole_space(), DenseMatrix::identity(m, -1.0)});
      blocks.push_back({ObjectiveSpec::l1(opts.lasso_weight), SetSpec::whole_space(), std::move(a)});
      return {SeparableProblem(std::move(blocks), std::move(b), Sense::kEquality), std::nullopt};
    }
    case InstanceKind::kNonnegQpIneq: {
      DenseMatrix p = rng.spd(n);
      Vector c = rng.gauss_vector(n);
      DenseMatrix a = rng.gauss_matrix(m, n);
      // Offsets around the unconstrained minimizer leave roughly half the
      // rows active.
      Vector x_free = scaled(solve_spd(cholesky_factor(p), c), -1.0);
      Vector b = multiply(a, x_free);
      for (double& v : b) v += rng.uniform(-1.0, 1.0);
      return {Problem(ObjectiveSpec::quadratic(std::move(p), std::move(c)), SetSpec::whole_space(),
                      std::move(a), std::move(b), Sense::kInequality),
              std::nullopt};
    }
    case InstanceKind::kRandomQpEq: {
      if (opts.blocks.size() >= 2) {
        std::vector<Block> blocks;
        std::size_t total = 0;
        for (std::size_t ni : opts.blocks) {
          if (ni == 0) detail::fail(ErrorKind::kInvalidDims, "empty block");
          total += ni;
        }
        if (m > total) detail::fail(ErrorKind::kInvalidDims, "random_qp_eq needs m <= n");
        for (std::size_t ni : opts.blocks)
          blocks.push_back({ObjectiveSpec::quadratic(rng.spd(ni), rng.gauss_vector(ni)),
                            SetSpec::whole_space(), rng.gauss_matrix(m, ni)});
        SeparableProblem prob(std::move(blocks), rng.gauss_vector(m), Sense::kEquality);
        Problem flat = merged(prob);
        const auto* q = flat.theta().as<QuadraticObjective>();
        PrimalDualPoint ref = detail::equality_qp_saddle_point(q->P(), q->c(), flat.A(), flat.b());
        return {std::move(prob), std::move(ref)};
      }
      if (m > n) detail::fail(ErrorKind::kInvalidDims, "random_qp_eq needs m <= n");
      if (m == 1 && n == 1)
        return {Problem(ObjectiveSpec::quadratic(DenseMatrix{{1.0}}, Vector{0.0}),
                        SetSpec::whole_space(), DenseMatrix{{1.0}}, Vector{1.0}, Sense::kEquality),
                PrimalDualPoint{{1.0}, {1.0}}};
      DenseMatrix p = rng.spd(n);
      Vector c = rng.gauss_vector(n);
      DenseMatrix a = rng.gauss_matrix(m, n);
      Vector b = rng.gauss_vector(m);
      PrimalDualPoint ref = detail::equality_qp_saddle_point(p, c, a, b);
      return {Problem(ObjectiveSpec::quadratic(std::move(p), std::move(c)), SetSpec::whole_space(),
                      std::move(a), std::move(b), Sense::kEquality),
              std::move(ref)};
    }
  }
  detail::fail(ErrorKind::kConfigInvalid, "unknown instance kind");
}

// ---------------------------------------------------------------------------
// Method selection by name

struct MethodParams {
  double r = 1.0;
  double delta = 1.0;
  double alpha = 1.0;
  std::optional<double> s;
  std::optional<double> sigma;
  std::vector<double> r_list;
  bool sharp_bounds = false;
  InnerSolverOptions inner;
};

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names = {
      "balanced-alm", "generalized-alm", "split-balanced", "alt-split", "classic-alm",
      "lalm",         "primal-dual",     "admm",           "ladmm"};
  return names;
}

inline MethodConfig method_config(const std::string& name, const MethodParams& p,
                                  std::size_t block_count) {
  if (name == "balanced-alm" || name == "generalized-alm")
    return BalancedAlmConfig{p.r, p.delta, p.alpha};
  if (name == "split-balanced") {
    SplitConfig c{p.r_list, p.delta};
    if (c.r_list.empty()) c.r_list.assign(block_count, p.r);
    return c;
  }
  if (name == "alt-split") return AltSplitConfig{p.r, p.s.value_or(p.r), p.delta};
  BaselineConfig b;
  b.r = p.r;
  b.inner = p.inner;
  b.sharp_bounds = p.sharp_bounds;
  if (name == "classic-alm") {
    b.method = BaselineMethod::kClassicAlm;
  } else if (name == "lalm") {
    b.method = BaselineMethod::kLalm;
    b.sigma_or_s = p.sigma.value_or(0.0);
  } else if (name == "primal-dual") {
    b.method = BaselineMethod::kPrimalDual;
    b.sigma_or_s = p.s.value_or(0.0);
  } else if (name == "admm") {
    b.method = BaselineMethod::kAdmm;
  } else if (name == "ladmm") {
    b.method = BaselineMethod::kLinearizedAdmm;
    b.sigma_or_s = p.s.value_or(0.0);
  } else {
    detail::fail(ErrorKind::kConfigInvalid, "unknown method '" + name + "'");
  }
  return b;
}

inline std::size_t block_count(const AnyProblem& p) {
  if (const auto* sp = std::get_if<SeparableProblem>(&p)) return sp->p();
  return 1;
}

inline Method make_method(const AnyProblem& p, const std::string& name,
                          const MethodParams& params) {
  const MethodConfig cfg = method_config(name, params, block_count(p));
  Method m = std::visit([&](const auto& prob) { return make_method(prob, cfg); }, p);
  m.name = name;
  return m;
}

// ---------------------------------------------------------------------------
// History tables
//
// Comment lines "# key=value" carry the method and its parameters, then one
// CSV row per iterate wᵏ: k, KKT components, ‖wᵏ − wᵏ⁺¹‖_H (empty on the last
// row), ‖wᵏ − w*‖_H (empty without a reference), the coordinates of wᵏ and,
// for relaxed runs, of the predictor w̃ᵏ. Numbers use 17 significant digits,
// so iterates replay exactly.

using TableMeta = std::map<std::string, std::string>;

inline TableMeta method_meta(const std::string& name, const MethodParams& p) {
  TableMeta meta;
  meta["method"] = name;
  meta["r"] = io::format_double(p.r);
  meta["delta"] = io::format_double(p.delta);
  // Only the balanced family relaxes; the others always run with α = 1.
  const bool relaxing = name == "balanced-alm" || name == "generalized-alm";
  meta["alpha"] = io::format_double(relaxing ? p.alpha : 1.0);
  if (p.s) meta["s"] = io::format_double(*p.s);
  if (p.sigma) meta["sigma"] = io::format_double(*p.sigma);
  if (!p.r_list.empty()) {
    std::string rl;
    for (std::size_t i = 0; i < p.r_list.size(); ++i)
      rl += (i ? ";" : "") + io::format_double(p.r_list[i]);
    meta["r_list"] = rl;
  }
  meta["sharp_bounds"] = p.sharp_bounds ? "1" : "0";
  meta["inner_tol"] = io::format_double(p.inner.tol);
  meta["inner_max_iters"] = std::to_string(p.inner.max_iters);
  return meta;
}

inline MethodParams params_from_meta(const TableMeta& meta) {
  auto num = [&](const char* key) -> std::optional<double> {
    auto it = meta.find(key);
    if (it == meta.end()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str()) io::schema_error(std::string("history meta ") + key);
    return v;
  };
  MethodParams p;
  p.r = num("r").value_or(p.r);
  p.delta = num("delta").value_or(p.delta);
  p.alpha = num("alpha").value_or(p.alpha);
  p.s = num("s");
  p.sigma = num("sigma");
  if (auto it = meta.find("r_list"); it != meta.end()) {
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ';')) p.r_list.push_back(std::strtod(tok.c_str(), nullptr));
  }
  if (auto it = meta.find("sharp_bounds"); it != meta.end()) p.sharp_bounds = it->second == "1";
  p.inner.tol = num("inner_tol").value_or(p.inner.tol);
  if (auto v = num("inner_max_iters")) p.inner.max_iters = static_cast<int>(*v);
  return p;
}

inline std::string history_table(const RunHistory& h, const TableMeta& meta) {
  std::ostringstream out;
  out << "# schema=" << kHistorySchema << "\n";
  for (const auto& [k, v] : meta) out << "# " << k << "=" << v << "\n";
  const std::size_t n = h.iterates.empty() ? 0 : h.iterates.front().x.size();
  const std::size_t m = h.iterates.empty() ? 0 : h.iterates.front().lambda.size();
  const bool relaxed = std::any_of(h.predictors.begin(), h.predictors.end(),
                                   [](const auto& p) { return p.has_value(); });
  out << "# n=" << n << "\n# m=" << m << "\n";
  out << "k,primal,dual,complementarity,step_h,dist_h";
  for (std::size_t i = 0; i < n; ++i) out << ",x" << i;
  for (std::size_t i = 0; i < m; ++i) out << ",lambda" << i;
  if (relaxed) {
    for (std::size_t i = 0; i < n; ++i) out << ",xt" << i;
    for (std::size_t i = 0; i < m; ++i) out << ",lambdat" << i;
  }
  out << "\n";
  for (std::size_t k = 0; k < h.iterates.size(); ++k) {
    const auto& r = h.residuals[k];
    out << k << "," << io::format_double(r.primal) << "," << io::format_double(r.dual) << ","
        << io::format_double(r.complementarity) << ",";
    if (k < h.successive_h_steps.size()) out << io::format_double(h.successive_h_steps[k]);
    out << ",";
    if (k < h.h_distances.size()) out << io::format_double(h.h_distances[k]);
    for (double v : h.iterates[k].x) out << "," << io::format_double(v);
    for (double v : h.iterates[k].lambda) out << "," << io::format_double(v);
    if (relaxed) {
      const bool has = k < h.predictors.size() && h.predictors[k].has_value();
      for (std::size_t i = 0; i < n; ++i)
        out << "," << (has ? io::format_double(h.predictors[k]->x[i]) : "");
      for (std::size_t i = 0; i < m; ++i)
        out << "," << (has ? io::format_double(h.predictors[k]->lambda[i]) : "");
    }
    out << "\n";
  }
  return out.str();
}

struct ParsedHistory {
  TableMeta meta;
  RunHistory history;  // metric is left empty; rebuild it from meta + problem
};

inline ParsedHistory parse_history_table(const std::string& text) {
  ParsedHistory out;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  std::size_t n = 0, m = 0, columns = 0;
  bool relaxed = false;
  auto cell_number = [](const std::string& s, std::size_t row) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size())
      io::schema_error("history row " + std::to_string(row) + ": bad number '" + s + "'");
    return v;
  };
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) out.meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    std::vector<std::string> cells;
    {
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (!line.empty() && line.back() == ',') cells.emplace_back();
    }
    if (!header_seen) {
      if (out.meta["schema"] != kHistorySchema) io::schema_error("not a balm history table");
      n = std::stoul(out.meta.at("n"));
      m = std::stoul(out.meta.at("m"));
      columns = cells.size();
      if (columns == 6 + n + m) relaxed = false;
      else if (columns == 6 + 2 * (n + m)) relaxed = true;
      else io::schema_error("history header has " + std::to_string(columns) + " columns");
      out.history.method = out.meta["method"];
      out.history.alpha = out.meta.count("alpha") ? std::stod(out.meta["alpha"]) : 1.0;
      header_seen = true;
      continue;
    }
    if (cells.size() != columns)
      io::schema_error("history row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " + std::to_string(columns));
    RunHistory& h = out.history;
    h.residuals.push_back({cell_number(cells[1], row), cell_number(cells[2], row),
                           cell_number(cells[3], row)});
    if (!cells[4].empty()) h.successive_h_steps.push_back(cell_number(cells[4], row));
    if (!cells[5].empty()) h.h_distances.push_back(cell_number(cells[5], row));
    PrimalDualPoint w;
    for (std::size_t i = 0; i < n; ++i) w.x.push_back(cell_number(cells[6 + i], row));
    for (std::size_t i = 0; i < m; ++i) w.lambda.push_back(cell_number(cells[6 + n + i], row));
    h.iterates.push_back(std::move(w));
    if (relaxed && !cells[6 + n + m].empty()) {
      PrimalDualPoint p;
      for (std::size_t i = 0; i < n; ++i) p.x.push_back(cell_number(cells[6 + n + m + i], row));
      for (std::size_t i = 0; i < m; ++i)
        p.lambda.push_back(cell_number(cells[6 + 2 * n + m + i], row));
      h.predictors.emplace_back(std::move(p));
    } else if (!cells[4].empty()) {
      h.predictors.emplace_back(std::nullopt);
    }
    ++row;
  }
  if (!header_seen) io::schema_error("history table has no header");
  return out;
}

// ---------------------------------------------------------------------------
// Matchups

struct ReportRow {
  std::string method;
  std::size_t iterations = 0;
  bool converged = false;
  KktResidual final_kkt;
  double wall_time_seconds = 0.0;
  double objective_value = 0.0;
  std::optional<std::string> history_path;
  std::optional<ErrorKind> error_kind;
  std::string error;

  bool ok() const { return !error_kind.has_value(); }
};

struct MatchupOptions {
  MethodParams params;
  StopRule stop;
  std::optional<PrimalDualPoint> w0;
};

/// Run one named method on the file's problem from a common start.
inline std::pair<ReportRow, std::optional<RunHistory>> run_named(const ProblemFile& file,
                                                                 const std::string& name,
                                                                 const MatchupOptions& opts) {
  ReportRow row;
  row.method = name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    Method method = make_method(file.problem, name, opts.params);
    RunHistory h = std::visit(
        [&](const auto& prob) {
          return run_method(prob, method, opts.stop, opts.w0 ? *opts.w0 : default_start(prob),
                            file.reference);
        },
        file.problem);
    row.iterations = h.steps();
    row.converged = h.converged;
    row.final_kkt = h.residuals.back();
    row.objective_value =
        std::visit([&](const auto& prob) { return objective_value(prob, h.last().x); }, file.problem);
    row.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {row, std::move(h)};
  } catch (const Error& e) {
    row.error_kind = e.kind();
    row.error = e.what();
    row.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {row, std::nullopt};
  }
}

inline std::string report_json(const std::vector<ReportRow>& rows) {
  io::Json j;
  j["schema_version"] = kReportSchema;
  io::Json arr = io::Json::array();
  for (const auto& r : rows) {
    io::Json e;
    e["method"] = r.method;
    if (r.ok()) {
      e["status"] = r.converged ? "converged" : "max_iters";
      e["iterations"] = r.iterations;
      e["final_kkt"] = io::Json{{"primal", r.final_kkt.primal},
                                {"dual", r.final_kkt.dual},
                                {"complementarity", r.final_kkt.complementarity}};
      e["objective_value"] = r.objective_value;
      if (r.history_path) e["history"] = *r.history_path;
    } else {
      e["status"] = "error";
      e["error_kind"] = std::string(to_string(*r.error_kind));
      e["error"] = r.error;
    }
    e["wall_time_seconds"] = r.wall_time_seconds;
    arr.push_back(e);
  }
  j["rows"] = arr;
  return j.dump(2) + "\n";
}

/// Path of the history table written next to a matchup report.
inline std::filesystem::path history_path_for(const std::filesystem::path& report,
                                              const std::string& method) {
  std::filesystem::path p = report;
  p += "." + method + ".csv";
  return p;
}

/// Runs every method from the same start, writes one history table per
/// successful method plus the summary report. Per-method failures are
/// recorded in their row; the other methods still run.
inline std::vector<ReportRow> run_matchup(const ProblemFile& file,
                                          const std::vector<std::string>& methods,
                                          const MatchupOptions& opts,
                                          const std::filesystem::path& report) {
  std::vector<ReportRow> rows;
  for (const auto& name : methods) {
    auto [row, history] = run_named(file, name, opts);
    if (history) {
      const auto path = history_path_for(report, name);
      io::write_atomic(path, history_table(*history, method_meta(name, opts.params)));
      row.history_path = path.string();
    }
    rows.push_back(std::move(row));
  }
  io::write_atomic(report, report_json(rows));
  return rows;
}

/// CLI exit status for an error kind: 1 non-convergence, 2 invalid
/// configuration, 3 I/O or schema problems.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNoConvergence:
    case ErrorKind::kInnerNoConvergence:
      return 1;
    case ErrorKind::kSchemaError:
    case ErrorKind::kIoError:
      return 3;
    default:
      return 2;
  }
}

}  // namespace balm
