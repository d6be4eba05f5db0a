// balm: generate instances, run solvers, compare them and replay
// certificates from recorded histories.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "balm/balm.hpp"

namespace {

struct ParamFlags {
  double r = 1.0;
  double delta = 1.0;
  double alpha = 1.0;
  double s = 0.0;
  double sigma = 0.0;
  std::vector<double> r_list;
  bool sharp = false;
  double tol = 1e-8;
  int max_iters = 100000;
  double inner_tol = 1e-10;
  int inner_max_iters = 50000;

  void add_to(CLI::App* app) {
    app->add_option("--r", r, "penalty / proximal parameter r");
    app->add_option("--delta", delta, "regularization delta of the multiplier metric");
    app->add_option("--alpha", alpha, "relaxation factor in (0, 2)");
    app->add_option("--s", s, "second step parameter (primal-dual, ladmm, alt-split)");
    app->add_option("--sigma", sigma, "LALM proximal parameter (0 = auto)");
    app->add_option("--r-list", r_list, "per-block r for split-balanced")->delimiter(',');
    app->add_flag("--sharp-bounds", sharp, "use the sharp 0.75 step bounds for linearized baselines");
    app->add_option("--tol", tol, "KKT tolerance");
    app->add_option("--max-iters", max_iters, "iteration cap");
    app->add_option("--inner-tol", inner_tol, "tolerance of inner subproblem solves");
    app->add_option("--inner-max-iters", inner_max_iters, "cap of inner subproblem solves");
  }

  balm::MethodParams params() const {
    balm::MethodParams p;
    p.r = r;
    p.delta = delta;
    p.alpha = alpha;
    if (s != 0.0) p.s = s;
    if (sigma != 0.0) p.sigma = sigma;
    p.r_list = r_list;
    p.sharp_bounds = sharp;
    p.inner = {inner_tol, inner_max_iters};
    return p;
  }

  balm::StopRule stop() const { return {max_iters, tol}; }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string fmt(double v) { return balm::io::format_double(v); }

int cmd_generate(const std::string& kind, const balm::GenerateOptions& opts,
                 const std::string& out) {
  balm::ProblemFile pf = balm::generate_instance(balm::parse_instance_kind(kind), opts);
  balm::write_problem_file(out, pf);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_solve(const std::string& problem, const std::string& method, const ParamFlags& flags,
              const std::string& history, const std::string& reference) {
  balm::ProblemFile pf = balm::read_problem_file(problem);
  std::optional<balm::PrimalDualPoint> ref = pf.reference;
  if (!reference.empty()) ref = balm::read_reference_file(reference);
  balm::MatchupOptions opts{flags.params(), flags.stop(), std::nullopt};
  balm::ProblemFile run_file{pf.problem, ref};
  auto [row, h] = balm::run_named(run_file, method, opts);
  if (!row.ok()) throw balm::Error(*row.error_kind, row.error);
  if (!history.empty())
    balm::io::write_atomic(history, balm::history_table(*h, balm::method_meta(method, opts.params)));
  std::printf("method %s\niterations %zu\nconverged %s\n", method.c_str(), row.iterations,
              row.converged ? "yes" : "no");
  std::printf("kkt primal %s dual %s complementarity %s\nobjective %s\n",
              fmt(row.final_kkt.primal).c_str(), fmt(row.final_kkt.dual).c_str(),
              fmt(row.final_kkt.complementarity).c_str(), fmt(row.objective_value).c_str());
  return row.converged ? 0 : 1;
}

int cmd_matchup(const std::string& problem, const std::string& methods, const ParamFlags& flags,
                const std::string& report) {
  balm::ProblemFile pf = balm::read_problem_file(problem);
  balm::MatchupOptions opts{flags.params(), flags.stop(), std::nullopt};
  auto rows = balm::run_matchup(pf, split_list(methods), opts, report);
  for (const auto& r : rows) {
    if (r.ok())
      std::printf("%-16s %8zu  %-9s  kkt %.3e  obj %s\n", r.method.c_str(), r.iterations,
                  r.converged ? "converged" : "max_iters", r.final_kkt.max(),
                  fmt(r.objective_value).c_str());
    else
      std::printf("%-16s error %s\n", r.method.c_str(), r.error.c_str());
  }
  std::printf("report %s\n", report.c_str());
  return 0;
}

int cmd_certify(const std::string& history_path, const std::string& problem,
                const std::string& checks, const std::string& reference,
                const std::vector<std::size_t>& ts, std::size_t probes, std::uint64_t seed) {
  balm::ProblemFile pf = balm::read_problem_file(problem);
  balm::ParsedHistory parsed = balm::parse_history_table(balm::io::read_text(history_path));
  const std::string method = parsed.meta.count("method") ? parsed.meta.at("method") : "";
  const balm::MethodParams params = balm::params_from_meta(parsed.meta);
  balm::Method m = balm::make_method(pf.problem, method, params);
  parsed.history.metric = m.metric;
  std::optional<balm::PrimalDualPoint> ref = pf.reference;
  if (!reference.empty()) ref = balm::read_reference_file(reference);

  bool all_pass = true;
  for (const auto& check : split_list(checks)) {
    if (check == "contraction") {
      auto ledger = balm::contraction_ledger(parsed.history, m.metric, ref, params.alpha);
      std::size_t failed = 0;
      double worst = std::numeric_limits<double>::infinity();
      for (const auto& c : ledger) {
        if (!c.passes()) ++failed;
        worst = std::min(worst, c.slack);
      }
      std::printf("contraction steps %zu failed %zu min_slack %s\n", ledger.size(), failed,
                  ledger.empty() ? "n/a" : fmt(worst).c_str());
      all_pass = all_pass && failed == 0;
    } else if (check == "gap") {
      for (std::size_t t : ts) {
        auto cert = balm::visit_problem(pf.problem, [&](const auto& prob) {
          return balm::vi_gap(prob, parsed.history, m.metric, t, probes, seed);
        });
        std::printf("gap t %zu probes %zu max_lhs %s worst_excess %s %s\n", t, probes,
                    fmt(cert.max_lhs).c_str(), fmt(cert.worst_excess).c_str(),
                    cert.passes() ? "pass" : "FAIL");
        all_pass = all_pass && cert.passes();
      }
    } else {
      throw balm::Error(balm::ErrorKind::kConfigInvalid, "unknown check '" + check + "'");
    }
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"balanced augmented Lagrangian solvers and benchmarks"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write a seeded problem instance");
  std::string kind, out;
  balm::GenerateOptions gopts;
  gen->add_option("--kind", kind, "basis_pursuit | lasso_eq | nonneg_qp_ineq | random_qp_eq")
      ->required();
  gen->add_option("--m", gopts.m, "constraint rows");
  gen->add_option("--n", gopts.n, "variables");
  gen->add_option("--blocks", gopts.blocks, "block sizes (random_qp_eq)")->delimiter(',');
  gen->add_option("--seed", gopts.seed, "random seed");
  gen->add_option("--sparsity", gopts.sparsity, "planted nonzeros (basis_pursuit)");
  gen->add_option("--out", out, "problem file")->required();

  ParamFlags solve_flags;
  auto* solve = app.add_subcommand("solve", "run one method");
  std::string problem, method = "balanced-alm", history, reference;
  solve->add_option("--problem", problem)->required();
  solve->add_option("--method", method);
  solve->add_option("--history", history, "history table to write");
  solve->add_option("--reference", reference, "saddle point for H-distances");
  solve_flags.add_to(solve);

  ParamFlags match_flags;
  auto* match = app.add_subcommand("matchup", "run several methods from the same start");
  std::string methods, report;
  match->add_option("--problem", problem)->required();
  match->add_option("--methods", methods, "comma separated method names")->expected(0, 1);
  match->add_option("--report", report)->required();
  match_flags.add_to(match);

  auto* cert = app.add_subcommand("certify", "replay a history against the certificates");
  std::string checks = "contraction,gap";
  std::vector<std::size_t> ts = {10};
  std::size_t probes = 500;
  std::uint64_t seed = 0;
  cert->add_option("--history", history)->required();
  cert->add_option("--problem", problem)->required();
  cert->add_option("--check", checks, "contraction,gap");
  cert->add_option("--reference", reference, "saddle point file");
  cert->add_option("--t", ts, "ergodic horizons")->delimiter(',');
  cert->add_option("--probes", probes, "probe count per horizon");
  cert->add_option("--seed", seed, "probe seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(kind, gopts, out);
    if (solve->parsed()) return cmd_solve(problem, method, solve_flags, history, reference);
    if (match->parsed()) return cmd_matchup(problem, methods, match_flags, report);
    if (cert->parsed())
      return cmd_certify(history, problem, checks, reference, ts, probes, seed);
  } catch (const balm::Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(balm::to_string(e.kind())).c_str(),
                 e.what());
    return balm::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 2;
}
