// Copyright 2026 The krausflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line harness for the krausflow experiments.
//
// Exit status: 0 on success, 1 on a usage error, 2 on a numerical failure
// (drift, feasibility, invariance). Data goes to --out (or stdout); summaries
// and diagnostics go to stderr.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "krausflow/krausflow.hpp"

namespace kf = krausflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::vector<int> n;
  std::optional<int> d0;
  std::optional<int> e1;
  std::optional<int> runs;
  std::uint64_t seed = 1;
  double stop_eps = 0.01;
  double drift_tol = kf::kDriftHardLimit;
  long max_steps = 100000;
  std::string out;
  std::string records;
  std::optional<std::string> rho;
  std::optional<std::string> theta;
  std::string format = "csv";
  std::string protocol = "element-fixing";
  std::string control = "kraus";
  unsigned workers = 0;
  bool timing = false;
};

kf::ExperimentConfig experiment_config(const Options& o) {
  kf::ExperimentConfig cfg;
  cfg.seed = o.seed;
  cfg.workers = o.workers;
  cfg.timing = o.timing;
  cfg.flow.stop_eps = o.stop_eps;
  cfg.flow.max_steps = o.max_steps;
  cfg.flow.drift_hard_limit = o.drift_tol;
  if (cfg.flow.drift_repair_threshold >= o.drift_tol) {
    cfg.flow.drift_repair_threshold = o.drift_tol / 20.0;
  }
  try {
    cfg.flow.validate();
  } catch (const kf::ContractViolation& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

std::vector<int> n_values(const Options& o, std::vector<int> fallback) {
  return o.n.empty() ? fallback : o.n;
}

int single_n(const Options& o, int fallback) {
  if (o.n.size() > 1) throw UsageError("this command takes a single --n");
  return o.n.empty() ? fallback : o.n.front();
}

int resolve_e1(const Options& o) {
  int e1 = 1;
  if (o.theta) e1 = kf::parse_theta_e1(*o.theta);
  if (o.e1) {
    if (o.theta && *o.e1 != e1) throw UsageError("--e1 disagrees with --theta");
    e1 = *o.e1;
  }
  return e1;
}

std::optional<kf::RhoSpec> resolve_rho(const Options& o, int n) {
  if (o.rho && o.d0) throw UsageError("give either --rho or --d0, not both");
  if (o.rho) return kf::RhoSpec::parse(*o.rho);
  if (o.d0) return kf::RhoSpec::with_rank(n - *o.d0);
  return std::nullopt;
}

// Writes through a file when --out is given, else stdout.
void emit(const std::string& path, const std::function<void(std::ostream&)>& body) {
  if (path.empty()) {
    body(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot open '" + path + "' for writing");
  body(f);
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

void emit_records(const Options& o, const std::string& path,
                  const std::vector<kf::RunRecord>& rs) {
  if (o.format != "csv" && o.format != "jsonlines") {
    throw UsageError("--format must be csv or jsonlines");
  }
  emit(path, [&](std::ostream& os) {
    if (o.format == "csv") {
      kf::write_records_csv(os, rs);
    } else {
      kf::write_records_jsonlines(os, rs);
    }
  });
}

void maybe_emit_records(const Options& o, const std::vector<kf::RunRecord>& rs) {
  if (!o.records.empty()) emit_records(o, o.records, rs);
}

void print_aggregates(const std::vector<kf::AggregateRow>& rows) {
  for (const auto& a : rows) {
    std::cerr << "n=" << a.n << " d0=" << a.d0 << " e1=" << a.e1
              << " rho=" << a.rho_kind << " control=" << a.control_kind
              << " count=" << a.count << " mean_tau=" << a.mean_tau
              << " median_tau=" << a.median_tau
              << " convergence_rate=" << a.convergence_rate << '\n';
  }
}

int cmd_sample_objective(const Options& o) {
  const long samples = o.runs.value_or(10000);
  std::vector<kf::DistributionSummary> ds;
  for (int n : n_values(o, {2, 10})) {
    ds.push_back(kf::exp_objective_distribution(n, samples, o.seed));
    std::cerr << "n=" << n << " samples=" << samples << " mean=" << ds.back().mean
              << " std=" << ds.back().std << '\n';
  }
  emit(o.out, [&](std::ostream& os) { kf::write_distribution_csv(os, ds); });
  return kExitOk;
}

int cmd_trap_scan(const Options& o) {
  const int n = single_n(o, 5);
  const auto cfg = experiment_config(o);
  std::vector<kf::RhoSpec> kinds;
  if (auto r = resolve_rho(o, n)) {
    kinds.push_back(*r);
  } else {
    kinds = {kf::RhoSpec::pure(), kf::RhoSpec::mixed(),
             kf::RhoSpec::maximally_mixed()};
  }
  const auto rs = kf::exp_trap_scan(n, o.runs.value_or(100), kinds, cfg);
  emit_records(o, o.out, rs);
  print_aggregates(kf::aggregate(rs));
  std::cerr << "runs=" << rs.size()
            << " convergence_rate=" << kf::convergence_rate(rs) << '\n';
  return kExitOk;
}

int cmd_scan_n(const Options& o) {
  const auto cfg = experiment_config(o);
  kf::ScalingMode mode;
  if (o.rho && o.d0) throw UsageError("give either --rho or --d0, not both");
  if (o.d0) {
    mode = {kf::ScalingMode::kFixedD0, *o.d0};
  } else if (o.rho) {
    const auto spec = kf::RhoSpec::parse(*o.rho);
    if (spec.kind == kf::RhoKind::kPure) {
      mode = {kf::ScalingMode::kFixedRank, 1};
    } else if (spec.kind == kf::RhoKind::kRank) {
      mode = {kf::ScalingMode::kFixedRank, spec.rank};
    } else if (spec.kind == kf::RhoKind::kMixed) {
      mode = {kf::ScalingMode::kFixedD0, 0};
    } else {
      throw UsageError("scan-n takes --rho pure, mixed or rank:<k>");
    }
  }
  const auto rs = kf::exp_scaling(n_values(o, {2, 3, 4, 5, 6, 7, 8}), mode,
                                  o.runs.value_or(50), cfg);
  const auto agg = kf::aggregate(rs);
  emit(o.out, [&](std::ostream& os) { kf::write_aggregates_csv(os, agg); });
  maybe_emit_records(o, rs);
  print_aggregates(agg);
  return kExitOk;
}

int cmd_scan_degeneracy(const Options& o) {
  const auto cfg = experiment_config(o);
  const auto res =
      kf::exp_degeneracy(single_n(o, 6), o.runs.value_or(25), cfg);
  emit(o.out, [&](std::ostream& os) { kf::write_degeneracy_csv(os, res); });
  maybe_emit_records(o, res.records);
  std::cerr << "spearman(median_tau, dim_max)=" << res.spearman_tau_dim << '\n';
  return kExitOk;
}

int cmd_compare_unitary(const Options& o) {
  const auto cfg = experiment_config(o);
  std::vector<kf::RhoSpec> kinds;
  if (o.rho) {
    kinds.push_back(kf::RhoSpec::parse(*o.rho));
  } else {
    kinds = {kf::RhoSpec::pure(), kf::RhoSpec::mixed()};
  }
  const auto rs = kf::exp_compare_unitary(n_values(o, {4, 6, 8}),
                                          o.runs.value_or(50), kinds, cfg);
  const auto agg = kf::aggregate(rs);
  emit(o.out, [&](std::ostream& os) { kf::write_aggregates_csv(os, agg); });
  maybe_emit_records(o, rs);
  print_aggregates(agg);
  return kExitOk;
}

int cmd_constrained(const Options& o) {
  const auto cfg = experiment_config(o);
  kf::ConstrainedResult res;
  if (o.protocol == "general") {
    res = kf::exp_constrained_general(n_values(o, {2, 3, 4}), 5, 5,
                                      o.runs.value_or(10), cfg);
  } else if (o.protocol == "element-fixing") {
    res = kf::exp_constrained_element_fixing(n_values(o, {2, 3, 4, 5}),
                                             o.runs.value_or(25), cfg);
  } else {
    throw UsageError("--protocol must be general or element-fixing");
  }
  emit(o.out, [&](std::ostream& os) { kf::write_constrained_csv(os, res); });
  maybe_emit_records(o, res.records);
  std::cerr << "runs=" << res.records.size()
            << " feasibility_failures=" << res.feasibility_failures
            << " max_violation=" << res.max_violation();
  if (o.protocol == "general") {
    std::cerr << " rejected_sets=" << res.rejected_sets
              << " max_restart_spread=" << res.max_spread() << '\n';
  } else {
    std::cerr << " max_analytic_gap=" << res.max_analytic_gap() << '\n';
  }
  return res.feasibility_failures == 0 ? kExitOk : kExitNumerical;
}

int cmd_flow(const Options& o) {
  const int n = single_n(o, 3);
  auto cfg = experiment_config(o);
  cfg.flow.record_steps = true;
  kf::SeededStream rng(o.seed, 0);
  const kf::RhoSpec rho = resolve_rho(o, n).value_or(kf::RhoSpec::mixed());
  const kf::ControlProblem p(rho.sample(n, rng), kf::random_theta(n, resolve_e1(o)));
  kf::Trajectory t;
  if (o.control == "kraus") {
    t = kf::flow_ascent(kf::random_stiefel(n, rng), p, cfg.flow);
  } else if (o.control == "unitary") {
    t = kf::flow_unitary(kf::haar_unitary(n, rng), p, cfg.flow);
  } else {
    throw UsageError("--control must be kraus or unitary");
  }
  emit(o.out, [&](std::ostream& os) { kf::write_step_csv(os, t); });
  std::cerr << "tau=" << t.tau << " lambda=" << t.lambda
            << " j_initial=" << t.initial_value() << " j_final=" << t.final_value()
            << " converged=" << (t.converged ? "true" : "false")
            << " stop=" << kf::to_string(t.stop_reason)
            << " max_drift=" << t.max_drift() << '\n';
  return kExitOk;
}

// Quick invariant checks on a handful of random instances.
int cmd_selftest(const Options& o) {
  kf::SeededStream rng(o.seed, 0);
  int failures = 0;
  auto check = [&](const std::string& name, bool ok, double value) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << " (" << value << ")\n";
    failures += ok ? 0 : 1;
  };
  const int n = single_n(o, 3);
  const kf::StiefelPoint s = kf::random_stiefel(n, rng);
  const kf::ControlProblem p(
      kf::random_rho(n, 0, kf::ZeroPlacement::kRandomPositions, rng),
      kf::random_theta(n, 1));
  check("stiefel orthonormality", s.drift() < 1e-12, s.drift());

  const kf::CMatrix a = kf::complex_gaussian(s.matrix().rows(), n, rng);
  const kf::CMatrix pa = kf::project_tangent(s.matrix(), a);
  const double idem = (kf::project_tangent(s.matrix(), pa) - pa).norm();
  check("tangent projector idempotent", idem < 1e-10, idem);

  const kf::TangentVector dir = kf::tangent_project(s, a);
  const double h = 1e-5;
  const double fd = (kf::detail::objective_value(p, s.matrix() + h * dir.matrix()) -
                     kf::detail::objective_value(p, s.matrix() - h * dir.matrix())) /
                    (2 * h);
  const double an = kf::hs_inner(kf::gradient(s, p), dir);
  const double rel = std::abs(fd - an) / std::max(1.0, std::abs(an));
  check("gradient matches finite differences", rel < 1e-6, rel);

  const double jy = kf::objective_yform(s, p);
  const double jd = kf::objective(s, p);
  check("objective forms agree", std::abs(jy - jd) < 1e-12, std::abs(jy - jd));

  const kf::WTransform w(kf::haar_unitary(n * n, rng));
  const double jw = kf::objective(kf::apply_w(w, s), p);
  check("objective W-invariant", std::abs(jw - jd) < 1e-12, std::abs(jw - jd));

  const auto t = kf::flow_ascent(s, p, experiment_config(o).flow);
  bool monotone = true;
  for (std::size_t i = 1; i < t.objective_series.size(); ++i) {
    monotone = monotone && t.objective_series[i] >= t.objective_series[i - 1] - 1e-9;
  }
  check("flow converges", t.converged, t.final_value());
  check("flow monotone", monotone, static_cast<double>(t.tau));
  check("flow drift below limit", t.max_drift() < kf::kDriftHardLimit, t.max_drift());

  const auto tu = kf::flow_unitary(kf::haar_unitary(n, rng), p, experiment_config(o).flow);
  check("unitary flow reaches rho_max", tu.converged, tu.final_value());
  return failures == 0 ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"krausflow: gradient flows for Kraus-map control landscapes"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;

  app.add_option("--n", o.n, "System dimension(s), comma separated")
      ->delimiter(',')
      ->check(CLI::Range(2, 64));
  app.add_option("--d0", o.d0, "Zero eigenvalues of rho")->check(CLI::NonNegativeNumber);
  app.add_option("--e1", o.e1, "Multiplicity of the top eigenvalue of Theta")
      ->check(CLI::PositiveNumber);
  app.add_option("--runs", o.runs, "Runs (or samples) per point")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--stop-eps", o.stop_eps, "Stop once J > target - eps")
      ->check(CLI::PositiveNumber);
  app.add_option("--drift-tol", o.drift_tol, "Hard orthonormality drift limit")
      ->check(CLI::PositiveNumber);
  app.add_option("--max-steps", o.max_steps, "Accepted-step budget per flow")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", o.out, "Output file (default stdout)");
  app.add_option("--records", o.records, "Also write raw run records here");
  app.add_option("--rho", o.rho, "pure | mixed | maximally-mixed | rank:<k>");
  app.add_option("--theta", o.theta, "projector | degenerate:<e1>");
  app.add_option("--format", o.format, "Run-record format")
      ->check(CLI::IsMember({"csv", "jsonlines"}));
  app.add_option("--workers", o.workers, "Worker threads (0: all cores)");
  app.add_flag("--timing", o.timing, "Fill wall_ms (output no longer reproducible)");

  std::function<int(const Options&)> action;
  auto sub = [&](const char* name, const char* help,
                 int (*fn)(const Options&)) {
    auto* c = app.add_subcommand(name, help);
    c->callback([&action, fn] { action = fn; });
    return c;
  };
  sub("sample-objective", "Distribution of J at random controls", cmd_sample_objective);
  sub("trap-scan", "Flows from random starts for pure, mixed and maximally mixed rho",
      cmd_trap_scan);
  sub("scan-n", "Step counts versus N at fixed rank or fixed d0", cmd_scan_n);
  sub("scan-degeneracy", "Median step counts over the (d0, e1) grid", cmd_scan_degeneracy);
  sub("compare-unitary", "Kraus-map versus unitary flows toward rho_max",
      cmd_compare_unitary);
  sub("constrained", "Flows under linear W-invariant constraints", cmd_constrained)
      ->add_option("--protocol", o.protocol, "general | element-fixing")
      ->check(CLI::IsMember({"general", "element-fixing"}));
  sub("flow", "One trajectory with a per-step record", cmd_flow)
      ->add_option("--control", o.control, "kraus | unitary")
      ->check(CLI::IsMember({"kraus", "unitary"}));
  sub("selftest", "Run the invariant checks", cmd_selftest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) {
      std::cerr << app.help();
      return kExitUsage;
    }
    return kExitOk;
  }

  try {
    return action(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const kf::ContractViolation& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const kf::DimensionError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const kf::Error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
