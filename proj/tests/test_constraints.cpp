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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <sstream>

#include "krausflow/constraints.hpp"
#include "oracles.hpp"

using namespace krausflow;

namespace {

ControlProblem projector_problem(const RVector& rho) {
  return ControlProblem(rho, random_theta(static_cast<int>(rho.size()), 1));
}

double max_anchor_leak(const ConstraintSet& cs, const StiefelPoint& s,
                       const CMatrix& w) {
  double worst = 0.0;
  for (int k = 0; k < cs.size(); ++k) {
    worst = std::max(worst, std::abs(hs_inner(cs.anchor(k).dense(s.n()), w)));
  }
  return worst;
}

}  // namespace

TEST_CASE("anchors encode the traces", "[constraints]") {
  SeededStream rng(60);
  const ConstraintSet cs = random_general_constraints(3, 2, rng);
  REQUIRE(cs.size() == 2 * 2 * 9);
  const StiefelPoint s = random_stiefel(3, rng);
  const RVector h = cs.values(s);
  const auto blocks = s.blocks();
  for (int j = 0; j < 9; ++j) {
    for (int i = 0; i < 2; ++i) {
      const Complex c = (cs.bs()[i].adjoint() * blocks[j]).trace();
      const int k = j * 2 + i;
      CHECK(std::abs(h(k) - c.real()) <= 1e-13);
      CHECK(std::abs(h(cs.size() / 2 + k) - c.imag()) <= 1e-13);
    }
  }
  CHECK(std::abs(cs.residual(s.matrix()) - h.squaredNorm()) <= 1e-13);
}

TEST_CASE("residual is invariant under W", "[constraints]") {
  SeededStream rng(61);
  const ConstraintSet cs = random_general_constraints(2, 1, rng);
  const StiefelPoint s = random_stiefel(2, rng);
  const StiefelPoint ws = apply_w(WTransform(haar_unitary(4, rng)), s);
  CHECK(std::abs(cs.residual(s.matrix()) - cs.residual(ws.matrix())) <= 1e-12);
}

TEST_CASE("residual gradient matches finite differences", "[constraints]") {
  SeededStream rng(62);
  const ConstraintSet cs = random_general_constraints(2, 1, rng);
  const CMatrix s = random_stiefel(2, rng).matrix();
  const CMatrix d = complex_gaussian(s.rows(), s.cols(), rng);
  const double t = 1e-6;
  const double fd = (cs.residual(s + t * d) - cs.residual(s - t * d)) / (2 * t);
  CHECK(std::abs(fd - hs_inner(cs.residual_gradient(s), d)) <= 1e-7);
}

TEST_CASE("fast projector agrees with the Gram route", "[constraints]") {
  SeededStream rng(63);
  for (int n = 2; n <= 3; ++n) {
    const ConstraintSet general = random_general_constraints(n, n - 1 + (n == 3), rng);
    const ConstraintSet fixing = build_element_fixing(
        n, random_fixed_entries(n, std::min(n, max_constraint_count(n)), rng));
    for (const ConstraintSet* cs : {&general, &fixing}) {
      const StiefelPoint s = random_stiefel(n, rng);
      const CMatrix v = complex_gaussian(s.matrix().rows(), n, rng);
      const TangentVector slow = constrained_project(s, *cs, tangent_project(s, v));
      const CMatrix fast = ConstrainedTangentProjector(*cs, s.matrix())(v);
      CHECK((slow.matrix() - fast).norm() <= 1e-10);
      CHECK(tangency_defect(s.matrix(), fast) <= 1e-10);
      CHECK(max_anchor_leak(*cs, s, fast) <= 1e-9);
      // Idempotent.
      const CMatrix twice = ConstrainedTangentProjector(*cs, s.matrix())(fast);
      CHECK((twice - fast).norm() <= 1e-10);
    }
  }
}

TEST_CASE("feasibility descent reaches the constraint set", "[constraints]") {
  SeededStream rng(64);
  const ConstraintSet cs = build_element_fixing(2, {{0, 1}});
  const FeasibilityResult r = find_feasible_point(cs, rng, FlowConfig{});
  CHECK(r.feasible);
  CHECK(r.residual < 1e-10);
  CHECK(cs.max_violation(r.point.matrix()) <= 1e-6);
  CHECK(orthonormality_defect(r.point.matrix()) <= 1e-10);
  const auto& f = r.trajectory.objective_series;
  for (std::size_t i = 1; i < f.size(); ++i) CHECK(f[i] <= f[i - 1] + 1e-14);

  // Already feasible: nothing to do.
  const FeasibilityResult again = feasibility_descent(r.point, cs, FlowConfig{});
  CHECK(again.feasible);
  CHECK(again.iterations == 0);
}

TEST_CASE("general constraints are satisfiable", "[constraints]") {
  SeededStream rng(65);
  // Draws near the count limit are often unsatisfiable, so stay below it.
  for (int n = 2; n <= 4; ++n) {
    const int count = n == 2 ? 1 : n * n - 2 * n;
    const ConstraintSet cs = random_general_constraints(n, count, rng);
    const FeasibilityResult r = find_feasible_point(cs, rng, FlowConfig{});
    CHECK(r.feasible);
    CHECK(cs.max_violation(r.point.matrix()) <= 1e-8);
  }
}

TEST_CASE("element fixing reaches the analytic optimum", "[constraints]") {
  SeededStream rng(66);
  RVector rho(3);
  rho << 0.5, 0.3, 0.2;
  const ControlProblem p = projector_problem(rho);
  const std::vector<int> rows{2};
  const std::vector<int> cols{0};
  const ConstraintSet cs = build_element_fixing(3, rows, cols);
  CHECK(std::abs(analytic_jmax_element_fixing(p, rows, cols) - 0.5) <= 1e-15);

  const FeasibilityResult start = find_feasible_point(cs, rng, FlowConfig{});
  FlowConfig cfg;
  cfg.target_value = std::numeric_limits<double>::infinity();
  cfg.stationary_tol = 1e-6;
  const Trajectory t = flow_ascent_constrained(start.point, p, cs, cfg);
  CHECK(t.converged);
  CHECK(std::abs(t.final_value() - 0.5) <= 1e-5);
  CHECK(cs.max_violation(t.final_point.matrix()) <= 1e-7);
  for (std::size_t i = 1; i < t.objective_series.size(); ++i) {
    CHECK(t.objective_series[i] >= t.objective_series[i - 1] - 1e-10);
  }
}

TEST_CASE("analytic optimum needs the level projector", "[constraints]") {
  RVector rho(2);
  rho << 0.6, 0.4;
  RVector theta(2);
  theta << 0.5, 1.0;
  const ControlProblem p(rho, theta);
  CHECK_THROWS_AS(analytic_jmax_element_fixing(p, {EntryIndex{1, 0}}),
                  CapabilityError);
  // Two entries in the same column count once.
  RVector rho3(3);
  rho3 << 0.2, 0.3, 0.5;
  const ControlProblem p3 = projector_problem(rho3);
  CHECK(std::abs(analytic_jmax_element_fixing(p3, {{2, 1}, {0, 0}}) - 0.7) <= 1e-15);
}

TEST_CASE("dispatch over vector fields", "[constraints]") {
  SeededStream rng(67);
  RVector rho(2);
  rho << 0.6, 0.4;
  const ControlProblem p = projector_problem(rho);
  const ConstraintSet cs = build_element_fixing(2, {{0, 1}});
  const StiefelPoint s0 = random_stiefel(2, rng);
  const Trajectory full = flow_ascent(s0, p, FlowConfig{}, FullGradient{});
  CHECK(full.converged);
  const Trajectory feas = flow_ascent(s0, p, FlowConfig{}, FeasibilityField{&cs});
  CHECK(feas.final_value() < 1e-10);
  CHECK_THROWS_AS(flow_ascent(s0, p, FlowConfig{}, ConstrainedGradient{&cs}),
                  ContractViolation);
}

TEST_CASE("constraint validation", "[constraints]") {
  CHECK_THROWS_AS(build_element_fixing(2, {{0, 0}, {0, 0}}), ContractViolation);
  CHECK_THROWS_AS(build_element_fixing(2, {{2, 0}}), ContractViolation);
  CHECK_THROWS_AS(build_element_fixing(3, {{0, 0}, {1, 0}, {2, 0}}), ContractViolation);
  CHECK_THROWS_AS(build_element_fixing(2, {{0, 0}, {1, 1}}), ContractViolation);
  CHECK_THROWS_AS(build_element_fixing(2, std::vector<int>{0}, std::vector<int>{0, 1}),
                  ContractViolation);
  CHECK_THROWS_AS(build_general({CMatrix::Zero(2, 2)}), ContractViolation);
  CHECK_THROWS_AS(build_general({CMatrix::Identity(2, 2), CMatrix::Identity(2, 2)}),
                  ContractViolation);
  CHECK_THROWS(build_general({CMatrix::Identity(2, 2), CMatrix::Identity(3, 3)}));
  CHECK(max_constraint_count(2) == 1);
  CHECK(max_constraint_count(5) == 19);
}

TEST_CASE("constraint files round trip", "[constraints]") {
  SeededStream rng(68);
  const ConstraintSet g = random_general_constraints(3, 2, rng);
  std::stringstream ss;
  write_constraints(ss, g);
  const ConstraintSet g2 = read_constraints(ss);
  REQUIRE(g2.kind() == ConstraintKind::kGeneral);
  REQUIRE(g2.num_b() == 2);
  for (int i = 0; i < 2; ++i) CHECK((g2.bs()[i] - g.bs()[i]).norm() == 0.0);

  std::istringstream fix("# two pinned entries\nn 3\nfix 3 1\nfix 1 2\n");
  const ConstraintSet f = read_constraints(fix);
  REQUIRE(f.kind() == ConstraintKind::kElementFixing);
  REQUIRE(f.fixed_entries().size() == 2);
  std::stringstream out;
  write_constraints(out, f);
  const ConstraintSet f2 = read_constraints(out);
  CHECK(f2.fixed_entries() == f.fixed_entries());

  std::istringstream mixed("n 2\nfix 1 1\nb 1 0 0 0 0 0 0 0\n");
  CHECK_THROWS_AS(read_constraints(mixed), ContractViolation);
  std::istringstream bad("n 2\nfix 3 1\n");
  CHECK_THROWS_AS(read_constraints(bad), ContractViolation);
  std::istringstream nonum("n 2\nb 1 0 x\n");
  CHECK_THROWS_AS(read_constraints(nonum), ContractViolation);
}
