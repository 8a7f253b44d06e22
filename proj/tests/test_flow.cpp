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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "krausflow/flow.hpp"
#include "oracles.hpp"

using namespace krausflow;

namespace {

ControlProblem projector_problem(int n, int d0, SeededStream& rng) {
  return ControlProblem(random_rho(n, d0, ZeroPlacement::kRandomPositions, rng),
                        random_theta(n, 1));
}

bool monotone(const Trajectory& t, double tol) {
  for (std::size_t i = 1; i < t.objective_series.size(); ++i) {
    if (t.objective_series[i] < t.objective_series[i - 1] - tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("integrator matches an exact rotation", "[flow]") {
  // dS/dsigma = A S with A skew-Hermitian: S(1) = exp(A) S(0).
  SeededStream rng(40);
  const int n = 2;
  const StiefelPoint s0 = random_stiefel(n, rng);
  const CMatrix g = complex_gaussian(8, 8, rng);
  const CMatrix h = 0.5 * (g + g.adjoint());
  const CMatrix a = Complex(0.0, 1.0) * h;
  const HermitianSpectrum es = hermitian_eig(h);
  CMatrix phase = CMatrix::Zero(8, 8);
  for (int i = 0; i < 8; ++i) phase(i, i) = std::exp(Complex(0.0, es.eigenvalues(i)));
  const CMatrix exact = es.eigenvectors * phase * es.eigenvectors.adjoint() * s0.matrix();
  FlowConfig cfg;
  cfg.max_sigma = 1.0;
  const Trajectory t = integrate_flow(
      s0, cfg, [&](const CMatrix& s) { return CMatrix(a * s); },
      [](const CMatrix&) { return 0.0; }, [](double) { return false; },
      detail::polar_repair(cfg), [](const CMatrix&) {});
  CHECK(t.stop_reason == StopReason::kMaxSigma);
  CHECK(std::abs(t.sigma_final - 1.0) <= 1e-12);
  CHECK((t.final_point.matrix() - exact).norm() <= 1e-5);
}

TEST_CASE("flow reaches the maximum and is monotone", "[flow]") {
  SeededStream rng(41);
  for (int n = 2; n <= 5; ++n) {
    for (int d0 : {0, n - 1}) {
      const ControlProblem p = projector_problem(n, d0, rng);
      const StiefelPoint s0 = random_stiefel(n, rng);
      const Trajectory t = flow_ascent(s0, p, FlowConfig{});
      CHECK(t.converged);
      CHECK(t.stop_reason == StopReason::kTarget);
      CHECK(t.final_value() > 0.99);
      CHECK(monotone(t, 1e-10));
      CHECK(t.max_drift() < kDriftHardLimit);
      CHECK(t.objective_series.size() == static_cast<std::size_t>(t.tau + 1));
      CHECK(t.lambda >= (t.final_point.matrix() - s0.matrix()).norm());
    }
  }
}

TEST_CASE("flow bookkeeping", "[flow]") {
  SeededStream rng(42);
  const ControlProblem p = projector_problem(3, 0, rng);
  const StiefelPoint s0 = random_stiefel(3, rng);
  FlowConfig cfg;
  cfg.record_steps = true;
  const Trajectory t = flow_ascent(s0, p, cfg);
  REQUIRE(t.converged);
  CHECK(t.steps.size() == t.objective_series.size());
  CHECK(t.lambda >= (t.final_point.matrix() - s0.matrix()).norm());
  CHECK(std::abs(t.initial_value() - objective(s0, p)) <= 1e-14);

  std::ostringstream os;
  write_step_csv(os, t);
  const std::string csv = os.str();
  CHECK(csv.rfind("sigma,J,drift,step_size\n", 0) == 0);
  CHECK(static_cast<long>(std::count(csv.begin(), csv.end(), '\n')) == t.tau + 2);

  // Deterministic: the same inputs give the same trajectory.
  const Trajectory again = flow_ascent(s0, p, cfg);
  CHECK(again.tau == t.tau);
  CHECK(again.lambda == t.lambda);
  CHECK(again.objective_series == t.objective_series);
}

TEST_CASE("path length is additive across a resumed run", "[flow]") {
  SeededStream rng(43);
  const ControlProblem p = projector_problem(3, 0, rng);
  const StiefelPoint s0 = random_stiefel(3, rng);
  FlowConfig full;
  const Trajectory whole = flow_ascent(s0, p, full);
  REQUIRE(whole.tau > 4);
  FlowConfig first = full;
  first.max_steps = whole.tau / 2;
  const Trajectory a = flow_ascent(s0, p, first);
  REQUIRE(a.stop_reason == StopReason::kMaxSteps);
  FlowConfig second = full;
  second.initial_step = a.next_step_size;
  const Trajectory b = flow_ascent(a.final_point, p, second);
  CHECK(a.tau + b.tau == whole.tau);
  CHECK(std::abs(a.lambda + b.lambda - whole.lambda) <= 1e-12 * whole.lambda);
}

TEST_CASE("start above the threshold stops immediately", "[flow]") {
  SeededStream rng(44);
  const ControlProblem p = projector_problem(2, 0, rng);
  const Trajectory t = flow_ascent(oracle::exact_maximizer(p), p, FlowConfig{});
  CHECK(t.converged);
  CHECK(t.tau == 0);
  CHECK(t.lambda == 0.0);
}

TEST_CASE("stationary start does not move", "[flow]") {
  SeededStream rng(45);
  const ControlProblem p = projector_problem(2, 0, rng);
  CMatrix s = CMatrix::Zero(8, 2);
  s(0, 0) = 1.0;
  s(2, 1) = 1.0;
  FlowConfig cfg;
  cfg.max_steps = 200;
  const Trajectory t = flow_ascent(StiefelPoint::from_matrix(2, s), p, cfg);
  CHECK_FALSE(t.converged);
  CHECK(t.lambda <= 1e-6);
  cfg.stationary_tol = 1e-9;
  const Trajectory st = flow_ascent(StiefelPoint::from_matrix(2, s), p, cfg);
  CHECK(st.converged);
  CHECK(st.stop_reason == StopReason::kStationary);
}

TEST_CASE("Frobenius error control also converges", "[flow]") {
  SeededStream rng(46);
  const ControlProblem p = projector_problem(4, 0, rng);
  FlowConfig cfg;
  cfg.error_norm = ErrorNorm::kFrobenius;
  const Trajectory t = flow_ascent(random_stiefel(4, rng), p, cfg);
  CHECK(t.converged);
  CHECK(monotone(t, 1e-10));
}

TEST_CASE("config validation", "[flow]") {
  SeededStream rng(47);
  const ControlProblem p = projector_problem(2, 0, rng);
  const StiefelPoint s = random_stiefel(2, rng);
  FlowConfig cfg;
  cfg.stop_eps = 0.0;
  CHECK_THROWS_AS(flow_ascent(s, p, cfg), ContractViolation);
  cfg = FlowConfig{};
  cfg.drift_repair_threshold = 1e-3;
  CHECK_THROWS_AS(flow_ascent(s, p, cfg), ContractViolation);
  CHECK_THROWS_AS(flow_ascent(random_stiefel(3, rng), p, FlowConfig{}), DimensionError);
}

TEST_CASE("unitary flow stays on the submanifold", "[flow]") {
  SeededStream rng(48);
  for (int t = 0; t < 5; ++t) {
    const ControlProblem p = projector_problem(3, 0, rng);
    const Trajectory tr = flow_unitary(haar_unitary(3, rng), p, FlowConfig{});
    CHECK(tr.converged);
    CHECK(tr.max_submanifold_distance <= 1e-6);
    CHECK(tr.final_value() <= p.rho_max() + 1e-10);
    CHECK(distance_to_unitary_submanifold(tr.final_point) <= 1e-6);
  }
}

TEST_CASE("unitary ceiling is the largest population", "[flow]") {
  SeededStream rng(49);
  RVector rho(2);
  rho << 0.7, 0.3;
  RVector theta(2);
  theta << 0.0, 1.0;
  const ControlProblem p(rho, theta);
  const Trajectory t = flow_unitary(haar_unitary(2, rng), p, FlowConfig{});
  CHECK(t.converged);
  CHECK(t.final_value() >= 0.69);
  CHECK(t.final_value() <= 0.701);
}
