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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "krausflow/errors.hpp"
#include "krausflow/landscape.hpp"
#include "krausflow/matrix.hpp"
#include "krausflow/stiefel.hpp"

namespace krausflow {

enum class ErrorNorm {
  // ||err||_F <= abs_tol + rel_tol * ||S||_F
  kFrobenius,
  // max_i |err_i| / (abs_tol + rel_tol * max(|S_i|, |S_new,i|)) <= 1
  kComponentwise,
};

struct FlowConfig {
  double stop_eps = 0.01;
  // Defaults to theta_max of the problem when unset.
  std::optional<double> target_value;
  double rel_tol = 1e-6;
  double abs_tol = 1e-9;
  double drift_repair_threshold = 1e-5;
  double drift_hard_limit = kDriftHardLimit;
  long max_steps = 100000;
  double max_sigma = 1e6;
  double initial_step = 1e-3;
  // When positive, ||dS/dsigma||_F <= stationary_tol also ends the run as
  // converged. Used where the optimal value is not known in advance.
  double stationary_tol = 0.0;
  bool record_steps = false;
  ErrorNorm error_norm = ErrorNorm::kComponentwise;

  void validate() const {
    if (!(stop_eps > 0.0)) throw ContractViolation("FlowConfig: stop_eps <= 0");
    if (!(drift_repair_threshold < drift_hard_limit)) {
      throw ContractViolation(
          "FlowConfig: drift_repair_threshold must be below drift_hard_limit");
    }
    if (!(rel_tol > 0.0) || !(abs_tol >= 0.0) || !(initial_step > 0.0) ||
        max_steps < 0 || !(max_sigma > 0.0)) {
      throw ContractViolation("FlowConfig: invalid integrator settings");
    }
  }
};

enum class StopReason { kTarget, kStationary, kMaxSteps, kMaxSigma };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kTarget:
      return "target";
    case StopReason::kStationary:
      return "stationary";
    case StopReason::kMaxSteps:
      return "max_steps";
    case StopReason::kMaxSigma:
      return "max_sigma";
  }
  return "?";
}

struct StepRecord {
  double sigma;
  double value;
  double drift;
  double step_size;
};

struct Trajectory {
  long tau = 0;         // accepted steps
  long rejected = 0;    // rejected step attempts
  double lambda = 0.0;  // sum of ||S(i+1) - S(i)||_F over accepted steps
  std::vector<double> objective_series;  // initial value, then one per step
  std::vector<double> drift_series;
  double sigma_final = 0.0;
  double next_step_size = 0.0;  // step the integrator would try next
  bool converged = false;
  StopReason stop_reason = StopReason::kMaxSteps;
  StiefelPoint final_point;
  std::vector<StepRecord> steps;  // filled when record_steps is set
  // flow_unitary only: largest distance to the unitary submanifold seen.
  double max_submanifold_distance = 0.0;

  double initial_value() const { return objective_series.front(); }
  double final_value() const { return objective_series.back(); }
  double max_drift() const {
    return drift_series.empty()
               ? 0.0
               : *std::max_element(drift_series.begin(), drift_series.end());
  }
};

inline void write_step_csv(std::ostream& os, const Trajectory& t) {
  os << "sigma,J,drift,step_size\n";
  const auto old = os.precision(17);
  for (const StepRecord& r : t.steps) {
    os << r.sigma << ',' << r.value << ',' << r.drift << ',' << r.step_size
       << '\n';
  }
  os.precision(old);
}

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
  static constexpr std::array<std::array<double, 6>, 6> a{{
      {1.0 / 5, 0, 0, 0, 0, 0},
      {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
      {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176,
       -5103.0 / 18656, 0},
      {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
  }};
  // 5th-order minus embedded 4th-order weights.
  static constexpr std::array<double, 7> e{
      71.0 / 57600, 0, -71.0 / 16695, 71.0 / 1920, -17253.0 / 339200,
      22.0 / 525, -1.0 / 40};
};

inline double step_factor(double err, double tol) {
  if (err <= 0.0) return 5.0;
  return std::clamp(0.9 * std::pow(tol / err, 0.2), 0.2, 5.0);
}

// Polar retraction once the drift exceeds the configured threshold.
inline auto polar_repair(const FlowConfig& cfg) {
  return [threshold = cfg.drift_repair_threshold](CMatrix& s, double drift) {
    if (drift <= threshold) return false;
    s = polar_retract(s);
    return true;
  };
}

}  // namespace detail

// Adaptive RK(4,5) integration of dS/dsigma = field(S).
//
//   field(S)          -> CMatrix, the vector field at S
//   value(S)          -> double, the monitored quantity (J, or -f)
//   reached(v)        -> bool, target test on the monitored value
//   repair(S, drift)  -> bool, may replace the accepted point S in place and
//                        reports whether it did; see detail::polar_repair
//   observe(S)        -> void, called on the initial and every accepted point
//
// tau counts accepted steps. lambda includes the displacement of repairs.
template <class Field, class Value, class Reached, class Repair, class Observe>
Trajectory integrate_flow(const StiefelPoint& s0, const FlowConfig& cfg,
                          Field&& field, Value&& value, Reached&& reached,
                          Repair&& repair, Observe&& observe) {
  using DP = detail::DormandPrince;
  cfg.validate();
  const int n = s0.n();
  CMatrix s = s0.matrix();
  Trajectory traj;
  double sigma = 0.0;
  double h = cfg.initial_step;

  auto record = [&](double v, double drift, double step) {
    traj.objective_series.push_back(v);
    traj.drift_series.push_back(drift);
    if (cfg.record_steps) traj.steps.push_back({sigma, v, drift, step});
  };

  double v = value(s);
  record(v, orthonormality_defect(s), 0.0);
  observe(s);
  auto finish = [&](bool converged, StopReason why) {
    traj.converged = converged;
    traj.stop_reason = why;
    traj.sigma_final = sigma;
    traj.next_step_size = h;
    traj.final_point = StiefelPoint::unchecked(n, s);
    return traj;
  };
  if (reached(v)) return finish(true, StopReason::kTarget);

  std::array<CMatrix, 7> k;
  k[0] = field(s);
  CMatrix stage;
  for (;;) {
    if (cfg.stationary_tol > 0.0 && k[0].norm() <= cfg.stationary_tol) {
      return finish(true, StopReason::kStationary);
    }
    if (traj.tau >= cfg.max_steps) return finish(false, StopReason::kMaxSteps);
    if (sigma >= cfg.max_sigma) return finish(false, StopReason::kMaxSigma);
    h = std::min(h, cfg.max_sigma - sigma);

    for (int i = 0; i < 6; ++i) {
      stage = s;
      for (int j = 0; j <= i; ++j) {
        if (DP::a[i][j] != 0.0) stage += (h * DP::a[i][j]) * k[j];
      }
      k[i + 1] = field(stage);
    }
    // stage now holds the 5th-order solution (row 6 of the tableau).
    CMatrix err_vec = DP::e[0] * k[0];
    for (int j = 1; j < 7; ++j) {
      if (DP::e[j] != 0.0) err_vec += DP::e[j] * k[j];
    }
    double err = 0.0;
    double tol = 1.0;
    if (cfg.error_norm == ErrorNorm::kFrobenius) {
      err = h * err_vec.norm();
      tol = cfg.abs_tol + cfg.rel_tol * s.norm();
    } else {
      err = h * (err_vec.array().abs() /
                 (cfg.abs_tol +
                  cfg.rel_tol * s.array().abs().max(stage.array().abs())))
                    .maxCoeff();
    }
    if (!std::isfinite(err) || !stage.allFinite()) {
      throw IntegrationFailure("integrate_flow: non-finite state");
    }
    if (err > tol) {
      ++traj.rejected;
      h *= std::max(0.2, detail::step_factor(err, tol));
      if (h < 1e-14) {
        throw IntegrationFailure("integrate_flow: step size underflow");
      }
      continue;
    }

    CMatrix next = std::move(stage);
    double drift = orthonormality_defect(next);
    const bool repaired = repair(next, drift);
    if (repaired) drift = orthonormality_defect(next);
    if (!(drift < cfg.drift_hard_limit) || !next.allFinite()) {
      throw IntegrationFailure("integrate_flow: drift " +
                               std::to_string(drift) + " exceeds hard limit");
    }
    traj.lambda += (next - s).norm();
    s = std::move(next);
    sigma += h;
    ++traj.tau;
    const double used = h;
    h *= detail::step_factor(err, tol);
    k[0] = repaired ? field(s) : std::move(k[6]);
    v = value(s);
    record(v, drift, used);
    observe(s);
    if (reached(v)) return finish(true, StopReason::kTarget);
  }
}

inline double resolve_target(const FlowConfig& cfg, const ControlProblem& p) {
  return cfg.target_value.value_or(p.theta_max());
}

// Gradient ascent dS/dsigma = grad J(S) from s0.
inline Trajectory flow_ascent(const StiefelPoint& s0, const ControlProblem& p,
                              const FlowConfig& cfg) {
  detail::check_problem(s0, p, "flow_ascent");
  const double threshold = resolve_target(cfg, p) - cfg.stop_eps;
  return integrate_flow(
      s0, cfg, [&](const CMatrix& s) { return detail::gradient_matrix(p, s); },
      [&](const CMatrix& s) { return detail::objective_value(p, s); },
      [&](double j) { return j > threshold; },
      detail::polar_repair(cfg), [](const CMatrix&) {});
}

// Coherent control: the flow started on the unitary submanifold, targeting
// rho_max. Every accepted point is checked to stay on the submanifold.
inline Trajectory flow_unitary(const CMatrix& u0, const ControlProblem& p,
                               FlowConfig cfg) {
  const StiefelPoint s0 = unitary_point(u0);
  detail::check_problem(s0, p, "flow_unitary");
  cfg.target_value = p.rho_max();
  // Keep the unitarity defect (part of the submanifold distance) below 1e-6.
  cfg.drift_repair_threshold = std::min(cfg.drift_repair_threshold, 1e-7);
  const double threshold = *cfg.target_value - cfg.stop_eps;
  const int n = s0.n();
  double worst = 0.0;
  Trajectory t = integrate_flow(
      s0, cfg, [&](const CMatrix& s) { return detail::gradient_matrix(p, s); },
      [&](const CMatrix& s) { return detail::objective_value(p, s); },
      [&](double j) { return j > threshold; },
      detail::polar_repair(cfg),
      [&](const CMatrix& s) {
        const double d =
            distance_to_unitary_submanifold(StiefelPoint::unchecked(n, s));
        worst = std::max(worst, d);
        if (d > 1e-6) {
          throw InvarianceViolation(
              "flow_unitary: left the unitary submanifold, distance " +
              std::to_string(d));
        }
      });
  t.max_submanifold_distance = worst;
  return t;
}

}  // namespace krausflow
