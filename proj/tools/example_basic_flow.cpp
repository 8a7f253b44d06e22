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

// Drive a random Kraus map toward the top level of a 4-level system and
// print how the objective climbs.

#include <cstdio>

#include "krausflow/krausflow.hpp"

int main() {
  namespace kf = krausflow;
  const int n = 4;
  kf::SeededStream rng(2026);

  // One empty level in rho; Theta projects onto |4>.
  const kf::ControlProblem problem(
      kf::random_rho(n, 1, kf::ZeroPlacement::kRandomPositions, rng),
      kf::random_theta(n, 1));
  const kf::StiefelPoint start = kf::random_stiefel(n, rng);

  kf::FlowConfig cfg;
  cfg.record_steps = true;
  const kf::Trajectory t = kf::flow_ascent(start, problem, cfg);

  for (const kf::StepRecord& s : t.steps) {
    std::printf("sigma %10.4g  J %.6f  drift %.2e\n", s.sigma, s.value, s.drift);
  }
  std::printf("tau %ld  lambda %.4f  converged %s\n", t.tau, t.lambda,
              t.converged ? "yes" : "no");

  // The same physical map under a W-transform has the same objective.
  const kf::WTransform w(kf::haar_unitary(n * n, rng));
  std::printf("J after W %.6f\n", kf::objective(kf::apply_w(w, t.final_point), problem));
  return 0;
}
