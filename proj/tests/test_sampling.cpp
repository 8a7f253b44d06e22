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
#include <set>

#include "krausflow/sampling.hpp"
#include "krausflow/stiefel.hpp"

using namespace krausflow;

TEST_CASE("streams are reproducible and independent", "[sampling]") {
  SeededStream a(42, 3);
  SeededStream b(42, 3);
  SeededStream c(42, 4);
  bool all_equal = true;
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform_open();
    all_equal = all_equal && x == b.uniform_open();
    any_diff = any_diff || x != c.uniform_open();
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("flat simplex sample", "[sampling]") {
  SeededStream rng(5);
  const int n = 4;
  const int draws = 20000;
  RVector mean = RVector::Zero(n);
  for (int t = 0; t < draws; ++t) {
    const RVector x = uniform_simplex(n, rng);
    REQUIRE(x.minCoeff() >= 0.0);
    REQUIRE(std::abs(x.sum() - 1.0) <= 1e-12);
    mean += x;
  }
  mean /= draws;
  // Dirichlet(1,...,1): each coordinate has mean 1/n and variance
  // (n-1)/(n^2 (n+1)).
  const double sd = std::sqrt((n - 1.0) / (n * n * (n + 1.0)) / draws);
  for (int i = 0; i < n; ++i) CHECK(std::abs(mean(i) - 1.0 / n) <= 5 * sd);
}

TEST_CASE("random rho has the requested zero count", "[sampling]") {
  SeededStream rng(6);
  for (int d0 = 0; d0 < 5; ++d0) {
    const RVector r = random_rho(5, d0, ZeroPlacement::kRandomPositions, rng);
    CHECK((r.array() == 0.0).count() == d0);
    CHECK(std::abs(r.sum() - 1.0) <= 1e-12);
    if (d0 > 0) CHECK(r(4) == 0.0);
  }
  const RVector lead = random_rho(5, 2, ZeroPlacement::kLeadingZeros, rng);
  CHECK(lead(0) == 0.0);
  CHECK(lead(1) == 0.0);
  CHECK_THROWS_AS(random_rho(3, 3, ZeroPlacement::kLeadingZeros, rng),
                  ContractViolation);
  // Pure states land on every level except the target one.
  std::set<int> seen;
  for (int t = 0; t < 200; ++t) {
    const RVector r = random_rho(4, 3, ZeroPlacement::kRandomPositions, rng);
    int k = 0;
    r.maxCoeff(&k);
    seen.insert(k);
  }
  CHECK(seen == std::set<int>{0, 1, 2});
}

TEST_CASE("observable spectra", "[sampling]") {
  const RVector t = random_theta(4, 2);
  CHECK(t(0) == 0.0);
  CHECK(t(1) == 0.0);
  CHECK(t(2) == 1.0);
  CHECK(t(3) == 1.0);
  CHECK_THROWS_AS(random_theta(3, 0), ContractViolation);
  CHECK((maximally_mixed(4).array() == 0.25).all());
}

TEST_CASE("Haar unitary moments", "[sampling]") {
  // For Haar U in U(n): E|U_00|^2 = 1/n, E|U_00|^4 = 2/(n(n+1)).
  SeededStream rng(7);
  const int n = 3;
  const int draws = 20000;
  double m2 = 0.0;
  double m4 = 0.0;
  for (int t = 0; t < draws; ++t) {
    const CMatrix u = haar_unitary(n, rng);
    REQUIRE(orthonormality_defect(u) <= 1e-12);
    const double a = std::norm(u(0, 0));
    m2 += a;
    m4 += a * a;
  }
  m2 /= draws;
  m4 /= draws;
  CHECK(std::abs(m2 - 1.0 / n) <= 0.01);
  CHECK(std::abs(m4 - 2.0 / (n * (n + 1.0))) <= 0.01);
  // Phase fixing matters: the unfixed Householder Q has a biased diagonal.
  double phase = 0.0;
  for (int t = 0; t < 2000; ++t) phase += haar_unitary(n, rng)(0, 0).real();
  CHECK(std::abs(phase / 2000) <= 0.05);
}
