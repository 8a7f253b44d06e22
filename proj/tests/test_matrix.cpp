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
#include <vector>

#include "krausflow/matrix.hpp"
#include "krausflow/sampling.hpp"

using namespace krausflow;

TEST_CASE("hs_inner is Re Tr(A^dagger B)", "[matrix]") {
  SeededStream rng(1);
  for (int t = 0; t < 10; ++t) {
    const CMatrix a = complex_gaussian(7, 3, rng);
    const CMatrix b = complex_gaussian(7, 3, rng);
    const double tr = (a.adjoint() * b).trace().real();
    CHECK(std::abs(hs_inner(a, b) - tr) <= 1e-12 * std::max(1.0, std::abs(tr)));
    CHECK(std::abs(hs_inner(a, b) - hs_inner(b, a)) <= 1e-12);
  }
  const CMatrix a(2, 2);
  const CMatrix b(3, 2);
  CHECK_THROWS_AS(hs_inner(a, b), DimensionError);
}

TEST_CASE("row-major construction", "[matrix]") {
  const std::vector<Complex> e{{1, 0}, {2, 0}, {3, 0}, {4, 1}, {5, 0}, {6, 0}};
  const CMatrix m = cmatrix_from_row_major(2, 3, e);
  CHECK(m(0, 1) == Complex(2, 0));
  CHECK(m(1, 0) == Complex(4, 1));
  CHECK_THROWS_AS(cmatrix_from_row_major(3, 3, e), DimensionError);
  std::vector<Complex> bad = e;
  bad[2] = Complex(std::numeric_limits<double>::quiet_NaN(), 0);
  CHECK_THROWS_AS(cmatrix_from_row_major(2, 3, bad), ContractViolation);
}

TEST_CASE("phase-fixed QR", "[matrix]") {
  SeededStream rng(2);
  const CMatrix a = complex_gaussian(9, 4, rng);
  const QrResult qr = qr_phase_fixed(a);
  CHECK(orthonormality_defect(qr.q) <= 1e-12);
  CHECK((qr.q * qr.r - a).norm() <= 1e-12 * a.norm());
  for (int k = 0; k < 4; ++k) {
    CHECK(qr.r(k, k).real() > 0.0);
    CHECK(std::abs(qr.r(k, k).imag()) <= 1e-15);
    for (int r = k + 1; r < 4; ++r) CHECK(qr.r(r, k) == Complex(0, 0));
  }
  CMatrix dep = a;
  dep.col(2) = dep.col(0) * Complex(0.5, 2.0);
  CHECK_THROWS_AS(qr_phase_fixed(dep), DegenerateInputError);
  CHECK_THROWS_AS(qr_phase_fixed(CMatrix(2, 3)), DimensionError);
}

TEST_CASE("Hermitian eigendecomposition", "[matrix]") {
  SeededStream rng(3);
  const CMatrix g = complex_gaussian(6, 6, rng);
  const CMatrix a = g + g.adjoint();
  const HermitianSpectrum es = hermitian_eig(a);
  const CMatrix rec = es.eigenvectors * es.eigenvalues.cast<Complex>().asDiagonal() *
                      es.eigenvectors.adjoint();
  CHECK((rec - a).norm() <= 1e-10 * std::max(1.0, a.norm()));
  CHECK(orthonormality_defect(es.eigenvectors) <= 1e-10);
  CHECK(std::abs(es.eigenvalues.sum() - a.trace().real()) <= 1e-10);
  for (int i = 1; i < 6; ++i) CHECK(es.eigenvalues(i - 1) >= es.eigenvalues(i));
  CHECK_THROWS_AS(hermitian_eig(g), ContractViolation);
  CHECK_THROWS_AS(hermitian_eig(CMatrix(2, 3)), DimensionError);
}

TEST_CASE("symmetric pseudo-inverse reports rank", "[matrix]") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 3);
  const Eigen::MatrixXd z = x * x.transpose();
  Eigen::Index rank = 0;
  const Eigen::MatrixXd zp = symmetric_pinv(z, 1e-10, &rank);
  CHECK(rank == 3);
  CHECK((z * zp * z - z).norm() <= 1e-10 * z.norm());
  CHECK((zp * z * zp - zp).norm() <= 1e-8 * zp.norm());
}

TEST_CASE("inverse square root", "[matrix]") {
  SeededStream rng(4);
  const CMatrix g = complex_gaussian(5, 5, rng);
  const CMatrix a = g * g.adjoint() + CMatrix::Identity(5, 5);
  const CMatrix r = inverse_sqrt_hpd(a);
  CHECK((r * a * r - CMatrix::Identity(5, 5)).norm() <= 1e-10);
  CHECK_THROWS_AS(inverse_sqrt_hpd(CMatrix::Zero(3, 3)), DegenerateInputError);
}
