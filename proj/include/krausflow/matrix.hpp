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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "krausflow/errors.hpp"

namespace krausflow {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};

inline bool all_finite(const CMatrix& a) { return a.allFinite(); }

inline void require_finite(const CMatrix& a, const char* what) {
  if (!a.allFinite()) {
    throw ContractViolation(std::string(what) + ": non-finite matrix entry");
  }
}

inline void require_same_shape(const CMatrix& a, const CMatrix& b,
                               const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch (" +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
}

// Builds a rows x cols matrix from row-major entries, rejecting NaN/Inf.
inline CMatrix cmatrix_from_row_major(Eigen::Index rows, Eigen::Index cols,
                                      std::span<const Complex> entries) {
  if (rows <= 0 || cols <= 0) {
    throw DimensionError("cmatrix_from_row_major: non-positive extent");
  }
  if (static_cast<Eigen::Index>(entries.size()) != rows * cols) {
    throw DimensionError("cmatrix_from_row_major: entry count != rows*cols");
  }
  CMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = entries[static_cast<std::size_t>(r * cols + c)];
    }
  }
  require_finite(m, "cmatrix_from_row_major");
  return m;
}

// Real Hilbert-Schmidt inner product Re Tr(a^dagger b).
inline double hs_inner(const CMatrix& a, const CMatrix& b) {
  require_same_shape(a, b, "hs_inner");
  // Re Tr(a^dagger b) = sum Re(conj(a_ij) b_ij)
  return (a.array().real() * b.array().real() +
          a.array().imag() * b.array().imag())
      .sum();
}

inline double frobenius(const CMatrix& a) { return a.norm(); }

// ||a^dagger a - I||_F for a matrix with orthonormal columns expected.
inline double orthonormality_defect(const CMatrix& a) {
  CMatrix g = a.adjoint() * a;
  g.diagonal().array() -= 1.0;
  return g.norm();
}

inline double hermitian_defect(const CMatrix& a) {
  return (a - a.adjoint()).norm();
}

inline CMatrix hermitian_part(const CMatrix& a) {
  return 0.5 * (a + a.adjoint());
}

struct QrResult {
  CMatrix q;  // rows x cols, orthonormal columns
  CMatrix r;  // cols x cols, upper triangular, positive real diagonal
};

// Thin QR with the phase of each column fixed so diag(r) > 0. With a complex
// Gaussian input the resulting q is distributed by the invariant measure.
inline QrResult qr_phase_fixed(const CMatrix& a) {
  if (a.rows() < a.cols() || a.cols() == 0) {
    throw DimensionError("qr_phase_fixed: need rows >= cols > 0");
  }
  require_finite(a, "qr_phase_fixed");
  const Eigen::Index m = a.rows();
  const Eigen::Index n = a.cols();
  Eigen::HouseholderQR<CMatrix> qr(a);
  QrResult out;
  out.q = qr.householderQ() * CMatrix::Identity(m, n);
  out.r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < n; ++k) {
    const Complex d = out.r(k, k);
    const double mag = std::abs(d);
    if (mag < 1e-12) {
      throw DegenerateInputError("qr_phase_fixed: rank-deficient input");
    }
    const Complex phase = d / mag;
    out.q.col(k) *= phase;
    out.r.row(k) *= std::conj(phase);
    out.r(k, k) = Complex(mag, 0.0);
  }
  return out;
}

struct HermitianSpectrum {
  RVector eigenvalues;   // descending
  CMatrix eigenvectors;  // columns match eigenvalues
};

inline HermitianSpectrum hermitian_eig(const CMatrix& a) {
  if (a.rows() != a.cols()) {
    throw DimensionError("hermitian_eig: matrix is not square");
  }
  require_finite(a, "hermitian_eig");
  if (hermitian_defect(a) > 1e-10 * std::max(1.0, a.norm())) {
    throw ContractViolation("hermitian_eig: matrix is not Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(a));
  if (es.info() != Eigen::Success) {
    throw DegenerateInputError("hermitian_eig: eigensolver did not converge");
  }
  HermitianSpectrum out;
  out.eigenvalues = es.eigenvalues().reverse();
  out.eigenvectors = es.eigenvectors().rowwise().reverse();
  return out;
}

// Symmetric real eigendecomposition, eigenvalues descending.
inline std::pair<RVector, Eigen::MatrixXd> symmetric_eig(
    const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  if (es.info() != Eigen::Success) {
    throw DegenerateInputError("symmetric_eig: eigensolver did not converge");
  }
  return {es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
}

// Moore-Penrose pseudo-inverse of a real symmetric PSD matrix. Eigenvalues at
// or below rel_tol * max(1, largest) are treated as zero; rank is reported.
inline Eigen::MatrixXd symmetric_pinv(const Eigen::MatrixXd& z, double rel_tol,
                                      Eigen::Index* rank = nullptr) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (z + z.transpose()));
  const RVector& w = es.eigenvalues();
  const double cutoff =
      rel_tol * std::max(1.0, w.size() ? w.cwiseAbs().maxCoeff() : 0.0);
  RVector inv = RVector::Zero(w.size());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) > cutoff) {
      inv(i) = 1.0 / w(i);
      ++r;
    }
  }
  if (rank) *rank = r;
  const Eigen::MatrixXd& v = es.eigenvectors();
  return v * inv.asDiagonal() * v.transpose();
}

// (a)^{-1/2} for Hermitian positive definite a.
inline CMatrix inverse_sqrt_hpd(const CMatrix& a) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(a));
  const RVector& w = es.eigenvalues();
  if (es.info() != Eigen::Success || w.minCoeff() <= 1e-12) {
    throw DegenerateInputError("inverse_sqrt_hpd: matrix is singular");
  }
  RVector s = w.array().rsqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace krausflow
