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

#include <span>
#include <string>
#include <vector>

#include "krausflow/errors.hpp"
#include "krausflow/matrix.hpp"
#include "krausflow/sampling.hpp"

namespace krausflow {

// ||S^dagger S - I||_F must stay below this on every observed point.
inline constexpr double kDriftHardLimit = 2e-4;

// A Kraus map with N^2 operators K_1..K_{N^2} (each N x N) stored stacked as
// one N^3 x N matrix S; trace preservation is S^dagger S = I_N.
class StiefelPoint {
 public:
  StiefelPoint() = default;

  // Validates shape and ||S^dagger S - I||_F <= tol.
  static StiefelPoint from_matrix(int n, CMatrix s,
                                  double tol = kDriftHardLimit) {
    check_shape(n, s, "StiefelPoint");
    require_finite(s, "StiefelPoint");
    const double defect = orthonormality_defect(s);
    if (!(defect <= tol)) {
      throw ContractViolation("StiefelPoint: ||S^dagger S - I|| = " +
                              std::to_string(defect) + " exceeds tolerance");
    }
    return StiefelPoint(n, std::move(s));
  }

  static StiefelPoint from_blocks(std::span<const CMatrix> blocks,
                                  double tol = kDriftHardLimit) {
    if (blocks.empty()) throw DimensionError("StiefelPoint: no blocks");
    const auto n = static_cast<int>(blocks.front().rows());
    if (static_cast<int>(blocks.size()) != n * n) {
      throw DimensionError("StiefelPoint: expected N^2 blocks");
    }
    CMatrix s(static_cast<Eigen::Index>(n) * n * n, n);
    for (int i = 0; i < n * n; ++i) {
      if (blocks[i].rows() != n || blocks[i].cols() != n) {
        throw DimensionError("StiefelPoint: block is not N x N");
      }
      s.middleRows(static_cast<Eigen::Index>(i) * n, n) = blocks[i];
    }
    return from_matrix(n, std::move(s), tol);
  }

  // Shape-checked only. Used for integrator stage points that sit slightly
  // off the manifold.
  static StiefelPoint unchecked(int n, CMatrix s) {
    check_shape(n, s, "StiefelPoint");
    return StiefelPoint(n, std::move(s));
  }

  int n() const { return n_; }
  int num_blocks() const { return n_ * n_; }
  const CMatrix& matrix() const { return s_; }

  auto block(int i) const {
    return s_.middleRows(static_cast<Eigen::Index>(i) * n_, n_);
  }

  std::vector<CMatrix> blocks() const {
    std::vector<CMatrix> out;
    out.reserve(static_cast<std::size_t>(num_blocks()));
    for (int i = 0; i < num_blocks(); ++i) out.emplace_back(block(i));
    return out;
  }

  double drift() const { return orthonormality_defect(s_); }

 private:
  StiefelPoint(int n, CMatrix s) : n_(n), s_(std::move(s)) {}

  static void check_shape(int n, const CMatrix& s, const char* what) {
    if (n < 1 || s.cols() != n ||
        s.rows() != static_cast<Eigen::Index>(n) * n * n) {
      throw DimensionError(std::string(what) + ": expected N^3 x N matrix");
    }
  }

  int n_ = 0;
  CMatrix s_;
};

// An element of the ambient space M(N^3, N) meant to be tangent at some base
// point; same stacked layout as StiefelPoint.
class TangentVector {
 public:
  TangentVector() = default;
  explicit TangentVector(CMatrix m) : m_(std::move(m)) {}

  const CMatrix& matrix() const { return m_; }
  CMatrix& matrix() { return m_; }
  int n() const { return static_cast<int>(m_.cols()); }
  double norm() const { return m_.norm(); }

  auto block(int i) const {
    return m_.middleRows(static_cast<Eigen::Index>(i) * n(), n());
  }

  friend TangentVector operator+(const TangentVector& a,
                                 const TangentVector& b) {
    return TangentVector(a.m_ + b.m_);
  }
  friend TangentVector operator-(const TangentVector& a,
                                 const TangentVector& b) {
    return TangentVector(a.m_ - b.m_);
  }
  friend TangentVector operator*(double s, const TangentVector& a) {
    return TangentVector(s * a.m_);
  }

 private:
  CMatrix m_;
};

inline double hs_inner(const TangentVector& a, const TangentVector& b) {
  return hs_inner(a.matrix(), b.matrix());
}

inline const CMatrix& flatten(const StiefelPoint& s) { return s.matrix(); }

inline StiefelPoint unflatten(int n, const CMatrix& s,
                              double tol = kDriftHardLimit) {
  return StiefelPoint::from_matrix(n, s, tol);
}

// ||S^dagger A + A^dagger S||_F, zero when A is tangent at S.
inline double tangency_defect(const CMatrix& s, const CMatrix& a) {
  const CMatrix c = s.adjoint() * a;
  return (c + c.adjoint()).norm();
}

// P_S(A) = A - S (S^dagger A + A^dagger S) / 2. In block form
// C = sum_i K_i^dagger A_i and block i maps to A_i - K_i (C + C^dagger) / 2.
inline CMatrix project_tangent(const CMatrix& s, const CMatrix& a) {
  const CMatrix c = s.adjoint() * a;
  return a - s * hermitian_part(c);
}

inline TangentVector tangent_project(const StiefelPoint& s, const CMatrix& a) {
  require_same_shape(s.matrix(), a, "tangent_project");
  return TangentVector(project_tangent(s.matrix(), a));
}

inline TangentVector tangent_project(const StiefelPoint& s,
                                     const TangentVector& a) {
  return tangent_project(s, a.matrix());
}

// Polar retraction S (S^dagger S)^{-1/2}: the nearest matrix with
// orthonormal columns.
inline CMatrix polar_retract(const CMatrix& s) {
  require_finite(s, "retract");
  const CMatrix g = s.adjoint() * s;
  CMatrix defect = g;
  defect.diagonal().array() -= 1.0;
  if (!(defect.norm() <= 0.5)) {
    throw ContractViolation("retract: point too far from the manifold");
  }
  return s * inverse_sqrt_hpd(g);
}

inline StiefelPoint retract(const StiefelPoint& s) {
  return StiefelPoint::from_matrix(s.n(), polar_retract(s.matrix()), 1e-10);
}

// Mixing of Kraus operators by an N^2 x N^2 unitary: K~_j = sum_i u_ji K_i.
class WTransform {
 public:
  explicit WTransform(CMatrix u) : u_(std::move(u)) {
    if (u_.rows() != u_.cols()) {
      throw DimensionError("WTransform: mixing matrix is not square");
    }
    require_finite(u_, "WTransform");
    if (orthonormality_defect(u_) > 1e-10) {
      throw ContractViolation("WTransform: mixing matrix is not unitary");
    }
  }
  const CMatrix& u() const { return u_; }

 private:
  CMatrix u_;
};

inline StiefelPoint apply_w(const WTransform& w, const StiefelPoint& s) {
  const int n = s.n();
  const int nb = s.num_blocks();
  if (w.u().rows() != nb) {
    throw DimensionError("apply_w: mixing matrix must be N^2 x N^2");
  }
  CMatrix out = CMatrix::Zero(s.matrix().rows(), n);
  for (int j = 0; j < nb; ++j) {
    auto dst = out.middleRows(static_cast<Eigen::Index>(j) * n, n);
    for (int i = 0; i < nb; ++i) dst += w.u()(j, i) * s.block(i);
  }
  return StiefelPoint::from_matrix(n, std::move(out));
}

// Sum_i K_i rho K_i^dagger.
inline CMatrix apply_channel(const StiefelPoint& s, const CMatrix& rho) {
  const int n = s.n();
  if (rho.rows() != n || rho.cols() != n) {
    throw DimensionError("apply_channel: rho must be N x N");
  }
  CMatrix out = CMatrix::Zero(n, n);
  for (int i = 0; i < s.num_blocks(); ++i) {
    const CMatrix k = s.block(i);
    out += k * rho * k.adjoint();
  }
  return out;
}

// Invariant (Haar) sample: complex Gaussian N^3 x N through phase-fixed QR.
inline StiefelPoint random_stiefel(int n, SeededStream& rng) {
  if (n < 2) throw ContractViolation("random_stiefel: n must be >= 2");
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * n * n;
  for (;;) {
    try {
      return StiefelPoint::from_matrix(
          n, qr_phase_fixed(complex_gaussian(rows, n, rng)).q, 1e-10);
    } catch (const DegenerateInputError&) {
    }
  }
}

// The coherent-control point: all N^2 blocks equal U / N.
inline StiefelPoint unitary_point(const CMatrix& u) {
  if (u.rows() != u.cols() || u.rows() < 1) {
    throw DimensionError("unitary_point: U must be square");
  }
  require_finite(u, "unitary_point");
  if (orthonormality_defect(u) > 1e-10) {
    throw ContractViolation("unitary_point: U is not unitary");
  }
  const int n = static_cast<int>(u.rows());
  CMatrix s(static_cast<Eigen::Index>(n) * n * n, n);
  const CMatrix scaled = u / static_cast<double>(n);
  for (int i = 0; i < n * n; ++i) {
    s.middleRows(static_cast<Eigen::Index>(i) * n, n) = scaled;
  }
  return StiefelPoint::from_matrix(n, std::move(s), 1e-10);
}

// Block spread max_i ||K_i - Kbar||_F plus the unitarity defect of N * Kbar.
// Zero exactly on the unitary submanifold.
inline double distance_to_unitary_submanifold(const StiefelPoint& s) {
  const int n = s.n();
  CMatrix mean = CMatrix::Zero(n, n);
  for (int i = 0; i < s.num_blocks(); ++i) mean += s.block(i);
  mean /= static_cast<double>(s.num_blocks());
  double spread = 0.0;
  for (int i = 0; i < s.num_blocks(); ++i) {
    spread = std::max(spread, (s.block(i) - mean).norm());
  }
  return spread + orthonormality_defect(static_cast<double>(n) * mean);
}

}  // namespace krausflow
