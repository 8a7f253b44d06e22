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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "krausflow/errors.hpp"
#include "krausflow/matrix.hpp"
#include "krausflow/stiefel.hpp"

namespace krausflow {

// Tolerance on ||grad J||_F below which a point counts as stationary.
inline constexpr double kStationarityTol = 1e-6;

// Maximise Tr[Phi(rho) Theta] with rho and Theta simultaneously diagonal.
class ControlProblem {
 public:
  ControlProblem() = default;

  ControlProblem(RVector rho, RVector theta)
      : rho_(std::move(rho)), theta_(std::move(theta)) {
    if (rho_.size() < 1 || rho_.size() != theta_.size()) {
      throw DimensionError("ControlProblem: rho and theta sizes differ");
    }
    if (!rho_.allFinite() || !theta_.allFinite()) {
      throw ContractViolation("ControlProblem: non-finite entries");
    }
    if (rho_.minCoeff() < -1e-12 || std::abs(rho_.sum() - 1.0) > 1e-12) {
      throw ContractViolation(
          "ControlProblem: rho must be nonnegative with unit trace");
    }
    rho_ = rho_.cwiseMax(0.0);
  }

  int n() const { return static_cast<int>(rho_.size()); }
  const RVector& rho() const { return rho_; }
  const RVector& theta() const { return theta_; }

  int d0() const { return static_cast<int>((rho_.array() < 1e-12).count()); }
  int e1() const {
    return static_cast<int>(
        ((theta_.array() - theta_max()).abs() <= 1e-12).count());
  }
  double theta_max() const { return theta_.maxCoeff(); }
  double theta_min() const { return theta_.minCoeff(); }
  double rho_max() const { return rho_.maxCoeff(); }

 private:
  RVector rho_;
  RVector theta_;
};

namespace detail {

// (I_{N^2} (x) Theta) A without forming the Kronecker product: row r of the
// stacked matrix is scaled by theta[r mod N].
inline CMatrix apply_observable(const RVector& theta, const CMatrix& a) {
  const Eigen::Index n = theta.size();
  CMatrix out(a.rows(), a.cols());
  for (Eigen::Index b = 0; b < a.rows() / n; ++b) {
    out.middleRows(b * n, n) = theta.asDiagonal() * a.middleRows(b * n, n);
  }
  return out;
}

// M = S^dagger (I (x) Theta) S = sum_j K_j^dagger Theta K_j.
inline CMatrix observable_gram(const ControlProblem& p, const CMatrix& s) {
  return s.adjoint() * apply_observable(p.theta(), s);
}

inline CMatrix gradient_matrix(const ControlProblem& p, const CMatrix& s) {
  const auto rho = p.rho().asDiagonal();
  const CMatrix m = observable_gram(p, s);
  return 2.0 * apply_observable(p.theta(), s) * rho -
         s * (m * rho + rho * m);
}

inline double objective_value(const ControlProblem& p, const CMatrix& s) {
  return (observable_gram(p, s) * p.rho().asDiagonal()).trace().real();
}

inline void check_problem(const StiefelPoint& s, const ControlProblem& p,
                          const char* what) {
  if (s.n() != p.n()) {
    throw DimensionError(std::string(what) +
                         ": point and problem dimensions differ");
  }
}

}  // namespace detail

struct CanonicalForm {
  ControlProblem problem;
  CMatrix observable_basis;  // V with Theta = V diag(theta) V^dagger
  CMatrix omega;             // V^dagger rho V = Omega diag(rho) Omega^dagger

  // K -> V^dagger K V Omega, under which the objective is unchanged.
  StiefelPoint to_canonical(const StiefelPoint& s) const {
    const int n = s.n();
    CMatrix out(s.matrix().rows(), n);
    for (int i = 0; i < s.num_blocks(); ++i) {
      out.middleRows(static_cast<Eigen::Index>(i) * n, n) =
          observable_basis.adjoint() * s.block(i) * observable_basis * omega;
    }
    return StiefelPoint::from_matrix(n, std::move(out));
  }
};

// Rotates a general (rho, Theta) pair to the simultaneously diagonal form.
// Theta eigenvalues come out ascending (maximum last), rho descending.
inline CanonicalForm canonicalize(const CMatrix& rho_full,
                                  const CMatrix& theta_full) {
  if (rho_full.rows() != rho_full.cols() ||
      theta_full.rows() != theta_full.cols() ||
      rho_full.rows() != theta_full.rows()) {
    throw DimensionError("canonicalize: rho and Theta must be N x N");
  }
  const double rho_scale = std::max(1.0, rho_full.norm());
  if (hermitian_defect(rho_full) > 1e-10 * rho_scale ||
      hermitian_defect(theta_full) > 1e-10 * std::max(1.0, theta_full.norm())) {
    throw ContractViolation("canonicalize: inputs must be Hermitian");
  }
  if (std::abs(rho_full.trace() - Complex(1.0, 0.0)) > 1e-10) {
    throw ContractViolation("canonicalize: rho must have unit trace");
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> obs(hermitian_part(theta_full));
  const CMatrix v = obs.eigenvectors();
  const CMatrix rho_rot = v.adjoint() * rho_full * v;
  const HermitianSpectrum rs = hermitian_eig(hermitian_part(rho_rot));
  if (rs.eigenvalues.minCoeff() < -1e-10) {
    throw ContractViolation("canonicalize: rho is not positive semidefinite");
  }
  RVector rho = rs.eigenvalues.cwiseMax(0.0);
  rho /= rho.sum();
  return CanonicalForm{ControlProblem(rho, obs.eigenvalues()), v,
                       rs.eigenvectors};
}

// Re Tr[sum_i K_i rho K_i^dagger Theta] for arbitrary (non-diagonal) inputs.
inline double objective_general(const StiefelPoint& s, const CMatrix& rho_full,
                                const CMatrix& theta_full) {
  return (apply_channel(s, rho_full) * theta_full).trace().real();
}

// J(S) = Tr[S rho S^dagger (I (x) Theta)] = Re Tr(M rho), M = S^dagger(I(x)Theta)S.
inline double objective(const StiefelPoint& s, const ControlProblem& p) {
  detail::check_problem(s, p, "objective");
  return detail::objective_value(p, s.matrix());
}

// Same value through the column-vector form
// J = sum_{i,j} ||Y_j^i||^2 rho_i theta_j, (Y_j^i)_l = (K_l)_{ji}.
inline double objective_yform(const StiefelPoint& s, const ControlProblem& p) {
  detail::check_problem(s, p, "objective_yform");
  const int n = s.n();
  double j_total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (p.rho()(i) == 0.0) continue;
    for (int j = 0; j < n; ++j) {
      double y2 = 0.0;
      for (int l = 0; l < s.num_blocks(); ++l) {
        y2 += std::norm(s.matrix()(static_cast<Eigen::Index>(l) * n + j, i));
      }
      j_total += y2 * p.rho()(i) * p.theta()(j);
    }
  }
  return j_total;
}

// grad J(S) = 2 (I (x) Theta) S rho - S (M rho + rho M).
inline TangentVector gradient(const StiefelPoint& s, const ControlProblem& p) {
  detail::check_problem(s, p, "gradient");
  return TangentVector(detail::gradient_matrix(p, s.matrix()));
}

enum class HessianForm {
  kGeneral,   // projected covariant derivative, valid at every point
  kCritical,  // reduced expression, valid only where grad J = 0
};

// Hess J(S)(dS). All contractions go through the N x N auxiliaries
// M = S^dag(I(x)Theta)S, P = S^dag(I(x)Theta)dS and B = S^dag dS.
inline TangentVector hessian_apply(const StiefelPoint& s,
                                   const ControlProblem& p,
                                   const TangentVector& v, HessianForm form) {
  detail::check_problem(s, p, "hessian_apply");
  require_same_shape(s.matrix(), v.matrix(), "hessian_apply");
  const CMatrix& k = s.matrix();
  const CMatrix& dk = v.matrix();
  const auto rho = p.rho().asDiagonal();
  const CMatrix theta_k = detail::apply_observable(p.theta(), k);
  const CMatrix theta_dk = detail::apply_observable(p.theta(), dk);
  const CMatrix m = k.adjoint() * theta_k;
  const CMatrix pm = k.adjoint() * theta_dk;

  if (form == HessianForm::kGeneral) {
    const CMatrix pd = pm.adjoint();
    const CMatrix a = 2.0 * theta_dk * rho - dk * (m * rho + rho * m) -
                      k * (pd * rho + pm * rho + rho * pd + rho * pm);
    return TangentVector(project_tangent(k, a));
  }

  if (detail::gradient_matrix(p, k).norm() > kStationarityTol) {
    throw ContractViolation(
        "hessian_apply: critical form requires a stationary point");
  }
  const CMatrix b = k.adjoint() * dk;
  const CMatrix out = 2.0 * theta_dk * rho - dk * m * rho - dk * rho * m -
                      k * pm * rho + k * b * m * rho -
                      k * rho * pm.adjoint() + theta_k * rho * b.adjoint();
  return TangentVector(out);
}

enum class CriticalClass { kMax, kSaddleOrMin, kNonstationary };

inline const char* to_string(CriticalClass c) {
  switch (c) {
    case CriticalClass::kMax:
      return "max";
    case CriticalClass::kSaddleOrMin:
      return "saddle-or-min";
    case CriticalClass::kNonstationary:
      return "nonstationary";
  }
  return "?";
}

struct CriticalReport {
  double gradient_norm = 0.0;
  RVector hessian_eigenvalues;  // descending, tangent-restricted
  CriticalClass classification = CriticalClass::kNonstationary;
  int null_dimension = 0;
  int tangent_dimension = 0;
};

inline int tangent_dimension(int n) { return 2 * n * n * n * n - n * n; }

// Orthonormal real basis of T_S as columns of a (2 N^4) x (2N^4 - N^2) real
// matrix. Coordinates interleave Re and Im of the column-major entries.
inline Eigen::MatrixXd tangent_basis(const StiefelPoint& s) {
  const CMatrix& k = s.matrix();
  const Eigen::Index entries = k.size();
  const Eigen::Index dim = 2 * entries;
  Eigen::MatrixXd proj(dim, dim);
  CMatrix e = CMatrix::Zero(k.rows(), k.cols());
  for (Eigen::Index c = 0; c < dim; ++c) {
    e.data()[c / 2] = (c % 2 == 0) ? Complex(1.0, 0.0) : kI;
    const CMatrix pe = project_tangent(k, e);
    for (Eigen::Index r = 0; r < entries; ++r) {
      proj(2 * r, c) = pe.data()[r].real();
      proj(2 * r + 1, c) = pe.data()[r].imag();
    }
    e.data()[c / 2] = Complex(0.0, 0.0);
  }
  auto [w, v] = symmetric_eig(proj);
  const Eigen::Index rank = (w.array() > 0.5).count();
  if (rank != tangent_dimension(s.n())) {
    throw DegenerateInputError("tangent_basis: unexpected tangent dimension");
  }
  return v.leftCols(rank);
}

inline CMatrix from_real_coords(const Eigen::VectorXd& x, Eigen::Index rows,
                                Eigen::Index cols) {
  CMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < m.size(); ++r) {
    m.data()[r] = Complex(x(2 * r), x(2 * r + 1));
  }
  return m;
}

// Gradient norm plus the spectrum of the Hessian restricted to T_S. Dense,
// so limited to N <= 4 (tangent dimension 496 there).
inline CriticalReport critical_report(const StiefelPoint& s,
                                      const ControlProblem& p) {
  detail::check_problem(s, p, "critical_report");
  if (s.n() > 4) {
    throw CapabilityError("critical_report: supported only for N <= 4");
  }
  CriticalReport rep;
  rep.gradient_norm = gradient(s, p).norm();
  const Eigen::MatrixXd basis = tangent_basis(s);
  const Eigen::Index t = basis.cols();
  rep.tangent_dimension = static_cast<int>(t);
  const Eigen::Index rows = s.matrix().rows();
  const Eigen::Index cols = s.matrix().cols();
  std::vector<CMatrix> tangents;
  tangents.reserve(static_cast<std::size_t>(t));
  for (Eigen::Index j = 0; j < t; ++j) {
    tangents.push_back(from_real_coords(basis.col(j), rows, cols));
  }
  Eigen::MatrixXd h(t, t);
  for (Eigen::Index j = 0; j < t; ++j) {
    const TangentVector hv =
        hessian_apply(s, p, TangentVector(tangents[j]), HessianForm::kGeneral);
    for (Eigen::Index i = 0; i < t; ++i) {
      h(i, j) = hs_inner(tangents[i], hv.matrix());
    }
  }
  rep.hessian_eigenvalues = symmetric_eig(h).first;
  const double scale = rep.hessian_eigenvalues.cwiseAbs().maxCoeff();
  const double null_tol = 1e-6 * std::max(scale, 1e-300);
  rep.null_dimension = static_cast<int>(
      (rep.hessian_eigenvalues.array().abs() <= null_tol).count());
  if (rep.gradient_norm > kStationarityTol) {
    rep.classification = CriticalClass::kNonstationary;
  } else if (rep.hessian_eigenvalues.maxCoeff() <= null_tol) {
    rep.classification = CriticalClass::kMax;
  } else {
    rep.classification = CriticalClass::kSaddleOrMin;
  }
  return rep;
}

// dim M_max = 2 (d0 + e1) N^3 - (2 d0 e1 + 1) N^2.
inline std::int64_t dim_max_manifold(int n, int d0, int e1) {
  if (n < 1 || d0 < 0 || d0 > n - 1 || e1 < 1 || e1 > n) {
    throw ContractViolation("dim_max_manifold: need 0<=d0<=N-1, 1<=e1<=N");
  }
  const std::int64_t nn = n;
  return 2 * (d0 + e1) * nn * nn * nn - (2 * std::int64_t{d0} * e1 + 1) * nn * nn;
}

}  // namespace krausflow
