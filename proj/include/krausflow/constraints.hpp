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
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "krausflow/errors.hpp"
#include "krausflow/flow.hpp"
#include "krausflow/landscape.hpp"
#include "krausflow/matrix.hpp"
#include "krausflow/sampling.hpp"
#include "krausflow/stiefel.hpp"

namespace krausflow {

// One real linear functional h(S) = <G, S> with G zero outside block `block`.
struct Anchor {
  int block = 0;
  CMatrix matrix;  // the N x N nonzero block of G

  CMatrix dense(int n) const {
    CMatrix g = CMatrix::Zero(static_cast<Eigen::Index>(n) * n * n, n);
    g.middleRows(static_cast<Eigen::Index>(block) * n, n) = matrix;
    return g;
  }
};

// Zero-based (row, col) of a Kraus-operator entry pinned to zero in every
// block.
struct EntryIndex {
  int row = 0;
  int col = 0;
  auto operator<=>(const EntryIndex&) const = default;
};

enum class ConstraintKind { kGeneral, kElementFixing };

// W-invariant affine constraints Tr(B_i^dagger K_j) = 0 for every B_i and
// every block j, split into real and imaginary parts. Element fixing is the
// special case B = |row><col|.
class ConstraintSet {
 public:
  ConstraintSet() = default;

  int n() const { return n_; }
  ConstraintKind kind() const { return kind_; }
  const std::vector<CMatrix>& bs() const { return bs_; }
  const std::vector<EntryIndex>& fixed_entries() const { return fixed_; }
  int num_b() const { return static_cast<int>(bs_.size()); }
  bool empty() const { return bs_.empty(); }
  int size() const { return 2 * num_b() * n_ * n_; }

  // Anchor k (zero-based): for k < nb N^2, B_{k mod nb} in block k / nb;
  // the second half are the same anchors times the imaginary unit.
  Anchor anchor(int k) const {
    const int half = num_b() * n_ * n_;
    const bool imag = k >= half;
    const int base = imag ? k - half : k;
    Anchor a;
    a.block = base / num_b();
    a.matrix = bs_[static_cast<std::size_t>(base % num_b())];
    if (imag) a.matrix *= kI;
    return a;
  }

  std::vector<Anchor> anchors() const {
    std::vector<Anchor> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (int k = 0; k < size(); ++k) out.push_back(anchor(k));
    return out;
  }

  // h_k(S) = <G_k, S> in anchor order.
  RVector values(const CMatrix& s) const {
    const int nb = num_b();
    const int blocks = n_ * n_;
    RVector h(size());
    for (int j = 0; j < blocks; ++j) {
      const auto kj = s.middleRows(static_cast<Eigen::Index>(j) * n_, n_);
      for (int i = 0; i < nb; ++i) {
        const Complex t = (bs_[static_cast<std::size_t>(i)].adjoint() * kj)
                              .trace();
        h(j * nb + i) = t.real();
        h(blocks * nb + j * nb + i) = t.imag();
      }
    }
    return h;
  }
  RVector values(const StiefelPoint& s) const { return values(s.matrix()); }

  // f(S) = sum_k <G_k, S>^2.
  double residual(const CMatrix& s) const {
    return empty() ? 0.0 : values(s).squaredNorm();
  }
  double max_violation(const CMatrix& s) const {
    return empty() ? 0.0 : values(s).cwiseAbs().maxCoeff();
  }

  // grad f = 2 sum_k <G_k, S> G_k; block j is 2 sum_i Tr(B_i^dag K_j) B_i.
  CMatrix residual_gradient(const CMatrix& s) const {
    CMatrix g = CMatrix::Zero(s.rows(), s.cols());
    for (int j = 0; j < n_ * n_; ++j) {
      const auto kj = s.middleRows(static_cast<Eigen::Index>(j) * n_, n_);
      auto gj = g.middleRows(static_cast<Eigen::Index>(j) * n_, n_);
      for (const CMatrix& b : bs_) gj += (2.0 * (b.adjoint() * kj).trace()) * b;
    }
    return g;
  }

  // Orthogonal projection onto L = span_R{G_k}: blockwise projection onto
  // span_C{B_i}. For element fixing this keeps only the pinned entries.
  CMatrix project_onto_span(const CMatrix& a) const {
    const Eigen::Index n = n_;
    const Eigen::Index blocks = n * n;
    CMatrix out = CMatrix::Zero(a.rows(), a.cols());
    if (empty()) return out;
    if (kind_ == ConstraintKind::kElementFixing) {
      for (Eigen::Index j = 0; j < blocks; ++j) {
        for (const EntryIndex& e : fixed_) {
          out(j * n + e.row, e.col) = a(j * n + e.row, e.col);
        }
      }
      return out;
    }
    // Column j of v is vec(K_j), column-major.
    CMatrix v(blocks, blocks);
    for (Eigen::Index j = 0; j < blocks; ++j) {
      for (Eigen::Index c = 0; c < n; ++c) {
        v.col(j).segment(c * n, n) = a.block(j * n, c, n, 1);
      }
    }
    const CMatrix pv = span_basis_ * (span_basis_.adjoint() * v);
    for (Eigen::Index j = 0; j < blocks; ++j) {
      for (Eigen::Index c = 0; c < n; ++c) {
        out.block(j * n, c, n, 1) = pv.col(j).segment(c * n, n);
      }
    }
    return out;
  }

  // a - project_onto_span(a).
  CMatrix strip(const CMatrix& a) const {
    return empty() ? a : CMatrix(a - project_onto_span(a));
  }

  friend ConstraintSet build_general(const std::vector<CMatrix>& bs);
  friend ConstraintSet build_element_fixing(
      int n, const std::vector<EntryIndex>& entries);
  friend ConstraintSet empty_constraints(int n);

 private:
  void finalize() {
    const Eigen::Index nn = static_cast<Eigen::Index>(n_) * n_;
    if (bs_.empty()) {
      span_basis_ = CMatrix::Zero(nn, 0);
      return;
    }
    CMatrix stacked(nn, static_cast<Eigen::Index>(bs_.size()));
    for (std::size_t i = 0; i < bs_.size(); ++i) {
      stacked.col(static_cast<Eigen::Index>(i)) =
          Eigen::Map<const Eigen::VectorXcd>(bs_[i].data(), nn);
    }
    Eigen::ColPivHouseholderQR<CMatrix> qr(stacked);
    qr.setThreshold(1e-12);
    const Eigen::Index rank = qr.rank();
    span_basis_ = (qr.householderQ() * CMatrix::Identity(nn, nn)).leftCols(rank);
  }

  int n_ = 0;
  ConstraintKind kind_ = ConstraintKind::kGeneral;
  std::vector<CMatrix> bs_;
  std::vector<EntryIndex> fixed_;
  CMatrix span_basis_;  // orthonormal basis of span_C{vec B_i}
};

inline int max_constraint_count(int n) { return n * n - n - 1; }

inline ConstraintSet empty_constraints(int n) {
  if (n < 1) throw ContractViolation("empty_constraints: n must be >= 1");
  ConstraintSet cs;
  cs.n_ = n;
  cs.finalize();
  return cs;
}

inline ConstraintSet build_general(const std::vector<CMatrix>& bs) {
  if (bs.empty()) throw ContractViolation("build_general: no B matrices");
  const auto n = static_cast<int>(bs.front().rows());
  if (n < 2) throw ContractViolation("build_general: N must be >= 2");
  if (static_cast<int>(bs.size()) > max_constraint_count(n)) {
    throw ContractViolation("build_general: more than N^2-N-1 B matrices");
  }
  for (const CMatrix& b : bs) {
    if (b.rows() != n || b.cols() != n) {
      throw DimensionError("build_general: every B must be N x N");
    }
    require_finite(b, "build_general");
    if (b.norm() == 0.0) throw ContractViolation("build_general: zero B");
  }
  ConstraintSet cs;
  cs.n_ = n;
  cs.kind_ = ConstraintKind::kGeneral;
  cs.bs_ = bs;
  cs.finalize();
  return cs;
}

inline ConstraintSet build_element_fixing(
    int n, const std::vector<EntryIndex>& entries) {
  if (entries.empty()) {
    throw ContractViolation("build_element_fixing: empty index sets");
  }
  if (n < 2) throw ContractViolation("build_element_fixing: N must be >= 2");
  if (static_cast<int>(entries.size()) > max_constraint_count(n)) {
    throw ContractViolation("build_element_fixing: more than N^2-N-1 pairs");
  }
  std::set<EntryIndex> seen;
  std::vector<int> per_col(static_cast<std::size_t>(n), 0);
  for (const EntryIndex& e : entries) {
    if (e.row < 0 || e.row >= n || e.col < 0 || e.col >= n) {
      throw ContractViolation("build_element_fixing: index out of range");
    }
    if (!seen.insert(e).second) {
      throw ContractViolation("build_element_fixing: repeated pair");
    }
    ++per_col[static_cast<std::size_t>(e.col)];
  }
  for (int c = 0; c < n; ++c) {
    if (per_col[static_cast<std::size_t>(c)] == n) {
      throw ContractViolation(
          "build_element_fixing: a whole column is fixed, no feasible point");
    }
  }
  ConstraintSet cs;
  cs.n_ = n;
  cs.kind_ = ConstraintKind::kElementFixing;
  cs.fixed_ = entries;
  for (const EntryIndex& e : entries) {
    CMatrix b = CMatrix::Zero(n, n);
    b(e.row, e.col) = 1.0;
    cs.bs_.push_back(std::move(b));
  }
  cs.finalize();
  return cs;
}

// Zipped form: pair q fixes entry (rows[q], cols[q]).
inline ConstraintSet build_element_fixing(int n, const std::vector<int>& rows,
                                          const std::vector<int>& cols) {
  if (rows.size() != cols.size()) {
    throw ContractViolation("build_element_fixing: index sets differ in size");
  }
  std::vector<EntryIndex> entries;
  for (std::size_t q = 0; q < rows.size(); ++q) {
    entries.push_back({rows[q], cols[q]});
  }
  return build_element_fixing(n, entries);
}

// Random B: i.i.d. complex Gaussian entries, unit Frobenius norm.
inline ConstraintSet random_general_constraints(int n, int count,
                                                SeededStream& rng) {
  std::vector<CMatrix> bs;
  for (int i = 0; i < count; ++i) {
    CMatrix b = complex_gaussian(n, n, rng);
    bs.push_back(b / b.norm());
  }
  return build_general(bs);
}

// `count` distinct entries chosen uniformly, redrawn until no column is
// completely fixed.
inline std::vector<EntryIndex> random_fixed_entries(int n, int count,
                                                    SeededStream& rng) {
  if (count < 1 || count > max_constraint_count(n)) {
    throw ContractViolation("random_fixed_entries: count out of range");
  }
  std::vector<EntryIndex> all;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) all.push_back({r, c});
  }
  for (;;) {
    std::shuffle(all.begin(), all.end(), rng.engine());
    std::vector<EntryIndex> pick(all.begin(), all.begin() + count);
    std::vector<int> per_col(static_cast<std::size_t>(n), 0);
    bool ok = true;
    for (const EntryIndex& e : pick) {
      if (++per_col[static_cast<std::size_t>(e.col)] == n) ok = false;
    }
    if (ok) {
      std::sort(pick.begin(), pick.end());
      return pick;
    }
  }
}

// Z_ab = <G_a, P_S(G_b)>, real symmetric PSD.
inline Eigen::MatrixXd constraint_gram(const StiefelPoint& s,
                                       const ConstraintSet& cs) {
  const int q = cs.size();
  std::vector<CMatrix> projected;
  std::vector<CMatrix> dense;
  projected.reserve(static_cast<std::size_t>(q));
  dense.reserve(static_cast<std::size_t>(q));
  for (int k = 0; k < q; ++k) {
    dense.push_back(cs.anchor(k).dense(s.n()));
    projected.push_back(project_tangent(s.matrix(), dense.back()));
  }
  Eigen::MatrixXd z(q, q);
  for (int a = 0; a < q; ++a) {
    for (int b = a; b < q; ++b) {
      z(a, b) = z(b, a) = hs_inner(dense[a], projected[b]);
    }
  }
  return z;
}

inline constexpr double kGramRankTol = 1e-10;

inline int constraint_rank(const StiefelPoint& s, const ConstraintSet& cs) {
  if (cs.empty()) return 0;
  Eigen::Index rank = 0;
  symmetric_pinv(constraint_gram(s, cs), kGramRankTol, &rank);
  return static_cast<int>(rank);
}

// dS - sum_{a,b} P_S(G_a) (Z^+)_ab <G_b, dS>: removes from a tangent vector
// every direction that would change a constraint value.
inline TangentVector constrained_project(const StiefelPoint& s,
                                         const ConstraintSet& cs,
                                         const TangentVector& v) {
  require_same_shape(s.matrix(), v.matrix(), "constrained_project");
  if (cs.empty()) return v;
  if (cs.n() != s.n()) {
    throw DimensionError("constrained_project: dimension mismatch");
  }
  const int q = cs.size();
  const Eigen::MatrixXd zp =
      symmetric_pinv(constraint_gram(s, cs), kGramRankTol);
  RVector g(q);
  for (int b = 0; b < q; ++b) g(b) = hs_inner(cs.anchor(b).dense(s.n()), v.matrix());
  const RVector coef = zp * g;
  CMatrix out = v.matrix();
  for (int a = 0; a < q; ++a) {
    if (coef(a) == 0.0) continue;
    out -= coef(a) * project_tangent(s.matrix(), cs.anchor(a).dense(s.n()));
  }
  return TangentVector(out);
}

// The same projection computed through the N^2-dimensional normal space:
// the result is the orthogonal projection of v onto T_S cap L^perp, i.e.
// w = (I - Q_L)(v - S H) with Hermitian H fixed by w being tangent. This is
// what the constrained flow evaluates; constrained_project is its reference.
class ConstrainedTangentProjector {
 public:
  ConstrainedTangentProjector(const ConstraintSet& cs, const CMatrix& s)
      : cs_(&cs) {
    const int n = static_cast<int>(s.cols());
    const Eigen::Index dim = static_cast<Eigen::Index>(n) * n;
    normals_.resize(2 * s.size(), dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
      const CMatrix nk = cs.strip(s * hermitian_unit(n, static_cast<int>(k)));
      normals_.col(k) = as_real(nk);
    }
    gram_pinv_ = symmetric_pinv(normals_.transpose() * normals_, kGramRankTol);
  }

  CMatrix operator()(const CMatrix& v) const {
    CMatrix w = cs_->strip(v);
    const RVector x = gram_pinv_ * (normals_.transpose() * as_real(w));
    Eigen::Map<RVector>(reinterpret_cast<double*>(w.data()), 2 * w.size()) -=
        normals_ * x;
    return w;
  }

  // Orthonormal basis (real HS inner product) of N x N Hermitian matrices.
  static CMatrix hermitian_unit(int n, int k) {
    CMatrix e = CMatrix::Zero(n, n);
    constexpr double r = 0.70710678118654752440;
    int idx = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        if (i == j) {
          if (idx++ == k) {
            e(i, i) = 1.0;
            return e;
          }
          continue;
        }
        if (idx++ == k) {
          e(i, j) = e(j, i) = r;
          return e;
        }
        if (idx++ == k) {
          e(i, j) = Complex(0.0, r);
          e(j, i) = Complex(0.0, -r);
          return e;
        }
      }
    }
    throw DimensionError("hermitian_unit: index out of range");
  }

 private:
  // Interleaved (re, im) view; dot products of these equal hs_inner.
  static Eigen::Map<const RVector> as_real(const CMatrix& a) {
    return {reinterpret_cast<const double*>(a.data()), 2 * a.size()};
  }

  const ConstraintSet* cs_;
  Eigen::MatrixXd normals_;  // columns: (I - Q_L) S E_k, real coordinates
  Eigen::MatrixXd gram_pinv_;
};

// One Gauss-Newton step toward h = 0: the minimum-norm tangent correction
// delta with <G_k, delta> = -h_k(S), followed by polar retraction. Writing
// delta = -Q_L S + w, the tangency condition fixes w in (I - Q_L) S Herm.
inline CMatrix feasibility_newton_step(const ConstraintSet& cs,
                                       const CMatrix& s) {
  const int n = static_cast<int>(s.cols());
  const int dim = n * n;
  const CMatrix qs = cs.project_onto_span(s);
  std::vector<CMatrix> normals;
  normals.reserve(static_cast<std::size_t>(dim));
  Eigen::MatrixXd a(dim, dim);
  RVector b(dim);
  for (int k = 0; k < dim; ++k) {
    const CMatrix se = s * ConstrainedTangentProjector::hermitian_unit(n, k);
    normals.push_back(cs.strip(se));
    b(k) = hs_inner(se, qs);
  }
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j) {
      a(i, j) = a(j, i) = hs_inner(normals[i], normals[j]);
    }
  }
  const RVector x = symmetric_pinv(a, kGramRankTol) * b;
  CMatrix next = s - qs;
  for (int k = 0; k < dim; ++k) next += x(k) * normals[static_cast<std::size_t>(k)];
  return polar_retract(next);
}

struct FeasibilityOptions {
  double residual_target = 1e-10;  // stop the descent once f < residual_target
  long max_steps = 100000;
  // Newton steps applied after a successful descent; each is kept only if it
  // lowers f. The descent alone can stall near 1e-14 when the constraint
  // surfaces meet almost tangentially.
  int polish_steps = 3;
};

struct FeasibilityResult {
  StiefelPoint point;
  double residual = 0.0;
  long iterations = 0;
  bool feasible = false;
  Trajectory trajectory;  // objective_series holds f along the descent
};

// Descent dS/dsigma = -P_S(grad f) toward h(S) = 0. Not fatal on failure:
// `feasible` reports whether the residual target was met.
inline FeasibilityResult feasibility_descent(const StiefelPoint& s0,
                                             const ConstraintSet& cs,
                                             FlowConfig cfg,
                                             FeasibilityOptions opt = {}) {
  if (cs.n() != s0.n()) {
    throw DimensionError("feasibility_descent: dimension mismatch");
  }
  cfg.max_steps = opt.max_steps;
  cfg.stationary_tol = 0.0;
  FeasibilityResult res;
  res.trajectory = integrate_flow(
      s0, cfg,
      [&](const CMatrix& s) {
        return CMatrix(-project_tangent(s, cs.residual_gradient(s)));
      },
      [&](const CMatrix& s) { return cs.residual(s); },
      [&](double f) { return f < opt.residual_target; },
      detail::polar_repair(cfg), [](const CMatrix&) {});
  CMatrix s = res.trajectory.final_point.matrix();
  double f = res.trajectory.final_value();
  res.feasible = f < opt.residual_target;
  if (res.feasible && f > 0.0) {
    for (int k = 0; k < opt.polish_steps; ++k) {
      CMatrix t = feasibility_newton_step(cs, s);
      const double ft = cs.residual(t);
      if (!(ft < f)) break;
      s = std::move(t);
      f = ft;
    }
  }
  res.point = StiefelPoint::unchecked(s0.n(), std::move(s));
  res.residual = f;
  res.iterations = res.trajectory.tau;
  return res;
}

// Random starts until feasible, up to `restarts` attempts.
inline FeasibilityResult find_feasible_point(const ConstraintSet& cs,
                                             SeededStream& rng,
                                             const FlowConfig& cfg,
                                             int restarts = 5,
                                             FeasibilityOptions opt = {}) {
  FeasibilityResult last;
  for (int attempt = 0; attempt < restarts; ++attempt) {
    last = feasibility_descent(random_stiefel(cs.n(), rng), cs, cfg, opt);
    if (last.feasible) return last;
  }
  throw FeasibilityFailure("feasibility phase failed after " +
                           std::to_string(restarts) +
                           " restarts, residual " +
                           std::to_string(last.residual));
}

inline constexpr double kConstraintRepairThreshold = 1e-7;
inline constexpr long kConstraintRepairSteps = 100;

// Gradient ascent restricted to h^{-1}(0). s0 must already be feasible.
// After every accepted step the drift is repaired by polar retraction, and
// any constraint value above 1e-7 by a short feasibility descent.
inline Trajectory flow_ascent_constrained(const StiefelPoint& s0,
                                          const ControlProblem& p,
                                          const ConstraintSet& cs,
                                          const FlowConfig& cfg) {
  detail::check_problem(s0, p, "flow_ascent_constrained");
  if (cs.n() != s0.n()) {
    throw DimensionError("flow_ascent_constrained: dimension mismatch");
  }
  if (cs.max_violation(s0.matrix()) > 1e-5) {
    throw ContractViolation(
        "flow_ascent_constrained: start point violates the constraints");
  }
  const double threshold = resolve_target(cfg, p) - cfg.stop_eps;
  FlowConfig repair_cfg = cfg;
  repair_cfg.record_steps = false;
  FeasibilityOptions repair_opt;
  repair_opt.residual_target = kConstraintRepairThreshold * kConstraintRepairThreshold;
  repair_opt.max_steps = kConstraintRepairSteps;
  const int n = s0.n();
  auto polar = detail::polar_repair(cfg);
  return integrate_flow(
      s0, cfg,
      [&](const CMatrix& s) {
        const ConstrainedTangentProjector proj(cs, s);
        return proj(detail::gradient_matrix(p, s));
      },
      [&](const CMatrix& s) { return detail::objective_value(p, s); },
      [&](double j) { return j > threshold; },
      [&](CMatrix& s, double drift) {
        bool changed = polar(s, drift);
        if (cs.max_violation(s) > kConstraintRepairThreshold) {
          s = feasibility_descent(StiefelPoint::unchecked(n, s), cs, repair_cfg,
                                  repair_opt)
                  .point.matrix();
          changed = true;
        }
        return changed;
      },
      [](const CMatrix&) {});
}

struct FullGradient {};
struct ConstrainedGradient {
  const ConstraintSet* constraints;
};
struct FeasibilityField {
  const ConstraintSet* constraints;
};
using VectorField =
    std::variant<FullGradient, ConstrainedGradient, FeasibilityField>;

// Dispatches on the vector field. For FeasibilityField the objective series
// holds the residual f, which is nonincreasing.
inline Trajectory flow_ascent(const StiefelPoint& s0, const ControlProblem& p,
                              const FlowConfig& cfg, const VectorField& field) {
  return std::visit(
      [&](const auto& f) -> Trajectory {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, FullGradient>) {
          return flow_ascent(s0, p, cfg);
        } else if constexpr (std::is_same_v<T, ConstrainedGradient>) {
          return flow_ascent_constrained(s0, p, *f.constraints, cfg);
        } else {
          return feasibility_descent(s0, *f.constraints, cfg).trajectory;
        }
      },
      field);
}

// Optimal J under element fixing with Theta = |N><N|: pinning (K_l)_{N,c}
// removes the population of level c from reach of the target.
inline double analytic_jmax_element_fixing(
    const ControlProblem& p, const std::vector<EntryIndex>& entries) {
  const int n = p.n();
  const RVector& th = p.theta();
  bool projector = std::abs(th(n - 1) - 1.0) <= 1e-12;
  for (int i = 0; i + 1 < n; ++i) projector = projector && std::abs(th(i)) <= 1e-12;
  if (!projector) {
    throw CapabilityError(
        "analytic_jmax_element_fixing: Theta must be the projector |N><N|");
  }
  std::set<int> blocked;
  for (const EntryIndex& e : entries) {
    if (e.row < 0 || e.row >= n || e.col < 0 || e.col >= n) {
      throw ContractViolation("analytic_jmax_element_fixing: bad index");
    }
    if (e.row == n - 1) blocked.insert(e.col);
  }
  double lost = 0.0;
  for (int c : blocked) lost += p.rho()(c);
  return 1.0 - lost;
}

inline double analytic_jmax_element_fixing(const ControlProblem& p,
                                           const std::vector<int>& rows,
                                           const std::vector<int>& cols) {
  if (rows.size() != cols.size() || rows.empty()) {
    throw ContractViolation(
        "analytic_jmax_element_fixing: index sets must be nonempty and equal");
  }
  std::vector<EntryIndex> entries;
  for (std::size_t q = 0; q < rows.size(); ++q) entries.push_back({rows[q], cols[q]});
  return analytic_jmax_element_fixing(p, entries);
}

// Text format, one directive per line ('#' starts a comment):
//   n <N>
//   b <re> <im> <re> <im> ...    N^2 complex entries of one B, row-major
//   fix <row> <col>              one-based entry pinned to zero
// A file holds either b lines or fix lines, not both.
inline void write_constraints(std::ostream& os, const ConstraintSet& cs) {
  const auto old = os.precision(17);
  os << "n " << cs.n() << '\n';
  if (cs.kind() == ConstraintKind::kElementFixing) {
    for (const EntryIndex& e : cs.fixed_entries()) {
      os << "fix " << e.row + 1 << ' ' << e.col + 1 << '\n';
    }
  } else {
    for (const CMatrix& b : cs.bs()) {
      os << 'b';
      for (int r = 0; r < cs.n(); ++r) {
        for (int c = 0; c < cs.n(); ++c) {
          os << ' ' << b(r, c).real() << ' ' << b(r, c).imag();
        }
      }
      os << '\n';
    }
  }
  os.precision(old);
}

inline ConstraintSet read_constraints(std::istream& is) {
  int n = 0;
  std::vector<CMatrix> bs;
  std::vector<EntryIndex> fixed;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ContractViolation("constraints line " + std::to_string(lineno) +
                            ": " + msg);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "n") {
      if (!(ls >> n) || n < 2) fail("expected N >= 2");
    } else if (tag == "fix") {
      EntryIndex e;
      if (!(ls >> e.row >> e.col)) fail("expected two indices");
      fixed.push_back({e.row - 1, e.col - 1});
    } else if (tag == "b") {
      std::vector<Complex> entries;
      double re = 0.0;
      double im = 0.0;
      while (ls >> re) {
        if (!(ls >> im)) fail("odd number of reals in b line");
        entries.emplace_back(re, im);
      }
      if (!ls.eof()) fail("malformed number");
      const auto side = static_cast<int>(std::lround(std::sqrt(entries.size())));
      if (side * side != static_cast<int>(entries.size()) || side < 1) {
        fail("b line must hold N^2 complex entries");
      }
      if (n == 0) n = side;
      if (side != n) fail("b line size disagrees with n");
      bs.push_back(cmatrix_from_row_major(side, side, entries));
    } else {
      fail("unknown directive '" + tag + "'");
    }
    std::string extra;
    if (tag != "b" && (ls >> extra)) fail("trailing tokens");
  }
  if (!bs.empty() && !fixed.empty()) {
    throw ContractViolation("constraints: mixes b and fix lines");
  }
  if (!fixed.empty()) {
    if (n == 0) throw ContractViolation("constraints: fix lines need 'n'");
    return build_element_fixing(n, fixed);
  }
  if (bs.empty()) throw ContractViolation("constraints: no constraints given");
  return build_general(bs);
}

}  // namespace krausflow
