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
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "krausflow/errors.hpp"
#include "krausflow/matrix.hpp"

namespace krausflow {

// SplitMix64 finalizer; used to derive engine seeds from (seed, stream_id).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// A random stream fully determined by (seed, stream_id). Each run of an
// experiment owns one, keyed by its run index.
class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {
    std::seed_seq seq{splitmix64(seed), splitmix64(seed ^ 0x5851f42d4c957f2dULL),
                      splitmix64(stream_id + 0x14057b7ef767814fULL),
                      splitmix64(splitmix64(stream_id) ^ seed)};
    engine_.seed(seq);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Uniform on the open interval (0, 1).
  double uniform_open() {
    for (;;) {
      const double u = unit_(engine_);
      if (u > 0.0) return u;
    }
  }

  double normal() { return normal_(engine_); }

  // Standard complex Gaussian: real and imaginary parts i.i.d. N(0, 1/2).
  Complex complex_normal() {
    constexpr double s = 0.70710678118654752440;
    const double re = normal_(engine_);
    const double im = normal_(engine_);
    return {s * re, s * im};
  }

  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    return d(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline CMatrix complex_gaussian(Eigen::Index rows, Eigen::Index cols,
                                SeededStream& rng) {
  CMatrix g(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) g(r, c) = rng.complex_normal();
  }
  return g;
}

// Flat (Dirichlet(1,...,1)) sample on the probability simplex via normalized
// exponentials. The last component is fixed by subtraction so the sum is 1.
inline RVector uniform_simplex(int n, SeededStream& rng) {
  if (n < 1) throw ContractViolation("uniform_simplex: n must be >= 1");
  RVector x(n);
  for (int i = 0; i < n; ++i) x(i) = -std::log(rng.uniform_open());
  const double total = x.sum();
  RVector y(n);
  double acc = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    y(i) = x(i) / total;
    acc += y(i);
  }
  y(n - 1) = std::max(0.0, 1.0 - acc);
  return y;
}

enum class ZeroPlacement {
  kLeadingZeros,     // zeros occupy indices 0..d0-1
  kRandomPositions,  // last index zero first, the rest at random indices
};

// Diagonal of a density matrix with exactly d0 zero eigenvalues. The nonzero
// part is a flat simplex sample; d0 = n-1 gives a pure state.
inline RVector random_rho(int n, int d0, ZeroPlacement placement,
                          SeededStream& rng) {
  if (n < 1 || d0 < 0 || d0 > n - 1) {
    throw ContractViolation("random_rho: need 0 <= d0 <= n-1");
  }
  const RVector mass = uniform_simplex(n - d0, rng);
  std::vector<int> support(static_cast<std::size_t>(n));
  std::iota(support.begin(), support.end(), 0);
  if (placement == ZeroPlacement::kRandomPositions) {
    // The last level (the projector target) is the first zero slot; the
    // remaining d0-1 zeros land on random levels among 0..n-2.
    std::vector<int> pool(static_cast<std::size_t>(n - 1));
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    std::vector<bool> zero(static_cast<std::size_t>(n), false);
    if (d0 > 0) zero[static_cast<std::size_t>(n - 1)] = true;
    for (int k = 0; k + 1 < d0; ++k) {
      zero[static_cast<std::size_t>(pool[static_cast<std::size_t>(k)])] = true;
    }
    support.clear();
    for (int i = 0; i < n; ++i) {
      if (!zero[static_cast<std::size_t>(i)]) support.push_back(i);
    }
  } else {
    support.erase(support.begin(), support.begin() + d0);
  }
  RVector rho = RVector::Zero(n);
  for (int k = 0; k < n - d0; ++k) {
    rho(support[static_cast<std::size_t>(k)]) = mass(k);
  }
  return rho;
}

inline RVector maximally_mixed(int n) {
  if (n < 1) throw ContractViolation("maximally_mixed: n must be >= 1");
  return RVector::Constant(n, 1.0 / n);
}

// Observable spectrum {0 (x n-e1), 1 (x e1)} with the ones at the trailing
// indices; e1 = 1 is the projector onto the last basis state.
inline RVector random_theta(int n, int e1) {
  if (n < 1 || e1 < 1 || e1 > n) {
    throw ContractViolation("random_theta: need 1 <= e1 <= n");
  }
  RVector theta = RVector::Zero(n);
  theta.tail(e1).setOnes();
  return theta;
}

inline CMatrix haar_unitary(int n, SeededStream& rng) {
  if (n < 1) throw ContractViolation("haar_unitary: n must be >= 1");
  for (;;) {
    try {
      return qr_phase_fixed(complex_gaussian(n, n, rng)).q;
    } catch (const DegenerateInputError&) {
    }
  }
}

}  // namespace krausflow
