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

#include <stdexcept>
#include <string>

namespace krausflow {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input is (numerically) rank deficient or singular.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of the callee was violated.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// The request is valid but outside what the routine supports.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Drift beyond the hard limit, or non-finite integrator state.
class IntegrationFailure : public Error {
 public:
  using Error::Error;
};

// The feasibility phase could not drive the constraint residual to zero.
class FeasibilityFailure : public Error {
 public:
  using Error::Error;
};

// A trajectory left an invariant submanifold it must stay on.
class InvarianceViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace krausflow
