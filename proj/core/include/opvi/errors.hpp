// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace opvi {

/// Base class for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement detected at graph construction or binding.
struct ShapeError : Error {
  using Error::Error;
};

/// A variable referenced by the evaluated expression has no bound value.
struct UnboundVariableError : Error {
  explicit UnboundVariableError(const std::string& name)
      : Error("unbound variable: " + name), variable(name) {}
  std::string variable;
};

/// An intermediate value overflowed or became NaN during evaluation.
struct NonFiniteError : Error {
  using Error::Error;
};

/// Structural misuse of a graph (bad node id, non-scalar differentiation
/// root, unknown variable passed to a transform).
struct GraphError : Error {
  using Error::Error;
};

/// The variational family cannot provide a log density or score function.
struct DensityUnavailableError : Error {
  using Error::Error;
};

/// Operator, family, and model were combined in an unsupported way.
struct IncompatibleError : Error {
  using Error::Error;
};

/// Invalid argument outside the shape system (bad indices, empty batch,
/// non-binary data, zero-probability support point, ...).
struct InvalidArgumentError : Error {
  using Error::Error;
};

/// Named but unspecified operator variants.
struct NotImplementedError : Error {
  using Error::Error;
};

/// Configuration file problems; the CLI maps this to exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

/// File format or filesystem problems for data and checkpoint files.
struct IoError : Error {
  using Error::Error;
};

/// A gradient became non-finite during optimization; the CLI maps this to
/// exit code 3. Carries the iteration at which the run aborted.
struct NumericalAbort : Error {
  NumericalAbort(const std::string& what, int iter)
      : Error(what + " (iteration " + std::to_string(iter) + ")"),
        iteration(iter) {}
  int iteration;
};

}  // namespace opvi
