#pragma once

#include <stdexcept>
#include <string>

namespace ceuler {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A frequency or grid lies outside what a field's resolution can represent,
/// or two fields of different resolution were combined.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// Periodic Poisson problem with a right-hand side of nonzero mean.
class SolvabilityError : public Error {
 public:
  using Error::Error;
};

/// h(g) <= 0 somewhere on the evaluation grid.
class PositivityError : public Error {
 public:
  using Error::Error;
};

/// No identity template resolved a decomposition subgoal.
class DecompositionError : public Error {
 public:
  using Error::Error;
};

/// Initial and target densities carry different mass.
class MassCompatibilityError : public Error {
 public:
  using Error::Error;
};

/// Malformed input: configs, containers, parameter ranges.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace ceuler
