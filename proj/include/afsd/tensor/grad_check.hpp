#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "afsd/tensor/tape.hpp"

namespace afsd {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Builds a scalar on `tape` from leaves given in the same order as the
/// probe point.
using ScalarFunction = std::function<Var(Tape& tape, std::span<const Var> leaves)>;

struct LeafError {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<LeafError> leaves;
  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
};

/// |a - n| / max(1e-8, |a| + |n|) per coordinate, a from Tape::backward and n
/// from central differences with step h; reported as the per-leaf maximum.
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of `f` at `point` against central
/// differences. Throws NumericError if f is non-finite at any probe.
GradCheckReport grad_check(const ScalarFunction& f, std::span<const NamedTensor> point,
                           double h = 1e-3);

}  // namespace afsd
