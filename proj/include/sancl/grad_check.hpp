// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>

#include "sancl/autograd.hpp"

namespace sancl {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_coordinate;  // "<param>[index]"
  std::size_t coordinates = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-6;
  /// Denominator floor: relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  /// Check at most this many coordinates per parameter (0 = all), spread
  /// evenly over the tensor.
  std::size_t max_per_param = 0;
  /// Fourth-order stencil (f(x-2h), f(x-h), f(x+h), f(x+2h)) instead of
  /// the two-point central difference; allows a larger epsilon.
  bool five_point = false;
};

/// Compares reverse-mode gradients of `loss` against central differences on
/// every coordinate of `params`. `loss` must build a fresh graph on each call
/// and return a 1 x 1 Var. Throws GradCheckError when two evaluations at the
/// same point disagree.
GradCheckResult grad_check(const std::function<ad::Var()>& loss, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace sancl
