// SPDX-License-Identifier: Apache-2.0
#include "sancl/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "sancl/errors.hpp"

namespace sancl {

GradCheckResult grad_check(const std::function<ad::Var()>& loss, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  const ad::Var root = loss();
  const double base = root.scalar();
  ad::backward(root);
  const double again = loss().scalar();
  if (base != again) {
    throw GradCheckError("loss is not deterministic: " + std::to_string(base) + " vs " +
                         std::to_string(again));
  }

  GradCheckResult result;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    const std::size_t n = p->value.size();
    const std::size_t stride =
        options.max_per_param == 0 ? 1 : std::max<std::size_t>(1, n / options.max_per_param);
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = p->value[i];
      const double h = options.epsilon;
      auto at = [&](double offset) {
        p->value[i] = orig + offset;
        return loss().scalar();
      };
      double numeric = 0.0;
      if (options.five_point) {
        numeric = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
      } else {
        numeric = (at(h) - at(-h)) / (2 * h);
      }
      p->value[i] = orig;
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_relative_error || !std::isfinite(rel)) {
        result.max_relative_error = rel;
        result.worst_coordinate = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace sancl
