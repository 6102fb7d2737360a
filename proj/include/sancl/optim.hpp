// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "sancl/autograd.hpp"

namespace sancl {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Round parameter values to float after every step so a float
  /// checkpoint reproduces the in-memory model exactly.
  bool float_storage = false;
};

/// Plain Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options);

  void zero_grad();
  void step();
  long steps_taken() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamOptions opt_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

}  // namespace sancl
