// SPDX-License-Identifier: Apache-2.0
#include "sancl/optim.hpp"

#include <cmath>

namespace sancl {

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), opt_(options) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
    if (opt_.float_storage)
      for (auto& x : p->value.data()) x = static_cast<float>(x);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.trainable) continue;
    Matrix& m = m_[k];
    Matrix& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g;
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      double x = p.value[i] - opt_.learning_rate * mhat / (std::sqrt(vhat) + opt_.epsilon);
      if (opt_.float_storage) x = static_cast<float>(x);
      p.value[i] = x;
    }
  }
}

}  // namespace sancl
