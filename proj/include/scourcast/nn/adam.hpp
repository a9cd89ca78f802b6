#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "scourcast/nn/tensor.hpp"

namespace scour::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected adaptive-moment update; `step` counts from 1.
inline void adam_step(const std::vector<Parameter*>& params, std::int64_t step,
                      const AdamOptions& opt = {}) {
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      double& m = p->first_moment[i];
      double& v = p->second_moment[i];
      m = opt.beta1 * m + (1.0 - opt.beta1) * g;
      v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
      const double m_hat = m / c1;
      const double v_hat = v / c2;
      p->value[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
  }
}

}  // namespace scour::nn
