#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "scourcast/error.hpp"
#include "scourcast/nn/layers.hpp"
#include "scourcast/nn/loss.hpp"
#include "scourcast/nn/ops.hpp"
#include "scourcast/random.hpp"

namespace scour::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<param>[i]" or "input[i]"
  std::size_t checked = 0;
};

// Loss over a module output; fills `grad` with dL/d(output) when non-null.
using LossFn = std::function<double(const Tensor& out, Tensor* grad)>;

inline double relative_error(double backprop, double numeric) {
  return std::abs(backprop - numeric) / std::max({std::abs(backprop), std::abs(numeric), 1e-8});
}

// L = 0.5 * sum (y - t)^2 over every element; works for any output rank.
inline LossFn squared_error_loss(Tensor target) {
  return [target = std::move(target)](const Tensor& out, Tensor* grad) {
    require(out.size() == target.size(), Errc::ShapeMismatch, "gradcheck target size mismatch");
    double loss = 0.0;
    if (grad) *grad = Tensor(out.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double e = out[i] - target[i];
      loss += 0.5 * e * e;
      if (grad) (*grad)[i] = e;
    }
    return loss;
  };
}

inline LossFn masked_mse_loss(Tensor target, ChannelMask mask) {
  return [target = std::move(target), mask = std::move(mask)](const Tensor& out, Tensor* grad) {
    if (grad) *grad = mse_loss_grad(out, target, mask);
    return mse_loss(out, target, mask);
  };
}

// Compares backprop gradients of every parameter element (and optionally of
// every input element) against central differences with step eps.
inline GradCheckResult gradient_check(Module& module, const Tensor& input, const LossFn& loss,
                                      Mode mode = Mode::Train, double eps = 1e-5,
                                      bool include_input = true) {
  require(module.deterministic(mode), Errc::NonDeterministic,
          "graph contains train-mode dropout without a pinned seed");
  auto params = parameters_of(module);
  for (Parameter* p : params) p->zero_grad();
  Tensor grad_out;
  loss(module.forward(input, mode), &grad_out);
  const Tensor grad_in = module.backward(grad_out);

  for (Parameter* p : params) {
    require(p->grad.all_finite(), Errc::NonFiniteGradient, "non-finite gradient in " + p->name);
  }
  require(grad_in.all_finite(), Errc::NonFiniteGradient, "non-finite input gradient");

  GradCheckResult result;
  auto probe = [&](double& slot, double backprop, const std::string& label) {
    const double saved = slot;
    slot = saved + eps;
    const double up = loss(module.forward(input, mode), nullptr);
    slot = saved - eps;
    const double down = loss(module.forward(input, mode), nullptr);
    slot = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = relative_error(backprop, numeric);
    ++result.checked;
    if (err >= result.max_rel_error) {
      result.max_rel_error = err;
      result.worst = label;
    }
  };

  for (Parameter* p : params) {
    const Tensor backprop = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      probe(p->value[i], backprop[i], p->name + "[" + std::to_string(i) + "]");
    }
  }
  if (include_input) {
    Tensor x = input;
    auto probe_input = [&](std::size_t i) {
      const double saved = x[i];
      x[i] = saved + eps;
      const double up = loss(module.forward(x, mode), nullptr);
      x[i] = saved - eps;
      const double down = loss(module.forward(x, mode), nullptr);
      x[i] = saved;
      const double err = relative_error(grad_in[i], (up - down) / (2.0 * eps));
      ++result.checked;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = "input[" + std::to_string(i) + "]";
      }
    };
    for (std::size_t i = 0; i < x.size(); ++i) probe_input(i);
  }
  // leave the module's caches consistent with the unperturbed input
  module.forward(input, mode);
  return result;
}

// Checks dMSE/dpred against central differences of mse_loss itself.
inline GradCheckResult loss_gradient_check(const Tensor& pred, const Tensor& target,
                                           const ChannelMask& mask, double eps = 1e-5) {
  const Tensor grad = mse_loss_grad(pred, target, mask);
  GradCheckResult result;
  Tensor p = pred;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + eps;
    const double up = mse_loss(p, target, mask);
    p[i] = saved - eps;
    const double down = mse_loss(p, target, mask);
    p[i] = saved;
    const double err = relative_error(grad[i], (up - down) / (2.0 * eps));
    ++result.checked;
    if (err >= result.max_rel_error) {
      result.max_rel_error = err;
      result.worst = "pred[" + std::to_string(i) + "]";
    }
  }
  return result;
}

// Exposes one LSTM cell step as a module: input [B x (n_x + 2u)] packs
// (x_t, a_prev, c_prev); output [B x 2u] packs (a_t, c_t).
class LstmCellProbe : public Module {
 public:
  LstmCellProbe(std::size_t n_x, std::size_t units, Rng& init)
      : nx_(n_x),
        units_(units),
        weight_("cell.kernel", uniform_tensor({4 * units, units + n_x}, 0.8, init)),
        bias_("cell.bias", uniform_tensor({4 * units}, 0.5, init)) {}

  Tensor forward(const Tensor& packed, Mode) override {
    const std::size_t batch = packed.dim(0);
    Tensor x({batch, nx_}), a({batch, units_}), c({batch, units_});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < nx_; ++j) x.at(b, j) = packed.at(b, j);
      for (std::size_t j = 0; j < units_; ++j) {
        a.at(b, j) = packed.at(b, nx_ + j);
        c.at(b, j) = packed.at(b, nx_ + units_ + j);
      }
    }
    auto s = lstm_cell_step(x, a, c, weight_.value, bias_.value, &cache_);
    Tensor out({batch, 2 * units_});
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < units_; ++j) {
        out.at(b, j) = s.a.at(b, j);
        out.at(b, units_ + j) = s.c.at(b, j);
      }
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    const std::size_t batch = grad_out.dim(0);
    Tensor da({batch, units_}), dc({batch, units_});
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < units_; ++j) {
        da.at(b, j) = grad_out.at(b, j);
        dc.at(b, j) = grad_out.at(b, units_ + j);
      }
    auto g = lstm_cell_backward(cache_, weight_.value, da, dc, weight_.grad, bias_.grad);
    Tensor dpacked({batch, nx_ + 2 * units_});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < nx_; ++j) dpacked.at(b, j) = g.dx.at(b, j);
      for (std::size_t j = 0; j < units_; ++j) {
        dpacked.at(b, nx_ + j) = g.da_prev.at(b, j);
        dpacked.at(b, nx_ + units_ + j) = g.dc_prev.at(b, j);
      }
    }
    return dpacked;
  }

  void collect_parameters(std::vector<Parameter*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  std::size_t nx_, units_;
  Parameter weight_, bias_;
  LstmCache cache_;
};

}  // namespace scour::nn
