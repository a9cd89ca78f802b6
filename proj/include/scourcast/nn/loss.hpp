#pragma once

#include <cmath>
#include <vector>

#include "scourcast/error.hpp"
#include "scourcast/nn/tensor.hpp"

namespace scour::nn {

// Channel mask: indices into the last axis that take part in the loss/metric.
using ChannelMask = std::vector<std::size_t>;

namespace detail {

inline void check_loss_shapes(const Tensor& pred, const Tensor& target, const ChannelMask& mask) {
  require(!mask.empty(), Errc::EmptyMask, "loss channel mask is empty");
  require(pred.shape() == target.shape(), Errc::ShapeMismatch,
          "prediction " + pred.shape_string() + " vs target " + target.shape_string());
  require(pred.rank() == 3, Errc::ShapeMismatch, "loss expects [S x w_out x C]");
  for (std::size_t c : mask)
    require(c < pred.dim(2), Errc::ShapeMismatch, "mask channel out of range");
}

}  // namespace detail

// Mean of squared errors over the masked channels.
inline double mse_loss(const Tensor& pred, const Tensor& target, const ChannelMask& mask) {
  detail::check_loss_shapes(pred, target, mask);
  const std::size_t rows = pred.dim(0) * pred.dim(1), nc = pred.dim(2);
  double sum = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c : mask) {
      const double e = pred[r * nc + c] - target[r * nc + c];
      sum += e * e;
    }
  }
  return sum / static_cast<double>(rows * mask.size());
}

inline Tensor mse_loss_grad(const Tensor& pred, const Tensor& target, const ChannelMask& mask) {
  detail::check_loss_shapes(pred, target, mask);
  const std::size_t rows = pred.dim(0) * pred.dim(1), nc = pred.dim(2);
  const double scale = 2.0 / static_cast<double>(rows * mask.size());
  Tensor g(pred.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c : mask) g[r * nc + c] = scale * (pred[r * nc + c] - target[r * nc + c]);
  return g;
}

inline double mae_metric(const Tensor& pred, const Tensor& target, const ChannelMask& mask) {
  detail::check_loss_shapes(pred, target, mask);
  const std::size_t rows = pred.dim(0) * pred.dim(1), nc = pred.dim(2);
  double sum = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c : mask) sum += std::abs(pred[r * nc + c] - target[r * nc + c]);
  return sum / static_cast<double>(rows * mask.size());
}

}  // namespace scour::nn
