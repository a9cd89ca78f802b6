#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "scourcast/error.hpp"
#include "scourcast/nn/tensor.hpp"
#include "scourcast/random.hpp"

namespace scour::nn {

// ---------------------------------------------------------------------------
// Dense: y = x W^T + b, x [B x in], W [out x in], b [out]

inline Tensor dense_forward(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  require(x.rank() == 2 && weights.rank() == 2 && bias.rank() == 1, Errc::ShapeMismatch,
          "dense expects x [B x in], W [out x in], b [out]");
  const std::size_t batch = x.dim(0), in = x.dim(1), out = weights.dim(0);
  require(weights.dim(1) == in && bias.dim(0) == out, Errc::ShapeMismatch,
          "dense shapes disagree: x " + x.shape_string() + ", W " + weights.shape_string() + ", b " +
              bias.shape_string());
  Tensor y({batch, out});
  auto Y = as_matrix(y, batch, out);
  Y.noalias() = as_matrix(x, batch, in) * as_matrix(weights, out, in).transpose();
  Y.rowwise() += ConstVecMap(bias.data(), static_cast<Eigen::Index>(out)).transpose();
  return y;
}

// Accumulates into d_weights / d_bias and returns dL/dx.
inline Tensor dense_backward(const Tensor& x, const Tensor& weights, const Tensor& dy,
                             Tensor& d_weights, Tensor& d_bias) {
  const std::size_t batch = x.dim(0), in = x.dim(1), out = weights.dim(0);
  require(dy.rank() == 2 && dy.dim(0) == batch && dy.dim(1) == out, Errc::ShapeMismatch,
          "dense gradient shape mismatch");
  auto dY = as_matrix(dy, batch, out);
  as_matrix(d_weights, out, in).noalias() += dY.transpose() * as_matrix(x, batch, in);
  VecMap(d_bias.data(), static_cast<Eigen::Index>(out)) += dY.colwise().sum().transpose();
  Tensor dx({batch, in});
  as_matrix(dx, batch, in).noalias() = dY * as_matrix(weights, out, in);
  return dx;
}

// ---------------------------------------------------------------------------
// LSTM cell. W is [4u x (u + n_x)] with gate row blocks in the order
// forget, input, output, candidate; it multiplies the concatenation
// [a_prev, x_t]. b is [4u].

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct LstmState {
  Tensor a;  // [B x u]
  Tensor c;  // [B x u]
};

struct LstmCache {
  Tensor concat;  // [B x (u + n_x)]
  Tensor forget, input, output, candidate;  // [B x u] each, post-activation
  Tensor c_prev, tanh_c;
};

inline LstmState lstm_cell_step(const Tensor& x, const Tensor& a_prev, const Tensor& c_prev,
                                const Tensor& weights, const Tensor& bias, LstmCache* cache = nullptr) {
  require(x.rank() == 2 && a_prev.rank() == 2 && c_prev.rank() == 2, Errc::ShapeMismatch,
          "lstm cell expects rank-2 x, a_prev, c_prev");
  const std::size_t batch = x.dim(0), nx = x.dim(1), units = a_prev.dim(1);
  require(units > 0, Errc::ShapeMismatch, "lstm needs at least one unit");
  require(a_prev.dim(0) == batch && c_prev.dim(0) == batch && c_prev.dim(1) == units,
          Errc::ShapeMismatch, "lstm state shapes disagree");
  require(weights.rank() == 2 && weights.dim(0) == 4 * units && weights.dim(1) == units + nx &&
              bias.rank() == 1 && bias.dim(0) == 4 * units,
          Errc::ShapeMismatch, "lstm parameter shapes disagree: W " + weights.shape_string());
  const std::size_t width = units + nx;
  Tensor concat({batch, width});
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t j = 0; j < units; ++j) concat.at(r, j) = a_prev.at(r, j);
    for (std::size_t j = 0; j < nx; ++j) concat.at(r, units + j) = x.at(r, j);
  }
  Tensor z({batch, 4 * units});
  auto Z = as_matrix(z, batch, 4 * units);
  Z.noalias() = as_matrix(concat, batch, width) * as_matrix(weights, 4 * units, width).transpose();
  Z.rowwise() += ConstVecMap(bias.data(), static_cast<Eigen::Index>(4 * units)).transpose();

  Tensor f({batch, units}), in({batch, units}), o({batch, units}), g({batch, units});
  LstmState next{Tensor({batch, units}), Tensor({batch, units})};
  Tensor tanh_c({batch, units});
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t j = 0; j < units; ++j) {
      const double fv = sigmoid(z.at(r, j));
      const double iv = sigmoid(z.at(r, units + j));
      const double ov = sigmoid(z.at(r, 2 * units + j));
      const double gv = std::tanh(z.at(r, 3 * units + j));
      const double cv = iv * gv + fv * c_prev.at(r, j);
      const double tc = std::tanh(cv);
      f.at(r, j) = fv;
      in.at(r, j) = iv;
      o.at(r, j) = ov;
      g.at(r, j) = gv;
      next.c.at(r, j) = cv;
      tanh_c.at(r, j) = tc;
      next.a.at(r, j) = ov * tc;
    }
  }
  if (cache) {
    cache->concat = std::move(concat);
    cache->forget = std::move(f);
    cache->input = std::move(in);
    cache->output = std::move(o);
    cache->candidate = std::move(g);
    cache->c_prev = c_prev;
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

struct LstmStepGrads {
  Tensor dx;
  Tensor da_prev;
  Tensor dc_prev;
};

// da / dc are dL/da_t and dL/dc_t (the latter from the following step).
inline LstmStepGrads lstm_cell_backward(const LstmCache& cache, const Tensor& weights,
                                        const Tensor& da, const Tensor& dc, Tensor& d_weights,
                                        Tensor& d_bias) {
  const std::size_t batch = cache.forget.dim(0), units = cache.forget.dim(1);
  const std::size_t width = cache.concat.dim(1), nx = width - units;
  Tensor dz({batch, 4 * units});
  LstmStepGrads out{Tensor({batch, nx}), Tensor({batch, units}), Tensor({batch, units})};
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t j = 0; j < units; ++j) {
      const double fv = cache.forget.at(r, j), iv = cache.input.at(r, j);
      const double ov = cache.output.at(r, j), gv = cache.candidate.at(r, j);
      const double tc = cache.tanh_c.at(r, j);
      const double dct = dc.at(r, j) + da.at(r, j) * ov * (1.0 - tc * tc);
      const double d_o = da.at(r, j) * tc;
      const double d_i = dct * gv;
      const double d_g = dct * iv;
      const double d_f = dct * cache.c_prev.at(r, j);
      out.dc_prev.at(r, j) = dct * fv;
      dz.at(r, j) = d_f * fv * (1.0 - fv);
      dz.at(r, units + j) = d_i * iv * (1.0 - iv);
      dz.at(r, 2 * units + j) = d_o * ov * (1.0 - ov);
      dz.at(r, 3 * units + j) = d_g * (1.0 - gv * gv);
    }
  }
  auto dZ = as_matrix(dz, batch, 4 * units);
  as_matrix(d_weights, 4 * units, width).noalias() += dZ.transpose() * as_matrix(cache.concat, batch, width);
  VecMap(d_bias.data(), static_cast<Eigen::Index>(4 * units)) += dZ.colwise().sum().transpose();
  Tensor dconcat({batch, width});
  as_matrix(dconcat, batch, width).noalias() = dZ * as_matrix(weights, 4 * units, width);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t j = 0; j < units; ++j) out.da_prev.at(r, j) = dconcat.at(r, j);
    for (std::size_t j = 0; j < nx; ++j) out.dx.at(r, j) = dconcat.at(r, units + j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// 1-D convolution over [B x L x n] with filters [F x k x n] and bias [F].

struct ConvMode {
  enum class Kind { Vanilla, Padded, Causal, DilatedCausal };
  Kind kind = Kind::Vanilla;
  std::size_t dilation = 1;

  static ConvMode vanilla() { return {Kind::Vanilla, 1}; }
  static ConvMode padded() { return {Kind::Padded, 1}; }
  static ConvMode causal() { return {Kind::Causal, 1}; }
  static ConvMode dilated_causal(std::size_t d) { return {Kind::DilatedCausal, d}; }

  std::size_t tap_spacing() const { return kind == Kind::DilatedCausal ? dilation : 1; }

  // Zeros conceptually prepended to the sequence.
  std::size_t left_pad(std::size_t k) const {
    switch (kind) {
      case Kind::Vanilla: return 0;
      case Kind::Padded: return k / 2;  // ceil((k-1)/2)
      case Kind::Causal: return k - 1;
      case Kind::DilatedCausal: return (k - 1) * dilation;
    }
    return 0;
  }
};

inline std::size_t conv_output_length(std::size_t length, std::size_t k, ConvMode mode,
                                      std::size_t stride = 1) {
  require(k >= 1, Errc::NonPositiveDimension, "filter length must be positive");
  require(stride >= 1, Errc::BadStride, "stride must be at least 1");
  if (mode.kind == ConvMode::Kind::Vanilla) {
    require(k <= length, Errc::FilterTooLong,
            "filter length " + std::to_string(k) + " exceeds sequence length " + std::to_string(length));
    return (length - k) / stride + 1;
  }
  require(stride == 1, Errc::BadStride, "padded and causal convolutions require stride 1");
  require(mode.kind != ConvMode::Kind::DilatedCausal || mode.dilation >= 1, Errc::ConfigError,
          "dilation must be at least 1");
  return length;
}

// Row layout of the unfolded input: [(b, t) x (tap, channel)].
inline Tensor conv_unfold(const Tensor& x, std::size_t k, ConvMode mode, std::size_t stride,
                          std::size_t out_len) {
  const std::size_t batch = x.dim(0), length = x.dim(1), n = x.dim(2);
  const auto pad = static_cast<std::ptrdiff_t>(mode.left_pad(k));
  const auto spacing = static_cast<std::ptrdiff_t>(mode.tap_spacing());
  Tensor cols({batch * out_len, k * n});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_len; ++t) {
      double* row = cols.data() + (b * out_len + t) * k * n;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride) +
                                   static_cast<std::ptrdiff_t>(j) * spacing - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(length)) continue;
        const double* in = x.data() + (b * length + static_cast<std::size_t>(src)) * n;
        std::copy(in, in + n, row + j * n);
      }
    }
  }
  return cols;
}

inline Tensor conv1d_forward(const Tensor& x, const Tensor& filters, const Tensor& bias, ConvMode mode,
                             std::size_t stride = 1, Tensor* cols_cache = nullptr) {
  require(x.rank() == 3 && filters.rank() == 3 && bias.rank() == 1, Errc::ShapeMismatch,
          "conv1d expects x [B x L x n], filters [F x k x n], bias [F]");
  const std::size_t batch = x.dim(0), length = x.dim(1), n = x.dim(2);
  const std::size_t nf = filters.dim(0), k = filters.dim(1);
  require(filters.dim(2) == n && bias.dim(0) == nf, Errc::ShapeMismatch,
          "conv1d shapes disagree: x " + x.shape_string() + ", filters " + filters.shape_string());
  const std::size_t out_len = conv_output_length(length, k, mode, stride);
  Tensor cols = conv_unfold(x, k, mode, stride, out_len);
  Tensor y({batch, out_len, nf});
  auto Y = as_matrix(y, batch * out_len, nf);
  Y.noalias() = as_matrix(cols, batch * out_len, k * n) * as_matrix(filters, nf, k * n).transpose();
  Y.rowwise() += ConstVecMap(bias.data(), static_cast<Eigen::Index>(nf)).transpose();
  if (cols_cache) *cols_cache = std::move(cols);
  return y;
}

inline Tensor conv1d_backward(const std::vector<std::size_t>& x_shape, const Tensor& filters,
                              ConvMode mode, std::size_t stride, const Tensor& cols, const Tensor& dy,
                              Tensor& d_filters, Tensor& d_bias) {
  const std::size_t batch = x_shape[0], length = x_shape[1], n = x_shape[2];
  const std::size_t nf = filters.dim(0), k = filters.dim(1);
  const std::size_t out_len = dy.dim(1);
  require(dy.rank() == 3 && dy.dim(0) == batch && dy.dim(2) == nf, Errc::ShapeMismatch,
          "conv1d gradient shape mismatch");
  auto dY = as_matrix(dy, batch * out_len, nf);
  as_matrix(d_filters, nf, k * n).noalias() += dY.transpose() * as_matrix(cols, batch * out_len, k * n);
  VecMap(d_bias.data(), static_cast<Eigen::Index>(nf)) += dY.colwise().sum().transpose();
  Tensor dcols({batch * out_len, k * n});
  as_matrix(dcols, batch * out_len, k * n).noalias() = dY * as_matrix(filters, nf, k * n);

  Tensor dx({batch, length, n});
  const auto pad = static_cast<std::ptrdiff_t>(mode.left_pad(k));
  const auto spacing = static_cast<std::ptrdiff_t>(mode.tap_spacing());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_len; ++t) {
      const double* row = dcols.data() + (b * out_len + t) * k * n;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride) +
                                   static_cast<std::ptrdiff_t>(j) * spacing - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(length)) continue;
        double* out = dx.data() + (b * length + static_cast<std::size_t>(src)) * n;
        for (std::size_t c = 0; c < n; ++c) out[c] += row[j * n + c];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalisation per feature (last axis) over all leading axes.

inline constexpr double kBatchNormEps = 1e-7;
inline constexpr double kBatchNormMomentum = 0.9;

struct BatchNormCache {
  Tensor normalized;            // x-hat
  std::vector<double> inv_std;  // per feature
};

inline Tensor batch_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                 Tensor& running_mean, Tensor& running_var, Mode mode,
                                 BatchNormCache* cache = nullptr) {
  require(x.rank() >= 2, Errc::ShapeMismatch, "batch norm expects rank >= 2 input");
  const std::size_t nfeat = x.shape().back();
  const std::size_t rows = x.size() / nfeat;
  require(gamma.size() == nfeat && beta.size() == nfeat && running_mean.size() == nfeat &&
              running_var.size() == nfeat,
          Errc::ShapeMismatch, "batch norm parameter shapes disagree");
  Tensor y(x.shape());
  std::vector<double> mean(nfeat, 0.0), var(nfeat, 0.0);
  if (mode == Mode::Train) {
    require(rows > 1, Errc::DegenerateBatch, "batch norm in train mode needs more than one row");
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < nfeat; ++f) mean[f] += x[r * nfeat + f];
    for (double& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < nfeat; ++f) {
        const double d = x[r * nfeat + f] - mean[f];
        var[f] += d * d;
      }
    for (double& v : var) v /= static_cast<double>(rows);
    for (std::size_t f = 0; f < nfeat; ++f) {
      running_mean[f] = kBatchNormMomentum * running_mean[f] + (1.0 - kBatchNormMomentum) * mean[f];
      running_var[f] = kBatchNormMomentum * running_var[f] + (1.0 - kBatchNormMomentum) * var[f];
    }
  } else {
    for (std::size_t f = 0; f < nfeat; ++f) {
      mean[f] = running_mean[f];
      var[f] = running_var[f];
    }
  }
  std::vector<double> inv_std(nfeat);
  for (std::size_t f = 0; f < nfeat; ++f) inv_std[f] = 1.0 / std::sqrt(var[f] + kBatchNormEps);
  Tensor xhat(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < nfeat; ++f) {
      const double h = (x[r * nfeat + f] - mean[f]) * inv_std[f];
      xhat[r * nfeat + f] = h;
      y[r * nfeat + f] = gamma[f] * h + beta[f];
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

// Backward through train-mode (batch statistics) normalisation.
inline Tensor batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& dy,
                                  Tensor& d_gamma, Tensor& d_beta) {
  const std::size_t nfeat = gamma.size();
  const std::size_t rows = dy.size() / nfeat;
  std::vector<double> sum_dy(nfeat, 0.0), sum_dy_xhat(nfeat, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < nfeat; ++f) {
      const double g = dy[r * nfeat + f];
      sum_dy[f] += g;
      sum_dy_xhat[f] += g * cache.normalized[r * nfeat + f];
    }
  }
  for (std::size_t f = 0; f < nfeat; ++f) {
    d_gamma[f] += sum_dy_xhat[f];
    d_beta[f] += sum_dy[f];
  }
  Tensor dx(dy.shape());
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < nfeat; ++f) {
      const double h = cache.normalized[r * nfeat + f];
      dx[r * nfeat + f] = gamma[f] * cache.inv_std[f] * inv_rows *
                          (static_cast<double>(rows) * dy[r * nfeat + f] - sum_dy[f] - h * sum_dy_xhat[f]);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Inverted dropout. `mask` receives the per-element scale (0 or 1/(1-rate)).

inline Tensor dropout_forward(const Tensor& x, double rate, Mode mode, Rng& rng, Tensor* mask = nullptr) {
  require(rate >= 0.0 && rate < 1.0, Errc::BadRate, "dropout rate must lie in [0, 1)");
  if (mode == Mode::Infer || rate == 0.0) {
    if (mask) *mask = Tensor(x.shape(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor m(x.shape());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    y[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

inline Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

}  // namespace scour::nn
