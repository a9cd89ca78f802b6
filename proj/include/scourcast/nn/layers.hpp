#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "scourcast/nn/ops.hpp"
#include "scourcast/nn/tensor.hpp"
#include "scourcast/random.hpp"

namespace scour::nn {

using NamedBuffer = std::pair<std::string, Tensor*>;

// A differentiable block. backward() must follow the matching forward() and
// accumulates parameter gradients; it returns dL/d(input).
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_parameters(std::vector<Parameter*>&) {}
  virtual void collect_buffers(std::vector<NamedBuffer>&) {}
  // False when repeated train-mode forwards on the same input can differ.
  virtual bool deterministic(Mode) const { return true; }
  // Fixes every dropout mask so repeated train-mode forwards agree.
  virtual void pin_dropout(bool) {}
};

inline Tensor uniform_tensor(std::vector<std::size_t> shape, double limit, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

class Dense : public Module {
 public:
  Dense(const std::string& name, std::size_t in, std::size_t out, Rng& init)
      : weight_(name + ".weight", uniform_tensor({out, in}, glorot_limit(in, out), init)),
        bias_(name + ".bias", Tensor({out})) {}

  Tensor forward(const Tensor& x, Mode) override {
    input_ = x;
    return dense_forward(x, weight_.value, bias_.value);
  }
  Tensor backward(const Tensor& grad_out) override {
    return dense_backward(input_, weight_.value, grad_out, weight_.grad, bias_.grad);
  }
  void collect_parameters(std::vector<Parameter*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_, bias_;
  Tensor input_;
};

// LSTM unrolled over the time axis of [B x T x n]. Emits the last hidden
// state [B x u], or every hidden state [B x T x u] with return_sequences.
class Lstm : public Module {
 public:
  Lstm(const std::string& name, std::size_t n_in, std::size_t units, bool return_sequences, Rng& init)
      : units_(units),
        n_in_(n_in),
        return_sequences_(return_sequences),
        weight_(name + ".kernel",
                uniform_tensor({4 * units, units + n_in}, 1.0 / std::sqrt(static_cast<double>(units)), init)),
        bias_(name + ".bias", Tensor({4 * units})) {
    for (std::size_t j = 0; j < units; ++j) bias_.value[j] = 1.0;  // forget gate
  }

  Tensor forward(const Tensor& x, Mode) override {
    require(x.rank() == 3 && x.dim(2) == n_in_, Errc::ShapeMismatch,
            "lstm expects [B x T x " + std::to_string(n_in_) + "], got " + x.shape_string());
    const std::size_t batch = x.dim(0), steps = x.dim(1);
    batch_ = batch;
    caches_.assign(steps, LstmCache{});
    LstmState state{Tensor({batch, units_}), Tensor({batch, units_})};
    Tensor seq;
    if (return_sequences_) seq = Tensor({batch, steps, units_});
    Tensor xt({batch, n_in_});
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < n_in_; ++j) xt.at(b, j) = x.at(b, t, j);
      state = lstm_cell_step(xt, state.a, state.c, weight_.value, bias_.value, &caches_[t]);
      if (return_sequences_) {
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t j = 0; j < units_; ++j) seq.at(b, t, j) = state.a.at(b, j);
      }
    }
    return return_sequences_ ? seq : state.a;
  }

  Tensor backward(const Tensor& grad_out) override {
    const std::size_t steps = caches_.size(), batch = batch_;
    Tensor dx({batch, steps, n_in_});
    Tensor da({batch, units_}), dc({batch, units_});
    if (!return_sequences_) da = grad_out;
    for (std::size_t t = steps; t-- > 0;) {
      if (return_sequences_) {
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t j = 0; j < units_; ++j) da.at(b, j) += grad_out.at(b, t, j);
      }
      auto g = lstm_cell_backward(caches_[t], weight_.value, da, dc, weight_.grad, bias_.grad);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < n_in_; ++j) dx.at(b, t, j) = g.dx.at(b, j);
      da = std::move(g.da_prev);
      dc = std::move(g.dc_prev);
    }
    return dx;
  }

  void collect_parameters(std::vector<Parameter*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter& kernel() { return weight_; }
  Parameter& bias() { return bias_; }
  std::size_t units() const { return units_; }

 private:
  std::size_t units_, n_in_;
  bool return_sequences_;
  Parameter weight_, bias_;
  std::vector<LstmCache> caches_;
  std::size_t batch_ = 0;
};

// With use_bias = false the bias stays at zero and is not trained; used when
// batch norm follows and would cancel it anyway.
class Conv1D : public Module {
 public:
  Conv1D(const std::string& name, std::size_t n_in, std::size_t filters, std::size_t k, ConvMode mode,
         Rng& init, bool use_bias = true)
      : mode_(mode),
        use_bias_(use_bias),
        filters_(name + ".filters", uniform_tensor({filters, k, n_in}, glorot_limit(k * n_in, k * filters), init)),
        bias_(name + ".bias", Tensor({filters})) {}

  Tensor forward(const Tensor& x, Mode) override {
    input_shape_ = x.shape();
    return conv1d_forward(x, filters_.value, bias_.value, mode_, 1, &cols_);
  }
  Tensor backward(const Tensor& grad_out) override {
    return conv1d_backward(input_shape_, filters_.value, mode_, 1, cols_, grad_out, filters_.grad,
                           bias_.grad);
  }
  void collect_parameters(std::vector<Parameter*>& out) override {
    out.push_back(&filters_);
    if (use_bias_) out.push_back(&bias_);
  }

 private:
  ConvMode mode_;
  bool use_bias_;
  Parameter filters_, bias_;
  std::vector<std::size_t> input_shape_;
  Tensor cols_;
};

class BatchNorm : public Module {
 public:
  BatchNorm(const std::string& name, std::size_t features)
      : gamma_(name + ".gamma", Tensor({features}, 1.0)),
        beta_(name + ".beta", Tensor({features})),
        running_mean_({features}),
        running_var_({features}, 1.0),
        name_(name) {}

  Tensor forward(const Tensor& x, Mode mode) override {
    mode_ = mode;
    return batch_norm_forward(x, gamma_.value, beta_.value, running_mean_, running_var_, mode, &cache_);
  }
  Tensor backward(const Tensor& grad_out) override {
    if (mode_ == Mode::Train) return batch_norm_backward(cache_, gamma_.value, grad_out, gamma_.grad, beta_.grad);
    // running statistics are constants in inference
    const std::size_t nf = gamma_.value.size();
    Tensor dx(grad_out.shape());
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
      const std::size_t f = i % nf;
      dx[i] = grad_out[i] * gamma_.value[f] * cache_.inv_std[f];
      gamma_.grad[f] += grad_out[i] * cache_.normalized[i];
      beta_.grad[f] += grad_out[i];
    }
    return dx;
  }
  void collect_parameters(std::vector<Parameter*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(std::vector<NamedBuffer>& out) override {
    out.emplace_back(name_ + ".running_mean", &running_mean_);
    out.emplace_back(name_ + ".running_var", &running_var_);
  }

 private:
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  std::string name_;
  BatchNormCache cache_;
  Mode mode_ = Mode::Train;
};

class Relu : public Module {
 public:
  Tensor forward(const Tensor& x, Mode) override {
    input_ = x;
    return relu_forward(x);
  }
  Tensor backward(const Tensor& grad_out) override { return relu_backward(input_, grad_out); }

 private:
  Tensor input_;
};

// Each train-mode forward draws a fresh mask from the layer's stream. A pinned
// layer reseeds before every forward, so every call draws the same mask.
class Dropout : public Module {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), seed_(seed), rng_(seed) {
    require(rate >= 0.0 && rate < 1.0, Errc::BadRate, "dropout rate must lie in [0, 1)");
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    if (pinned_) rng_ = Rng(seed_);
    return dropout_forward(x, rate_, mode, rng_, &mask_);
  }
  Tensor backward(const Tensor& grad_out) override {
    Tensor dx(grad_out.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = grad_out[i] * mask_[i];
    return dx;
  }
  bool deterministic(Mode mode) const override {
    return mode == Mode::Infer || rate_ == 0.0 || pinned_;
  }

  void pin(bool on = true) { pinned_ = on; }
  void pin_dropout(bool on) override { pin(on); }
  double rate() const { return rate_; }

 private:
  double rate_;
  std::uint64_t seed_;
  Rng rng_;
  bool pinned_ = false;
  Tensor mask_;
};

// [B x d1 x d2 ...] -> [B x d1*d2*...]
class Flatten : public Module {
 public:
  Tensor forward(const Tensor& x, Mode) override {
    shape_ = x.shape();
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }
  Tensor backward(const Tensor& grad_out) override { return grad_out.reshaped(shape_); }

 private:
  std::vector<std::size_t> shape_;
};

// [B x rows*cols] -> [B x rows x cols]
class Reshape : public Module {
 public:
  Reshape(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}
  Tensor forward(const Tensor& x, Mode) override {
    shape_ = x.shape();
    return x.reshaped({x.dim(0), rows_, cols_});
  }
  Tensor backward(const Tensor& grad_out) override { return grad_out.reshaped(shape_); }

 private:
  std::size_t rows_, cols_;
  std::vector<std::size_t> shape_;
};

class Sequential : public Module {
 public:
  Sequential() = default;

  template <typename M, typename... Args>
  M& add(Args&&... args) {
    auto m = std::make_unique<M>(std::forward<Args>(args)...);
    M& ref = *m;
    layers_.push_back(std::move(m));
    return ref;
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    Tensor h = x;
    for (auto& layer : layers_) h = layer->forward(h, mode);
    return h;
  }
  Tensor backward(const Tensor& grad_out) override {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }
  void collect_parameters(std::vector<Parameter*>& out) override {
    for (auto& layer : layers_) layer->collect_parameters(out);
  }
  void collect_buffers(std::vector<NamedBuffer>& out) override {
    for (auto& layer : layers_) layer->collect_buffers(out);
  }
  void pin_dropout(bool on) override {
    for (auto& layer : layers_) layer->pin_dropout(on);
  }
  bool deterministic(Mode mode) const override {
    for (const auto& layer : layers_)
      if (!layer->deterministic(mode)) return false;
    return true;
  }

  std::size_t size() const { return layers_.size(); }
  Module& layer(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Module>> layers_;
};

inline std::vector<Parameter*> parameters_of(Module& m) {
  std::vector<Parameter*> ps;
  m.collect_parameters(ps);
  return ps;
}

inline std::size_t parameter_count(Module& m) {
  std::size_t n = 0;
  for (Parameter* p : parameters_of(m)) n += p->value.size();
  return n;
}

inline void zero_grads(Module& m) {
  for (Parameter* p : parameters_of(m)) p->zero_grad();
}

}  // namespace scour::nn
