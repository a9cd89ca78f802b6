#pragma once

#include <memory>
#include <string>
#include <vector>

#include "scourcast/error.hpp"
#include "scourcast/models/config.hpp"
#include "scourcast/nn/layers.hpp"
#include "scourcast/nn/ops.hpp"
#include "scourcast/random.hpp"

namespace scour {

// Data-side dimensions a configuration is instantiated against.
struct Binding {
  std::size_t w_in = 0, w_out = 0;
  std::size_t n_in = 0, n_target = 0;
  // Per input slot: true when the slot carries a target channel. The feedback
  // rollout overwrites these slots with projected predictions.
  std::vector<bool> target_inputs;
};

namespace nn {

// One LSTM layer that predicts a step, projects the prediction back to input
// width and feeds it in as the next input.
class FeedbackLstm : public Module {
 public:
  FeedbackLstm(std::size_t n_in, std::size_t units, std::size_t n_target, std::size_t w_out,
               std::vector<bool> target_inputs, double dropout, std::uint64_t dropout_seed, Rng& init)
      : n_in_(n_in),
        units_(units),
        n_target_(n_target),
        w_out_(w_out),
        target_inputs_(std::move(target_inputs)),
        kernel_("lstm1.kernel",
                uniform_tensor({4 * units, units + n_in}, 1.0 / std::sqrt(static_cast<double>(units)), init)),
        lstm_bias_("lstm1.bias", Tensor({4 * units})),
        head_w_("head.weight", uniform_tensor({n_target, units}, glorot_limit(units, n_target), init)),
        head_b_("head.bias", Tensor({n_target})),
        proj_w_("feedback.weight", uniform_tensor({n_in, n_target}, glorot_limit(n_target, n_in), init)),
        proj_b_("feedback.bias", Tensor({n_in})),
        dropout_rate_(dropout),
        dropout_seed_(dropout_seed),
        dropout_rng_(dropout_seed) {
    require(dropout >= 0.0 && dropout < 1.0, Errc::BadRate, "dropout rate must lie in [0, 1)");
    require(target_inputs_.size() == n_in, Errc::ShapeMismatch, "feedback slot mask has wrong width");
    for (std::size_t j = 0; j < units; ++j) lstm_bias_.value[j] = 1.0;
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    require(x.rank() == 3 && x.dim(2) == n_in_, Errc::ShapeMismatch,
            "feedback lstm expects [B x T x " + std::to_string(n_in_) + "], got " + x.shape_string());
    const std::size_t batch = x.dim(0), warmup = x.dim(1);
    batch_ = batch;
    warmup_ = warmup;
    const std::size_t cells = warmup + w_out_ - 1;
    if (pinned_) dropout_rng_ = Rng(dropout_seed_);
    caches_.assign(cells, LstmCache{});
    head_in_.assign(w_out_, Tensor{});
    masks_.assign(w_out_, Tensor{});
    proj_in_.assign(w_out_, Tensor{});
    last_obs_ = Tensor({batch, n_in_});
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < n_in_; ++j) last_obs_.at(b, j) = x.at(b, warmup - 1, j);

    LstmState state{Tensor({batch, units_}), Tensor({batch, units_})};
    Tensor xt({batch, n_in_});
    for (std::size_t t = 0; t < warmup; ++t) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < n_in_; ++j) xt.at(b, j) = x.at(b, t, j);
      state = lstm_cell_step(xt, state.a, state.c, kernel_.value, lstm_bias_.value, &caches_[t]);
    }
    Tensor out({batch, w_out_, n_target_});
    for (std::size_t s = 0; s < w_out_; ++s) {
      head_in_[s] = dropout_forward(state.a, dropout_rate_, mode, dropout_rng_, &masks_[s]);
      const Tensor y = dense_forward(head_in_[s], head_w_.value, head_b_.value);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < n_target_; ++c) out.at(b, s, c) = y.at(b, c);
      if (s + 1 == w_out_) break;
      proj_in_[s] = y;
      const Tensor p = dense_forward(y, proj_w_.value, proj_b_.value);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < n_in_; ++j) xt.at(b, j) = target_inputs_[j] ? p.at(b, j) : last_obs_.at(b, j);
      state = lstm_cell_step(xt, state.a, state.c, kernel_.value, lstm_bias_.value, &caches_[warmup + s]);
    }
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    const std::size_t batch = batch_, warmup = warmup_;
    const std::size_t cells = caches_.size();
    Tensor dx({batch, warmup, n_in_});
    Tensor da({batch, units_}), dc({batch, units_});
    std::vector<Tensor> dy_feedback(w_out_, Tensor({batch, n_target_}));
    Tensor dy({batch, n_target_});
    for (std::size_t i = cells; i-- > 0;) {
      if (i + 1 >= warmup) {
        const std::size_t s = i + 1 - warmup;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < n_target_; ++c) dy.at(b, c) = grad_out.at(b, s, c) + dy_feedback[s].at(b, c);
        Tensor dh = dense_backward(head_in_[s], head_w_.value, dy, head_w_.grad, head_b_.grad);
        for (std::size_t k = 0; k < dh.size(); ++k) da[k] += dh[k] * masks_[s][k];
      }
      auto g = lstm_cell_backward(caches_[i], kernel_.value, da, dc, kernel_.grad, lstm_bias_.grad);
      if (i >= warmup) {
        const std::size_t s = i - warmup;  // this cell consumed the projection of prediction s
        Tensor dp({batch, n_in_});
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t j = 0; j < n_in_; ++j) {
            if (target_inputs_[j]) dp.at(b, j) = g.dx.at(b, j);
            else dx.at(b, warmup - 1, j) += g.dx.at(b, j);
          }
        dy_feedback[s] = dense_backward(proj_in_[s], proj_w_.value, dp, proj_w_.grad, proj_b_.grad);
      } else {
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t j = 0; j < n_in_; ++j) dx.at(b, i, j) += g.dx.at(b, j);
      }
      da = std::move(g.da_prev);
      dc = std::move(g.dc_prev);
    }
    return dx;
  }

  void collect_parameters(std::vector<Parameter*>& out) override {
    out.push_back(&kernel_);
    out.push_back(&lstm_bias_);
    out.push_back(&head_w_);
    out.push_back(&head_b_);
    out.push_back(&proj_w_);
    out.push_back(&proj_b_);
  }
  bool deterministic(Mode mode) const override {
    return mode == Mode::Infer || dropout_rate_ == 0.0 || pinned_;
  }
  void pin_dropout(bool on) override { pinned_ = on; }

 private:
  std::size_t n_in_, units_, n_target_, w_out_;
  std::vector<bool> target_inputs_;
  Parameter kernel_, lstm_bias_, head_w_, head_b_, proj_w_, proj_b_;
  double dropout_rate_;
  std::uint64_t dropout_seed_;
  Rng dropout_rng_;
  bool pinned_ = false;
  std::vector<LstmCache> caches_;
  std::vector<Tensor> head_in_, masks_, proj_in_;
  Tensor last_obs_;
  std::size_t batch_ = 0, warmup_ = 0;
};

}  // namespace nn

// A configuration instantiated against a binding; owns its graph.
class ForecastModel {
 public:
  ForecastModel(ModelConfig config, Binding binding, std::unique_ptr<nn::Module> graph,
                std::size_t conv_blocks)
      : config_(std::move(config)), binding_(std::move(binding)), graph_(std::move(graph)),
        conv_blocks_(conv_blocks) {}

  // [B x w_in x n_in] -> [B x w_out x n_target]
  nn::Tensor forward(const nn::Tensor& x, nn::Mode mode) { return graph_->forward(x, mode); }
  nn::Tensor backward(const nn::Tensor& grad) { return graph_->backward(grad); }

  std::vector<nn::Parameter*> parameters() { return nn::parameters_of(*graph_); }
  std::vector<nn::NamedBuffer> buffers() {
    std::vector<nn::NamedBuffer> out;
    graph_->collect_buffers(out);
    return out;
  }
  std::size_t parameter_count() { return nn::parameter_count(*graph_); }

  nn::Module& graph() { return *graph_; }
  const ModelConfig& config() const { return config_; }
  const Binding& binding() const { return binding_; }

  // Output of the convolution blocks only (CNN families).
  nn::Tensor conv_features(const nn::Tensor& x, nn::Mode mode) {
    require(is_cnn_family(config_.family), Errc::ConfigMismatch, "conv features need a CNN family");
    auto& seq = static_cast<nn::Sequential&>(*graph_);
    nn::Tensor h = x;
    for (std::size_t i = 0; i < conv_blocks_; ++i) h = seq.layer(i).forward(h, mode);
    return h;
  }

 private:
  ModelConfig config_;
  Binding binding_;
  std::unique_ptr<nn::Module> graph_;
  std::size_t conv_blocks_ = 0;  // leading layers that make up the conv blocks
};

namespace detail {

inline void check_binding(const ModelConfig& cfg, const Binding& b) {
  require(b.w_in > 0 && b.w_out > 0 && b.n_in > 0 && b.n_target > 0, Errc::NonPositiveDimension,
          "model binding needs positive windows and channel counts");
  if (cfg.has_windows()) {
    require(cfg.w_in == b.w_in && cfg.w_out == b.w_out, Errc::ConfigMismatch,
            format_config(cfg) + " does not match data windows (" + std::to_string(b.w_in) + "," +
                std::to_string(b.w_out) + ")");
  }
}

}  // namespace detail

inline ForecastModel build_single_shot(const ModelConfig& cfg, const Binding& b, std::uint64_t seed) {
  require(cfg.family == Family::SS || cfg.family == Family::SS2, Errc::ConfigMismatch,
          "single-shot builder got " + format_config(cfg));
  detail::check_binding(cfg, b);
  Rng init(seed, "init", 0);
  auto net = std::make_unique<nn::Sequential>();
  if (cfg.family == Family::SS2) {
    net->add<nn::Lstm>("lstm1", b.n_in, cfg.units, true, init);
    net->add<nn::Lstm>("lstm2", cfg.units, cfg.units, false, init);
  } else {
    net->add<nn::Lstm>("lstm1", b.n_in, cfg.units, false, init);
  }
  net->add<nn::Dropout>(cfg.dropout, derive_seed(seed, "dropout", 0));
  net->add<nn::Dense>("head", cfg.units, b.w_out * b.n_target, init);
  net->add<nn::Reshape>(b.w_out, b.n_target);
  return ForecastModel(cfg, b, std::move(net), 0);
}

inline ForecastModel build_feedback(const ModelConfig& cfg, const Binding& b, std::uint64_t seed) {
  require(cfg.family == Family::FB, Errc::ConfigMismatch, "feedback builder got " + format_config(cfg));
  detail::check_binding(cfg, b);
  Rng init(seed, "init", 0);
  std::vector<bool> slots = b.target_inputs;
  if (slots.empty()) slots.assign(b.n_in, true);
  auto graph = std::make_unique<nn::FeedbackLstm>(b.n_in, cfg.units, b.n_target, b.w_out, slots, cfg.dropout,
                                                  derive_seed(seed, "dropout", 0), init);
  return ForecastModel(cfg, b, std::move(graph), 0);
}

inline ForecastModel build_cnn(const ModelConfig& cfg, const Binding& b, std::uint64_t seed) {
  require(is_cnn_family(cfg.family), Errc::ConfigMismatch, "CNN builder got " + format_config(cfg));
  detail::check_binding(cfg, b);
  Rng init(seed, "init", 0);
  auto net = std::make_unique<nn::Sequential>();
  std::size_t length = b.w_in;
  std::size_t blocks = 0;
  if (cfg.family == Family::VCN) {
    require(b.w_in + 1 >= cfg.k1 + cfg.k2, Errc::FilterTooLong,
            format_config(cfg) + " needs w_in >= k1 + k2 - 1, got w_in " + std::to_string(b.w_in));
    net->add<nn::Conv1D>("conv1", b.n_in, cfg.f1, cfg.k1, nn::ConvMode::vanilla(), init);
    net->add<nn::Relu>();
    net->add<nn::Conv1D>("conv2", cfg.f1, cfg.f2, cfg.k2, nn::ConvMode::vanilla(), init);
    net->add<nn::Relu>();
    length = b.w_in - cfg.k1 - cfg.k2 + 2;
    blocks = 4;
  } else {
    const bool dilated = cfg.family == Family::DCN;
    const auto mode1 = dilated ? nn::ConvMode::dilated_causal(1) : nn::ConvMode::padded();
    const auto mode2 = dilated ? nn::ConvMode::dilated_causal(2) : nn::ConvMode::padded();
    net->add<nn::Conv1D>("conv1", b.n_in, cfg.f1, cfg.k1, mode1, init, false);
    net->add<nn::BatchNorm>("bn1", cfg.f1);
    net->add<nn::Relu>();
    net->add<nn::Conv1D>("conv2", cfg.f1, cfg.f2, cfg.k2, mode2, init, false);
    net->add<nn::BatchNorm>("bn2", cfg.f2);
    net->add<nn::Relu>();
    blocks = 6;
  }
  net->add<nn::Flatten>();
  net->add<nn::Dropout>(cfg.dropout, derive_seed(seed, "dropout", 0));
  net->add<nn::Dense>("head", length * cfg.f2, b.w_out * b.n_target, init);
  net->add<nn::Reshape>(b.w_out, b.n_target);
  return ForecastModel(cfg, b, std::move(net), blocks);
}

inline ForecastModel build_model(const ModelConfig& cfg, const Binding& b, std::uint64_t seed) {
  switch (cfg.family) {
    case Family::SS:
    case Family::SS2: return build_single_shot(cfg, b, seed);
    case Family::FB: return build_feedback(cfg, b, seed);
    default: return build_cnn(cfg, b, seed);
  }
}

}  // namespace scour
