#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "scourcast/error.hpp"
#include "scourcast/models/models.hpp"
#include "scourcast/nn/adam.hpp"
#include "scourcast/nn/loss.hpp"
#include "scourcast/random.hpp"
#include "scourcast/timeseries.hpp"

namespace scour {

// Channel whose MAE is reported: Sonar when it is a target, else the first target.
inline std::size_t metric_index(const std::vector<ChannelId>& targets) {
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (targets[i] == ChannelId::Sonar) return i;
  return 0;
}

// ---------------------------------------------------------------------------
// Batching

inline nn::Tensor input_batch(const WindowedDataset& ds, const std::vector<std::size_t>& idx) {
  const std::size_t w = ds.w_in(), n = ds.input_channels.size();
  nn::Tensor x({idx.size(), w, n});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& m = ds.samples[idx[b]].input;
    std::copy(m.data.begin(), m.data.end(), x.data() + b * w * n);
  }
  return x;
}

inline nn::Tensor target_batch(const WindowedDataset& ds, const std::vector<std::size_t>& idx) {
  const std::size_t w = ds.w_out(), n = ds.target_channels.size();
  nn::Tensor y({idx.size(), w, n});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& m = ds.samples[idx[b]].target;
    std::copy(m.data.begin(), m.data.end(), y.data() + b * w * n);
  }
  return y;
}

inline std::vector<std::size_t> index_range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v(end - begin);
  std::iota(v.begin(), v.end(), begin);
  return v;
}

// Inference over a whole dataset, in the dataset's own units: [S x w_out x C].
inline nn::Tensor predict(ForecastModel& model, const WindowedDataset& ds, std::size_t chunk = 256) {
  const std::size_t s = ds.size(), w = ds.w_out(), c = ds.target_channels.size();
  nn::Tensor out({s, w, c});
  for (std::size_t begin = 0; begin < s; begin += chunk) {
    const std::size_t end = std::min(s, begin + chunk);
    const nn::Tensor y = model.forward(input_batch(ds, index_range(begin, end)), nn::Mode::Infer);
    std::copy(y.data(), y.data() + y.size(), out.data() + begin * w * c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  std::size_t samples = 0;
  ChannelId metric_channel = ChannelId::Sonar;
  double mae_ft = 0.0;  // metric channel
  double mae_m = 0.0;
  std::vector<double> channel_mae_ft;  // per target channel
  std::vector<double> step_mae_ft;     // metric channel, per horizon step

  bool operator==(const Metrics&) const = default;
};

// `pred` and `ds` must be in native (denormalized) units.
inline Metrics score_predictions(const nn::Tensor& pred, const WindowedDataset& ds) {
  require(!ds.normalized, Errc::ConfigError, "scoring expects denormalized targets");
  require(!ds.empty(), Errc::EmptyPartition, "cannot score an empty dataset");
  const std::size_t s = ds.size(), w = ds.w_out(), c = ds.target_channels.size();
  require(pred.rank() == 3 && pred.dim(0) == s && pred.dim(1) == w && pred.dim(2) == c, Errc::ShapeMismatch,
          "prediction shape " + pred.shape_string() + " does not match dataset");
  const std::size_t mi = metric_index(ds.target_channels);
  Metrics m;
  m.samples = s;
  m.metric_channel = ds.target_channels[mi];
  m.channel_mae_ft.assign(c, 0.0);
  m.step_mae_ft.assign(w, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    const auto& t = ds.samples[i].target;
    for (std::size_t r = 0; r < w; ++r)
      for (std::size_t k = 0; k < c; ++k) {
        const double e = std::abs(pred.at(i, r, k) - t(r, k));
        m.channel_mae_ft[k] += e;
        if (k == mi) m.step_mae_ft[r] += e;
      }
  }
  for (double& v : m.channel_mae_ft) v /= static_cast<double>(s * w);
  for (double& v : m.step_mae_ft) v /= static_cast<double>(s);
  m.mae_ft = m.channel_mae_ft[mi];
  m.mae_m = m.mae_ft * kFeetToMeters;
  return m;
}

inline nn::Tensor denormalize_prediction(nn::Tensor pred, const WindowedDataset& ds) {
  if (!ds.normalized) return pred;
  const std::size_t c = ds.target_channels.size();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = ds.norm_stats.denormalize(ds.target_channels[i % c], pred[i]);
  }
  return pred;
}

// Predictions on a normalized dataset, scored in native units.
inline Metrics evaluate(ForecastModel& model, const WindowedDataset& ds) {
  return score_predictions(denormalize_prediction(predict(model, ds), ds), denormalize(ds));
}

// Repeats the last observed Sonar input for every horizon step.
inline Metrics persistence_baseline(const WindowedDataset& ds) {
  require(!ds.empty(), Errc::EmptyPartition, "persistence baseline needs samples");
  const WindowedDataset native = denormalize(ds);
  const std::size_t in_col = channel_index(native.input_channels, ChannelId::Sonar);
  const std::size_t s = native.size(), w = native.w_out(), c = native.target_channels.size();
  const std::size_t mi = metric_index(native.target_channels);
  nn::Tensor pred({s, w, c});
  for (std::size_t i = 0; i < s; ++i) {
    const auto& sample = native.samples[i];
    const double last = sample.input(sample.input.rows - 1, in_col);
    for (std::size_t r = 0; r < w; ++r)
      for (std::size_t k = 0; k < c; ++k) {
        // non-metric channels also persist their own last value when available
        double v = last;
        if (k != mi) {
          const auto it = std::find(native.input_channels.begin(), native.input_channels.end(),
                                    native.target_channels[k]);
          v = it == native.input_channels.end()
                  ? 0.0
                  : sample.input(sample.input.rows - 1, static_cast<std::size_t>(it - native.input_channels.begin()));
        }
        pred.at(i, r, k) = v;
      }
  }
  return score_predictions(pred, native);
}

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  std::size_t max_epochs = 200;
  std::size_t patience = 15;
  std::size_t batch_size = 32;
  nn::AdamOptions adam;
  std::uint64_t seed = 0;
  bool sonar_only_loss = false;  // loss mask = metric channel only
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mae_ft = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainReport {
  std::string config;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_mae_ft = std::numeric_limits<double>::infinity();
  double wall_seconds = 0.0;  // not reproducible; excluded from equality
  std::optional<Metrics> val, test, final_test;

  bool operator==(const TrainReport& o) const {
    return config == o.config && seed == o.seed && epochs == o.epochs && best_epoch == o.best_epoch &&
           best_val_mae_ft == o.best_val_mae_ft && val == o.val && test == o.test && final_test == o.final_test;
  }
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::string msg, TrainReport report)
      : Error(Errc::DivergedLoss, std::move(msg)), report_(std::move(report)) {}
  const TrainReport& report() const { return report_; }

 private:
  TrainReport report_;
};

struct ModelSnapshot {
  std::vector<nn::Tensor> params;
  std::vector<nn::Tensor> buffers;
};

inline ModelSnapshot snapshot(ForecastModel& model) {
  ModelSnapshot s;
  for (auto* p : model.parameters()) s.params.push_back(p->value);
  for (auto& b : model.buffers()) s.buffers.push_back(*b.second);
  return s;
}

inline void restore(ForecastModel& model, const ModelSnapshot& s) {
  auto ps = model.parameters();
  auto bs = model.buffers();
  require(ps.size() == s.params.size() && bs.size() == s.buffers.size(), Errc::ShapeMismatch,
          "snapshot does not match model");
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = s.params[i];
  for (std::size_t i = 0; i < bs.size(); ++i) *bs[i].second = s.buffers[i];
}

inline nn::ChannelMask loss_mask_for(const WindowedDataset& ds, bool sonar_only) {
  if (sonar_only) return {metric_index(ds.target_channels)};
  nn::ChannelMask mask(ds.target_channels.size());
  std::iota(mask.begin(), mask.end(), 0);
  return mask;
}

// Trains on normalized `train`, early-stopping on the metric-channel MAE of
// `val`; the model is left holding the best epoch's parameters.
inline TrainReport train(ForecastModel& model, const WindowedDataset& train_set, const WindowedDataset& val_set,
                         const TrainOptions& opt) {
  require(!train_set.empty(), Errc::EmptyPartition, "training set is empty");
  require(!val_set.empty(), Errc::EmptyPartition, "validation set is empty");
  require(opt.batch_size >= 1 && opt.max_epochs >= 1, Errc::ConfigError, "batch size and epoch budget must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  const nn::ChannelMask mask = loss_mask_for(train_set, opt.sonar_only_loss);
  auto params = model.parameters();
  for (auto* p : params) {
    p->first_moment.fill(0.0);
    p->second_moment.fill(0.0);
  }
  TrainReport report;
  report.config = format_config(model.config());
  report.seed = opt.seed;
  ModelSnapshot best = snapshot(model);
  std::size_t since_best = 0;
  std::int64_t step = 0;
  std::vector<std::size_t> order = index_range(0, train_set.size());

  for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    Rng shuffle_rng(opt.seed, "shuffle", epoch);
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += opt.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + opt.batch_size)));
      const nn::Tensor x = input_batch(train_set, idx);
      const nn::Tensor y = target_batch(train_set, idx);
      for (auto* p : params) p->zero_grad();
      const nn::Tensor pred = model.forward(x, nn::Mode::Train);
      const double loss = nn::mse_loss(pred, y, mask);
      if (!std::isfinite(loss)) {
        restore(model, best);
        report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        throw TrainingDiverged("non-finite training loss in epoch " + std::to_string(epoch) + " of " +
                                   report.config,
                               report);
      }
      model.backward(nn::mse_loss_grad(pred, y, mask));
      nn::adam_step(params, ++step, opt.adam);
      loss_sum += loss;
      ++batches;
    }
    const Metrics val = evaluate(model, val_set);
    report.epochs.push_back({epoch, loss_sum / static_cast<double>(batches), val.mae_ft});
    if (!std::isfinite(val.mae_ft)) {
      restore(model, best);
      throw TrainingDiverged("non-finite validation MAE in epoch " + std::to_string(epoch), report);
    }
    if (val.mae_ft < report.best_val_mae_ft) {
      report.best_val_mae_ft = val.mae_ft;
      report.best_epoch = epoch;
      best = snapshot(model);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= opt.patience) break;
  }
  restore(model, best);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// ---------------------------------------------------------------------------
// Data preparation shared by hold-out and sequential runs

struct ChannelPlan {
  std::vector<ChannelId> inputs;
  std::vector<ChannelId> targets;
};

inline Binding bind(const ChannelPlan& ch, std::size_t w_in, std::size_t w_out) {
  Binding b{w_in, w_out, ch.inputs.size(), ch.targets.size(), {}};
  for (ChannelId id : ch.inputs)
    b.target_inputs.push_back(std::find(ch.targets.begin(), ch.targets.end(), id) != ch.targets.end());
  return b;
}

struct HoldoutData {
  WindowedDataset train, val, test;
  std::optional<WindowedDataset> final_test;
  NormalizationStats stats;
};

struct WindowSpec {
  std::size_t w_in = 336, w_out = 168, stride = 1;
};

// Splits the frame's windows 70-20-10 style; with final_test_frac set, the
// last fraction of rows is reserved first and the split applies to the rest.
inline HoldoutData prepare_holdout(const TimeSeriesFrame& frame, const ChannelPlan& ch, const WindowSpec& w,
                                   const SplitSpec& split) {
  split.validate();
  HoldoutData d;
  std::size_t reserve_from = frame.size();
  if (split.final_test_frac) {
    reserve_from = frame.size() - static_cast<std::size_t>(std::llround(static_cast<double>(frame.size()) * *split.final_test_frac));
    auto ft = make_windows(frame, w.w_in, w.w_out, ch.inputs, ch.targets, w.stride, reserve_from, frame.size());
    require(!ft.empty(), Errc::EmptyPartition, "final_test range holds no complete window");
    d.final_test = std::move(ft);
  }
  const auto all = make_windows(frame, w.w_in, w.w_out, ch.inputs, ch.targets, w.stride, 0, reserve_from);
  SplitSpec rest = split;
  rest.final_test_frac.reset();
  auto parts = chronological_split(all, rest);
  d.stats = fit_normalization(parts.train);
  d.train = normalize(std::move(parts.train), d.stats);
  d.val = normalize(std::move(parts.val), d.stats);
  d.test = normalize(std::move(parts.test), d.stats);
  if (d.final_test) d.final_test = normalize(std::move(*d.final_test), d.stats);
  return d;
}

inline TrainReport run_holdout(const ModelConfig& cfg, const HoldoutData& data, const TrainOptions& opt,
                               std::optional<ForecastModel>* keep = nullptr) {
  const ChannelPlan ch{data.train.input_channels, data.train.target_channels};
  ForecastModel model = build_model(cfg, bind(ch, data.train.w_in(), data.train.w_out()), opt.seed);
  TrainReport r = train(model, data.train, data.val, opt);
  r.val = evaluate(model, data.val);
  r.test = evaluate(model, data.test);
  if (data.final_test) r.final_test = evaluate(model, *data.final_test);
  if (keep) keep->emplace(std::move(model));
  return r;
}

// ---------------------------------------------------------------------------
// Sequential fold training

struct RowRange {
  std::size_t begin = 0, end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const RowRange&) const = default;
};

struct FoldRanges {
  RowRange train, val, test;
};

struct FoldPlan {
  std::size_t n_folds = 0;
  std::vector<FoldRanges> folds;
  RowRange final_test;
};

// The last final_frac of rows is reserved; the rest is cut into n_folds equal
// consecutive folds, each split train/val/test by rows.
inline FoldPlan make_fold_plan(std::size_t frame_rows, std::size_t n_folds, double final_frac = 0.1,
                               double fold_train = 0.70, double fold_val = 0.15) {
  require(n_folds >= 1, Errc::ConfigError, "need at least one fold");
  require(final_frac > 0.0 && final_frac < 1.0 && fold_train > 0.0 && fold_val > 0.0 && fold_train + fold_val < 1.0,
          Errc::BadFraction, "fold plan fractions out of range");
  FoldPlan plan;
  plan.n_folds = n_folds;
  const auto reserved = static_cast<std::size_t>(std::llround(static_cast<double>(frame_rows) * final_frac));
  const std::size_t usable = frame_rows - reserved;
  plan.final_test = {usable, frame_rows};
  const std::size_t fold_len = usable / n_folds;
  require(fold_len >= 3, Errc::FoldTooSmall, "frame too short for " + std::to_string(n_folds) + " folds");
  for (std::size_t f = 0; f < n_folds; ++f) {
    const std::size_t b = f * fold_len;
    const std::size_t e = f + 1 == n_folds ? usable : b + fold_len;
    const std::size_t len = e - b;
    const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(len) * fold_train));
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(len) * fold_val));
    plan.folds.push_back({{b, b + n_train}, {b + n_train, b + n_train + n_val}, {b + n_train + n_val, e}});
  }
  return plan;
}

struct SequentialResult {
  std::vector<TrainReport> folds;
  NormalizationStats stats;
};

// Fold 0 trains from a fresh initialization; each later fold fine-tunes the
// previous fold's best parameters. Normalization is fitted once on the
// training rows of all folds and shared by every fold.
inline SequentialResult sequential_train(const ModelConfig& cfg, const TimeSeriesFrame& frame, const ChannelPlan& ch,
                                         const WindowSpec& w, const FoldPlan& plan, const TrainOptions& opt,
                                         std::vector<ModelSnapshot>* fold_starts = nullptr,
                                         std::optional<ForecastModel>* keep = nullptr) {
  auto windows = [&](RowRange r, const char* what, std::size_t fold) {
    auto ds = make_windows(frame, w.w_in, w.w_out, ch.inputs, ch.targets, w.stride, r.begin, r.end);
    require(!ds.empty(), Errc::FoldTooSmall,
            std::string(what) + " range of fold " + std::to_string(fold) + " holds no complete window");
    return ds;
  };
  SequentialResult result;
  std::optional<ForecastModel> model;
  auto final_raw = windows(plan.final_test, "final_test", 0);
  {
    WindowedDataset all_train = windows(plan.folds[0].train, "train", 0);
    for (std::size_t f = 1; f < plan.folds.size(); ++f) {
      auto tr = windows(plan.folds[f].train, "train", f);
      all_train.samples.insert(all_train.samples.end(), std::make_move_iterator(tr.samples.begin()),
                               std::make_move_iterator(tr.samples.end()));
    }
    result.stats = fit_normalization(all_train);
  }
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    auto tr = windows(plan.folds[f].train, "train", f);
    auto va = windows(plan.folds[f].val, "val", f);
    auto te = windows(plan.folds[f].test, "test", f);
    if (f == 0) model.emplace(build_model(cfg, bind(ch, w.w_in, w.w_out), opt.seed));
    const auto trn = normalize(std::move(tr), result.stats);
    const auto van = normalize(std::move(va), result.stats);
    const auto ten = normalize(std::move(te), result.stats);
    if (fold_starts) fold_starts->push_back(snapshot(*model));
    TrainOptions fold_opt = opt;
    if (f > 0) fold_opt.seed = derive_seed(opt.seed, "fold", f);
    TrainReport r = train(*model, trn, van, fold_opt);
    r.seed = opt.seed;
    r.val = evaluate(*model, van);
    r.test = evaluate(*model, ten);
    r.final_test = evaluate(*model, normalize(final_raw, result.stats));
    result.folds.push_back(std::move(r));
  }
  if (keep) keep->emplace(std::move(*model));
  return result;
}

}  // namespace scour
