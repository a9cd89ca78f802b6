#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "scourcast/error.hpp"
#include "scourcast/models/config.hpp"
#include "scourcast/nn/tensor.hpp"
#include "scourcast/random.hpp"

namespace scour {

// ---------------------------------------------------------------------------
// Search space

// Axes not used by a family are ignored for it: LSTM families combine
// windows x units x dropouts, CNN families windows x k1 x f1 x k2 x f2 x dropouts.
struct SearchSpace {
  std::vector<std::pair<std::size_t, std::size_t>> windows;
  std::vector<Family> families;
  std::vector<std::size_t> units;
  std::vector<std::size_t> k1, f1, k2, f2;
  std::vector<double> dropouts;

  std::size_t size() const {
    std::size_t n = 0;
    for (Family f : families) {
      const std::size_t inner = is_lstm_family(f) ? units.size() : k1.size() * f1.size() * k2.size() * f2.size();
      n += windows.size() * inner * dropouts.size();
    }
    return n;
  }

  // Enumeration order: family, windows, then the remaining axes, dropout last.
  std::vector<ModelConfig> configs() const {
    std::vector<ModelConfig> out;
    for (Family fam : families) {
      for (auto [wi, wo] : windows) {
        ModelConfig base;
        base.family = fam;
        base.w_in = wi;
        base.w_out = wo;
        auto push_dropouts = [&](ModelConfig c) {
          for (double d : dropouts) {
            c.dropout = d;
            c.dropout_decimals = d == std::floor(d) ? 0 : 1;
            out.push_back(c);
          }
        };
        if (is_lstm_family(fam)) {
          for (std::size_t u : units) {
            ModelConfig c = base;
            c.units = u;
            push_dropouts(c);
          }
        } else {
          for (std::size_t a : k1)
            for (std::size_t b : f1)
              for (std::size_t k : k2)
                for (std::size_t g : f2) {
                  ModelConfig c = base;
                  c.k1 = a;
                  c.f1 = b;
                  c.k2 = k;
                  c.f2 = g;
                  push_dropouts(c);
                }
        }
      }
    }
    return out;
  }
};

// Single-shot LSTM tuning grid: 3 window pairs x 3 unit sizes x 2 dropouts.
inline SearchSpace lstm_tuning_space() {
  SearchSpace s;
  s.windows = {{168, 168}, {336, 168}, {720, 168}};
  s.families = {Family::SS};
  s.units = {32, 64, 128};
  s.dropouts = {0.0, 0.2};
  return s;
}

// ---------------------------------------------------------------------------
// Trials

struct TrialRecord {
  ModelConfig config;
  std::size_t trial_index = 0;
  double val_mae = 0.0;  // ft
};

// Validation MAE of one training run. Must be safe to call concurrently.
using Evaluator = std::function<double(const ModelConfig&, std::size_t trial_index, std::uint64_t seed)>;

inline std::uint64_t trial_seed(std::uint64_t seed, const ModelConfig& cfg, std::size_t trial_index) {
  return derive_seed(seed, format_config(cfg), trial_index);
}

namespace detail {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// thrown by any task is rethrown after all threads finish.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::vector<TrialRecord> run_slots(std::vector<TrialRecord> slots, const Evaluator& eval, std::uint64_t seed,
                                          std::size_t jobs) {
  parallel_for(slots.size(), jobs, [&](std::size_t i) {
    auto& r = slots[i];
    r.val_mae = eval(r.config, r.trial_index, trial_seed(seed, r.config, r.trial_index));
    require(std::isfinite(r.val_mae) && r.val_mae >= 0.0, Errc::DivergedLoss,
            "evaluator returned invalid MAE for " + format_config(r.config));
  });
  return slots;
}

}  // namespace detail

// Every configuration trained `repetitions` times; records ordered by trial
// then enumeration order.
inline std::vector<TrialRecord> grid_search(const SearchSpace& space, const Evaluator& eval, std::size_t repetitions,
                                            std::uint64_t seed, std::size_t jobs = 1) {
  require(repetitions >= 1, Errc::ConfigError, "grid search needs at least one repetition");
  const auto configs = space.configs();
  require(!configs.empty(), Errc::ConfigError, "search space is empty");
  std::vector<TrialRecord> slots;
  for (std::size_t t = 0; t < repetitions; ++t)
    for (const auto& c : configs) slots.push_back({c, t, 0.0});
  return detail::run_slots(std::move(slots), eval, seed, jobs);
}

// Configurations drawn per random-search trial.
inline std::size_t random_sample_size(std::size_t space_size, double sample_frac) {
  require(sample_frac > 0.0 && sample_frac <= 1.0, Errc::BadFraction, "sample fraction must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(std::llround(sample_frac * static_cast<double>(space_size)));
  require(n >= 1, Errc::BadFraction, "sample fraction selects no configuration");
  return std::min(n, space_size);
}

// Index sets sampled without replacement, one per trial, sorted ascending.
inline std::vector<std::vector<std::size_t>> random_trial_samples(std::size_t space_size, double sample_frac,
                                                                  std::size_t trials, std::uint64_t seed) {
  const std::size_t n = random_sample_size(space_size, sample_frac);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(seed, "sample", t);
    std::vector<std::size_t> idx(space_size);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(space_size - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    out.push_back(std::move(idx));
  }
  return out;
}

inline std::vector<TrialRecord> random_search(const SearchSpace& space, const Evaluator& eval, double sample_frac,
                                              std::size_t trials, std::uint64_t seed, std::size_t jobs = 1) {
  require(trials >= 1, Errc::ConfigError, "random search needs at least one trial");
  const auto configs = space.configs();
  require(!configs.empty(), Errc::ConfigError, "search space is empty");
  std::vector<TrialRecord> slots;
  const auto samples = random_trial_samples(configs.size(), sample_frac, trials, seed);
  for (std::size_t t = 0; t < trials; ++t)
    for (std::size_t i : samples[t]) slots.push_back({configs[i], t, 0.0});
  return detail::run_slots(std::move(slots), eval, seed, jobs);
}

// ---------------------------------------------------------------------------
// Ranking policies

enum class Policy { MeanMae, MedianMae, Bagging };

inline std::string_view policy_name(Policy p) {
  switch (p) {
    case Policy::MeanMae: return "meanMAE";
    case Policy::MedianMae: return "medianMAE";
    case Policy::Bagging: return "bagging";
  }
  return "?";
}

inline std::optional<Policy> policy_from_name(std::string_view s) {
  for (Policy p : {Policy::MeanMae, Policy::MedianMae, Policy::Bagging})
    if (s == policy_name(p)) return p;
  return std::nullopt;
}

struct RankedConfig {
  std::string config;
  std::size_t rank = 0;  // 1-based
  double statistic = 0.0;  // mean, median or f_topk depending on the policy
  double mean_mae = 0.0;
  double median_mae = 0.0;
  std::size_t f = 0;       // appearances across trials
  std::size_t f_topk = 0;  // appearances among a trial's k best
  std::vector<double> maes;
};

struct PolicyRanking {
  Policy policy = Policy::MeanMae;
  std::size_t k = 3;
  std::vector<RankedConfig> entries;
  std::vector<std::string> unobserved;  // in the universe but never sampled

  std::vector<std::string> top(std::size_t n) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(n, entries.size()); ++i) out.push_back(entries[i].config);
    return out;
  }
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Per-config statistics; f_topk counts marks from trials with at least k records
// (bagging itself rejects smaller trials).
inline std::vector<RankedConfig> aggregate(const std::vector<TrialRecord>& records, std::size_t k) {
  require(!records.empty(), Errc::NoRecords, "no trial records to rank");
  std::map<std::string, RankedConfig> by_config;
  std::map<std::size_t, std::vector<std::pair<double, std::string>>> by_trial;
  for (const auto& r : records) {
    const std::string key = format_config(r.config);
    auto& e = by_config[key];
    e.config = key;
    e.maes.push_back(r.val_mae);
    ++e.f;
    by_trial[r.trial_index].emplace_back(r.val_mae, key);
  }
  for (auto& [t, rows] : by_trial) {
    if (rows.size() < k) continue;
    std::sort(rows.begin(), rows.end());
    for (std::size_t i = 0; i < k; ++i) ++by_config[rows[i].second].f_topk;
  }
  std::vector<RankedConfig> out;
  for (auto& [key, e] : by_config) {
    e.mean_mae = std::accumulate(e.maes.begin(), e.maes.end(), 0.0) / static_cast<double>(e.maes.size());
    e.median_mae = median(e.maes);
    out.push_back(std::move(e));
  }
  return out;
}

inline void finish(PolicyRanking& r, const std::vector<ModelConfig>& universe) {
  for (std::size_t i = 0; i < r.entries.size(); ++i) r.entries[i].rank = i + 1;
  for (const auto& c : universe) {
    const std::string key = format_config(c);
    const bool seen = std::any_of(r.entries.begin(), r.entries.end(), [&](const auto& e) { return e.config == key; });
    if (!seen && std::find(r.unobserved.begin(), r.unobserved.end(), key) == r.unobserved.end())
      r.unobserved.push_back(key);
  }
}

inline PolicyRanking rank_by_statistic(const std::vector<TrialRecord>& records, Policy policy, std::size_t k,
                                       const std::vector<ModelConfig>& universe) {
  PolicyRanking r;
  r.policy = policy;
  r.k = k;
  r.entries = aggregate(records, k);
  for (auto& e : r.entries) e.statistic = policy == Policy::MeanMae ? e.mean_mae : e.median_mae;
  std::sort(r.entries.begin(), r.entries.end(), [](const RankedConfig& a, const RankedConfig& b) {
    if (a.statistic != b.statistic) return a.statistic < b.statistic;
    return a.config < b.config;
  });
  finish(r, universe);
  return r;
}

}  // namespace detail

inline PolicyRanking rank_mean_mae(const std::vector<TrialRecord>& records, std::size_t k = 3,
                                   const std::vector<ModelConfig>& universe = {}) {
  return detail::rank_by_statistic(records, Policy::MeanMae, k, universe);
}

inline PolicyRanking rank_median_mae(const std::vector<TrialRecord>& records, std::size_t k = 3,
                                     const std::vector<ModelConfig>& universe = {}) {
  return detail::rank_by_statistic(records, Policy::MedianMae, k, universe);
}

// Descending top-k frequency; ties by mean MAE, then config string.
inline PolicyRanking rank_bagging(const std::vector<TrialRecord>& records, std::size_t k = 3,
                                  const std::vector<ModelConfig>& universe = {}) {
  require(k >= 1, Errc::ConfigError, "bagging needs k >= 1");
  std::map<std::size_t, std::size_t> trial_sizes;
  for (const auto& r : records) ++trial_sizes[r.trial_index];
  for (auto [t, n] : trial_sizes)
    require(n >= k, Errc::TrialTooSmall,
            "trial " + std::to_string(t) + " has " + std::to_string(n) + " records, fewer than k=" + std::to_string(k));
  PolicyRanking r;
  r.policy = Policy::Bagging;
  r.k = k;
  r.entries = detail::aggregate(records, k);
  for (auto& e : r.entries) e.statistic = static_cast<double>(e.f_topk);
  std::sort(r.entries.begin(), r.entries.end(), [](const RankedConfig& a, const RankedConfig& b) {
    if (a.f_topk != b.f_topk) return a.f_topk > b.f_topk;
    if (a.mean_mae != b.mean_mae) return a.mean_mae < b.mean_mae;
    return a.config < b.config;
  });
  detail::finish(r, universe);
  return r;
}

inline PolicyRanking rank(Policy p, const std::vector<TrialRecord>& records, std::size_t k = 3,
                          const std::vector<ModelConfig>& universe = {}) {
  switch (p) {
    case Policy::MeanMae: return rank_mean_mae(records, k, universe);
    case Policy::MedianMae: return rank_median_mae(records, k, universe);
    case Policy::Bagging: return rank_bagging(records, k, universe);
  }
  throw Error(Errc::ConfigError, "unknown policy");
}

// ---------------------------------------------------------------------------
// Planted MAE oracle

// Replaces training with a draw from N(true_mae[config], noise_std), clamped
// at zero. The three best configurations are 3 noise-std apart from each other
// and from the rest.
struct PlantedOracle {
  std::vector<std::string> configs;
  std::vector<double> true_mae;
  double noise_std = 0.01;

  double truth(const ModelConfig& c) const {
    const std::string key = format_config(c);
    for (std::size_t i = 0; i < configs.size(); ++i)
      if (configs[i] == key) return true_mae[i];
    throw Error(Errc::ConfigError, "oracle has no entry for " + key);
  }

  double operator()(const ModelConfig& c, std::size_t, std::uint64_t seed) const {
    Rng rng(seed, "oracle");
    return std::max(0.0, rng.normal(truth(c), noise_std));
  }

  // Planted order, best first.
  std::vector<std::string> ranking() const {
    std::vector<std::size_t> idx(configs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return true_mae[a] < true_mae[b]; });
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(configs[i]);
    return out;
  }
};

inline PlantedOracle make_planted_oracle(const SearchSpace& space, std::uint64_t seed, double noise_std = 0.01,
                                         double base = 0.2) {
  PlantedOracle o;
  o.noise_std = noise_std;
  for (const auto& c : space.configs()) o.configs.push_back(format_config(c));
  const std::size_t n = o.configs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, "planted");
  rng.shuffle(std::span<std::size_t>(order));
  o.true_mae.assign(n, 0.0);
  const double gap = 3.0 * noise_std;
  for (std::size_t r = 0; r < n; ++r) {
    const double mae = r < 3 ? base + gap * static_cast<double>(r)
                             : base + gap * 3.0 + rng.uniform(0.0, gap * static_cast<double>(n - 3) / 3.0);
    o.true_mae[order[r]] = mae;
  }
  return o;
}

// ---------------------------------------------------------------------------
// Ensembles

struct ForecastBundle {
  std::vector<nn::Tensor> members;  // native units, identical shapes
  nn::Tensor mean, lower, upper;    // mean -/+ 1.96 sample std across members
};

// A single member yields a zero-width band.
inline ForecastBundle combine_forecasts(std::vector<nn::Tensor> members) {
  require(!members.empty(), Errc::ConfigError, "ensemble needs at least one member");
  for (const auto& m : members)
    require(m.shape() == members.front().shape(), Errc::ShapeMismatch,
            "ensemble members disagree in shape: " + m.shape_string() + " vs " + members.front().shape_string());
  ForecastBundle b;
  const std::size_t n = members.size();
  b.mean = nn::Tensor(members.front().shape());
  b.lower = b.mean;
  b.upper = b.mean;
  for (std::size_t i = 0; i < b.mean.size(); ++i) {
    // offsets from the first member keep identical members exact
    const double ref = members.front()[i];
    double sum = 0.0;
    for (const auto& m : members) sum += m[i] - ref;
    const double mu = ref + sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& m : members) ss += (m[i] - mu) * (m[i] - mu);
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    b.mean[i] = mu;
    b.lower[i] = mu - 1.96 * sd;
    b.upper[i] = mu + 1.96 * sd;
  }
  b.members = std::move(members);
  return b;
}

}  // namespace scour
