#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scourcast/error.hpp"
#include "scourcast/features.hpp"
#include "scourcast/ingest.hpp"
#include "scourcast/io.hpp"
#include "scourcast/search.hpp"
#include "scourcast/synth.hpp"
#include "scourcast/training.hpp"

namespace scour {

// ---------------------------------------------------------------------------
// Experiment configuration

struct DataSource {
  std::optional<std::string> raw_csv;    // long sensor CSV, preprocessed on load
  std::optional<std::string> frame_csv;  // wide hourly frame CSV, used as is
  std::optional<ScenarioSpec> synth;
  std::string id;  // dataset name used in checkpoint file names
  PreprocessParams preprocess;
};

struct FoldSettings {
  std::size_t n = 3;
  double final_frac = 0.1;
  double train = 0.70;
  double val = 0.15;
  bool compare_holdout = false;  // also run a hold-out model with the same final_test rows
};

struct SearchSettings {
  SearchSpace space;
  std::vector<std::string> policies = {"meanMAE", "medianMAE", "bagging"};
  double sample_frac = 0.67;
  std::size_t trials = 20;
  std::size_t top_k = 3;
  std::optional<double> oracle_noise;  // set: planted MAE oracle instead of training
  bool save_checkpoints = false;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t jobs = 1;
  DataSource data;
  std::string features = "sNsT";
  std::vector<std::string> feature_codes;
  std::size_t stride = 1;
  std::size_t default_w_in = 336, default_w_out = 168;
  SplitSpec split;
  FoldSettings folds;
  std::optional<std::string> model;
  std::size_t repetitions = 1;
  std::optional<SearchSettings> search;
  TrainOptions training;  // seed is set per run
};

namespace detail {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be rejected.
class ConfigReader {
 public:
  ConfigReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), Errc::ConfigError, path_ + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  T required(const std::string& key) {
    seen_.insert(key);
    require(has(key), Errc::ConfigError, "missing key " + path_ + "." + key);
    return convert<T>(key);
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    require(j_.at(key).is_number_integer() && j_.at(key).get<long long>() >= 0, Errc::ConfigError, path_ + "." + key + " must be a non-negative integer");
    return j_.at(key).get<std::size_t>();
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      require(seen_.count(key) != 0, Errc::ConfigError, "unknown key " + path_ + "." + key);
  }

 private:
  template <typename T>
  T convert(const std::string& key) {
    try {
      return j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw Error(Errc::ConfigError, path_ + "." + key + ": " + e.what());
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline ScenarioSpec scenario_from_json(const Json& j, const std::string& path) {
  ConfigReader r(j, path);
  ScenarioSpec s;
  const auto kind = r.get<std::string>("kind", "seasonal");
  auto k = scenario_kind_from_name(kind);
  require(k.has_value(), Errc::ConfigError, path + ".kind must be 'seasonal' or 'tidal'");
  s.kind = *k;
  s.years = r.get("years", s.years);
  s.noise_std = r.get("noise_std", s.noise_std);
  s.flood_count = r.count("flood_count", s.flood_count);
  s.rho = r.get("rho", s.rho);
  s.seed = r.get<std::uint64_t>("seed", s.seed);
  if (r.has("start")) {
    auto t = parse_iso8601(r.required<std::string>("start"));
    require(t.has_value(), Errc::ConfigError, path + ".start is not an ISO-8601 timestamp");
    s.start = *t;
  } else {
    r.get<std::string>("start", "");
  }
  r.finish();
  s.validate();
  return s;
}

inline Json scenario_to_json(const ScenarioSpec& s) {
  return {{"kind", std::string(scenario_kind_name(s.kind))},
          {"years", s.years},
          {"noise_std", s.noise_std},
          {"flood_count", s.flood_count},
          {"rho", s.rho},
          {"seed", s.seed},
          {"start", format_iso8601(s.start)}};
}

inline SearchSpace space_from_json(ConfigReader& r) {
  SearchSpace s;
  for (const auto& w : r.get<std::vector<std::vector<std::size_t>>>("windows", {})) {
    require(w.size() == 2 && w[0] > 0 && w[1] > 0, Errc::ConfigError, r.path("windows") + " entries must be [w_in, w_out]");
    s.windows.emplace_back(w[0], w[1]);
  }
  for (const auto& f : r.get<std::vector<std::string>>("families", {"ss"})) {
    auto fam = family_from_name(f);
    require(fam.has_value(), Errc::ConfigError, "unknown model family '" + f + "'");
    s.families.push_back(*fam);
  }
  s.units = r.get<std::vector<std::size_t>>("units", {});
  s.k1 = r.get<std::vector<std::size_t>>("k1", {});
  s.f1 = r.get<std::vector<std::size_t>>("f1", {});
  s.k2 = r.get<std::vector<std::size_t>>("k2", {});
  s.f2 = r.get<std::vector<std::size_t>>("f2", {});
  s.dropouts = r.get<std::vector<double>>("dropouts", {0.0});
  for (double d : s.dropouts) require(d >= 0.0 && d < 1.0, Errc::ConfigError, "dropout must lie in [0, 1)");
  require(s.size() > 0, Errc::ConfigError, "search space is empty");
  for (const auto& c : s.configs()) parse_config(format_config(c));
  return s;
}

inline Json space_to_json(const SearchSpace& s) {
  Json windows = Json::array();
  for (auto [a, b] : s.windows) windows.push_back({a, b});
  Json fams = Json::array();
  for (Family f : s.families) fams.push_back(std::string(family_name(f)));
  return {{"windows", windows}, {"families", fams}, {"units", s.units}, {"k1", s.k1}, {"f1", s.f1},
          {"k2", s.k2},         {"f2", s.f2},       {"dropouts", s.dropouts}};
}

}  // namespace detail

inline ExperimentConfig parse_experiment(const Json& j) {
  detail::ConfigReader r(j, "config");
  ExperimentConfig c;
  const auto schema = r.get<std::string>("schema", "scourcast.experiment");
  require(schema == "scourcast.experiment", Errc::ConfigError, "config.schema must be 'scourcast.experiment'");
  require(r.get<int>("version", kSchemaVersion) == kSchemaVersion, Errc::ConfigError, "unsupported config version");
  c.name = r.get("name", c.name);
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  c.output_dir = r.get("output_dir", c.output_dir);
  c.jobs = r.count("jobs", c.jobs);
  require(c.jobs >= 1, Errc::ConfigError, "config.jobs must be at least 1");

  {
    require(r.has("data"), Errc::ConfigError, "missing key config.data");
    detail::ConfigReader d(r.raw("data"), "config.data");
    if (d.has("raw_csv")) c.data.raw_csv = d.required<std::string>("raw_csv");
    if (d.has("frame_csv")) c.data.frame_csv = d.required<std::string>("frame_csv");
    if (d.has("synth")) c.data.synth = detail::scenario_from_json(d.raw("synth"), "config.data.synth");
    d.get<std::string>("raw_csv", "");
    d.get<std::string>("frame_csv", "");
    require(static_cast<int>(c.data.raw_csv.has_value()) + static_cast<int>(c.data.frame_csv.has_value()) +
                    static_cast<int>(c.data.synth.has_value()) ==
                1,
            Errc::ConfigError, "config.data needs exactly one of raw_csv, frame_csv, synth");
    std::string fallback_id;
    if (c.data.synth) {
      fallback_id = "synth-" + std::string(scenario_kind_name(c.data.synth->kind)) + "-" + std::to_string(c.data.synth->seed);
    } else {
      fallback_id = std::filesystem::path(c.data.raw_csv ? *c.data.raw_csv : *c.data.frame_csv).stem().string();
    }
    c.data.id = d.get("id", fallback_id);
    if (d.has("preprocess")) {
      detail::ConfigReader p(d.raw("preprocess"), "config.data.preprocess");
      c.data.preprocess.despike_window = p.count("despike_window", c.data.preprocess.despike_window);
      c.data.preprocess.k_mad = p.get("k_mad", c.data.preprocess.k_mad);
      c.data.preprocess.max_gap = p.count("max_gap", c.data.preprocess.max_gap);
      p.finish();
    } else {
      d.get<Json>("preprocess", {});
    }
    d.finish();
  }

  c.features = r.get("features", c.features);
  resolve_feature_set(c.features);
  c.feature_codes = r.get<std::vector<std::string>>("feature_codes", {});
  {
    std::set<std::string> seen;
    for (const auto& code : c.feature_codes) {
      resolve_feature_set(code);
      require(seen.insert(code).second, Errc::ConfigError, "duplicate feature code '" + code + "'");
    }
  }
  c.stride = r.count("stride", c.stride);
  require(c.stride >= 1, Errc::ConfigError, "config.stride must be at least 1");
  {
    const auto w = r.get<std::vector<std::size_t>>("default_windows", {c.default_w_in, c.default_w_out});
    require(w.size() == 2 && w[0] > 0 && w[1] > 0, Errc::ConfigError, "config.default_windows must be [w_in, w_out]");
    c.default_w_in = w[0];
    c.default_w_out = w[1];
  }
  if (r.has("split")) {
    detail::ConfigReader s(r.raw("split"), "config.split");
    c.split.train_frac = s.get("train", c.split.train_frac);
    c.split.val_frac = s.get("val", c.split.val_frac);
    c.split.test_frac = s.get("test", c.split.test_frac);
    if (s.has("final_test")) c.split.final_test_frac = s.required<double>("final_test");
    s.get<double>("final_test", 0.0);
    s.finish();
  } else {
    r.get<Json>("split", {});
  }
  c.split.validate();
  if (r.has("folds")) {
    detail::ConfigReader f(r.raw("folds"), "config.folds");
    c.folds.n = f.count("n", c.folds.n);
    c.folds.final_frac = f.get("final_frac", c.folds.final_frac);
    c.folds.train = f.get("train", c.folds.train);
    c.folds.val = f.get("val", c.folds.val);
    c.folds.compare_holdout = f.get("compare_holdout", c.folds.compare_holdout);
    f.finish();
    make_fold_plan(1000000, std::max<std::size_t>(c.folds.n, 1), c.folds.final_frac, c.folds.train, c.folds.val);
  } else {
    r.get<Json>("folds", {});
  }
  if (r.has("model")) {
    c.model = r.required<std::string>("model");
    parse_config(*c.model);
  } else {
    r.get<std::string>("model", "");
  }
  c.repetitions = r.count("repetitions", c.repetitions);
  require(c.repetitions >= 1, Errc::ConfigError, "config.repetitions must be at least 1");
  if (r.has("search")) {
    detail::ConfigReader s(r.raw("search"), "config.search");
    SearchSettings ss;
    ss.space = detail::space_from_json(s);
    ss.policies = s.get("policies", ss.policies);
    require(!ss.policies.empty(), Errc::ConfigError, "config.search.policies is empty");
    for (const auto& p : ss.policies)
      require(p == "grid" || policy_from_name(p).has_value(), Errc::ConfigError,
              "unknown policy '" + p + "' (expected grid, meanMAE, medianMAE or bagging)");
    ss.sample_frac = s.get("sample_frac", ss.sample_frac);
    random_sample_size(ss.space.size(), ss.sample_frac);
    ss.trials = s.count("trials", ss.trials);
    require(ss.trials >= 1, Errc::ConfigError, "config.search.trials must be at least 1");
    ss.top_k = s.count("top_k", ss.top_k);
    require(ss.top_k >= 1, Errc::ConfigError, "config.search.top_k must be at least 1");
    if (s.has("oracle")) {
      detail::ConfigReader o(s.raw("oracle"), "config.search.oracle");
      ss.oracle_noise = o.get("noise_std", 0.01);
      require(*ss.oracle_noise > 0.0, Errc::ConfigError, "oracle noise_std must be positive");
      o.finish();
    } else {
      s.get<Json>("oracle", {});
    }
    ss.save_checkpoints = s.get("save_checkpoints", ss.save_checkpoints);
    s.finish();
    c.search = std::move(ss);
  } else {
    r.get<Json>("search", {});
  }
  if (r.has("training")) {
    detail::ConfigReader t(r.raw("training"), "config.training");
    c.training.max_epochs = t.count("max_epochs", c.training.max_epochs);
    c.training.patience = t.count("patience", c.training.patience);
    c.training.batch_size = t.count("batch_size", c.training.batch_size);
    c.training.adam.lr = t.get("learning_rate", c.training.adam.lr);
    c.training.sonar_only_loss = t.get("sonar_only_loss", c.training.sonar_only_loss);
    t.finish();
    require(c.training.max_epochs >= 1 && c.training.batch_size >= 1 && c.training.adam.lr > 0.0, Errc::ConfigError,
            "training budget must be positive");
  } else {
    r.get<Json>("training", {});
  }
  r.finish();
  return c;
}

// Every field, defaults included; parse_experiment(to_json(c)) reproduces c.
inline Json to_json(const ExperimentConfig& c) {
  Json data = Json::object();
  if (c.data.raw_csv) data["raw_csv"] = *c.data.raw_csv;
  if (c.data.frame_csv) data["frame_csv"] = *c.data.frame_csv;
  if (c.data.synth) data["synth"] = detail::scenario_to_json(*c.data.synth);
  data["id"] = c.data.id;
  data["preprocess"] = {{"despike_window", c.data.preprocess.despike_window},
                        {"k_mad", c.data.preprocess.k_mad},
                        {"max_gap", c.data.preprocess.max_gap}};
  Json split = {{"train", c.split.train_frac}, {"val", c.split.val_frac}, {"test", c.split.test_frac}};
  if (c.split.final_test_frac) split["final_test"] = *c.split.final_test_frac;
  Json j = {{"schema", "scourcast.experiment"},
            {"version", kSchemaVersion},
            {"name", c.name},
            {"seed", c.seed},
            {"output_dir", c.output_dir},
            {"jobs", c.jobs},
            {"data", data},
            {"features", c.features},
            {"feature_codes", c.feature_codes},
            {"stride", c.stride},
            {"default_windows", {c.default_w_in, c.default_w_out}},
            {"split", split},
            {"folds",
             {{"n", c.folds.n},
              {"final_frac", c.folds.final_frac},
              {"train", c.folds.train},
              {"val", c.folds.val},
              {"compare_holdout", c.folds.compare_holdout}}},
            {"repetitions", c.repetitions},
            {"training",
             {{"max_epochs", c.training.max_epochs},
              {"patience", c.training.patience},
              {"batch_size", c.training.batch_size},
              {"learning_rate", c.training.adam.lr},
              {"sonar_only_loss", c.training.sonar_only_loss}}}};
  if (c.model) j["model"] = *c.model;
  if (c.search) {
    Json s = detail::space_to_json(c.search->space);
    s["policies"] = c.search->policies;
    s["sample_frac"] = c.search->sample_frac;
    s["trials"] = c.search->trials;
    s["top_k"] = c.search->top_k;
    if (c.search->oracle_noise) s["oracle"] = {{"noise_std", *c.search->oracle_noise}};
    s["save_checkpoints"] = c.search->save_checkpoints;
    j["search"] = s;
  }
  return j;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) { return parse_experiment(read_json(path)); }

// ---------------------------------------------------------------------------
// Shared steps

inline TimeSeriesFrame load_frame(const DataSource& d) {
  if (d.synth) return generate(*d.synth);
  if (d.frame_csv) return read_frame_csv(*d.frame_csv);
  require(d.raw_csv.has_value(), Errc::ConfigError, "no data source");
  return preprocess(read_file(*d.raw_csv), d.preprocess).frame;
}

inline std::uint64_t repetition_seed(std::uint64_t seed, std::size_t rep) { return derive_seed(seed, "repeat", rep); }

inline std::pair<std::size_t, std::size_t> windows_for(const ExperimentConfig& c, const ModelConfig& m) {
  return m.has_windows() ? std::pair{m.w_in, m.w_out} : std::pair{c.default_w_in, c.default_w_out};
}

inline void write_resolved(const ExperimentConfig& c) {
  write_json(std::filesystem::path(c.output_dir) / "resolved_config.json", to_json(c));
}

inline void write_timing(const ExperimentConfig& c, const Json& timing) {
  write_json(std::filesystem::path(c.output_dir) / "timing.json",
             {{"schema", "scourcast.timing"}, {"version", kSchemaVersion}, {"runs", timing}});
}

inline ModelConfig require_model(const ExperimentConfig& c) {
  require(c.model.has_value(), Errc::ConfigError, "this command needs config.model");
  return parse_config(*c.model);
}

// ---------------------------------------------------------------------------
// train: hold-out runs of one model, one per repetition

inline Json run_train(const ExperimentConfig& c) {
  const ModelConfig mc = require_model(c);
  write_resolved(c);
  const FeatureSet fs = resolve_feature_set(c.features);
  const TimeSeriesFrame frame = prepare_features(load_frame(c.data), fs);
  const ChannelPlan ch{fs.inputs, fs.targets};
  const auto [w_in, w_out] = windows_for(c, mc);
  const HoldoutData data = prepare_holdout(frame, ch, {w_in, w_out, c.stride}, c.split);
  const std::filesystem::path out(c.output_dir);
  Json runs = Json::array();
  Json timing = Json::array();
  for (std::size_t rep = 0; rep < c.repetitions; ++rep) {
    TrainOptions opt = c.training;
    opt.seed = repetition_seed(c.seed, rep);
    std::optional<ForecastModel> model;
    const TrainReport report = run_holdout(mc, data, opt, &model);
    runs.push_back(to_json(report, ch.targets));
    timing.push_back({{"repetition", rep}, {"wall_seconds", report.wall_seconds}});
    Checkpoint meta{format_config(mc), c.data.id, 0, ch.inputs, ch.targets, w_in, w_out, data.stats, opt.seed};
    const auto dir = c.repetitions == 1 ? out : out / ("rep" + std::to_string(rep));
    save_checkpoint(dir / checkpoint_filename(meta.config, meta.dataset, 0), *model, meta);
  }
  Json j = {{"schema", "scourcast.train"},
            {"version", kSchemaVersion},
            {"dataset", c.data.id},
            {"config", format_config(mc)},
            {"features", c.features},
            {"runs", runs}};
  if (std::find(ch.inputs.begin(), ch.inputs.end(), ChannelId::Sonar) != ch.inputs.end())
    j["persistence"] = {{"val", to_json(persistence_baseline(data.val), ch.targets)},
                        {"test", to_json(persistence_baseline(data.test), ch.targets)}};
  write_json(out / "report.json", j);
  write_timing(c, timing);
  return j;
}

// ---------------------------------------------------------------------------
// sequential: fold-by-fold fine-tuning, optionally against a hold-out model

inline Json run_sequential(const ExperimentConfig& c) {
  const ModelConfig mc = require_model(c);
  write_resolved(c);
  const FeatureSet fs = resolve_feature_set(c.features);
  const TimeSeriesFrame frame = prepare_features(load_frame(c.data), fs);
  const ChannelPlan ch{fs.inputs, fs.targets};
  const auto [w_in, w_out] = windows_for(c, mc);
  const WindowSpec w{w_in, w_out, c.stride};
  const FoldPlan plan = make_fold_plan(frame.size(), c.folds.n, c.folds.final_frac, c.folds.train, c.folds.val);
  std::optional<HoldoutData> holdout;
  if (c.folds.compare_holdout) {
    SplitSpec s = c.split;
    s.final_test_frac = c.folds.final_frac;
    holdout = prepare_holdout(frame, ch, w, s);
  }
  const std::filesystem::path out(c.output_dir);
  Json runs = Json::array();
  Json timing = Json::array();
  double seq_sum = 0.0, hold_sum = 0.0;
  for (std::size_t rep = 0; rep < c.repetitions; ++rep) {
    TrainOptions opt = c.training;
    opt.seed = repetition_seed(c.seed, rep);
    std::optional<ForecastModel> model;
    const SequentialResult seq = sequential_train(mc, frame, ch, w, plan, opt, nullptr, &model);
    Json folds = Json::array();
    double wall = 0.0;
    for (const auto& r : seq.folds) {
      folds.push_back(to_json(r, ch.targets));
      wall += r.wall_seconds;
    }
    Json run = {{"seed", opt.seed}, {"folds", folds}, {"final_test_mae_ft", seq.folds.back().final_test->mae_ft}};
    seq_sum += seq.folds.back().final_test->mae_ft;
    Json t = {{"repetition", rep}, {"sequential_wall_seconds", wall}};
    Checkpoint meta{format_config(mc), c.data.id, plan.n_folds - 1, ch.inputs, ch.targets, w_in, w_out, seq.stats, opt.seed};
    const auto dir = c.repetitions == 1 ? out : out / ("rep" + std::to_string(rep));
    save_checkpoint(dir / checkpoint_filename(meta.config, meta.dataset, meta.fold), *model, meta);
    if (holdout) {
      const TrainReport h = run_holdout(mc, *holdout, opt);
      run["holdout"] = to_json(h, ch.targets);
      run["holdout_final_test_mae_ft"] = h.final_test->mae_ft;
      hold_sum += h.final_test->mae_ft;
      t["holdout_wall_seconds"] = h.wall_seconds;
    }
    runs.push_back(run);
    timing.push_back(t);
  }
  const double n = static_cast<double>(c.repetitions);
  Json j = {{"schema", "scourcast.sequential"},
            {"version", kSchemaVersion},
            {"dataset", c.data.id},
            {"config", format_config(mc)},
            {"folds", plan.n_folds},
            {"final_test_rows", {plan.final_test.begin, plan.final_test.end}},
            {"runs", runs},
            {"mean_final_test_mae_ft", seq_sum / n}};
  if (holdout) j["holdout_mean_final_test_mae_ft"] = hold_sum / n;
  write_json(out / "sequential.json", j);
  write_timing(c, timing);
  return j;
}

// ---------------------------------------------------------------------------
// tune: grid and/or random search with ranking policies

inline Json run_tune(const ExperimentConfig& c, std::ostream* log = nullptr) {
  require(c.search.has_value(), Errc::ConfigError, "tune needs config.search");
  const SearchSettings& ss = *c.search;
  write_resolved(c);
  const auto configs = ss.space.configs();
  const std::filesystem::path out(c.output_dir);

  Evaluator eval;
  std::optional<PlantedOracle> oracle;
  std::map<std::pair<std::size_t, std::size_t>, HoldoutData> data;
  ChannelPlan ch;
  if (ss.oracle_noise) {
    oracle = make_planted_oracle(ss.space, derive_seed(c.seed, "oracle"), *ss.oracle_noise);
    eval = std::cref(*oracle);
  } else {
    const FeatureSet fs = resolve_feature_set(c.features);
    const TimeSeriesFrame frame = prepare_features(load_frame(c.data), fs);
    ch = {fs.inputs, fs.targets};
    for (const auto& m : configs) {
      const auto key = windows_for(c, m);
      if (!data.count(key)) data.emplace(key, prepare_holdout(frame, ch, {key.first, key.second, c.stride}, c.split));
    }
    eval = [&](const ModelConfig& m, std::size_t trial, std::uint64_t seed) {
      const auto key = windows_for(c, m);
      const HoldoutData& d = data.at(key);
      TrainOptions opt = c.training;
      opt.seed = seed;
      std::optional<ForecastModel> model;
      const TrainReport r = run_holdout(m, d, opt, ss.save_checkpoints ? &model : nullptr);
      if (ss.save_checkpoints) {
        Checkpoint meta{format_config(m), c.data.id, 0, ch.inputs, ch.targets, key.first, key.second, d.stats, seed};
        save_checkpoint(out / "checkpoints" / ("trial" + std::to_string(trial)) /
                            checkpoint_filename(meta.config, meta.dataset, 0),
                        *model, meta);
      }
      return r.best_val_mae_ft;
    };
  }

  const bool want_grid = std::find(ss.policies.begin(), ss.policies.end(), "grid") != ss.policies.end();
  const bool want_random = std::any_of(ss.policies.begin(), ss.policies.end(), [](const auto& p) { return p != "grid"; });
  Json rankings = Json::array();
  std::string distributions;
  const std::size_t grid_runs = c.repetitions * configs.size();
  const std::size_t random_runs = ss.trials * random_sample_size(configs.size(), ss.sample_frac);
  auto add = [&](const std::string& search, const PolicyRanking& r) {
    Json e = to_json(r);
    e["search"] = search;
    Json top = Json::array();
    for (const auto& s : r.top(ss.top_k)) top.push_back(s);
    e["top_k"] = top;
    rankings.push_back(e);
  };
  const auto t0 = std::chrono::steady_clock::now();
  if (want_grid) {
    const auto recs = grid_search(ss.space, eval, c.repetitions, c.seed, c.jobs);
    add("grid", rank_mean_mae(recs, ss.top_k, configs));
    distributions += distributions_csv(recs, "grid");
  }
  if (want_random) {
    const auto recs = random_search(ss.space, eval, ss.sample_frac, ss.trials, c.seed, c.jobs);
    for (const auto& p : ss.policies)
      if (p != "grid") add("random", rank(*policy_from_name(p), recs, ss.top_k, configs));
    const auto csv = distributions_csv(recs, "random");
    distributions += distributions.empty() ? csv : csv.substr(csv.find('\n') + 1);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Json j = {{"schema", "scourcast.rankings"},
            {"version", kSchemaVersion},
            {"dataset", c.data.id},
            {"mode", oracle ? "oracle" : "training"},
            {"space_size", configs.size()},
            {"runs", {{"grid", grid_runs}, {"random", random_runs}}},
            {"rankings", rankings}};
  if (oracle) {
    Json truth = Json::array();
    for (const auto& s : oracle->ranking()) truth.push_back({{"config", s}, {"true_mae_ft", oracle->truth(parse_config(s))}});
    j["planted"] = truth;
  }
  write_json(out / "rankings.json", j);
  write_file_atomic(out / "distributions.csv", distributions);
  write_timing(c, Json::array({Json{{"wall_seconds", wall}}}));
  if (log) {
    *log << "search space: " << configs.size() << " configurations\n";
    *log << "cost: random search " << random_runs << " runs (" << ss.trials << " trials x "
         << random_sample_size(configs.size(), ss.sample_frac) << ") vs full grid " << grid_runs << " runs ("
         << c.repetitions << " x " << configs.size() << ")\n";
    for (const auto& r : rankings) *log << r["search"].get<std::string>() << "/" << r["policy"].get<std::string>() << " top-" << ss.top_k << ": " << r["top_k"].dump() << "\n";
  }
  return j;
}

// ---------------------------------------------------------------------------
// feature-sweep: one model per input feature set, always scored on Sonar

inline Json run_feature_sweep(const ExperimentConfig& c) {
  const ModelConfig mc = require_model(c);
  require(c.feature_codes.size() >= 2, Errc::ConfigError, "feature sweep needs at least two feature_codes");
  write_resolved(c);
  const TimeSeriesFrame base = load_frame(c.data);
  const auto [w_in, w_out] = windows_for(c, mc);
  std::vector<HoldoutData> data;
  for (const auto& code : c.feature_codes) {
    const FeatureSet fs = resolve_feature_set(code);
    const TimeSeriesFrame frame = prepare_features(base, fs);
    data.push_back(prepare_holdout(frame, {fs.inputs, {ChannelId::Sonar}}, {w_in, w_out, c.stride}, c.split));
  }
  const std::size_t n = c.feature_codes.size() * c.repetitions;
  std::vector<TrainReport> reports(n);
  detail::parallel_for(n, c.jobs, [&](std::size_t i) {
    TrainOptions opt = c.training;
    opt.seed = repetition_seed(c.seed, i % c.repetitions);
    reports[i] = run_holdout(mc, data[i / c.repetitions], opt);
  });
  Json codes = Json::array();
  Json timing = Json::array();
  std::string csv = "code,repetition,seed,test_mae_ft\n";
  for (std::size_t k = 0; k < c.feature_codes.size(); ++k) {
    std::vector<double> maes;
    for (std::size_t r = 0; r < c.repetitions; ++r) {
      const auto& rep = reports[k * c.repetitions + r];
      maes.push_back(rep.test->mae_ft);
      csv += c.feature_codes[k] + "," + std::to_string(r) + "," + std::to_string(rep.seed) + "," +
             format_double(rep.test->mae_ft) + "\n";
      timing.push_back({{"code", c.feature_codes[k]}, {"repetition", r}, {"wall_seconds", rep.wall_seconds}});
    }
    const double mean = std::accumulate(maes.begin(), maes.end(), 0.0) / static_cast<double>(maes.size());
    codes.push_back({{"code", c.feature_codes[k]},
                     {"inputs", channel_list_json(data[k].train.input_channels)},
                     {"test_mae_ft", maes},
                     {"mean_mae_ft", mean},
                     {"median_mae_ft", detail::median(maes)}});
  }
  Json j = {{"schema", "scourcast.feature-sweep"},
            {"version", kSchemaVersion},
            {"dataset", c.data.id},
            {"config", format_config(mc)},
            {"target", "sonar"},
            {"repetitions", c.repetitions},
            {"codes", codes}};
  const std::filesystem::path out(c.output_dir);
  write_json(out / "sweep.json", j);
  write_file_atomic(out / "sweep.csv", csv);
  write_timing(c, timing);
  return j;
}

// ---------------------------------------------------------------------------
// forecast: ensemble predictions over a row range, tiled by w_out

// Adds the derived channels the model inputs need.
inline TimeSeriesFrame with_channels_for(const TimeSeriesFrame& frame, const std::vector<ChannelId>& inputs) {
  TimeSeriesFrame out = frame;
  auto needs = [&](ChannelId id) { return std::find(inputs.begin(), inputs.end(), id) != inputs.end() && !out.has(id); };
  if (needs(ChannelId::EVelocity)) out = equivalent_velocity(out);
  if (needs(ChannelId::YearSin) || needs(ChannelId::YearCos)) out = time_features(out);
  for (ChannelId id : inputs)
    require(out.has(id), Errc::ChannelMismatch, "frame lacks input channel " + std::string(channel_name(id)));
  return out;
}

// Rows [begin, end) of the frame, predicted in consecutive non-overlapping
// tiles of w_out steps, each from the w_in rows before it.
inline std::string forecast_csv(std::vector<LoadedModel>& models, const TimeSeriesFrame& frame, std::size_t begin,
                                std::size_t end) {
  require(!models.empty(), Errc::ConfigError, "forecast needs at least one checkpoint");
  const auto& first = models.front().meta;
  std::size_t max_w_in = 0;
  for (const auto& m : models) {
    require(m.meta.targets == first.targets, Errc::ChannelMismatch, "checkpoints predict different target channels");
    require(m.meta.w_out == first.w_out, Errc::ChannelMismatch, "checkpoints have different forecast horizons");
    max_w_in = std::max(max_w_in, m.meta.w_in);
  }
  for (ChannelId id : first.targets)
    require(frame.has(id), Errc::ChannelMismatch, "frame lacks target channel " + std::string(channel_name(id)));
  require(begin < end && end <= frame.size(), Errc::ConfigError, "forecast range out of bounds");
  require(begin >= max_w_in, Errc::ConfigError,
          "forecast range must start at row " + std::to_string(max_w_in) + " or later (input history)");
  std::vector<TimeSeriesFrame> frames;
  for (const auto& m : models) frames.push_back(with_channels_for(frame, m.meta.inputs));

  const auto& targets = first.targets;
  const std::size_t n_t = targets.size(), n_m = models.size(), w_out = first.w_out;
  std::string out = "timestamp";
  for (ChannelId id : targets) out += ",actual_" + std::string(channel_name(id));
  for (std::size_t m = 0; m < n_m; ++m)
    for (ChannelId id : targets) out += ",model" + std::to_string(m) + "_" + std::string(channel_name(id));
  for (const char* col : {"mean", "lower95", "upper95"})
    for (ChannelId id : targets) out += "," + std::string(col) + "_" + std::string(channel_name(id));
  out += '\n';

  for (std::size_t origin = begin; origin < end; origin += w_out) {
    std::vector<nn::Tensor> preds;
    bool complete = true;
    for (std::size_t m = 0; m < n_m; ++m) {
      auto& lm = models[m];
      const auto& f = frames[m];
      const std::size_t w_in = lm.meta.w_in, n_in = lm.meta.inputs.size();
      nn::Tensor x({1, w_in, n_in});
      for (std::size_t r = 0; r < w_in; ++r)
        for (std::size_t k = 0; k < n_in; ++k) {
          const auto& ser = f.channel(lm.meta.inputs[k]);
          const std::size_t row = origin - w_in + r;
          if (ser.missing[row]) complete = false;
          x.at(0, r, k) = lm.meta.stats.normalize(lm.meta.inputs[k], ser.values[row]);
        }
      nn::Tensor p = lm.model.forward(x, nn::Mode::Infer);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = lm.meta.stats.denormalize(targets[i % n_t], p[i]);
      preds.push_back(std::move(p));
    }
    const ForecastBundle b = combine_forecasts(preds);
    for (std::size_t s = 0; s < w_out && origin + s < end; ++s) {
      const std::size_t row = origin + s;
      out += format_iso8601(frame.timestamp(row));
      for (ChannelId id : targets) {
        out += ',';
        const auto& ser = frame.channel(id);
        if (!ser.missing[row]) out += format_double(ser.values[row]);
      }
      auto cell = [&](double v) {
        out += ',';
        if (complete) out += format_double(v);
      };
      for (std::size_t m = 0; m < n_m; ++m)
        for (std::size_t k = 0; k < n_t; ++k) cell(b.members[m].at(0, s, k));
      for (const nn::Tensor* t : {&b.mean, &b.lower, &b.upper})
        for (std::size_t k = 0; k < n_t; ++k) cell(t->at(0, s, k));
      out += '\n';
    }
  }
  return out;
}

}  // namespace scour
